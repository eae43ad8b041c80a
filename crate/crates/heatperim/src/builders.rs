//! Space builders: the lattice and point-cloud families every experiment
//! runs on, plus the union-of-shrinking-balls indicator set.

use crate::error::{Error, Result};
use crate::space::{DistProvenance, Metric, MetricMeasureSpace, SpaceDoc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// A built space, optionally carrying an indicator set (only the
/// shrinking-balls builder produces one).
#[derive(Debug, Clone)]
pub struct BuiltSpace {
    pub space: MetricMeasureSpace,
    pub indicator: Option<Vec<usize>>,
}

/// `n` equispaced points on a circle of unit circumference, uniform
/// weights `1/n`.
pub fn circle(n: usize) -> Result<MetricMeasureSpace> {
    if n == 0 {
        return Err(Error::InvalidParam("circle needs n >= 1".into()));
    }
    MetricMeasureSpace::from_parts(
        format!("circle({n})"),
        Metric::Circle { n },
        vec![1.0 / n as f64; n],
        DistProvenance::Generated {
            builder: "circle".into(),
            params: json!({ "n": n }),
        },
    )
}

/// `n` equispaced points on the unit interval, uniform weights `1/n`.
pub fn interval(n: usize) -> Result<MetricMeasureSpace> {
    if n < 2 {
        return Err(Error::InvalidParam("interval needs n >= 2".into()));
    }
    let positions: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    MetricMeasureSpace::from_parts(
        format!("interval({n})"),
        Metric::Line { positions },
        vec![1.0 / n as f64; n],
        DistProvenance::Generated {
            builder: "interval".into(),
            params: json!({ "n": n }),
        },
    )
}

/// `m x m` grid on the unit 2-torus, uniform weights `1/m^2`.
pub fn torus2d(m: usize) -> Result<MetricMeasureSpace> {
    if m < 2 {
        return Err(Error::InvalidParam("torus2d needs m >= 2".into()));
    }
    MetricMeasureSpace::from_parts(
        format!("torus2d({m})"),
        Metric::Torus2d { m },
        vec![1.0 / (m * m) as f64; m * m],
        DistProvenance::Generated {
            builder: "torus2d".into(),
            params: json!({ "m": m }),
        },
    )
}

/// Line space with weights given by a named density expression.
///
/// Supported expressions: `uniform`, `2^-i`, `geometric:<ratio>`,
/// `power:<alpha>` (weight `(i+1)^-alpha`). Weights are used as given,
/// without normalization.
pub fn weighted_line(n: usize, density: &str) -> Result<MetricMeasureSpace> {
    if n < 2 {
        return Err(Error::InvalidParam("weightedLine needs n >= 2".into()));
    }
    let mu = density_weights(n, density)?;
    let positions: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    MetricMeasureSpace::from_parts(
        format!("weightedLine({n},{density})"),
        Metric::Line { positions },
        mu,
        DistProvenance::Generated {
            builder: "weightedLine".into(),
            params: json!({ "n": n, "density": density }),
        },
    )
}

fn density_weights(n: usize, density: &str) -> Result<Vec<f64>> {
    let weights: Vec<f64> = if density == "uniform" {
        vec![1.0 / n as f64; n]
    } else if density == "2^-i" {
        (0..n).map(|i| 0.5_f64.powi(i as i32)).collect()
    } else if let Some(ratio) = density.strip_prefix("geometric:") {
        let r: f64 = ratio
            .parse()
            .map_err(|_| Error::InvalidParam(format!("bad geometric ratio '{ratio}'")))?;
        if !(r > 0.0) {
            return Err(Error::InvalidParam("geometric ratio must be positive".into()));
        }
        (0..n).map(|i| r.powi(i as i32)).collect()
    } else if let Some(alpha) = density.strip_prefix("power:") {
        let a: f64 = alpha
            .parse()
            .map_err(|_| Error::InvalidParam(format!("bad power exponent '{alpha}'")))?;
        (0..n).map(|i| ((i + 1) as f64).powf(-a)).collect()
    } else {
        return Err(Error::InvalidParam(format!(
            "unknown density expression '{density}'"
        )));
    };
    Ok(weights)
}

/// Uniform random cloud in `[0,1]^dim`, uniform weights `1/n`.
pub fn point_cloud(n: usize, dim: usize, seed: u64) -> Result<MetricMeasureSpace> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidParam("pointCloud needs n >= 1 and dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    MetricMeasureSpace::from_parts(
        format!("pointCloud({n},{dim},{seed})"),
        Metric::Cloud { dim, coords },
        vec![1.0 / n as f64; n],
        DistProvenance::Generated {
            builder: "pointCloud".into(),
            params: json!({ "n": n, "dim": dim, "seed": seed }),
        },
    )
}

/// Plastic-number Kronecker sequence: deterministic, equidistributed
/// centers standing in for an enumeration of the rational points.
fn kronecker_point(j: usize) -> (f64, f64) {
    const A1: f64 = 0.754_877_666_246_692_8;
    const A2: f64 = 0.569_840_290_998_053_3;
    let t = j as f64;
    ((0.5 + t * A1).fract(), (0.5 + t * A2).fract())
}

/// Lattice indices inside the torus disk of radius `r` around `(cx, cy)`.
pub fn torus_disk(m: usize, cx: f64, cy: f64, r: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for y in 0..m {
        for x in 0..m {
            let dx = wrapped(x as f64 / m as f64 - cx);
            let dy = wrapped(y as f64 / m as f64 - cy);
            if (dx * dx + dy * dy).sqrt() < r {
                out.push(y * m + x);
            }
        }
    }
    out
}

/// Axis-aligned square `[x0, x0+side) x [y0, y0+side)` on the torus lattice.
pub fn torus_square(m: usize, x0: f64, y0: f64, side: f64) -> Vec<usize> {
    let inside = |c: f64, lo: f64| {
        let d = (c - lo).rem_euclid(1.0);
        d < side
    };
    let mut out = Vec::new();
    for y in 0..m {
        for x in 0..m {
            if inside(x as f64 / m as f64, x0) && inside(y as f64 / m as f64, y0) {
                out.push(y * m + x);
            }
        }
    }
    out
}

fn wrapped(d: f64) -> f64 {
    let d = d.rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Torus lattice together with the truncated union-of-shrinking-balls
/// indicator: `k` balls of radius `2^{-j-1}` (j = 0..k) at Kronecker
/// centers, the finite stand-in for a dense union of balls with
/// geometrically decaying radii. Balls below the lattice resolution
/// degenerate to single points.
pub fn shrinking_balls_union(m: usize, k: usize) -> Result<BuiltSpace> {
    if k == 0 {
        return Err(Error::InvalidParam("shrinkingBallsUnion needs k >= 1".into()));
    }
    let space = MetricMeasureSpace::from_parts(
        format!("shrinkingBallsUnion({m},{k})"),
        Metric::Torus2d { m },
        vec![1.0 / (m * m) as f64; m * m],
        DistProvenance::Generated {
            builder: "shrinkingBallsUnion".into(),
            params: json!({ "m": m, "k": k }),
        },
    )?;
    let mut member = vec![false; m * m];
    for j in 0..k {
        let (cx, cy) = kronecker_point(j);
        let radius = 0.5_f64.powi(j as i32 + 1);
        if radius >= 1.0 / m as f64 {
            for idx in torus_disk(m, cx, cy, radius) {
                member[idx] = true;
            }
        } else {
            // Sub-resolution ball: the single nearest lattice point.
            let x = ((cx * m as f64).round() as usize) % m;
            let y = ((cy * m as f64).round() as usize) % m;
            member[y * m + x] = true;
        }
    }
    let indicator: Vec<usize> = member
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| if b { Some(i) } else { None })
        .collect();
    Ok(BuiltSpace {
        space,
        indicator: Some(indicator),
    })
}

/// Lattice points of `set` adjacent (within `1.5 h`) to the complement:
/// the discrete topological boundary, as fed to the Minkowski ladder.
/// Lattice metrics check the local stencil directly.
pub fn lattice_boundary(space: &MetricMeasureSpace, set: &[usize]) -> Vec<usize> {
    let n = space.n();
    let mut member = vec![false; n];
    for &x in set {
        member[x] = true;
    }
    match space.metric() {
        crate::space::Metric::Circle { n: len } => {
            let len = *len;
            (0..len)
                .filter(|&x| {
                    member[x] && (!member[(x + 1) % len] || !member[(x + len - 1) % len])
                })
                .collect()
        }
        crate::space::Metric::Torus2d { m } => {
            let m = *m;
            (0..m * m)
                .filter(|&x| {
                    if !member[x] {
                        return false;
                    }
                    let (cx, cy) = (x % m, x / m);
                    // 3x3 stencil: axis and diagonal neighbors are the
                    // points within 1.5 h on this lattice.
                    for dx in [m - 1, 0, 1] {
                        for dy in [m - 1, 0, 1] {
                            if (dx, dy) != (0, 0)
                                && !member[((cy + dy) % m) * m + (cx + dx) % m]
                            {
                                return true;
                            }
                        }
                    }
                    false
                })
                .collect()
        }
        _ => {
            let h = space.resolution();
            (0..n)
                .filter(|&x| {
                    member[x] && (0..n).any(|y| !member[y] && space.dist(x, y) < 1.5 * h)
                })
                .collect()
        }
    }
}

/// Build a space by name. This is the single dispatch point used by the
/// CLI, experiment configs, and `generated`-kind deserialization.
pub fn build(builder: &str, params: &Value) -> Result<BuiltSpace> {
    let get_usize = |key: &str| -> Result<usize> {
        params
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::InvalidParam(format!("builder '{builder}' needs integer '{key}'")))
    };
    match builder {
        "circle" => Ok(BuiltSpace { space: circle(get_usize("n")?)?, indicator: None }),
        "interval" => Ok(BuiltSpace { space: interval(get_usize("n")?)?, indicator: None }),
        "torus2d" => Ok(BuiltSpace { space: torus2d(get_usize("m")?)?, indicator: None }),
        "weightedLine" => {
            let density = params
                .get("density")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::InvalidParam("weightedLine needs 'density'".into()))?;
            Ok(BuiltSpace {
                space: weighted_line(get_usize("n")?, density)?,
                indicator: None,
            })
        }
        "pointCloud" => {
            let seed = params
                .get("seed")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::InvalidParam("pointCloud needs 'seed'".into()))?;
            Ok(BuiltSpace {
                space: point_cloud(get_usize("n")?, get_usize("dim")?, seed)?,
                indicator: None,
            })
        }
        "shrinkingBallsUnion" => shrinking_balls_union(get_usize("m")?, get_usize("k")?),
        other => Err(Error::UnknownBuilder(other.into())),
    }
}

/// Reconstruct a space from its JSON document. The document's measure
/// vector and label win over whatever the builder would produce, so
/// custom re-weightings round-trip.
pub fn space_from_doc(doc: &SpaceDoc) -> Result<MetricMeasureSpace> {
    match &doc.dist {
        crate::space::DistDoc::Dense { rows } => {
            if rows.len() != doc.n {
                return Err(Error::InvalidParam(format!(
                    "dense dist has {} rows for n={}",
                    rows.len(),
                    doc.n
                )));
            }
            let mut tri = Vec::with_capacity(doc.n * (doc.n - 1) / 2);
            for (i, row) in rows.iter().enumerate() {
                if row.len() != i {
                    return Err(Error::InvalidParam(format!(
                        "dense dist row {i} has {} entries, expected {i}",
                        row.len()
                    )));
                }
                tri.extend_from_slice(row);
            }
            MetricMeasureSpace::from_dense(doc.label.clone(), doc.n, tri, doc.mu.clone())
        }
        crate::space::DistDoc::Generated { builder, params } => {
            let built = build(builder, params)?;
            if built.space.n() != doc.n {
                return Err(Error::InvalidParam(format!(
                    "generated space has {} points, document says {}",
                    built.space.n(),
                    doc.n
                )));
            }
            MetricMeasureSpace::from_parts(
                doc.label.clone(),
                built.space.metric().clone(),
                doc.mu.clone(),
                DistProvenance::Generated {
                    builder: builder.clone(),
                    params: params.clone(),
                },
            )
        }
    }
}

pub fn space_from_json(text: &str) -> Result<MetricMeasureSpace> {
    let doc: SpaceDoc = serde_json::from_str(text)?;
    space_from_doc(&doc)
}
