//! Finite metric measure spaces: the discrete stand-in for `(X, d, mu)`.
//!
//! A space is a finite point set with a metric and strictly positive
//! weights. Balls are open (`d < r`); ties at exactly `d = r` are
//! excluded. All queries are pure, so a constructed space can be shared
//! freely across worker threads.

use crate::error::{Error, Result};
use crate::ladder::{FunctionalLadder, Verdict, WindowPolicy};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How point-to-point distances are realized.
///
/// Lattice-like families keep an implicit closed form so that large spaces
/// never materialize an `n x n` matrix.
#[derive(Debug, Clone)]
pub enum Metric {
    /// Strict lower triangle, row-major: entry `(i, j)`, `j < i`, at
    /// `i*(i-1)/2 + j`.
    Dense { tri: Vec<f64>, n: usize },
    /// `n` equispaced points on a circle of unit circumference.
    Circle { n: usize },
    /// Points on a line at the given positions.
    Line { positions: Vec<f64> },
    /// `m x m` grid on the unit 2-torus with the flat L2 metric.
    Torus2d { m: usize },
    /// Point cloud in `[0,1]^dim` with the L2 metric.
    Cloud { dim: usize, coords: Vec<f64> },
}

impl Metric {
    pub fn len(&self) -> usize {
        match self {
            Metric::Dense { n, .. } => *n,
            Metric::Circle { n } => *n,
            Metric::Line { positions } => positions.len(),
            Metric::Torus2d { m } => m * m,
            Metric::Cloud { dim, coords } => coords.len() / dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match self {
            Metric::Dense { tri, .. } => {
                let (a, b) = if i > j { (i, j) } else { (j, i) };
                tri[a * (a - 1) / 2 + b]
            }
            Metric::Circle { n } => {
                let diff = i.abs_diff(j);
                let wrapped = diff.min(n - diff);
                wrapped as f64 / *n as f64
            }
            Metric::Line { positions } => (positions[i] - positions[j]).abs(),
            Metric::Torus2d { m } => {
                let m = *m;
                let (xi, yi) = (i % m, i / m);
                let (xj, yj) = (j % m, j / m);
                let dx = xi.abs_diff(xj).min(m - xi.abs_diff(xj)) as f64 / m as f64;
                let dy = yi.abs_diff(yj).min(m - yi.abs_diff(yj)) as f64 / m as f64;
                (dx * dx + dy * dy).sqrt()
            }
            Metric::Cloud { dim, coords } => {
                let (a, b) = (&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim]);
                a.iter()
                    .zip(b)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}

/// Where the distance data came from, for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistProvenance {
    Dense,
    Generated {
        builder: String,
        params: serde_json::Value,
    },
}

#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    label: String,
    metric: Metric,
    mu: Vec<f64>,
    total_mu: f64,
    provenance: DistProvenance,
    diameter: f64,
    /// Minimal positive interpoint distance: the grid resolution.
    resolution: f64,
}

/// Number of random triples used by the triangle-inequality check on
/// spaces too large for the exhaustive sweep.
const TRIANGLE_SAMPLES: usize = 10_000;

/// Exhaustive triangle check up to this size.
const TRIANGLE_EXHAUSTIVE_N: usize = 256;

impl MetricMeasureSpace {
    /// Construct from an explicit strict-lower-triangle distance matrix.
    pub fn from_dense(label: impl Into<String>, n: usize, tri: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if tri.len() != n * (n - 1) / 2 {
            return Err(Error::InvalidParam(format!(
                "lower triangle for n={n} needs {} entries, got {}",
                n * (n - 1) / 2,
                tri.len()
            )));
        }
        if tri.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::MetricViolation(
                "distances must be finite and nonnegative".into(),
            ));
        }
        Self::from_parts(label, Metric::Dense { tri, n }, mu, DistProvenance::Dense)
    }

    /// Shared constructor; validates measure positivity and metric axioms.
    pub(crate) fn from_parts(
        label: impl Into<String>,
        metric: Metric,
        mu: Vec<f64>,
        provenance: DistProvenance,
    ) -> Result<Self> {
        let n = metric.len();
        if n == 0 {
            return Err(Error::InvalidParam("space must have at least one point".into()));
        }
        if mu.len() != n {
            return Err(Error::InvalidParam(format!(
                "measure vector has {} entries for {} points",
                mu.len(),
                n
            )));
        }
        if mu.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParam(
                "measure weights must be strictly positive and finite".into(),
            ));
        }
        let total_mu: f64 = mu.iter().sum();

        check_triangle(&metric)?;

        let (diameter, resolution) = extremal_distances(&metric);
        Ok(MetricMeasureSpace {
            label: label.into(),
            metric,
            mu,
            total_mu,
            provenance,
            diameter,
            resolution,
        })
    }

    pub fn n(&self) -> usize {
        self.metric.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn provenance(&self) -> &DistProvenance {
        &self.provenance
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.metric.dist(i, j)
    }

    #[inline]
    pub fn mu(&self, i: usize) -> f64 {
        self.mu[i]
    }

    pub fn mu_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn total_mu(&self) -> f64 {
        self.total_mu
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Minimal positive interpoint distance.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    fn check_index(&self, x: usize) -> Result<()> {
        if x >= self.n() {
            Err(Error::IndexOutOfRange { index: x, n: self.n() })
        } else {
            Ok(())
        }
    }

    /// Open ball `{y : d(x,y) < r}`, ascending indices. Always contains `x`.
    pub fn ball(&self, x: usize, r: f64) -> Result<Vec<usize>> {
        self.check_index(x)?;
        if !(r > 0.0) {
            return Err(Error::InvalidParam(format!("ball radius must be positive, got {r}")));
        }
        Ok((0..self.n()).filter(|&y| self.dist(x, y) < r).collect())
    }

    /// `mu(B_r(x))`, strictly positive since the ball contains its center.
    pub fn ball_measure(&self, x: usize, r: f64) -> Result<f64> {
        self.check_index(x)?;
        if !(r > 0.0) {
            return Err(Error::InvalidParam(format!("ball radius must be positive, got {r}")));
        }
        Ok(self.ball_measure_raw(x, r))
    }

    #[inline]
    pub(crate) fn ball_measure_raw(&self, x: usize, r: f64) -> f64 {
        (0..self.n())
            .filter(|&y| self.dist(x, y) < r)
            .map(|y| self.mu[y])
            .sum()
    }

    /// `mu(B_r(x))` for every `x` at once (parallel).
    pub fn ball_measures_all(&self, r: f64) -> Vec<f64> {
        (0..self.n())
            .into_par_iter()
            .map(|x| self.ball_measure_raw(x, r))
            .collect()
    }

    /// Union of open `r`-balls centered in `set`.
    ///
    /// Lattice metrics stamp each ball over its bounding box instead of
    /// scanning all pairs; the result is identical to the generic scan.
    pub fn tubular_neighborhood(&self, set: &[usize], r: f64) -> Vec<usize> {
        if set.is_empty() {
            return Vec::new();
        }
        match self.metric {
            Metric::Circle { n } => {
                let h = 1.0 / n as f64;
                let reach = ((r / h).ceil() as usize).min(n / 2);
                let mut member = vec![false; n];
                for &x in set {
                    for k in 0..=reach {
                        // Same expression as the metric, so ties agree.
                        if k as f64 / (n as f64) < r {
                            member[(x + k) % n] = true;
                            member[(x + n - k) % n] = true;
                        }
                    }
                }
                (0..n).filter(|&y| member[y]).collect()
            }
            Metric::Torus2d { m } => {
                let reach = ((r * m as f64).ceil() as usize).min(m / 2);
                let mut member = vec![false; m * m];
                let offsets: Vec<(usize, usize)> = (0..=reach)
                    .flat_map(|dx| (0..=reach).map(move |dy| (dx, dy)))
                    .filter(|&(dx, dy)| {
                        let dxf = dx as f64 / m as f64;
                        let dyf = dy as f64 / m as f64;
                        (dxf * dxf + dyf * dyf).sqrt() < r
                    })
                    .collect();
                for &x in set {
                    let (cx, cy) = (x % m, x / m);
                    for &(dx, dy) in &offsets {
                        for &(sx, sy) in &[
                            (cx + dx, cy + dy),
                            (cx + m - dx, cy + dy),
                            (cx + dx, cy + m - dy),
                            (cx + m - dx, cy + m - dy),
                        ] {
                            member[(sy % m) * m + (sx % m)] = true;
                        }
                    }
                }
                (0..m * m).filter(|&y| member[y]).collect()
            }
            _ => (0..self.n())
                .into_par_iter()
                .filter(|&y| set.iter().any(|&x| self.dist(x, y) < r))
                .collect(),
        }
    }

    /// Ratio `mu(tube_r(boundary)) / r` along a decreasing radius ladder.
    ///
    /// The limit estimate is the minimum over the trusted window (the
    /// liminf surrogate), not a plateau median.
    pub fn minkowski_content(
        &self,
        boundary: &[usize],
        r_ladder: &[f64],
        window: WindowPolicy,
    ) -> Result<FunctionalLadder> {
        if r_ladder.is_empty() {
            return Err(Error::Ladder("empty radius ladder".into()));
        }
        let samples: Vec<(f64, f64)> = r_ladder
            .iter()
            .map(|&r| {
                let tube = self.tubular_neighborhood(boundary, r);
                let mass: f64 = tube.iter().map(|&y| self.mu[y]).sum();
                (r, mass / r)
            })
            .collect();
        let mut ladder = FunctionalLadder::from_samples("minkowskiContent", samples, window)?;
        ladder.limit_est = ladder.min_in_window;
        ladder.verdict = if ladder.limit_est.is_some() {
            Verdict::Finite
        } else {
            Verdict::NoPlateau
        };
        Ok(ladder)
    }

    /// Finite-scale surrogate for the density-threshold boundary: points
    /// where `min(mu(B_r cap E), mu(B_r minus E)) / mu(B_r) >= gamma` for
    /// some ladder radius (the `limsup` over `r -> 0` is replaced by the
    /// max over the supplied ladder).
    pub fn sigma_gamma_boundary(
        &self,
        set: &[usize],
        gamma: f64,
        r_ladder: &[f64],
    ) -> Result<Vec<usize>> {
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(Error::InvalidParam(format!(
                "gamma must lie in (0, 1/2], got {gamma}"
            )));
        }
        let mut in_set = vec![false; self.n()];
        for &x in set {
            self.check_index(x)?;
            in_set[x] = true;
        }
        Ok((0..self.n())
            .into_par_iter()
            .filter(|&x| {
                r_ladder.iter().any(|&r| {
                    let mut inside = 0.0;
                    let mut outside = 0.0;
                    for y in 0..self.n() {
                        if self.dist(x, y) < r {
                            if in_set[y] {
                                inside += self.mu[y];
                            } else {
                                outside += self.mu[y];
                            }
                        }
                    }
                    let total = inside + outside;
                    total > 0.0 && inside.min(outside) / total >= gamma
                })
            })
            .collect())
    }

    /// Greedy maximal `eps/2`-separated subset in ascending index order.
    ///
    /// The result covers the space with `eps`-balls. The overlap count of
    /// the `4*eps`-dilates is measured and reported.
    pub fn epsilon_net(&self, eps: f64) -> Result<EpsilonNet> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParam(format!("net radius must be positive, got {eps}")));
        }
        let subresolution = eps < self.resolution;
        let mut centers: Vec<usize> = Vec::new();
        for i in 0..self.n() {
            if centers.iter().all(|&c| self.dist(i, c) >= eps / 2.0) {
                centers.push(i);
            }
        }
        let overlap = (0..self.n())
            .into_par_iter()
            .map(|x| centers.iter().filter(|&&c| self.dist(x, c) < 4.0 * eps).count())
            .max()
            .unwrap_or(0);
        Ok(EpsilonNet {
            eps,
            centers,
            overlap,
            subresolution,
        })
    }

    /// Normalized tent functions over a covering net.
    ///
    /// `phi_i(x) = psi_i(x) / sum_j psi_j(x)` with
    /// `psi_i(x) = max(0, 1 - d(x, x_i) / (2 eps))`, so each `phi_i`
    /// vanishes outside `B_{2 eps}(x_i)` and the columns sum to one.
    pub fn partition_of_unity(&self, net: &EpsilonNet) -> Result<PartitionOfUnity> {
        let eps = net.eps;
        let n = self.n();
        let k = net.centers.len();
        let mut columns_sum = vec![0.0_f64; n];
        let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        for (ci, &c) in net.centers.iter().enumerate() {
            for x in 0..n {
                let psi = 1.0 - self.dist(c, x) / (2.0 * eps);
                if psi > 0.0 {
                    entries[ci].push((x, psi));
                    columns_sum[x] += psi;
                }
            }
        }
        if let Some(point) = columns_sum.iter().position(|&s| s == 0.0) {
            return Err(Error::NotCovered { point });
        }
        for col in entries.iter_mut() {
            for (x, v) in col.iter_mut() {
                *v /= columns_sum[*x];
            }
        }
        // Lipschitz constants measured over near pairs (d < eps).
        let mut dense = vec![0.0_f64; n];
        let mut lip_bound = vec![0.0_f64; k];
        for (ci, col) in entries.iter().enumerate() {
            for &(x, v) in col {
                dense[x] = v;
            }
            let mut lip: f64 = 0.0;
            for &(x, _) in col {
                for y in 0..n {
                    let d = self.dist(x, y);
                    if d > 0.0 && d < eps {
                        lip = lip.max((dense[x] - dense[y]).abs() / d);
                    }
                }
            }
            lip_bound[ci] = lip;
            for &(x, _) in col {
                dense[x] = 0.0;
            }
        }
        Ok(PartitionOfUnity {
            eps,
            centers: net.centers.clone(),
            phi: entries,
            lip_bound,
        })
    }

    /// Sampled doubling constant `c_D = max mu(B_2r) / mu(B_r)` and the
    /// volume exponent `q_mu = log2(c_D)`.
    pub fn doubling_estimate(&self, spec: &SampleSpec) -> Result<DoublingReport> {
        if spec.radii.is_empty() || spec.centers == 0 {
            return Err(Error::InvalidParam("doubling probe spec is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut probes: Vec<(usize, f64)> = Vec::new();
        for _ in 0..spec.centers {
            let x = rng.random_range(0..self.n());
            for &r in &spec.radii {
                probes.push((x, r));
            }
        }
        let c_d = probes
            .iter()
            .map(|&(x, r)| self.ball_measure_raw(x, 2.0 * r) / self.ball_measure_raw(x, r))
            .fold(1.0_f64, f64::max);
        Ok(DoublingReport {
            c_d,
            q_mu: c_d.log2(),
            radii_sampled: probes,
            seed: spec.seed,
        })
    }

    /// Sampled 1-Poincare constant: worst ratio of mean ball oscillation
    /// to `r` times the dilated-ball mean of the supplied local Lipschitz
    /// oracle. Probes with vanishing denominator are skipped; if all are
    /// skipped an error is returned.
    pub fn poincare_estimate<G>(
        &self,
        gradient_oracle: G,
        lambda: f64,
        spec: &PoincareSpec,
    ) -> Result<PoincareReport>
    where
        G: Fn(&[f64]) -> Vec<f64>,
    {
        if lambda < 1.0 {
            return Err(Error::InvalidParam(format!("lambda must be >= 1, got {lambda}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let test_functions = self.poincare_test_functions(&mut rng, spec);
        let mut c_p: Option<f64> = None;
        for u in &test_functions {
            let lip = gradient_oracle(u);
            for _ in 0..spec.balls_per_function {
                let x = rng.random_range(0..self.n());
                let r = spec.radii[rng.random_range(0..spec.radii.len())];
                let ball = self.ball(x, r)?;
                let ball_mass: f64 = ball.iter().map(|&y| self.mu[y]).sum();
                let mean = ball.iter().map(|&y| self.mu[y] * u[y]).sum::<f64>() / ball_mass;
                let osc = ball
                    .iter()
                    .map(|&y| self.mu[y] * (u[y] - mean).abs())
                    .sum::<f64>()
                    / ball_mass;
                let dilated = self.ball(x, lambda * r)?;
                let dilated_mass: f64 = dilated.iter().map(|&y| self.mu[y]).sum();
                let grad_mean = dilated
                    .iter()
                    .map(|&y| self.mu[y] * lip[y])
                    .sum::<f64>()
                    / dilated_mass;
                let denom = r * grad_mean;
                if denom > 0.0 {
                    let ratio = osc / denom;
                    c_p = Some(c_p.map_or(ratio, |c: f64| c.max(ratio)));
                }
            }
        }
        match c_p {
            Some(c_p) => Ok(PoincareReport {
                c_p,
                lambda,
                test_functions: test_functions.len(),
                seed: spec.seed,
            }),
            None => Err(Error::NoAdmissibleProbe),
        }
    }

    /// Random smooth profiles and indicator smoothings anchored at random
    /// points; defined through the metric only, so they exist on every
    /// space.
    fn poincare_test_functions(&self, rng: &mut ChaCha8Rng, spec: &PoincareSpec) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spec.functions);
        for k in 0..spec.functions {
            let anchor = rng.random_range(0..self.n());
            let scale = 0.25 * self.diameter * (1.0 + rng.random::<f64>());
            let u: Vec<f64> = if k % 2 == 0 {
                (0..self.n())
                    .map(|y| (std::f64::consts::PI * self.dist(anchor, y) / scale).cos())
                    .collect()
            } else {
                (0..self.n())
                    .map(|y| (1.0 - self.dist(anchor, y) / scale).max(0.0))
                    .collect()
            };
            out.push(u);
        }
        out
    }

    /// Serializable document for this space.
    pub fn to_doc(&self) -> SpaceDoc {
        let dist = match &self.provenance {
            DistProvenance::Dense => {
                let n = self.n();
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|i| (0..i).map(|j| self.dist(i, j)).collect())
                    .collect();
                DistDoc::Dense { rows }
            }
            DistProvenance::Generated { builder, params } => DistDoc::Generated {
                builder: builder.clone(),
                params: params.clone(),
            },
        };
        SpaceDoc {
            label: self.label.clone(),
            n: self.n(),
            mu: self.mu.clone(),
            dist,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }
}

/// JSON document shape for a space: dense distances are stored as the
/// row-major lower triangle; generated spaces store builder name and
/// parameters instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceDoc {
    pub label: String,
    pub n: usize,
    pub mu: Vec<f64>,
    pub dist: DistDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistDoc {
    Dense { rows: Vec<Vec<f64>> },
    Generated {
        builder: String,
        params: serde_json::Value,
    },
}

/// Doubling diagnostics. `q_mu = log2(c_D)` exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoublingReport {
    pub c_d: f64,
    pub q_mu: f64,
    pub radii_sampled: Vec<(usize, f64)>,
    pub seed: u64,
}

/// Sampled Poincare constant together with the dilation used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoincareReport {
    pub c_p: f64,
    pub lambda: f64,
    pub test_functions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub seed: u64,
    pub centers: usize,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PoincareSpec {
    pub seed: u64,
    pub functions: usize,
    pub balls_per_function: usize,
    pub radii: Vec<f64>,
}

/// A covering by `eps`-balls whose centers are pairwise `eps/2`-separated.
#[derive(Debug, Clone)]
pub struct EpsilonNet {
    pub eps: f64,
    pub centers: Vec<usize>,
    /// Maximal overlap count of the `4 eps`-dilated balls.
    pub overlap: usize,
    /// Set when `eps` is below the grid resolution (the net is then all
    /// points; allowed but flagged).
    pub subresolution: bool,
}

/// Tent-based partition of unity subordinate to a net.
///
/// `phi` is stored per center as `(point, value)` pairs over its support
/// `B_{2 eps}(center)`.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    pub eps: f64,
    pub centers: Vec<usize>,
    pub phi: Vec<Vec<(usize, f64)>>,
    /// Per-function Lipschitz constant measured over pairs closer than `eps`.
    pub lip_bound: Vec<f64>,
}

impl PartitionOfUnity {
    /// Column sums, one per point; equal to 1 up to rounding.
    pub fn column_sums(&self, n: usize) -> Vec<f64> {
        let mut sums = vec![0.0; n];
        for col in &self.phi {
            for &(x, v) in col {
                sums[x] += v;
            }
        }
        sums
    }
}

fn check_triangle(metric: &Metric) -> Result<()> {
    let n = metric.len();
    if n <= TRIANGLE_EXHAUSTIVE_N {
        for i in 0..n {
            if metric.dist(i, i) != 0.0 {
                return Err(Error::MetricViolation(format!("d({i},{i}) != 0")));
            }
            for j in 0..i {
                let dij = metric.dist(i, j);
                if dij <= 0.0 {
                    return Err(Error::MetricViolation(format!(
                        "coincident or negative distance between {i} and {j}"
                    )));
                }
                for k in 0..n {
                    if metric.dist(i, k) + metric.dist(k, j) < dij - 1e-12 * dij.max(1.0) {
                        return Err(Error::MetricViolation(format!(
                            "triangle inequality fails on ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_7472_6963);
        for _ in 0..TRIANGLE_SAMPLES {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let k = rng.random_range(0..n);
            let dij = metric.dist(i, j);
            if metric.dist(i, k) + metric.dist(k, j) < dij - 1e-12 * dij.max(1.0) {
                return Err(Error::MetricViolation(format!(
                    "triangle inequality fails on sampled ({i},{j},{k})"
                )));
            }
        }
    }
    Ok(())
}

fn extremal_distances(metric: &Metric) -> (f64, f64) {
    match metric {
        Metric::Circle { n } => {
            let h = 1.0 / *n as f64;
            ((*n / 2) as f64 * h, h)
        }
        Metric::Torus2d { m } => {
            let h = 1.0 / *m as f64;
            let k = (*m / 2) as f64;
            ((2.0f64).sqrt() * k * h, h)
        }
        Metric::Line { positions } => {
            let mut sorted = positions.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let diam = sorted.last().unwrap() - sorted.first().unwrap();
            let res = sorted
                .windows(2)
                .map(|w| w[1] - w[0])
                .filter(|d| *d > 0.0)
                .fold(f64::INFINITY, f64::min);
            (diam, if res.is_finite() { res } else { 0.0 })
        }
        _ => {
            let n = metric.len();
            let (diam, res) = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut dmax = 0.0_f64;
                    let mut dmin = f64::INFINITY;
                    for j in 0..i {
                        let d = metric.dist(i, j);
                        dmax = dmax.max(d);
                        if d > 0.0 {
                            dmin = dmin.min(d);
                        }
                    }
                    (dmax, dmin)
                })
                .reduce(
                    || (0.0, f64::INFINITY),
                    |a, b| (a.0.max(b.0), a.1.min(b.1)),
                );
            (diam, if res.is_finite() { res } else { 0.0 })
        }
    }
}
