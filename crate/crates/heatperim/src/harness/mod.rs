//! Experiment harness: configs, deterministic runs, result persistence.
//!
//! A run directory gets one CSV (plus a gnuplot `.dat` and an SVG) per
//! ladder functional and a single `manifest.json`. CSV bytes depend only
//! on the config and seed; wall-clock data lives in the manifest alone.

pub mod plot;

use crate::builders::{self, BuiltSpace};
use crate::error::{Error, Result};
use crate::generator::{build_generator, ConnectivityRule, Generator, KernelShape};
use crate::heat::{HeatOperator, Strategy};
use crate::ladder::{geometric_ladder, ladder_scan, FunctionalLadder, Verdict, WindowPolicy};
use crate::space::MetricMeasureSpace;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Size the global worker pool. Falls back to the `HEATPERIM_WORKERS`
/// environment variable when no explicit count is given; with neither,
/// the pool keeps its default. No-op if the pool already exists.
pub fn configure_workers(explicit: Option<usize>) {
    let count = explicit.or_else(|| {
        std::env::var("HEATPERIM_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(count) = count {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build_global();
    }
}

/// Default trusted-window factor: parameters below this multiple of the
/// grid resolution are flagged as grid artifacts.
pub const DEFAULT_WINDOW_FACTOR: f64 = 8.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub builder: String,
    pub params: Value,
}

/// Named scalar field on a space.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum FunctionSpec {
    /// Characteristic function of a set.
    Indicator { set: SetSpec },
    /// `sin(2 pi k . position)` along the primary coordinate.
    Sine {
        #[serde(default = "one")]
        frequency: f64,
    },
    /// The primary coordinate itself.
    Coordinate,
}

fn one() -> f64 {
    1.0
}

/// Named subsets of a space.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum SetSpec {
    /// Leading index range holding the given fraction of the points.
    Arc { fraction: f64 },
    /// Points whose primary coordinate is below the fraction.
    Band { fraction: f64 },
    /// Axis-aligned square on a torus lattice.
    Square {
        side: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        y0: f64,
    },
    /// Euclidean disk on a torus lattice.
    Disk {
        radius: f64,
        #[serde(default = "half")]
        cx: f64,
        #[serde(default = "half")]
        cy: f64,
    },
    /// Explicit index list.
    Indices { values: Vec<usize> },
    /// The indicator shipped by the space builder itself.
    Builder,
}

fn half() -> f64 {
    0.5
}

/// Primary coordinate in `[0,1)` used by `Sine`, `Coordinate`, and `Band`.
pub fn primary_coordinate(space: &MetricMeasureSpace, i: usize) -> f64 {
    match space.metric() {
        crate::space::Metric::Circle { n } => i as f64 / *n as f64,
        crate::space::Metric::Line { positions } => positions[i],
        crate::space::Metric::Torus2d { m } => (i % m) as f64 / *m as f64,
        crate::space::Metric::Cloud { dim, coords } => coords[i * dim],
        crate::space::Metric::Dense { .. } => i as f64 / space.n() as f64,
    }
}

pub fn realize_set(built: &BuiltSpace, spec: &SetSpec) -> Result<Vec<usize>> {
    let space = &built.space;
    let n = space.n();
    match spec {
        SetSpec::Arc { fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::Config(format!("arc fraction {fraction} out of [0,1]")));
            }
            Ok((0..((n as f64 * fraction).round() as usize).min(n)).collect())
        }
        SetSpec::Band { fraction } => Ok((0..n)
            .filter(|&i| primary_coordinate(space, i) < *fraction)
            .collect()),
        SetSpec::Square { side, x0, y0 } => match space.metric() {
            crate::space::Metric::Torus2d { m } => {
                Ok(builders::torus_square(*m, *x0, *y0, *side))
            }
            _ => Err(Error::Config("square set needs a torus lattice".into())),
        },
        SetSpec::Disk { radius, cx, cy } => match space.metric() {
            crate::space::Metric::Torus2d { m } => {
                Ok(builders::torus_disk(*m, *cx, *cy, *radius))
            }
            _ => Err(Error::Config("disk set needs a torus lattice".into())),
        },
        SetSpec::Indices { values } => {
            for &v in values {
                if v >= n {
                    return Err(Error::Config(format!("set index {v} out of range")));
                }
            }
            Ok(values.clone())
        }
        SetSpec::Builder => built
            .indicator
            .clone()
            .ok_or_else(|| Error::Config("this builder ships no indicator set".into())),
    }
}

pub fn realize_function(built: &BuiltSpace, spec: &FunctionSpec) -> Result<Vec<f64>> {
    let space = &built.space;
    let n = space.n();
    match spec {
        FunctionSpec::Indicator { set } => {
            let set = realize_set(built, set)?;
            let mut chi = vec![0.0; n];
            for x in set {
                chi[x] = 1.0;
            }
            Ok(chi)
        }
        FunctionSpec::Sine { frequency } => Ok((0..n)
            .map(|i| {
                (2.0 * std::f64::consts::PI * frequency * primary_coordinate(space, i)).sin()
            })
            .collect()),
        FunctionSpec::Coordinate => Ok((0..n).map(|i| primary_coordinate(space, i)).collect()),
    }
}

/// Ladder parameterization: spatial widths or heat times addressed
/// through their square root (so the window policy applies to a length).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderSpec {
    /// "eps" or "sqrtT".
    pub param: String,
    pub hi: f64,
    pub lo: f64,
    pub count: usize,
}

impl LadderSpec {
    pub fn params(&self) -> Result<Vec<f64>> {
        if !(self.hi > self.lo && self.lo > 0.0 && self.count >= 2) {
            return Err(Error::Config(format!(
                "ladder must be strictly decreasing and positive: hi={}, lo={}, count={}",
                self.hi, self.lo, self.count
            )));
        }
        Ok(geometric_ladder(self.hi, self.lo, self.count))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalSpec {
    /// "ksEnergy" | "ledouxGlobal" | "ledouxLocal" | "deGiorgi" | "minkowski".
    pub kind: String,
    #[serde(default)]
    pub function: Option<FunctionSpec>,
    #[serde(default)]
    pub set: Option<SetSpec>,
    pub ladder: LadderSpec,
    #[serde(default)]
    pub window_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub space: SpaceSpec,
    pub seed: u64,
    #[serde(default)]
    pub tol: Option<f64>,
    pub functionals: Vec<FunctionalSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Canonical JSON: objects with sorted keys and no insignificant
/// whitespace (the default `Value` printing), hashed with SHA-256.
pub fn canonical_config_hash(config: &ExperimentConfig) -> Result<String> {
    let value = serde_json::to_value(config)?;
    let canon = value.to_string();
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalOutcome {
    pub name: String,
    pub limit_est: Option<f64>,
    pub min_in_window: Option<f64>,
    pub verdict: String,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub wall_clock_seconds: BTreeMap<String, f64>,
    pub results: Vec<FunctionalOutcome>,
    pub environment: BTreeMap<String, String>,
}

fn environment_fingerprint() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("os".into(), std::env::consts::OS.into()),
        ("arch".into(), std::env::consts::ARCH.into()),
        ("artifact".into(), ARTIFACT_VERSION.into()),
    ])
}

/// CSV encoding of a ladder under the declared column schema.
pub fn ladder_to_csv(space_label: &str, ladder: &FunctionalLadder) -> String {
    let mut out = String::from("functional,space,param,value,in_window,limit_est,verdict\n");
    let est = ladder
        .limit_est
        .map(|v| format!("{v:?}"))
        .unwrap_or_default();
    let verdict = match ladder.verdict {
        Verdict::Finite => "finite",
        Verdict::NoPlateau => "no_plateau",
    };
    for s in &ladder.samples {
        out.push_str(&format!(
            "{},{},{:?},{:?},{},{},{}\n",
            ladder.name, space_label, s.param, s.value, s.in_window, est, verdict
        ));
    }
    out
}

/// Parse back what `ladder_to_csv` wrote (used by the plot subcommand and
/// the schema validation test).
pub fn ladder_from_csv(text: &str) -> Result<(String, FunctionalLadder)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty CSV".into()))?;
    if header != "functional,space,param,value,in_window,limit_est,verdict" {
        return Err(Error::Config(format!("unexpected CSV header '{header}'")));
    }
    let mut name = String::new();
    let mut space = String::new();
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut flags: Vec<bool> = Vec::new();
    let mut est: Option<f64> = None;
    let mut verdict = String::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Config(format!("bad CSV row '{line}'")));
        }
        name = cols[0].to_string();
        space = cols[1].to_string();
        let param: f64 = cols[2]
            .parse()
            .map_err(|_| Error::Config(format!("bad param '{}'", cols[2])))?;
        let value: f64 = cols[3]
            .parse()
            .map_err(|_| Error::Config(format!("bad value '{}'", cols[3])))?;
        let in_window: bool = cols[4]
            .parse()
            .map_err(|_| Error::Config(format!("bad flag '{}'", cols[4])))?;
        est = if cols[5].is_empty() {
            None
        } else {
            Some(
                cols[5]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad estimate '{}'", cols[5])))?,
            )
        };
        if !["finite", "no_plateau"].contains(&cols[6]) {
            return Err(Error::Config(format!("bad verdict '{}'", cols[6])));
        }
        verdict = cols[6].to_string();
        samples.push((param, value));
        flags.push(in_window);
    }
    if samples.is_empty() {
        return Err(Error::Config("CSV has no samples".into()));
    }
    // Reconstruct a window that reproduces the stored flags.
    let min_in = samples
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| f)
        .map(|((p, _), _)| *p)
        .fold(f64::INFINITY, f64::min);
    let window = if min_in.is_finite() {
        WindowPolicy::above(min_in)
    } else {
        WindowPolicy::above(f64::INFINITY)
    };
    let mut ladder = FunctionalLadder::from_samples(name.clone(), samples, window)?;
    ladder.limit_est = est;
    ladder.verdict = if verdict == "finite" {
        Verdict::Finite
    } else {
        Verdict::NoPlateau
    };
    let _ = name;
    Ok((space, ladder))
}

/// Gnuplot-friendly two-column data file.
pub fn ladder_to_dat(ladder: &FunctionalLadder) -> String {
    let mut out = format!("# {} param value in_window\n", ladder.name);
    for s in &ladder.samples {
        out.push_str(&format!(
            "{:?} {:?} {}\n",
            s.param,
            s.value,
            if s.in_window { 1 } else { 0 }
        ));
    }
    out
}

/// JSON-lines encoding for per-vertex vectors.
pub fn vector_to_jsonl(name: &str, values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!(
            "{}\n",
            serde_json::json!({ "name": name, "vertex": i, "value": v })
        ));
    }
    out
}

struct PreparedSpace {
    built: BuiltSpace,
    op: Arc<HeatOperator>,
}

fn prepare(config: &ExperimentConfig) -> Result<PreparedSpace> {
    let built = builders::build(&config.space.builder, &config.space.params)?;
    let space = Arc::new(built.space.clone());
    let gen = Arc::new(build_generator(
        space.clone(),
        ConnectivityRule::Radius {
            h: space.resolution(),
        },
        KernelShape::Indicator,
    )?);
    let tol = config.tol.unwrap_or(1e-10);
    let op = Arc::new(HeatOperator::new(gen, Strategy::Auto, tol)?);
    Ok(PreparedSpace { built, op })
}

fn run_functional(
    prepared: &PreparedSpace,
    spec: &FunctionalSpec,
) -> Result<FunctionalLadder> {
    let space = &prepared.built.space;
    let factor = spec.window_factor.unwrap_or(DEFAULT_WINDOW_FACTOR);
    let window = WindowPolicy::spatial(space.resolution(), factor);
    let params = spec.ladder.params()?;
    let sqrt_time = match spec.ladder.param.as_str() {
        "eps" => false,
        "sqrtT" => true,
        other => return Err(Error::Config(format!("unknown ladder parameter '{other}'"))),
    };
    match spec.kind.as_str() {
        "ksEnergy" => {
            let u = realize_function(
                &prepared.built,
                spec.function
                    .as_ref()
                    .ok_or_else(|| Error::Config("ksEnergy needs a function".into()))?,
            )?;
            if sqrt_time {
                return Err(Error::Config("ksEnergy expects an eps ladder".into()));
            }
            ladder_scan(
                "ksEnergy",
                |eps| crate::functionals::near_diagonal_energy(space, &u, eps),
                &params,
                window,
            )
        }
        "ledouxGlobal" | "ledouxLocal" => {
            let set = realize_set(
                &prepared.built,
                spec.set
                    .as_ref()
                    .ok_or_else(|| Error::Config("heat content needs a set".into()))?,
            )?;
            if !sqrt_time {
                return Err(Error::Config("heat content expects a sqrtT ladder".into()));
            }
            let op = prepared.op.clone();
            let local = spec.kind == "ledouxLocal";
            let samples: Result<Vec<(f64, f64)>> = params
                .iter()
                .map(|&p| {
                    let t = p * p;
                    let v = if local {
                        crate::functionals::ledoux_local(&op, &set, t)?
                    } else {
                        crate::functionals::ledoux_global(&op, &set, t)?
                    };
                    Ok((p, v))
                })
                .collect();
            FunctionalLadder::from_samples(spec.kind.clone(), samples?, window)
        }
        "deGiorgi" => {
            let u = realize_function(
                &prepared.built,
                spec.function
                    .as_ref()
                    .ok_or_else(|| Error::Config("deGiorgi needs a function".into()))?,
            )?;
            if !sqrt_time {
                return Err(Error::Config("deGiorgi expects a sqrtT ladder".into()));
            }
            let op = prepared.op.clone();
            let samples: Result<Vec<(f64, f64)>> = params
                .iter()
                .map(|&p| Ok((p, crate::functionals::de_giorgi(&op, &u, p * p)?)))
                .collect();
            FunctionalLadder::from_samples("deGiorgi", samples?, window)
        }
        "minkowski" => {
            let set = realize_set(
                &prepared.built,
                spec.set
                    .as_ref()
                    .ok_or_else(|| Error::Config("minkowski needs a set".into()))?,
            )?;
            let boundary = builders::lattice_boundary(space, &set);
            space.minkowski_content(&boundary, &params, WindowPolicy::spatial(space.resolution(), 4.0))
        }
        other => Err(Error::Config(format!("unknown functional '{other}'"))),
    }
}

/// Execute every functional in the config, write CSV/dat/SVG per
/// functional plus `manifest.json`, and return the manifest. Stage
/// failures are recorded and do not abort the remaining stages.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ResultManifest> {
    std::fs::create_dir_all(out_dir)?;
    let config_hash = canonical_config_hash(config)?;
    let mut wall = BTreeMap::new();

    let t0 = Instant::now();
    let prepared = prepare(config)?;
    wall.insert("prepare".to_string(), t0.elapsed().as_secs_f64());

    let mut results = Vec::new();
    for (idx, spec) in config.functionals.iter().enumerate() {
        let stage = format!("{}-{}", idx, spec.kind);
        let t = Instant::now();
        match run_functional(&prepared, spec) {
            Ok(ladder) => {
                let base = out_dir.join(&stage);
                std::fs::write(
                    base.with_extension("csv"),
                    ladder_to_csv(prepared.built.space.label(), &ladder),
                )?;
                std::fs::write(base.with_extension("dat"), ladder_to_dat(&ladder))?;
                std::fs::write(base.with_extension("svg"), plot::emit_plot(&ladder))?;
                results.push(FunctionalOutcome {
                    name: stage.clone(),
                    limit_est: ladder.limit_est,
                    min_in_window: ladder.min_in_window,
                    verdict: match ladder.verdict {
                        Verdict::Finite => "finite".into(),
                        Verdict::NoPlateau => "no_plateau".into(),
                    },
                    error: None,
                });
            }
            Err(err) => {
                results.push(FunctionalOutcome {
                    name: stage.clone(),
                    limit_est: None,
                    min_in_window: None,
                    verdict: "failed".into(),
                    error: Some(err.to_string()),
                });
            }
        }
        wall.insert(stage, t.elapsed().as_secs_f64());
    }

    let manifest = ResultManifest {
        config_hash,
        artifact_version: ARTIFACT_VERSION.to_string(),
        wall_clock_seconds: wall,
        results,
        environment: environment_fingerprint(),
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Expose the prepared generator/heat operator for subcommands that do a
/// single evaluation instead of a ladder.
pub fn prepare_space(spec: &SpaceSpec, tol: f64) -> Result<(BuiltSpace, Arc<Generator>, Arc<HeatOperator>)> {
    let built = builders::build(&spec.builder, &spec.params)?;
    let space = Arc::new(built.space.clone());
    let gen = Arc::new(build_generator(
        space.clone(),
        ConnectivityRule::Radius {
            h: space.resolution(),
        },
        KernelShape::Indicator,
    )?);
    let op = Arc::new(HeatOperator::new(gen.clone(), Strategy::Auto, tol)?);
    Ok((built, gen, op))
}
