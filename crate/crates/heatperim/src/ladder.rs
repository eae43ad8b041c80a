//! Convergence ladders: finite surrogates for the `liminf` claims.
//!
//! Every limit in the source theorems is taken along `t -> 0` or
//! `eps -> 0`. On a finite space those limits do not exist, so each
//! functional is sampled along a strictly decreasing parameter ladder and
//! the limit is estimated from the pre-asymptotic plateau inside a trusted
//! window that excludes grid-scale artifacts.

use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative slope below which consecutive ladder samples count as flat.
pub const PLATEAU_SLOPE: f64 = 0.02;

/// Minimal run length of flat samples that forms a plateau.
pub const PLATEAU_RUN: usize = 3;

/// Trusted parameter range. Samples outside it are still evaluated and
/// reported but never enter the limit estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub min_param: f64,
    pub max_param: f64,
}

impl WindowPolicy {
    pub fn new(min_param: f64, max_param: f64) -> Self {
        WindowPolicy {
            min_param,
            max_param,
        }
    }

    /// Window bounded below only.
    pub fn above(min_param: f64) -> Self {
        WindowPolicy {
            min_param,
            max_param: f64::INFINITY,
        }
    }

    /// Default policy for spatial scales: trust `param >= factor * resolution`.
    pub fn spatial(resolution: f64, factor: f64) -> Self {
        Self::above(factor * resolution)
    }

    pub fn contains(&self, param: f64) -> bool {
        param >= self.min_param && param <= self.max_param
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LadderSample {
    pub param: f64,
    pub value: f64,
    pub in_window: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// A trailing plateau was found; `limit_est` is its median.
    Finite,
    /// No flat run of sufficient length inside the window.
    NoPlateau,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Finite => write!(f, "finite"),
            Verdict::NoPlateau => write!(f, "no plateau"),
        }
    }
}

/// A sampled functional along a parameter ladder, with its limit estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalLadder {
    pub name: String,
    /// Samples sorted by parameter, descending.
    pub samples: Vec<LadderSample>,
    pub window: WindowPolicy,
    /// Median of the last in-window plateau, if one exists.
    pub limit_est: Option<f64>,
    /// Minimum over the in-window samples (the liminf surrogate the
    /// plateau median is cross-checked against).
    pub min_in_window: Option<f64>,
    pub verdict: Verdict,
}

impl FunctionalLadder {
    /// Assemble a ladder from already-evaluated `(param, value)` samples.
    ///
    /// Samples must be strictly decreasing in the parameter. The limit
    /// estimate is the median of the last plateau: the latest maximal run
    /// of at least [`PLATEAU_RUN`] consecutive in-window samples whose
    /// successive relative changes stay below [`PLATEAU_SLOPE`].
    pub fn from_samples(
        name: impl Into<String>,
        samples: Vec<(f64, f64)>,
        window: WindowPolicy,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Ladder("empty ladder".into()));
        }
        for pair in samples.windows(2) {
            if pair[1].0 >= pair[0].0 {
                return Err(Error::Ladder(format!(
                    "ladder not strictly decreasing at {} -> {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        let samples: Vec<LadderSample> = samples
            .into_iter()
            .map(|(param, value)| LadderSample {
                param,
                value,
                in_window: window.contains(param),
            })
            .collect();
        let in_window: Vec<&LadderSample> = samples.iter().filter(|s| s.in_window).collect();
        let min_in_window = in_window
            .iter()
            .map(|s| s.value)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            });
        let limit_est = last_plateau_median(&in_window);
        let verdict = if limit_est.is_some() {
            Verdict::Finite
        } else {
            Verdict::NoPlateau
        };
        Ok(FunctionalLadder {
            name: name.into(),
            samples,
            window,
            limit_est,
            min_in_window,
            verdict,
        })
    }

    pub fn in_window_count(&self) -> usize {
        self.samples.iter().filter(|s| s.in_window).count()
    }
}

/// Median of the latest maximal flat run among in-window samples
/// (ordered by descending parameter, so "latest" is closest to the limit).
fn last_plateau_median(in_window: &[&LadderSample]) -> Option<f64> {
    if in_window.len() < PLATEAU_RUN {
        return None;
    }
    let values: Vec<f64> = in_window.iter().map(|s| s.value).collect();
    let flat = |a: f64, b: f64| {
        let scale = a.abs().max(b.abs());
        (a - b).abs() <= PLATEAU_SLOPE * scale || scale == 0.0
    };
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    while start < values.len() {
        let mut end = start;
        while end + 1 < values.len() && flat(values[end], values[end + 1]) {
            end += 1;
        }
        if end - start + 1 >= PLATEAU_RUN {
            best = Some((start, end));
        }
        start = end + 1;
    }
    best.map(|(s, e)| median(&values[s..=e]))
}

fn median(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Evaluate `functional` at every ladder parameter (concurrently) and build
/// the [`FunctionalLadder`]. Results are merged in parameter order, so the
/// output is deterministic regardless of scheduling.
///
/// Requires at least 4 in-window samples.
pub fn ladder_scan<F>(
    name: &str,
    functional: F,
    params: &[f64],
    window: WindowPolicy,
) -> Result<FunctionalLadder>
where
    F: Fn(f64) -> f64 + Sync,
{
    if params.len() < 2 {
        return Err(Error::Ladder("ladder needs at least 2 parameters".into()));
    }
    let in_window = params.iter().filter(|p| window.contains(**p)).count();
    if in_window < 4 {
        return Err(Error::Ladder(format!(
            "needs at least 4 in-window samples, got {in_window}"
        )));
    }
    let values: Vec<(f64, f64)> = params
        .par_iter()
        .map(|&p| (p, functional(p)))
        .collect();
    FunctionalLadder::from_samples(name, values, window)
}

/// Geometric ladder from `hi` down to `lo` with `count` points, strictly
/// decreasing, endpoints included.
pub fn geometric_ladder(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    assert!(hi > lo && lo > 0.0 && count >= 2);
    let ratio = (lo / hi).powf(1.0 / (count - 1) as f64);
    (0..count).map(|k| hi * ratio.powi(k as i32)).collect()
}
