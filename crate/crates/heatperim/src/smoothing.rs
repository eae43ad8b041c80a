//! Discrete approximation machinery: local Lipschitz constants, the
//! averaged-difference density and its measure, and partition-of-unity
//! convolution.

use crate::error::{Error, Result};
use crate::space::{EpsilonNet, MetricMeasureSpace, PartitionOfUnity};
use rayon::prelude::*;

/// Local Lipschitz constant at scale `rho`:
/// `max_{0 < d(x,y) <= rho} |u(x) - u(y)| / d(x,y)`.
///
/// Closed balls, so on a lattice `rho = h` sees the nearest neighbors.
/// A point isolated in its ball gets 0.
pub fn local_lip(space: &MetricMeasureSpace, u: &[f64], rho: f64) -> Vec<f64> {
    assert!(rho > 0.0, "rho must be positive");
    let n = space.n();
    let cutoff = rho * (1.0 + 1e-12);
    (0..n)
        .into_par_iter()
        .map(|x| {
            let mut lip: f64 = 0.0;
            for y in 0..n {
                let d = space.dist(x, y);
                if d > 0.0 && d <= cutoff {
                    lip = lip.max((u[x] - u[y]).abs() / d);
                }
            }
            lip
        })
        .collect()
}

/// Pointwise minimum of `local_lip` over a radius ladder; the finite
/// surrogate for the shrinking-radius liminf.
pub fn local_lip_ladder(space: &MetricMeasureSpace, u: &[f64], rhos: &[f64]) -> Vec<f64> {
    assert!(!rhos.is_empty());
    let mut out = local_lip(space, u, rhos[0]);
    for &rho in &rhos[1..] {
        let next = local_lip(space, u, rho);
        for (o, v) in out.iter_mut().zip(next) {
            *o = o.min(v);
        }
    }
    out
}

/// The averaged-difference density and the measure it induces.
#[derive(Debug, Clone)]
pub struct DifferenceDensity {
    /// `u~_{B_eps}(x) = (1/mu(B_eps(x))) sum_{y in B_eps(x)} mu_y |u(x)-u(y)| / eps`.
    pub density: Vec<f64>,
    /// `mu_eps = mu . density`.
    pub measure: Vec<f64>,
    /// Total mass `mu_eps(X)`.
    pub total_mass: f64,
}

pub fn averaged_difference_density(
    space: &MetricMeasureSpace,
    u: &[f64],
    eps: f64,
) -> DifferenceDensity {
    assert!(eps > 0.0);
    let n = space.n();
    let density: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut mass = 0.0;
            let mut acc = 0.0;
            for y in 0..n {
                if space.dist(x, y) < eps {
                    mass += space.mu(y);
                    acc += space.mu(y) * (u[x] - u[y]).abs();
                }
            }
            acc / (mass * eps)
        })
        .collect();
    let measure: Vec<f64> = density
        .iter()
        .enumerate()
        .map(|(x, d)| space.mu(x) * d)
        .collect();
    let total_mass = measure.iter().sum();
    DifferenceDensity {
        density,
        measure,
        total_mass,
    }
}

/// A partition-of-unity convolution of `u`: pointwise convex combination
/// of closed-ball averages over the net centers.
#[derive(Debug, Clone)]
pub struct SmoothedFunction {
    pub eps: f64,
    pub values: Vec<f64>,
}

/// `u_eps(x) = sum_i avg_{B_eps(x_i)}(u) phi_i(x)`.
///
/// Ball averages use closed balls of radius `eps` so every center's ball
/// is nonempty against the cover; the half-open discrepancy with the open
/// query balls is confined to exact-tie pair sets.
pub fn discrete_convolution(
    space: &MetricMeasureSpace,
    u: &[f64],
    net: &EpsilonNet,
    pou: &PartitionOfUnity,
) -> Result<SmoothedFunction> {
    if pou.centers != net.centers {
        return Err(Error::InvalidParam(
            "partition of unity was not built from this net".into(),
        ));
    }
    let n = space.n();
    let eps = net.eps;
    let averages: Vec<f64> = net
        .centers
        .par_iter()
        .map(|&c| {
            let mut mass = 0.0;
            let mut acc = 0.0;
            for y in 0..n {
                if space.dist(c, y) <= eps {
                    mass += space.mu(y);
                    acc += space.mu(y) * u[y];
                }
            }
            acc / mass
        })
        .collect();
    let mut values = vec![0.0; n];
    for (ci, col) in pou.phi.iter().enumerate() {
        for &(x, w) in col {
            values[x] += w * averages[ci];
        }
    }
    Ok(SmoothedFunction { eps, values })
}

/// The Lipschitz-energy bound from the constructive BV direction:
/// `lhs = sum mu . lip(u_eps)` at grid scale against
/// `rhs = mu_{dilate * eps}(X)`.
#[derive(Debug, Clone, Copy)]
pub struct LipEnergyBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; `None` when both sides vanish (constant input).
    pub ratio: Option<f64>,
    /// False when the dilated scale exceeds the space diameter.
    pub in_window: bool,
}

pub fn lip_energy_bound(
    space: &MetricMeasureSpace,
    u: &[f64],
    net: &EpsilonNet,
    pou: &PartitionOfUnity,
    dilate: f64,
) -> Result<LipEnergyBound> {
    if !(dilate > 0.0) {
        return Err(Error::InvalidParam("dilate must be positive".into()));
    }
    let smoothed = discrete_convolution(space, u, net, pou)?;
    let lip = local_lip(space, &smoothed.values, space.resolution());
    let lhs: f64 = (0..space.n()).map(|i| space.mu(i) * lip[i]).sum();
    let scaled = dilate * net.eps;
    let rhs = averaged_difference_density(space, u, scaled).total_mass;
    let ratio = if rhs > 0.0 { Some(lhs / rhs) } else { None };
    Ok(LipEnergyBound {
        lhs,
        rhs,
        ratio,
        in_window: scaled <= space.diameter(),
    })
}
