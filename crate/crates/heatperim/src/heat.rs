//! Heat semigroup application `f -> e^{tA} f` and heat kernel rows.
//!
//! Two strategies share one contract. The spectral strategy
//! eigendecomposes the symmetrized generator once and applies the
//! exponential exactly; it is the default up to the size threshold. Above
//! it, a Lanczos exponential action with full reorthogonalization and
//! adaptive substepping is used. Both agree to the operator tolerance on
//! sizes where both are available.

use crate::error::{Error, Result};
use crate::generator::Generator;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Largest size for which the dense spectral factorization is the default.
pub const SPECTRAL_THRESHOLD: usize = 4096;

/// Hard cap on the Krylov dimension before time substepping kicks in.
const KRYLOV_DIM_MAX: usize = 200;

/// Lanczos steps per substep targeted by the a-priori splitting estimate.
const KRYLOV_DIM_TARGET: f64 = 140.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Spectral,
    Krylov,
    /// Spectral when `n <= SPECTRAL_THRESHOLD`, Krylov otherwise.
    Auto,
}

struct SpectralFactorization {
    /// Orthonormal eigenvectors of `S = M^{1/2} A M^{-1/2}`.
    q: DMatrix<f64>,
    eigs: DVector<f64>,
}

/// Immutable semigroup applier over a fixed generator.
pub struct HeatOperator {
    gen: Arc<Generator>,
    tol: f64,
    sqrt_mu: Vec<f64>,
    spectral: Option<SpectralFactorization>,
}

impl HeatOperator {
    /// Factorizes up front when the resolved strategy is spectral.
    pub fn new(gen: Arc<Generator>, strategy: Strategy, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParam(format!("tolerance must be positive, got {tol}")));
        }
        let n = gen.n();
        let use_spectral = match strategy {
            Strategy::Spectral => true,
            Strategy::Krylov => false,
            Strategy::Auto => n <= SPECTRAL_THRESHOLD,
        };
        let sqrt_mu: Vec<f64> = (0..n).map(|i| gen.space().mu(i).sqrt()).collect();
        let spectral = if use_spectral {
            let mut s = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                s[(i, i)] = gen.diag(i);
                for (j, v) in gen.sym_row(i) {
                    s[(i, j)] = v;
                }
            }
            // Symmetrize exactly against rounding in the similarity scaling.
            for i in 0..n {
                for j in 0..i {
                    let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                    s[(i, j)] = v;
                    s[(j, i)] = v;
                }
            }
            let eig = s.symmetric_eigen();
            Some(SpectralFactorization {
                q: eig.eigenvectors,
                eigs: eig.eigenvalues,
            })
        } else {
            None
        };
        Ok(HeatOperator {
            gen,
            tol,
            sqrt_mu,
            spectral,
        })
    }

    pub fn with_defaults(gen: Arc<Generator>) -> Result<Self> {
        Self::new(gen, Strategy::Auto, 1e-10)
    }

    pub fn generator(&self) -> &Arc<Generator> {
        &self.gen
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn strategy_name(&self) -> &'static str {
        if self.spectral.is_some() {
            "spectral"
        } else {
            "krylov"
        }
    }

    /// `e^{tA} f`. Returns `f` exactly at `t = 0`.
    pub fn apply(&self, f: &[f64], t: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::InvalidParam(format!("time must be nonnegative, got {t}")));
        }
        if f.len() != self.gen.n() {
            return Err(Error::InvalidParam(format!(
                "vector length {} does not match space size {}",
                f.len(),
                self.gen.n()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("input vector must be finite".into()));
        }
        if t == 0.0 {
            return Ok(f.to_vec());
        }
        match &self.spectral {
            Some(fac) => Ok(self.apply_spectral(fac, f, t)),
            None => self.apply_krylov(f, t),
        }
    }

    fn apply_spectral(&self, fac: &SpectralFactorization, f: &[f64], t: f64) -> Vec<f64> {
        let n = f.len();
        let g = DVector::from_iterator(n, (0..n).map(|i| f[i] * self.sqrt_mu[i]));
        let mut coeffs = fac.q.transpose() * g;
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= (t * fac.eigs[k]).exp();
        }
        let out = &fac.q * coeffs;
        (0..n).map(|i| out[i] / self.sqrt_mu[i]).collect()
    }

    fn apply_krylov(&self, f: &[f64], t: f64) -> Result<Vec<f64>> {
        let n = f.len();
        let mut g: Vec<f64> = (0..n).map(|i| f[i] * self.sqrt_mu[i]).collect();
        // A-priori substep count from the Gershgorin spectral radius:
        // Lanczos resolves exp on a spectrum of width L after about
        // sqrt(t L) steps.
        let width = self.gen.spectral_radius_bound();
        let expected = (t * width).sqrt();
        let mut steps = (expected / KRYLOV_DIM_TARGET).powi(2).ceil().max(1.0) as usize;
        let mut done = false;
        let mut attempts = 0;
        while !done {
            let dt = t / steps as f64;
            let mut ok = true;
            let mut current = g.clone();
            for _ in 0..steps {
                match lanczos_expm_step(&self.gen, &current, dt, self.tol) {
                    Some(next) => current = next,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                g = current;
                done = true;
            } else {
                steps *= 2;
                attempts += 1;
                if attempts > 12 {
                    return Err(Error::KrylovNoConvergence { residual: f64::NAN });
                }
            }
        }
        Ok((0..n).map(|i| g[i] / self.sqrt_mu[i]).collect())
    }

    /// Heat kernel row `p(t, x, .)`: the density of `T_t` against `mu`,
    /// so that `T_t f(x) = sum_y p(t,x,y) f(y) mu(y)`.
    pub fn heat_kernel_row(&self, t: f64, x: usize) -> Result<Vec<f64>> {
        Ok(self.heat_kernel_row_diag(t, x)?.0)
    }

    /// Kernel row together with the clamping diagnostic: entries below
    /// `-tol * scale` are clamped to that floor and counted, never
    /// silently zeroed.
    pub fn heat_kernel_row_diag(&self, t: f64, x: usize) -> Result<(Vec<f64>, KernelDiag)> {
        if !(t > 0.0) {
            return Err(Error::InvalidParam(format!("kernel time must be positive, got {t}")));
        }
        if x >= self.gen.n() {
            return Err(Error::IndexOutOfRange { index: x, n: self.gen.n() });
        }
        let n = self.gen.n();
        let mut spike = vec![0.0; n];
        spike[x] = 1.0 / self.gen.space().mu(x);
        let mut row = self.apply(&spike, t)?;
        let scale = row.iter().cloned().fold(0.0_f64, f64::max);
        let floor = -self.tol * scale;
        let mut clamped = 0;
        let mut min_raw = 0.0_f64;
        for v in row.iter_mut() {
            min_raw = min_raw.min(*v);
            if *v < floor {
                *v = floor;
                clamped += 1;
            }
        }
        Ok((row, KernelDiag { clamped, min_raw }))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KernelDiag {
    pub clamped: usize,
    pub min_raw: f64,
}

/// One Lanczos exponential step `e^{dt S} g` with full
/// reorthogonalization. Returns `None` when the Krylov budget is
/// exhausted before the coefficient tail converges.
fn lanczos_expm_step(gen: &Generator, g: &[f64], dt: f64, tol: f64) -> Option<Vec<f64>> {
    let n = g.len();
    let beta0 = norm(g);
    if beta0 == 0.0 {
        return Some(vec![0.0; n]);
    }
    let mut basis: Vec<Vec<f64>> = vec![g.iter().map(|v| v / beta0).collect()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev_coeffs: Option<DVector<f64>> = None;
    let mut m = 0;
    loop {
        gen.apply_sym(&basis[m], &mut w);
        let alpha = dot(&w, &basis[m]);
        alphas.push(alpha);
        for (i, b) in basis.iter().enumerate() {
            let coeff = if i == m {
                alpha
            } else if i + 1 == m {
                betas[m - 1]
            } else {
                0.0
            };
            axpy(&mut w, -coeff, b);
        }
        // Full reorthogonalization pass.
        for b in &basis {
            let c = dot(&w, b);
            axpy(&mut w, -c, b);
        }
        let beta = norm(&w);
        m += 1;
        let happy = beta <= 1e-14 * alphas[0].abs().max(1.0);
        let check_now = happy || m == KRYLOV_DIM_MAX || m % 5 == 0;
        if check_now {
            let coeffs = small_exp_e1(&alphas, &betas, dt);
            let converged = match &prev_coeffs {
                Some(prev) => {
                    let mut diff = 0.0;
                    for k in 0..coeffs.len() {
                        let p = if k < prev.len() { prev[k] } else { 0.0 };
                        diff += (coeffs[k] - p) * (coeffs[k] - p);
                    }
                    diff.sqrt() <= tol.max(1e-15)
                }
                None => false,
            };
            if happy || converged {
                let mut out = vec![0.0; n];
                for (k, b) in basis.iter().enumerate() {
                    axpy(&mut out, beta0 * coeffs[k], b);
                }
                return Some(out);
            }
            prev_coeffs = Some(coeffs);
        }
        if m == KRYLOV_DIM_MAX {
            return None;
        }
        betas.push(beta);
        if beta == 0.0 {
            basis.push(vec![0.0; n]);
        } else {
            basis.push(w.iter().map(|v| v / beta).collect());
        }
    }
}

/// `exp(dt T) e_1` for the tridiagonal Lanczos matrix.
fn small_exp_e1(alphas: &[f64], betas: &[f64], dt: f64) -> DVector<f64> {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut acc = DVector::<f64>::zeros(m);
    for k in 0..m {
        let weight = eig.eigenvectors[(0, k)] * (dt * eig.eigenvalues[k]).exp();
        for i in 0..m {
            acc[i] += weight * eig.eigenvectors[(i, k)];
        }
    }
    acc
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Fitted constants of the two-sided Gaussian kernel bounds
/// `C^{-1} e^{-d^2/(C1 t)} / sqrt(mu B mu B) <= p <= C e^{-d^2/(C2 t)} / sqrt(mu B mu B)`
/// over a sample set, with the goodness of the log-linear decay fit.
#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Fit `(C, C1, C2)` as envelopes over samples `(t, x, y)`:
/// `C` is pinned by the near-diagonal maximum of the normalized kernel
/// `q = p sqrt(mu(B_sqrt_t(x)) mu(B_sqrt_t(y)))`; `C2` is the smallest
/// upper-bound rate and `C1` the largest lower-bound rate that close both
/// envelopes over every sample. `r2` comes from regressing `log q` on
/// `d^2/t` over the decay regime `d^2/t` in `[1, 10]`.
pub fn fit_gaussian_bounds(
    op: &HeatOperator,
    samples: &[(f64, usize, usize)],
) -> Result<GaussianFit> {
    let space = op.generator().space();
    let mut rows: std::collections::BTreeMap<(u64, usize), Vec<f64>> = std::collections::BTreeMap::new();
    let mut ball_cache: std::collections::BTreeMap<u64, Vec<f64>> = std::collections::BTreeMap::new();
    let mut normalized: Vec<(f64, f64)> = Vec::new(); // (s = d^2/t, q)
    for &(t, x, y) in samples {
        if !(t > 0.0) {
            return Err(Error::InvalidParam("sample times must be positive".into()));
        }
        let tkey = t.to_bits();
        let row = match rows.get(&(tkey, x)) {
            Some(r) => r.clone(),
            None => {
                let r = op.heat_kernel_row(t, x)?;
                rows.insert((tkey, x), r.clone());
                r
            }
        };
        let balls = match ball_cache.get(&tkey) {
            Some(b) => b.clone(),
            None => {
                let b = space.ball_measures_all(t.sqrt());
                ball_cache.insert(tkey, b.clone());
                b
            }
        };
        let p = row[y];
        if p <= 0.0 {
            continue;
        }
        let q = p * (balls[x] * balls[y]).sqrt();
        let d = space.dist(x, y);
        normalized.push((d * d / t, q));
    }
    if normalized.is_empty() {
        return Err(Error::InsufficientSamples { found: 0 });
    }
    let decay: Vec<(f64, f64)> = normalized
        .iter()
        .cloned()
        .filter(|&(s, _)| (1.0..=10.0).contains(&s))
        .collect();
    if decay.len() < 8 {
        return Err(Error::InsufficientSamples { found: decay.len() });
    }

    // Upper envelope: C from the overall max of q (attained near the
    // diagonal for a Gaussian-shaped kernel), then the smallest C2.
    let c = normalized.iter().map(|&(_, q)| q).fold(f64::MIN, f64::max) * (1.0 + 1e-9);
    let c2 = normalized
        .iter()
        .filter(|&&(s, q)| s > 0.0 && q < c)
        .map(|&(s, q)| s / (c / q).ln())
        .fold(0.0_f64, f64::max);
    // Lower envelope with the same C: largest admissible decay rate.
    let c1 = normalized
        .iter()
        .filter(|&&(s, q)| s > 0.0 && c * q < 1.0)
        .map(|&(s, q)| s / (1.0 / (c * q)).ln())
        .fold(f64::INFINITY, f64::min);
    let c1 = if c1.is_finite() { c1 } else { c2 };

    // Log-linear decay fit.
    let xs: Vec<f64> = decay.iter().map(|&(s, _)| s).collect();
    let ys: Vec<f64> = decay.iter().map(|&(_, q)| q.ln()).collect();
    let r2 = linear_r2(&xs, &ys);

    Ok(GaussianFit {
        c,
        c1,
        c2,
        r2,
        samples: normalized.len(),
    })
}

fn linear_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy * sxy) / (sxx * syy)
}

/// Sample grid for the Gaussian fit: pairs around each base point at each
/// time, spanning the near-diagonal and the decay regime.
pub fn gaussian_sample_grid(
    space: &crate::space::MetricMeasureSpace,
    times: &[f64],
    base_points: &[usize],
) -> Vec<(f64, usize, usize)> {
    let mut out = Vec::new();
    for &t in times {
        let rt = t.sqrt();
        for &x in base_points {
            out.push((t, x, x));
            for y in 0..space.n() {
                let s = space.dist(x, y).powi(2) / t;
                if (0.25..=10.0).contains(&s) {
                    out.push((t, x, y));
                }
            }
            let _ = rt;
        }
    }
    out
}
