//! Curvature machinery: the iterated carre du champ, per-vertex best
//! lower curvature bounds, the three equivalent curvature inequalities,
//! the L1-gradient self-improvement residual, and the semigroup
//! time-convolution smoother.

use crate::bv;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::heat::HeatOperator;
use crate::ladder::{FunctionalLadder, WindowPolicy};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

/// `Gamma_2(f)(i) = 1/2 (A Gamma(f,f))(i) - Gamma(f, Af)(i)`.
///
/// On a finite space the singular part of the iterated form vanishes and
/// this density carries everything.
pub fn gamma2(gen: &Generator, f: &[f64]) -> Vec<f64> {
    let gamma = gen.gamma(f);
    let a_gamma = gen.apply(&gamma);
    let af = gen.apply(f);
    let cross = gen.carre_du_champ(f, &af);
    (0..gen.n())
        .map(|i| 0.5 * a_gamma[i] - cross[i])
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub vertex: usize,
    pub function: Vec<f64>,
}

/// Per-vertex and global best constants `K` with
/// `Gamma_2(f)(x) >= K Gamma(f,f)(x)` over all local functions.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub per_vertex_k: Vec<f64>,
    pub global_k: f64,
    pub method: String,
    pub neighborhood_radius: usize,
    /// A minimizing function at the argmin vertex, in global coordinates.
    pub witness: Option<Witness>,
}

impl CurvatureReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,k_local\n");
        for (i, k) in self.per_vertex_k.iter().enumerate() {
            out.push_str(&format!("{i},{k:?}\n"));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "globalK": self.global_k,
            "method": self.method,
            "radius": self.neighborhood_radius,
            "tolerances": { "pencil_null": PENCIL_NULL_TOL },
        })
        .to_string()
    }
}

/// Relative eigenvalue threshold below which a pencil direction counts as
/// null and is deflated.
const PENCIL_NULL_TOL: f64 = 1e-11;

/// Best local curvature constants by a deflated generalized eigenvalue
/// problem on each vertex's 2-hop neighborhood.
///
/// `Gamma_2(f)(x)` only depends on values within 2 hops of `x`, so the
/// minimization over all functions collapses to a small dense pencil.
/// The null space of the local `Gamma` form is separated off and
/// eliminated through a Schur complement; on its own block the iterated
/// form is provably positive semidefinite with coupling vanishing on its
/// kernel, which keeps the infimum finite.
pub fn best_k(gen: &Generator, neighborhood_radius: usize) -> Result<CurvatureReport> {
    if neighborhood_radius < 2 {
        return Err(Error::InvalidParam(
            "neighborhood radius must be at least 2 hops".into(),
        ));
    }
    let n = gen.n();
    let locals: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|x| local_best_k(gen, x, neighborhood_radius))
        .collect::<Result<Vec<_>>>()?;
    let per_vertex_k: Vec<f64> = locals.iter().map(|(k, _)| *k).collect();
    let (argmin, &global_k) = per_vertex_k
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let witness = Some(Witness {
        vertex: argmin,
        function: locals[argmin].1.clone(),
    });
    Ok(CurvatureReport {
        per_vertex_k,
        global_k,
        method: "2-hop deflated pencil".into(),
        neighborhood_radius,
        witness,
    })
}

fn local_best_k(gen: &Generator, x: usize, radius: usize) -> Result<(f64, Vec<f64>)> {
    // Vertices within `radius` hops, x first.
    let mut verts = vec![x];
    let mut seen = std::collections::BTreeSet::from([x]);
    let mut frontier = vec![x];
    for _ in 0..radius {
        let mut next = Vec::new();
        for &v in &frontier {
            for &(w, _) in gen.row(v) {
                if seen.insert(w) {
                    verts.push(w);
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    let dim = verts.len();
    let index_of = |v: usize| verts.iter().position(|&w| w == v).unwrap();

    // Gamma form at x: 1/2 sum_{j ~ x} A(x,j) (f_j - f_x)^2.
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    let ix = 0;
    for &(j, a) in gen.row(x) {
        let jj = index_of(j);
        g[(ix, ix)] += 0.5 * a;
        g[(jj, jj)] += 0.5 * a;
        g[(ix, jj)] -= 0.5 * a;
        g[(jj, ix)] -= 0.5 * a;
    }

    // Gamma_2 form at x via polarization of the local evaluation.
    let q = |f: &[f64]| local_gamma2_at(gen, x, &verts, f);
    let mut b = DMatrix::<f64>::zeros(dim, dim);
    let mut eu = vec![0.0; dim];
    let mut ev = vec![0.0; dim];
    for u in 0..dim {
        eu[u] = 1.0;
        b[(u, u)] = q(&eu);
        for v in 0..u {
            ev[v] = 1.0;
            let mut plus = vec![0.0; dim];
            let mut minus = vec![0.0; dim];
            plus[u] = 1.0;
            plus[v] = 1.0;
            minus[u] = 1.0;
            minus[v] = -1.0;
            let val = 0.25 * (q(&plus) - q(&minus));
            b[(u, v)] = val;
            b[(v, u)] = val;
            ev[v] = 0.0;
        }
        eu[u] = 0.0;
    }

    // Deflate the null space of G.
    let eig_g = g.clone().symmetric_eigen();
    let gmax = eig_g.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if gmax <= 0.0 {
        return Err(Error::Eigensolver {
            vertex: x,
            detail: "local Gamma form has no positive direction".into(),
        });
    }
    let mut range_cols = Vec::new();
    let mut null_cols = Vec::new();
    for k in 0..dim {
        if eig_g.eigenvalues[k] > PENCIL_NULL_TOL * gmax {
            range_cols.push(k);
        } else {
            null_cols.push(k);
        }
    }
    let r = range_cols.len();
    let z = null_cols.len();
    // W maps reduced coordinates to functions with W^T G W = I.
    let mut w = DMatrix::<f64>::zeros(dim, r);
    for (c, &k) in range_cols.iter().enumerate() {
        let s = eig_g.eigenvalues[k].sqrt();
        for i in 0..dim {
            w[(i, c)] = eig_g.eigenvectors[(i, k)] / s;
        }
    }
    let mut zm = DMatrix::<f64>::zeros(dim, z);
    for (c, &k) in null_cols.iter().enumerate() {
        for i in 0..dim {
            zm[(i, c)] = eig_g.eigenvectors[(i, k)];
        }
    }

    let b_rr = w.transpose() * &b * &w;
    let reduced = if z > 0 {
        let b_rn = w.transpose() * &b * &zm;
        let b_nn = zm.transpose() * &b * &zm;
        let eig_nn = b_nn.clone().symmetric_eigen();
        let nn_scale = eig_nn
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .fold(0.0_f64, f64::max)
            .max(b_rr.iter().map(|v| v.abs()).fold(0.0_f64, f64::max));
        // Pseudo-inverse on the positive part; a genuinely negative block
        // would make the infimum unbounded, which the structure rules out.
        let mut pinv = DMatrix::<f64>::zeros(z, z);
        for k in 0..z {
            let lam = eig_nn.eigenvalues[k];
            if lam < -1e-8 * nn_scale.max(1e-300) {
                return Err(Error::Eigensolver {
                    vertex: x,
                    detail: format!("iterated form indefinite on the null block ({lam:.3e})"),
                });
            }
            if lam > PENCIL_NULL_TOL * nn_scale {
                let col = eig_nn.eigenvectors.column(k);
                for i in 0..z {
                    for j in 0..z {
                        pinv[(i, j)] += col[i] * col[j] / lam;
                    }
                }
            }
        }
        &b_rr - &b_rn * pinv.clone() * b_rn.transpose()
    } else {
        b_rr
    };

    let eig_red = reduced.symmetric_eigen();
    let (kmin_idx, kmin) = eig_red
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, v)| (i, *v))
        .unwrap();

    // Reconstruct a minimizer in global coordinates.
    let y = eig_red.eigenvectors.column(kmin_idx).into_owned();
    let mut f_local = &w * &y;
    if z > 0 {
        let b_rn = w.transpose() * &b * &zm;
        let b_nn = zm.transpose() * &b * &zm;
        let eig_nn = b_nn.symmetric_eigen();
        let nn_scale = eig_nn
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .fold(0.0_f64, f64::max);
        let rhs = b_rn.transpose() * &y;
        let mut zc = nalgebra::DVector::<f64>::zeros(z);
        for k in 0..z {
            let lam = eig_nn.eigenvalues[k];
            if lam > PENCIL_NULL_TOL * nn_scale.max(1e-300) {
                let col = eig_nn.eigenvectors.column(k);
                let coeff = col.dot(&rhs) / lam;
                for i in 0..z {
                    zc[i] -= coeff * col[i];
                }
            }
        }
        f_local += &zm * zc;
    }
    let mut f_global = vec![0.0; gen.n()];
    for (i, &v) in verts.iter().enumerate() {
        f_global[v] = f_local[i];
    }
    Ok((kmin, f_global))
}

/// `Gamma_2(f)(x)` from local values on `verts` (x first), using only the
/// entries of `A` inside the neighborhood.
fn local_gamma2_at(gen: &Generator, x: usize, verts: &[usize], f: &[f64]) -> f64 {
    let value = |v: usize| -> f64 {
        verts
            .iter()
            .position(|&w| w == v)
            .map(|i| f[i])
            .unwrap_or(0.0)
    };
    let gamma_at = |v: usize| -> f64 {
        0.5 * gen
            .row(v)
            .iter()
            .map(|&(j, a)| {
                let d = value(j) - value(v);
                a * d * d
            })
            .sum::<f64>()
    };
    let af_at = |v: usize| -> f64 {
        gen.row(v)
            .iter()
            .map(|&(j, a)| a * (value(j) - value(v)))
            .sum()
    };
    let fx = value(x);
    let gx = gamma_at(x);
    let afx = af_at(x);
    let mut a_gamma = 0.0;
    let mut cross = 0.0;
    for &(j, a) in gen.row(x) {
        a_gamma += a * (gamma_at(j) - gx);
        cross += a * (value(j) - fx) * (af_at(j) - afx);
    }
    0.5 * a_gamma - 0.5 * cross
}

/// Scale used to judge near-zero residuals in the verifier family.
fn sup_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct Be1Check {
    pub residual: f64,
    pub scale: f64,
    pub pass: bool,
}

/// Weak-form curvature inequality for one test pair `(f, phi >= 0)`:
/// `1/2 <Gamma(f,f), A phi> - <phi, Gamma(f, Af)> - K <phi, Gamma(f,f)> >= 0`
/// up to `1e-8 * scale`.
pub fn verify_be1(gen: &Generator, k: f64, f: &[f64], phi: &[f64]) -> Result<Be1Check> {
    if phi.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidParam("phi must be nonnegative".into()));
    }
    let space = gen.space();
    let gamma = gen.gamma(f);
    let a_phi = gen.apply(phi);
    let af = gen.apply(f);
    let cross = gen.carre_du_champ(f, &af);
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        (0..gen.n()).map(|i| space.mu(i) * a[i] * b[i]).sum()
    };
    let t1 = 0.5 * inner(&gamma, &a_phi);
    let t2 = inner(phi, &cross);
    let t3 = k * inner(phi, &gamma);
    let residual = t1 - t2 - t3;
    let scale = t1.abs().max(t2.abs()).max(t3.abs()).max(1e-300);
    Ok(Be1Check {
        residual,
        scale,
        pass: residual >= -1e-8 * scale,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GradientBoundCheck {
    pub max_violation: f64,
    pub scale: f64,
    pub pass: bool,
}

/// Semigroup gradient commutation: pointwise
/// `Gamma(T_t f) <= e^{-2Kt} T_t Gamma(f)` up to `1e-8 * scale`.
pub fn verify_be2(op: &HeatOperator, k: f64, f: &[f64], t: f64) -> Result<GradientBoundCheck> {
    if !(t > 0.0) {
        return Err(Error::InvalidParam("time must be positive".into()));
    }
    let gen = op.generator();
    let tf = op.apply(f, t)?;
    let gamma_tf = gen.gamma(&tf);
    let gamma_f = gen.gamma(f);
    let t_gamma = op.apply(&gamma_f, t)?;
    let factor = (-2.0 * k * t).exp();
    let max_violation = (0..gen.n())
        .map(|i| gamma_tf[i] - factor * t_gamma[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = sup_norm(&gamma_f).max(1e-300);
    Ok(GradientBoundCheck {
        max_violation,
        scale,
        pass: max_violation <= 1e-8 * scale,
    })
}

/// Variance form: pointwise
/// `[(e^{2Kt}-1)/K] Gamma(T_t f) <= T_t(f^2) - (T_t f)^2`,
/// with the analytic limit prefactor `2t` at `K = 0`.
pub fn verify_be3(op: &HeatOperator, k: f64, f: &[f64], t: f64) -> Result<GradientBoundCheck> {
    if !(t > 0.0) {
        return Err(Error::InvalidParam("time must be positive".into()));
    }
    let gen = op.generator();
    let prefactor = if k == 0.0 {
        2.0 * t
    } else {
        (2.0 * k * t).exp_m1() / k
    };
    let tf = op.apply(f, t)?;
    let gamma_tf = gen.gamma(&tf);
    let f2: Vec<f64> = f.iter().map(|v| v * v).collect();
    let tf2 = op.apply(&f2, t)?;
    let max_violation = (0..gen.n())
        .map(|i| prefactor * gamma_tf[i] - (tf2[i] - tf[i] * tf[i]))
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = f.iter().map(|v| v * v).fold(0.0_f64, f64::max).max(1e-300);
    Ok(GradientBoundCheck {
        max_violation,
        scale,
        pass: max_violation <= 1e-8 * scale,
    })
}

/// Residual of the delta-regularized L1 gradient estimate
/// `sqrt(Gamma(T_t f) + d^2) - d <= e^{-Kt} T_t (sqrt(Gamma(f) + d^2) - d)`.
///
/// Reported everywhere; asserted as a pass only on calibrated lattice
/// families, since without a chain rule the inequality can genuinely fail
/// off the continuum limit.
pub fn verify_self_improvement(
    op: &HeatOperator,
    k: f64,
    f: &[f64],
    t: f64,
    delta: f64,
) -> Result<f64> {
    if !(t > 0.0) || delta < 0.0 {
        return Err(Error::InvalidParam("need t > 0 and delta >= 0".into()));
    }
    let gen = op.generator();
    let tf = op.apply(f, t)?;
    let gamma_tf = gen.gamma(&tf);
    let gamma_f = gen.gamma(f);
    let reg: Vec<f64> = gamma_f
        .iter()
        .map(|&g| (g + delta * delta).sqrt() - delta)
        .collect();
    let t_reg = op.apply(&reg, t)?;
    let factor = (-k * t).exp();
    Ok((0..gen.n())
        .map(|i| (gamma_tf[i] + delta * delta).sqrt() - delta - factor * t_reg[i])
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Quadrature of a smooth bump against the semigroup in time.
#[derive(Debug, Clone)]
pub struct PazyKernel {
    pub nodes: Vec<f64>,
    /// Weights including the node spacing; they sum to 1.
    pub weights: Vec<f64>,
}

impl PazyKernel {
    /// Midpoint quadrature of the bump `exp(-1/(s(1-s)))` on `(0,1)`,
    /// normalized to unit mass.
    pub fn bump(nodes: usize) -> Self {
        assert!(nodes >= 2);
        let mut xs = Vec::with_capacity(nodes);
        let mut ws = Vec::with_capacity(nodes);
        for q in 0..nodes {
            let s = (q as f64 + 0.5) / nodes as f64;
            xs.push(s);
            ws.push((-1.0 / (s * (1.0 - s))).exp() / nodes as f64);
        }
        let total: f64 = ws.iter().sum();
        for w in ws.iter_mut() {
            *w /= total;
        }
        PazyKernel {
            nodes: xs,
            weights: ws,
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.nodes.is_empty()
            && self.nodes.len() == self.weights.len()
            && self.weights.iter().all(|&w| w >= 0.0)
            && (self.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10
    }
}

impl Default for PazyKernel {
    fn default() -> Self {
        PazyKernel::bump(32)
    }
}

/// Time convolution `beta_eps f = sum_q w_q T_{eps s_q} f`: a smoothing
/// operator that commutes with the generator.
pub fn pazy_convolution(
    op: &HeatOperator,
    f: &[f64],
    eps: f64,
    kernel: &PazyKernel,
) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParam("convolution scale must be positive".into()));
    }
    if !kernel.is_valid() {
        return Err(Error::InvalidParam("invalid quadrature kernel".into()));
    }
    let n = f.len();
    let mut out = vec![0.0; n];
    for (s, w) in kernel.nodes.iter().zip(&kernel.weights) {
        let term = op.apply(f, eps * s)?;
        for i in 0..n {
            out[i] += w * term[i];
        }
    }
    Ok(out)
}

/// `||A(beta_eps f) - beta_eps(A f)||_inf`, both orderings evaluated
/// directly.
pub fn pazy_commutation_residual(
    op: &HeatOperator,
    f: &[f64],
    eps: f64,
    kernel: &PazyKernel,
) -> Result<f64> {
    let gen = op.generator();
    let a_then = pazy_convolution(op, &gen.apply(f), eps, kernel)?;
    let then_a = gen.apply(&pazy_convolution(op, f, eps, kernel)?);
    Ok((0..f.len())
        .map(|i| (a_then[i] - then_a[i]).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct DeGiorgiBoundCheck {
    pub t: f64,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct DeGiorgiBEReport {
    pub ladder: FunctionalLadder,
    pub checks: Vec<DeGiorgiBoundCheck>,
}

/// Heat-regularized total variation along a time ladder, each value
/// checked against the contraction bound `e^{-Kt} gamma_tv(u)`.
pub fn de_giorgi_with_be(
    op: &HeatOperator,
    u: &[f64],
    k: f64,
    t_ladder: &[f64],
    window: WindowPolicy,
) -> Result<DeGiorgiBEReport> {
    let tv = bv::gamma_tv(op.generator(), u, None);
    let mut samples = Vec::with_capacity(t_ladder.len());
    let mut checks = Vec::with_capacity(t_ladder.len());
    for &t in t_ladder {
        let value = crate::functionals::de_giorgi(op, u, t)?;
        let bound = (-k * t).exp() * tv;
        checks.push(DeGiorgiBoundCheck {
            t,
            value,
            bound,
            pass: value <= bound * (1.0 + 1e-6),
        });
        samples.push((t, value));
    }
    let ladder = FunctionalLadder::from_samples("deGiorgi", samples, window)?;
    Ok(DeGiorgiBEReport { ladder, checks })
}

/// Report-only comparison of `int phi |D Gamma(f)|^2` against
/// `4 int phi (gamma_2(f) - K Gamma(f))`; its discrete validity is not
/// established, so nothing is asserted here.
pub fn gradient_of_gamma_report(
    gen: &Generator,
    f: &[f64],
    phi: &[f64],
    k: f64,
) -> (f64, f64) {
    let space = gen.space();
    let gamma = gen.gamma(f);
    let grad_sq = gen.gamma(&gamma);
    let g2 = gamma2(gen, f);
    let lhs: f64 = (0..gen.n())
        .map(|i| space.mu(i) * phi[i] * grad_sq[i])
        .sum();
    let rhs: f64 = 4.0
        * (0..gen.n())
            .map(|i| space.mu(i) * phi[i] * (g2[i] - k * gamma[i]))
            .sum::<f64>();
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;
    use crate::generator::{build_generator, ConnectivityRule, KernelShape};
    use crate::heat::Strategy;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn circle_gen(n: usize) -> Arc<Generator> {
        let space = Arc::new(builders::circle(n).unwrap());
        let h = space.resolution();
        Arc::new(
            build_generator(space, ConnectivityRule::Radius { h }, KernelShape::Indicator)
                .unwrap(),
        )
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn gamma2_of_constant_vanishes() {
        let gen = circle_gen(64);
        let g2 = gamma2(&gen, &vec![3.0; 64]);
        assert!(g2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gamma2_of_sine_is_nonnegative_on_the_circle() {
        let n = 256;
        let gen = circle_gen(n);
        let f: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let g2 = gamma2(&gen, &f);
        let scale = g2.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
        for &v in &g2 {
            assert!(v >= -1e-8 * scale, "gamma2 dipped to {v}");
        }
    }

    #[test]
    fn gamma2_is_exactly_quadratic() {
        let gen = circle_gen(32);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_vec(32, &mut rng);
        // Power-of-two scaling commutes with rounding, so this is exact.
        let scaled: Vec<f64> = f.iter().map(|v| 4.0 * v).collect();
        let g2 = gamma2(&gen, &f);
        let g2s = gamma2(&gen, &scaled);
        for i in 0..32 {
            assert_eq!(g2s[i], 16.0 * g2[i]);
        }
    }

    #[test]
    fn two_point_best_k_matches_hand_algebra() {
        let space = Arc::new(
            crate::space::MetricMeasureSpace::from_dense("pair", 2, vec![1.0], vec![1.0, 1.0])
                .unwrap(),
        );
        let gen = Arc::new(
            build_generator(space, ConnectivityRule::Radius { h: 1.0 }, KernelShape::Indicator)
                .unwrap(),
        );
        let a = gen.row(0)[0].1;
        let report = best_k(&gen, 2).unwrap();
        // Closed form: Gamma_2 = a^2 s^2 against Gamma = a s^2 / 2.
        let expected = 2.0 * a;
        for &k in &report.per_vertex_k {
            assert!((k - expected).abs() <= 1e-12 * expected, "K {k} vs {expected}");
        }
        assert_eq!(report.global_k, report.per_vertex_k.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn circle_best_k_is_essentially_zero() {
        let n = 64;
        let gen = circle_gen(n);
        let h = 1.0 / n as f64;
        let report = best_k(&gen, 2).unwrap();
        let drift = 1e-3 / (h * h);
        assert!(
            report.global_k >= -1e-6 && report.global_k <= drift,
            "global K {} outside the near-zero band",
            report.global_k
        );
    }

    #[test]
    fn circle_best_k_matches_dense_exhaustion_oracle() {
        // Independent route: at n=8 the whole space is the neighborhood,
        // so build the full-space forms by evaluating the defining
        // operators on global basis vectors and solve the pencil on the
        // orthogonal complement of the Gamma null space by scanning.
        let n = 8;
        let gen = circle_gen(n);
        let x = 3;
        let report = best_k(&gen, 2).unwrap();

        let q = |f: &[f64]| -> f64 { gamma2(&gen, f)[x] };
        let g = |f: &[f64]| -> f64 { gen.gamma(f)[x] };
        let mut best = f64::INFINITY;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..60000 {
            let f = random_vec(n, &mut rng);
            let gf = g(&f);
            if gf > 1e-9 {
                best = best.min(q(&f) / gf);
            }
        }
        // Random scan gives an upper bound on the true minimum; the local
        // solver must not sit above it and must stay within its band.
        assert!(
            report.per_vertex_k[x] <= best + 1e-6 * best.abs().max(1.0),
            "local solver {} above sampled bound {best}",
            report.per_vertex_k[x]
        );
        // And the witness achieves the reported value.
        let w = report.witness.as_ref().unwrap();
        let wf = &w.function;
        let k_at = report.per_vertex_k[w.vertex];
        let ratio = gamma2(&gen, wf)[w.vertex] / gen.gamma(wf)[w.vertex];
        assert!(
            (ratio - k_at).abs() <= 1e-6 * k_at.abs().max(1.0),
            "witness ratio {ratio} vs reported {k_at}"
        );
    }

    #[test]
    fn best_k_scales_linearly_with_the_generator() {
        let gen = circle_gen(32);
        let report = best_k(&gen, 2).unwrap();
        for c in [0.5, 2.0] {
            let scaled = Arc::new(gen.scaled(c));
            let scaled_report = best_k(&scaled, 2).unwrap();
            for i in 0..32 {
                let expect = c * report.per_vertex_k[i];
                let got = scaled_report.per_vertex_k[i];
                assert!(
                    (got - expect).abs() <= 1e-12 * expect.abs().max(1e-12),
                    "vertex {i}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn best_k_requires_two_hops() {
        let gen = circle_gen(16);
        assert!(best_k(&gen, 1).is_err());
    }

    #[test]
    fn be1_holds_below_best_k_and_fails_above() {
        let n = 64;
        let gen = circle_gen(n);
        let report = best_k(&gen, 2).unwrap();
        let k_safe = report.global_k - 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let f = random_vec(n, &mut rng);
            let phi: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let check = verify_be1(&gen, k_safe, &f, &phi).unwrap();
            assert!(check.pass, "BE1 failed below best K: residual {}", check.residual);
        }
        // Above the best constant the witness pair must fail.
        let witness = report.witness.unwrap();
        let mut phi = vec![0.0; n];
        phi[witness.vertex] = 1.0;
        let check = verify_be1(&gen, report.global_k + 0.1, &witness.function, &phi).unwrap();
        assert!(!check.pass, "witness should violate BE1 above best K");
    }

    #[test]
    fn be1_constant_f_has_zero_residual() {
        let gen = circle_gen(32);
        let phi: Vec<f64> = (0..32).map(|i| (i % 3) as f64).collect();
        let check = verify_be1(&gen, 0.5, &vec![1.0; 32], &phi).unwrap();
        assert_eq!(check.residual, 0.0);
        assert!(check.pass);
    }

    #[test]
    fn be2_and_be3_pass_below_best_k() {
        let n = 32;
        let gen = circle_gen(n);
        let op = HeatOperator::new(gen.clone(), Strategy::Spectral, 1e-11).unwrap();
        let report = best_k(&gen, 2).unwrap();
        let k_safe = report.global_k - 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..40 {
            let f = random_vec(n, &mut rng);
            let t = if rng.random::<f64>() < 0.5 { 0.01 } else { 0.05 };
            let be2 = verify_be2(&op, k_safe, &f, t).unwrap();
            assert!(be2.pass, "BE2 violation {}", be2.max_violation);
            let be3 = verify_be3(&op, k_safe, &f, t).unwrap();
            assert!(be3.pass, "BE3 violation {}", be3.max_violation);
        }
    }

    #[test]
    fn be2_violation_grows_with_claimed_k() {
        let n = 32;
        let gen = circle_gen(n);
        let op = HeatOperator::new(gen, Strategy::Spectral, 1e-11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_vec(n, &mut rng);
        let t = 0.02;
        let low = verify_be2(&op, 0.0, &f, t).unwrap().max_violation;
        let high = verify_be2(&op, 0.5, &f, t).unwrap().max_violation;
        assert!(high >= low, "tightening K did not grow the violation");
    }

    #[test]
    fn be3_variance_is_nonnegative() {
        let n = 64;
        let gen = circle_gen(n);
        let op = HeatOperator::new(gen, Strategy::Spectral, 1e-11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let f = random_vec(n, &mut rng);
        let f2: Vec<f64> = f.iter().map(|v| v * v).collect();
        for &t in &[1e-3, 1e-2, 0.1] {
            let tf = op.apply(&f, t).unwrap();
            let tf2 = op.apply(&f2, t).unwrap();
            for i in 0..n {
                assert!(tf2[i] - tf[i] * tf[i] >= -1e-10);
            }
        }
    }

    #[test]
    fn self_improvement_on_smoothed_step_is_tiny() {
        let n = 512;
        let gen = circle_gen(n);
        let op = HeatOperator::new(gen.clone(), Strategy::Spectral, 1e-11).unwrap();
        // Smooth step: heat-mollified half-arc of width well above grid.
        let chi: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { 0.0 }).collect();
        let f = op.apply(&chi, 1e-3).unwrap();
        let scale = gen
            .gamma(&f)
            .iter()
            .map(|g| g.sqrt())
            .fold(0.0_f64, f64::max);
        let t = 4e-4;
        let viol = verify_self_improvement(&op, 0.0, &f, t, 0.0).unwrap();
        assert!(
            viol <= 1e-3 * scale,
            "self-improvement residual {viol} above 1e-3 x {scale}"
        );
        // Delta regularization only lowers the reported quantity.
        let viol_delta = verify_self_improvement(&op, 0.0, &f, t, 1.0).unwrap();
        assert!(viol_delta <= viol + 1e-10);
    }

    #[test]
    fn pazy_kernel_is_a_probability_quadrature() {
        let kernel = PazyKernel::default();
        assert!(kernel.is_valid());
        assert_eq!(kernel.nodes.len(), 32);
        assert!(kernel.nodes.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn pazy_convolution_fixes_ones_and_commutes() {
        let n = 512;
        let gen = circle_gen(n);
        let op = HeatOperator::new(gen.clone(), Strategy::Spectral, 1e-11).unwrap();
        let kernel = PazyKernel::default();
        let ones = vec![1.0; n];
        let out = pazy_convolution(&op, &ones, 0.01, &kernel).unwrap();
        for v in &out {
            assert!((v - 1.0).abs() <= 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_vec(n, &mut rng);
        let resid = pazy_commutation_residual(&op, &f, 1e-4, &kernel).unwrap();
        let scale = gen.apply(&f).iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
        assert!(resid <= 1e-8 * scale, "commutation residual {resid} vs scale {scale}");
    }

    #[test]
    fn pazy_commutes_with_the_semigroup() {
        let n = 128;
        let gen = circle_gen(n);
        let op = HeatOperator::new(gen, Strategy::Spectral, 1e-12).unwrap();
        let kernel = PazyKernel::bump(16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_vec(n, &mut rng);
        let s = 0.01;
        let a = pazy_convolution(&op, &op.apply(&f, s).unwrap(), 1e-3, &kernel).unwrap();
        let b = op
            .apply(&pazy_convolution(&op, &f, 1e-3, &kernel).unwrap(), s)
            .unwrap();
        for i in 0..n {
            assert!((a[i] - b[i]).abs() <= 1e-9, "T_s mismatch at {i}");
        }
    }

    #[test]
    fn pazy_converges_to_identity_on_smooth_input() {
        let n = 256;
        let gen = circle_gen(n);
        let op = HeatOperator::new(gen, Strategy::Spectral, 1e-11).unwrap();
        let kernel = PazyKernel::default();
        let f: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let mut last = f64::INFINITY;
        for &eps in &[1e-2, 1e-3, 1e-4, 1e-5] {
            let out = pazy_convolution(&op, &f, eps, &kernel).unwrap();
            let err = (0..n)
                .map(|i| (out[i] - f[i]).abs())
                .fold(0.0_f64, f64::max);
            assert!(err <= last + 1e-14, "error {err} grew at eps={eps}");
            last = err;
        }
        assert!(last <= 1e-3, "final error {last}");
    }

    #[test]
    fn de_giorgi_with_be_bounds_hold_for_sine() {
        let n = 1024;
        let gen = circle_gen(n);
        let op = HeatOperator::new(gen, Strategy::Spectral, 1e-11).unwrap();
        let u: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let h = 1.0 / n as f64;
        let ladder = crate::ladder::geometric_ladder(6e-4, 12.0 * h * h, 8);
        let report = de_giorgi_with_be(
            &op,
            &u,
            0.0,
            &ladder,
            WindowPolicy::above(10.0 * h * h),
        )
        .unwrap();
        for check in &report.checks {
            assert!(check.pass, "bound failed at t={}: {} > {}", check.t, check.value, check.bound);
        }
        let est = report.ladder.limit_est.unwrap();
        assert!((est - 4.0).abs() <= 0.04, "limit estimate {est}");
    }

    #[test]
    fn gradient_of_gamma_report_returns_both_sides() {
        let gen = circle_gen(64);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = random_vec(64, &mut rng);
        let phi = vec![1.0; 64];
        let (lhs, rhs) = gradient_of_gamma_report(&gen, &f, &phi, 0.0);
        assert!(lhs.is_finite() && rhs.is_finite());
        assert!(lhs >= 0.0);
    }
}
