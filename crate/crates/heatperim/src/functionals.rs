//! The near-diagonal energy family, conductor capacity, the localized and
//! global heat-content functionals, the exact L1 heat identity, and the
//! heat-regularized total variation.

use crate::bv;
use crate::error::{Error, Result};
use crate::heat::HeatOperator;
use crate::space::MetricMeasureSpace;
use rayon::prelude::*;

/// Near-diagonal energy at strip width `eps`:
/// `(1/eps) sum_{0 < d(x,y) < eps} mu_x mu_y |u(x)-u(y)|
///   / sqrt(mu(B_eps(x)) mu(B_eps(y)))`,
/// ordered pairs, diagonal excluded. Returns 0 when the strip is empty;
/// window flagging is the caller's ladder policy (`eps` should be at
/// least twice the grid resolution to be trusted).
pub fn near_diagonal_energy(space: &MetricMeasureSpace, u: &[f64], eps: f64) -> f64 {
    assert!(eps > 0.0);
    let n = space.n();
    let balls = space.ball_measures_all(eps);
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut acc = 0.0;
            let bx = balls[x].sqrt();
            for y in 0..n {
                if y != x {
                    let d = space.dist(x, y);
                    if d < eps {
                        acc += space.mu(x) * space.mu(y) * (u[x] - u[y]).abs()
                            / (bx * balls[y].sqrt());
                    }
                }
            }
            acc
        })
        .sum();
    total / eps
}

/// The conductor-normalized alias: strip width `a - 1` with the same
/// `1/(a-1)` prefactor, so this is `near_diagonal_energy(u, a - 1)`
/// by construction.
pub fn mazya_energy(space: &MetricMeasureSpace, u: &[f64], a: f64) -> Result<f64> {
    if !(a > 1.0) {
        return Err(Error::InvalidParam(format!("conductor parameter a must be > 1, got {a}")));
    }
    Ok(near_diagonal_energy(space, u, a - 1.0))
}

#[derive(Debug, Clone, Copy)]
pub struct MazyaCoarea {
    pub value: f64,
    /// `value / near_diagonal_energy(u, eps)`; `None` when the energy is 0.
    pub ratio: Option<f64>,
}

/// One-sided co-area-type strip quantity for `u >= 0`:
/// the threshold integral of the superlevel-set strip cuts,
/// `(1/eps) int_0^inf sum_{x in M_t} sum_{y in B_eps(x), y not in M_t}
///  mu_x mu_y / sqrt(mu B mu B) dt`.
///
/// The threshold integral collapses exactly: a pair with `u(x) > u(y)`
/// crosses the superlevel boundary for `t` in `[u(y), u(x))`, so its
/// contribution is weighted by `u(x) - u(y)`.
pub fn mazya_coarea_quantity(space: &MetricMeasureSpace, u: &[f64], eps: f64) -> Result<MazyaCoarea> {
    if u.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParam(
            "the co-area-type quantity needs u >= 0".into(),
        ));
    }
    let n = space.n();
    let balls = space.ball_measures_all(eps);
    let value: f64 = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut acc = 0.0;
            let bx = balls[x].sqrt();
            for y in 0..n {
                if y != x && u[x] > u[y] && space.dist(x, y) < eps {
                    acc += space.mu(x) * space.mu(y) * (u[x] - u[y]) / (bx * balls[y].sqrt());
                }
            }
            acc
        })
        .sum::<f64>()
        / eps;
    let energy = near_diagonal_energy(space, u, eps);
    Ok(MazyaCoarea {
        value,
        ratio: if energy > 0.0 { Some(value / energy) } else { None },
    })
}

/// Conductor capacity between the superlevel sets `M_{a t}` and `M_t`:
/// the minimum strip energy over functions that are 1 on the inner set
/// and 0 off the outer one. For the L1 energy this is exactly a minimum
/// cut in the strip graph, computed by max-flow.
pub fn conductor_capacity(
    space: &MetricMeasureSpace,
    u: &[f64],
    a: f64,
    t: f64,
) -> Result<f64> {
    if !(a > 1.0) || !(t > 0.0) {
        return Err(Error::InvalidParam(format!(
            "conductor capacity needs a > 1 and t > 0, got a={a}, t={t}"
        )));
    }
    let n = space.n();
    let inner: Vec<usize> = (0..n).filter(|&i| u[i] > a * t).collect();
    let outer: Vec<bool> = (0..n).map(|i| u[i] > t).collect();
    if inner.is_empty() {
        return Err(Error::InfeasibleCut("inner superlevel set is empty".into()));
    }
    if outer.iter().all(|&b| b) {
        return Err(Error::InfeasibleCut(
            "outer superlevel set is the whole space".into(),
        ));
    }
    let eps = a - 1.0;
    let balls = space.ball_measures_all(eps);
    let mut flow = MaxFlow::new(n + 2);
    let source = n;
    let sink = n + 1;
    let mut cap_total = 0.0;
    let mut edges = Vec::new();
    for x in 0..n {
        for y in 0..x {
            let d = space.dist(x, y);
            if d > 0.0 && d < eps {
                // Both orderings of the pair contribute to the energy.
                let c = 2.0 * space.mu(x) * space.mu(y)
                    / (eps * (balls[x] * balls[y]).sqrt());
                edges.push((x, y, c));
                cap_total += c;
            }
        }
    }
    let inf = cap_total + 1.0;
    for (x, y, c) in edges {
        flow.add_edge(x, y, c, c);
    }
    for &x in &inner {
        flow.add_edge(source, x, inf, 0.0);
    }
    for y in 0..n {
        if !outer[y] {
            flow.add_edge(y, sink, inf, 0.0);
        }
    }
    Ok(flow.max_flow(source, sink))
}

/// Localized heat content at scale `sqrt(t)`:
/// `(1/sqrt(t)) sum_{x in E^{dilate sqrt(t)} minus E} mu_x (T_t chi_E)(x)`.
pub fn ledoux_local_scaled(
    op: &HeatOperator,
    set: &[usize],
    t: f64,
    dilate: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParam(format!("time must be positive, got {t}")));
    }
    let space = op.generator().space();
    let n = space.n();
    let mut chi = vec![0.0; n];
    let mut member = vec![false; n];
    for &x in set {
        chi[x] = 1.0;
        member[x] = true;
    }
    let heat = op.apply(&chi, t)?;
    let tube = space.tubular_neighborhood(set, dilate * t.sqrt());
    let sum: f64 = tube
        .iter()
        .filter(|&&x| !member[x])
        .map(|&x| space.mu(x) * heat[x])
        .sum();
    Ok(sum / t.sqrt())
}

/// The tubular-localized functional with the canonical `sqrt(t)` window.
pub fn ledoux_local(op: &HeatOperator, set: &[usize], t: f64) -> Result<f64> {
    ledoux_local_scaled(op, set, t, 1.0)
}

/// Global heat content `sqrt(pi/t) sum_{x not in E} mu_x (T_t chi_E)(x)`.
pub fn ledoux_global(op: &HeatOperator, set: &[usize], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParam(format!("time must be positive, got {t}")));
    }
    let space = op.generator().space();
    let n = space.n();
    let mut chi = vec![0.0; n];
    let mut member = vec![false; n];
    for &x in set {
        chi[x] = 1.0;
        member[x] = true;
    }
    let heat = op.apply(&chi, t)?;
    let sum: f64 = (0..n)
        .filter(|&x| !member[x])
        .map(|x| space.mu(x) * heat[x])
        .sum();
    Ok((std::f64::consts::PI / t).sqrt() * sum)
}

#[derive(Debug, Clone, Copy)]
pub struct L1HeatIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `||T_t chi_E - chi_E||_{L1(mu)} = 2 sum_{x not in E} mu_x (T_t chi_E)(x)`,
/// exact by mu-symmetry and conservation.
pub fn l1_heat_identity(op: &HeatOperator, set: &[usize], t: f64) -> Result<L1HeatIdentity> {
    if !(t > 0.0) {
        return Err(Error::InvalidParam(format!("time must be positive, got {t}")));
    }
    let space = op.generator().space();
    let n = space.n();
    let mut chi = vec![0.0; n];
    for &x in set {
        chi[x] = 1.0;
    }
    let heat = op.apply(&chi, t)?;
    let lhs: f64 = (0..n)
        .map(|x| space.mu(x) * (heat[x] - chi[x]).abs())
        .sum();
    let rhs: f64 = 2.0
        * (0..n)
            .filter(|&x| chi[x] == 0.0)
            .map(|x| space.mu(x) * heat[x])
            .sum::<f64>();
    Ok(L1HeatIdentity {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Heat-regularized total variation `int sqrt(Gamma(T_t u)) dmu`.
pub fn de_giorgi(op: &HeatOperator, u: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParam(format!("time must be positive, got {t}")));
    }
    let smoothed = op.apply(u, t)?;
    Ok(bv::gamma_tv(op.generator(), &smoothed, None))
}

/// Undirected max-flow (Dinic) with float capacities.
struct MaxFlow {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl MaxFlow {
    fn new(n: usize) -> Self {
        MaxFlow {
            adj: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, cap_ab: f64, cap_ba: f64) {
        self.adj[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(cap_ab);
        self.adj[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(cap_ba);
    }

    fn max_flow(&mut self, source: usize, sink: usize) -> f64 {
        let scale = self.cap.iter().cloned().fold(0.0_f64, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let floor = 1e-14 * scale;
        let mut total = 0.0;
        loop {
            let level = self.bfs_levels(source, floor);
            if level[sink].is_none() {
                return total;
            }
            let mut iter = vec![0usize; self.adj.len()];
            loop {
                let pushed = self.dfs(source, sink, f64::INFINITY, &level, &mut iter, floor);
                if pushed <= 0.0 {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn bfs_levels(&self, source: usize, floor: f64) -> Vec<Option<usize>> {
        let mut level = vec![None; self.adj.len()];
        level[source] = Some(0);
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                if self.cap[e] > floor && level[self.to[e]].is_none() {
                    level[self.to[e]] = Some(level[v].unwrap() + 1);
                    queue.push_back(self.to[e]);
                }
            }
        }
        level
    }

    fn dfs(
        &mut self,
        v: usize,
        sink: usize,
        limit: f64,
        level: &[Option<usize>],
        iter: &mut [usize],
        floor: f64,
    ) -> f64 {
        if v == sink {
            return limit;
        }
        while iter[v] < self.adj[v].len() {
            let e = self.adj[v][iter[v]];
            let w = self.to[e];
            if self.cap[e] > floor && level[w] == level[v].map(|l| l + 1) {
                let pushed = self.dfs(w, sink, limit.min(self.cap[e]), level, iter, floor);
                if pushed > floor {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                    return pushed;
                }
            }
            iter[v] += 1;
        }
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;
    use crate::generator::{build_generator, ConnectivityRule, KernelShape};
    use crate::heat::Strategy;
    use std::sync::Arc;

    fn arc_indicator(n: usize, len: usize) -> Vec<f64> {
        (0..n).map(|i| if i < len { 1.0 } else { 0.0 }).collect()
    }

    fn circle_op(n: usize) -> HeatOperator {
        let space = Arc::new(builders::circle(n).unwrap());
        let h = space.resolution();
        let gen = Arc::new(
            build_generator(space, ConnectivityRule::Radius { h }, KernelShape::Indicator)
                .unwrap(),
        );
        HeatOperator::new(gen, Strategy::Auto, 1e-11).unwrap()
    }

    #[test]
    fn strip_energy_of_constant_vanishes() {
        let space = builders::circle(128).unwrap();
        assert_eq!(near_diagonal_energy(&space, &vec![2.0; 128], 0.05), 0.0);
    }

    #[test]
    fn strip_energy_of_arc_near_one() {
        let n = 2048;
        let space = builders::circle(n).unwrap();
        let u = arc_indicator(n, n / 4);
        // Mid-window strip width, away from grid scale.
        let e = near_diagonal_energy(&space, &u, 0.0315);
        assert!((e - 1.0).abs() <= 0.04, "strip energy {e}");
    }

    #[test]
    fn strip_energy_of_sine_near_half_edge_tv() {
        let n = 2048;
        let space = builders::circle(n).unwrap();
        let u: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let e = near_diagonal_energy(&space, &u, 0.02);
        assert!((e - 2.0).abs() <= 0.1, "strip energy {e} vs 2.0");
    }

    #[test]
    fn subresolution_strip_is_empty() {
        let space = builders::circle(64).unwrap();
        let u = arc_indicator(64, 16);
        let e = near_diagonal_energy(&space, &u, 0.4 * space.resolution());
        assert_eq!(e, 0.0);
    }

    #[test]
    fn mazya_energy_is_the_same_functional() {
        let n = 512;
        let space = builders::circle(n).unwrap();
        let u = arc_indicator(n, 128);
        let a = 1.0 + 0.03;
        assert_eq!(
            mazya_energy(&space, &u, a).unwrap(),
            near_diagonal_energy(&space, &u, a - 1.0)
        );
        assert!(mazya_energy(&space, &u, 1.0).is_err());
    }

    #[test]
    fn coarea_quantity_ratio_is_half_on_indicators() {
        let n = 512;
        let space = builders::circle(n).unwrap();
        let u = arc_indicator(n, 200);
        let mc = mazya_coarea_quantity(&space, &u, 0.04).unwrap();
        let ratio = mc.ratio.unwrap();
        assert!((ratio - 0.5).abs() <= 1e-12, "ratio {ratio}");
    }

    #[test]
    fn coarea_quantity_matches_level_sum_and_stays_below_energy() {
        let n = 200;
        let space = builders::circle(n).unwrap();
        let eps = 0.06;
        for seed in 0..4u64 {
            let u: Vec<f64> = (0..n)
                .map(|i| (((i as u64 * 2654435761 + seed * 77) % 7) as f64))
                .collect();
            let mc = mazya_coarea_quantity(&space, &u, eps).unwrap();

            // Independent route: explicit sum over distinct levels.
            let balls = space.ball_measures_all(eps);
            let mut levels: Vec<f64> = u.clone();
            levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            levels.dedup();
            let mut by_levels = 0.0;
            for w in levels.windows(2) {
                let cut: f64 = (0..n)
                    .map(|x| {
                        (0..n)
                            .filter(|&y| {
                                y != x
                                    && u[x] > w[0]
                                    && u[y] <= w[0]
                                    && space.dist(x, y) < eps
                            })
                            .map(|y| {
                                space.mu(x) * space.mu(y)
                                    / (balls[x] * balls[y]).sqrt()
                            })
                            .sum::<f64>()
                    })
                    .sum();
                by_levels += cut * (w[1] - w[0]);
            }
            by_levels /= eps;
            assert!(
                (mc.value - by_levels).abs() <= 1e-10 * by_levels.max(1.0),
                "pair route {} vs level route {by_levels}",
                mc.value
            );
            let energy = near_diagonal_energy(&space, &u, eps);
            assert!(mc.value <= energy + 1e-12);
        }
    }

    #[test]
    fn coarea_quantity_rejects_negative_values() {
        let space = builders::circle(16).unwrap();
        let u = vec![-1.0; 16];
        assert!(mazya_coarea_quantity(&space, &u, 0.2).is_err());
    }

    #[test]
    fn capacity_equals_strip_cut_when_sets_coincide() {
        let n = 128;
        let space = builders::circle(n).unwrap();
        // u = 2 on an arc, 0 elsewhere: M_{at} = M_t for t=1, a=1+eps.
        let u: Vec<f64> = (0..n).map(|i| if i < 40 { 2.0 } else { 0.0 }).collect();
        let a = 1.0 + 0.05;
        let cap = conductor_capacity(&space, &u, a, 1.0).unwrap();
        let eps = a - 1.0;
        let balls = space.ball_measures_all(eps);
        let mut cut = 0.0;
        for x in 0..40 {
            for y in 40..n {
                let d = space.dist(x, y);
                if d > 0.0 && d < eps {
                    cut += 2.0 * space.mu(x) * space.mu(y)
                        / (eps * (balls[x] * balls[y]).sqrt());
                }
            }
        }
        assert!((cap - cut).abs() <= 1e-10 * cut.max(1e-30), "cap {cap} vs cut {cut}");
    }

    #[test]
    fn capacity_matches_exhaustive_min_cut() {
        let n = 40;
        let space = builders::circle(n).unwrap();
        // Tent profile: inner set near the peak, annulus of free vertices.
        let u: Vec<f64> = (0..n)
            .map(|i| {
                let d = space.dist(i, 10);
                (1.0 - 4.0 * d).max(0.0)
            })
            .collect();
        let a = 2.0;
        let t = 0.3;
        let cap = conductor_capacity(&space, &u, a, t).unwrap();

        // Brute force over all admissible cuts (free vertices <= 16).
        let inner: Vec<usize> = (0..n).filter(|&i| u[i] > a * t).collect();
        let outer: Vec<usize> = (0..n).filter(|&i| u[i] > t).collect();
        let free: Vec<usize> = outer
            .iter()
            .cloned()
            .filter(|i| !inner.contains(i))
            .collect();
        assert!(free.len() <= 16, "need a small free region, got {}", free.len());
        let eps = a - 1.0;
        let balls = space.ball_measures_all(eps);
        let mut best = f64::INFINITY;
        for mask in 0..(1usize << free.len()) {
            let mut side = vec![false; n];
            for &i in &inner {
                side[i] = true;
            }
            for (b, &i) in free.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    side[i] = true;
                }
            }
            let mut cut = 0.0;
            for x in 0..n {
                for y in 0..x {
                    let d = space.dist(x, y);
                    if d > 0.0 && d < eps && side[x] != side[y] {
                        cut += 2.0 * space.mu(x) * space.mu(y)
                            / (eps * (balls[x] * balls[y]).sqrt());
                    }
                }
            }
            best = best.min(cut);
        }
        assert!(
            (cap - best).abs() <= 1e-10 * best.max(1e-30),
            "max-flow {cap} vs exhaustive {best}"
        );
    }

    #[test]
    fn capacity_of_isolated_component_is_zero() {
        // Two clusters far apart; the strip never bridges them.
        let positions: Vec<f64> = vec![0.0, 0.01, 0.02, 0.8, 0.81, 0.82];
        let space = crate::space::MetricMeasureSpace::from_parts(
            "two-clusters",
            crate::space::Metric::Line { positions },
            vec![1.0; 6],
            crate::space::DistProvenance::Dense,
        )
        .unwrap();
        // Inner set entirely inside the left cluster, outer set the left
        // cluster: no strip edge leaves it at eps=0.05.
        let u = vec![3.0, 3.0, 2.0, 0.0, 0.0, 0.0];
        let cap = conductor_capacity(&space, &u, 1.05, 1.5).unwrap();
        assert_eq!(cap, 0.0);
    }

    #[test]
    fn capacity_rejects_infeasible_terminals() {
        let space = builders::circle(16).unwrap();
        let zero = vec![0.0; 16];
        assert!(conductor_capacity(&space, &zero, 1.5, 1.0).is_err());
        let ones = vec![5.0; 16];
        assert!(conductor_capacity(&space, &ones, 1.5, 1.0).is_err());
    }

    #[test]
    fn ledoux_trivial_sets_vanish() {
        let op = circle_op(128);
        assert_eq!(ledoux_local(&op, &[], 0.01).unwrap(), 0.0);
        let all: Vec<usize> = (0..128).collect();
        assert_eq!(ledoux_local(&op, &all, 0.01).unwrap(), 0.0);
        assert_eq!(ledoux_global(&op, &all, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn ledoux_local_monotone_in_window_dilation() {
        let op = circle_op(512);
        let set: Vec<usize> = (0..128).collect();
        let t = 1e-4;
        let narrow = ledoux_local_scaled(&op, &set, t, 1.0).unwrap();
        let wide = ledoux_local_scaled(&op, &set, t, 2.0).unwrap();
        assert!(wide >= narrow);
    }

    #[test]
    fn ledoux_global_arc_near_two() {
        let n = 1024;
        let op = circle_op(n);
        let set: Vec<usize> = (0..n / 2).collect();
        // In-window time: sqrt(t) = 16 h.
        let h = 1.0 / n as f64;
        let t = (16.0 * h) * (16.0 * h);
        let v = ledoux_global(&op, &set, t).unwrap();
        assert!((v - 2.0).abs() <= 0.05, "global heat content {v}");
        // The upper bound direction.
        assert!(v <= 2.0 * 1.05);
    }

    #[test]
    fn l1_identity_is_exact() {
        let n = 512;
        let op = circle_op(n);
        for (seed, t) in [(1u64, 0.01), (2, 0.1)] {
            let set: Vec<usize> = (0..n)
                .filter(|&i| ((i as u64 * 2654435761 + seed * 13) % 5) < 2)
                .collect();
            let id = l1_heat_identity(&op, &set, t).unwrap();
            assert!(
                id.residual <= 1e-10 * id.rhs.max(1e-30),
                "residual {} vs rhs {}",
                id.residual,
                id.rhs
            );
        }
    }

    #[test]
    fn l1_distance_shrinks_with_time() {
        let n = 256;
        let op = circle_op(n);
        let set: Vec<usize> = (0..64).collect();
        let coarse = l1_heat_identity(&op, &set, 1e-2).unwrap().lhs;
        let fine = l1_heat_identity(&op, &set, 1e-4).unwrap().lhs;
        assert!(fine < coarse);
        assert_eq!(l1_heat_identity(&op, &[], 0.01).unwrap().lhs, 0.0);
    }

    #[test]
    fn de_giorgi_of_half_circle_is_two() {
        let n = 1024;
        let op = circle_op(n);
        let u = arc_indicator(n, n / 2);
        let h = 1.0 / n as f64;
        for &factor in &[10.0, 14.0, 20.0] {
            let t = (factor * h) * (factor * h);
            let v = de_giorgi(&op, &u, t).unwrap();
            assert!((v - 2.0).abs() <= 0.04, "de Giorgi value {v} at t={t}");
        }
    }

    #[test]
    fn de_giorgi_of_constant_vanishes() {
        let op = circle_op(64);
        let v = de_giorgi(&op, &vec![1.0; 64], 0.01).unwrap();
        assert!(v.abs() <= 1e-12, "de Giorgi of constant gave {v}");
    }
}
