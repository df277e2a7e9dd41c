//! The walk conditioned to stay above `−β` (Doob transform by `U`).

use alloc::vec::Vec;

use libm::fabs;

use crate::harmonic::Harmonic;
use crate::lattice::{killed_propagate, LatticeDistribution, Sum};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Default upper bound on DP positions, in lattice units.
pub const DEFAULT_CEILING: i64 = 10_000;

/// Tolerance for a kernel row's sum before renormalization.
pub const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedKernelRow {
    pub n: usize,
    pub x: i64,
    pub beta: i64,
    /// Targets in increasing order, renormalized to sum to 1.
    pub targets: Vec<(i64, f64)>,
    /// Row sum before renormalization.
    pub raw_sum: f64,
}

impl ConditionedKernelRow {
    pub fn prob(&self, y: i64) -> f64 {
        self.targets.iter().find(|t| t.0 == y).map_or(0.0, |t| t.1)
    }
}

/// Transition row from `(n, x)`: `y ↦ U(θ^{n+1}ξ, y+β) μ_{n+1}(y−x) / U(θⁿξ, x+β)` for `y ≥ −β`.
pub fn kernel_row(h: &Harmonic, n: usize, x: i64, beta: i64) -> Result<ConditionedKernelRow> {
    assert!(
        beta >= 0 && x >= -beta,
        "kernel row needs beta >= 0 and x >= -beta"
    );
    let den = h.u(n, x + beta)?;
    let mut slack = h.err(n, x + beta)?;
    let mut targets = Vec::new();
    let mut sum = Sum::new();
    for (dx, m) in h.walk().step(n + 1).iter() {
        let y = x + dx;
        if y < -beta {
            continue;
        }
        let w = h.u(n + 1, y + beta)? * m / den;
        slack += m * h.err(n + 1, y + beta)?;
        sum.add(w);
        targets.push((y, w));
    }
    let raw = sum.value();
    let allowed = ROW_SUM_TOL + slack / den;
    if fabs(raw - 1.0) > allowed {
        return Err(Error::Contract(alloc::format!(
            "kernel row at (n={n}, x={x}, beta={beta}) sums to {raw}, allowed deviation {allowed}"
        )));
    }
    for t in &mut targets {
        t.1 /= raw;
    }
    Ok(ConditionedKernelRow {
        n,
        x,
        beta,
        targets,
        raw_sum: raw,
    })
}

fn check_ceiling(d: &LatticeDistribution, ceiling: i64) -> Result<()> {
    match d.max_index() {
        Some(top) if top >= ceiling => Err(Error::CeilingReached { ceiling }),
        _ => Ok(()),
    }
}

/// Law of `ζ_n^{(β)}` started at `a`, by killed DP reweighted with `U(θⁿξ, ·+β)/U(ξ, a+β)`.
pub fn conditioned_marginal(
    h: &Harmonic,
    a: i64,
    n: usize,
    beta: i64,
    ceiling: i64,
) -> Result<LatticeDistribution> {
    let d = killed_marginal(h, a, n, beta, ceiling)?;
    let den = h.u(0, a + beta)?;
    let points = d
        .iter()
        .map(|(x, m)| Ok((x, m * h.u(n, x + beta)? / den)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LatticeDistribution::from_points(h.lattice_step(), &points))
}

/// Sub-probability law of `a + S_n` on `{τ_β > n}`.
pub fn killed_marginal(
    h: &Harmonic,
    a: i64,
    n: usize,
    beta: i64,
    ceiling: i64,
) -> Result<LatticeDistribution> {
    assert!(beta >= 0 && a >= -beta);
    let mut d = LatticeDistribution::delta(h.lattice_step(), a);
    for t in 1..=n {
        d = killed_propagate(&d, h.walk().step(t), beta)?.survivor;
        check_ceiling(&d, ceiling)?;
    }
    Ok(d)
}

/// Same law as [`conditioned_marginal`], obtained by chaining kernel rows.
pub fn chained_marginal(
    h: &Harmonic,
    a: i64,
    n: usize,
    beta: i64,
    ceiling: i64,
) -> Result<LatticeDistribution> {
    let step = h.lattice_step();
    let mut d = LatticeDistribution::delta(step, a);
    for t in 0..n {
        let mut next: Vec<(i64, f64)> = Vec::new();
        for (x, m) in d.iter() {
            for (y, p) in kernel_row(h, t, x, beta)?.targets {
                next.push((y, m * p));
            }
        }
        d = LatticeDistribution::from_points(step, &next);
        check_ceiling(&d, ceiling)?;
    }
    Ok(d)
}

/// One draw of `ζ_0, …, ζ_n` started at `a`.
pub fn sample_conditioned_path(
    h: &Harmonic,
    a: i64,
    beta: i64,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<i64>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut x = a;
    out.push(x);
    let mut weights = Vec::new();
    for t in 0..n {
        let row = kernel_row(h, t, x, beta)?;
        weights.clear();
        weights.extend(row.targets.iter().map(|t| t.1));
        x = row.targets[rng.categorical(&weights)].0;
        out.push(x);
    }
    Ok(out)
}

/// `H(ξ, x, z) = U(ξ, x−z)/U(ξ, x)`: probability that the chain from `x` never enters `(−∞, z)`.
pub fn never_descend_probability(h: &Harmonic, x: i64, z: i64) -> Result<f64> {
    assert!(z >= 0 && x >= z);
    if z == 0 {
        return Ok(1.0);
    }
    Ok(h.u(0, x - z)? / h.u(0, x)?)
}

/// `P(ζ_k ≥ z for all k ≤ horizon)` for the chain from `x` with `β = 0`, by chaining kernel rows.
///
/// Also returns `P(x + S_k ≥ z, k ≤ horizon)` for the unconditioned walk, which
/// bounds the distance to the infinite-horizon limit.
pub fn stay_above_probability(h: &Harmonic, x: i64, z: i64, horizon: usize) -> Result<(f64, f64)> {
    let step = h.lattice_step();
    let mut d = LatticeDistribution::delta(step, x);
    for t in 0..horizon {
        let mut next: Vec<(i64, f64)> = Vec::new();
        for (y, m) in d.iter() {
            for (w, p) in kernel_row(h, t, y, 0)?.targets {
                if w >= z {
                    next.push((w, m * p));
                }
            }
        }
        d = LatticeDistribution::from_points(step, &next);
    }
    let walk = h.walk();
    let mut free = LatticeDistribution::delta(step, x - z);
    for t in 1..=horizon {
        free = killed_propagate(&free, walk.step(t), 0)?.survivor;
    }
    Ok((d.total(), free.total()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentLaw, EnvironmentPath, PointProcessLaw};
    use crate::lattice::StepMeasure;
    use crate::walk::WalkEnv;
    use alloc::sync::Arc;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn fair() -> Harmonic {
        Harmonic::new(WalkEnv::homogeneous(StepMeasure::fair_pm1()), 1e-9, 10_000)
    }

    fn mixed() -> Harmonic {
        let a = PointProcessLaw::pm1_recipe();
        let b =
            PointProcessLaw::boundary_recipe(1.0, &[(-1, 2.0 / 3.0), (2, 1.0 / 3.0)], 0).unwrap();
        let law = Arc::new(EnvironmentLaw::new(vec![(0.5, a), (0.5, b)]).unwrap());
        Harmonic::new(
            WalkEnv::from_path(&EnvironmentPath::realize(law, 5, 64)).unwrap(),
            1e-9,
            10_000,
        )
    }

    fn two_down() -> Harmonic {
        let a =
            PointProcessLaw::boundary_recipe(1.0, &[(-2, 1.0 / 3.0), (1, 2.0 / 3.0)], 0).unwrap();
        let b = PointProcessLaw::pm1_recipe();
        let law = Arc::new(EnvironmentLaw::new(vec![(0.4, a), (0.6, b)]).unwrap());
        Harmonic::new(
            WalkEnv::from_path(&EnvironmentPath::realize(law, 2, 64)).unwrap(),
            5e-2,
            100_000,
        )
    }

    #[test]
    fn fair_rows() {
        let r = kernel_row(&fair(), 0, 0, 0).unwrap();
        assert_eq!(r.targets, vec![(1, 1.0)]);
        let r = kernel_row(&fair(), 0, 3, 0).unwrap();
        assert_abs_diff_eq!(r.prob(4), 5.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.prob(2), 3.0 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn far_rows_approach_step() {
        let r = kernel_row(&fair(), 0, 1000, 0).unwrap();
        assert!((r.prob(1001) - 0.5).abs() < 1e-3);
        assert!((r.prob(999) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn rows_sum_to_one_before_normalization() {
        let h = mixed();
        for n in 0..20 {
            for x in 0..15 {
                for beta in [0, 2] {
                    let r = kernel_row(&h, n, x, beta).unwrap();
                    assert!((r.raw_sum - 1.0).abs() <= ROW_SUM_TOL);
                    assert!(r.targets.iter().all(|t| t.0 >= -beta));
                }
            }
        }
    }

    #[test]
    fn marginal_small_n() {
        let h = fair();
        assert_eq!(
            conditioned_marginal(&h, 0, 0, 0, DEFAULT_CEILING).unwrap(),
            LatticeDistribution::delta(1.0, 0)
        );
        let m1 = conditioned_marginal(&h, 0, 1, 0, DEFAULT_CEILING).unwrap();
        assert_abs_diff_eq!(m1.mass(1), 1.0, epsilon = 1e-15);
        // From 1: to 2 w.p. 3/4, to 0 w.p. 1/4.
        let m2 = conditioned_marginal(&h, 0, 2, 0, DEFAULT_CEILING).unwrap();
        assert_abs_diff_eq!(m2.mass(2), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(m2.mass(0), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn dual_route_marginals() {
        for h in [fair(), mixed()] {
            for n in 0..=10 {
                for beta in [0, 1, 3] {
                    let a = conditioned_marginal(&h, 0, n, beta, DEFAULT_CEILING).unwrap();
                    let b = chained_marginal(&h, 0, n, beta, DEFAULT_CEILING).unwrap();
                    assert!(a.total_variation(&b) <= 1e-8, "n={n} beta={beta}");
                    assert!((a.total() - 1.0).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn dual_route_with_certified_slack() {
        let h = two_down();
        for n in 0..=3 {
            let a = conditioned_marginal(&h, 0, n, 0, DEFAULT_CEILING).unwrap();
            let b = chained_marginal(&h, 0, n, 0, DEFAULT_CEILING).unwrap();
            assert!(a.total_variation(&b) <= 0.25, "n={n}");
        }
    }

    #[test]
    fn ceiling_aborts() {
        assert!(matches!(
            conditioned_marginal(&fair(), 0, 20, 0, 10),
            Err(Error::CeilingReached { ceiling: 10 })
        ));
    }

    #[test]
    fn mean_eventually_increases() {
        let h = mixed();
        let means: Vec<f64> = (0..40)
            .map(|n| {
                conditioned_marginal(&h, 0, n, 0, DEFAULT_CEILING)
                    .unwrap()
                    .first_moment()
            })
            .collect();
        for w in means[10..].windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn sampler_stays_above_and_first_step_is_forced() {
        let h = fair();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..200 {
            let p = sample_conditioned_path(&h, 0, 0, 30, &mut rng).unwrap();
            assert_eq!(p[1], 1);
            assert!(p.iter().all(|&v| v >= 0));
        }
    }

    #[test]
    fn sampler_mean_matches_marginal() {
        let h = mixed();
        let n = 25;
        let exact = conditioned_marginal(&h, 0, n, 0, DEFAULT_CEILING).unwrap();
        let mean = exact.first_moment();
        let var = exact.expect(|x| (x as f64 - mean).powi(2));
        let mut rng = RngStream::new(3, 0);
        let trials = 4000;
        let s: f64 = (0..trials)
            .map(|_| {
                *sample_conditioned_path(&h, 0, 0, n, &mut rng)
                    .unwrap()
                    .last()
                    .unwrap() as f64
            })
            .sum();
        let z = (s / trials as f64 - mean) / (var / trials as f64).sqrt();
        assert!(z.abs() < 5.0, "z = {z}");
    }

    #[test]
    fn never_descend_examples() {
        let h = fair();
        assert_eq!(never_descend_probability(&h, 5, 0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            never_descend_probability(&h, 3, 1).unwrap(),
            0.75,
            epsilon = 1e-15
        );
        assert!(never_descend_probability(&h, 4, 4).unwrap() > 0.0);
    }

    #[test]
    fn never_descend_brackets_finite_horizon() {
        // U(y) − U(y−z) lies in [z − (M−1)Δ, z + (M−1)Δ], so the finite-horizon
        // probability exceeds H by (that gap)·P(walk stays above z)/U(x).
        for h in [fair(), mixed()] {
            for (x, z) in [(3, 1), (5, 2), (2, 2)] {
                let hz = never_descend_probability(&h, x, z).unwrap();
                let (p, free) = stay_above_probability(&h, x, z, 400).unwrap();
                let gap = z as f64 * free / h.u(0, x).unwrap();
                assert!((p - hz - gap).abs() <= 1e-9, "x={x} z={z}: {p} {hz} {gap}");
            }
        }
    }
}
