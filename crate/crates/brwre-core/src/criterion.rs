//! Moment criterion for non-degeneracy of the derivative martingale limit, and series probes.

use alloc::vec::Vec;

use libm::{exp, log, pow};

use crate::conditioned::sample_conditioned_path;
use crate::env::{EnvironmentLaw, EnvironmentPath, PointProcessLaw, ShellTail};
use crate::harmonic::Harmonic;
use crate::lattice::Sum;
use crate::rng::RngStream;
use crate::special::hurwitz_zeta;
use crate::{Error, Result};

/// Shell sums stop once a term falls below this fraction of the running total.
const SHELL_REL: f64 = 1e-17;
const SHELL_CAP: u64 = 1_000_000;

/// A non-negative moment: a finite value, or divergent with partial sums over
/// shells `m ≤ M` growing like `M^exponent` (`exponent = 0` means like `log M`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite { exponent: f64 },
}

impl Moment {
    pub fn is_finite(&self) -> bool {
        matches!(self, Moment::Finite(_))
    }

    fn plus(self, other: Moment) -> Moment {
        match (self, other) {
            (Moment::Finite(a), Moment::Finite(b)) => Moment::Finite(a + b),
            (Moment::Infinite { exponent: a }, Moment::Infinite { exponent: b }) => {
                Moment::Infinite { exponent: a.max(b) }
            }
            (i @ Moment::Infinite { .. }, _) | (_, i @ Moment::Infinite { .. }) => i,
        }
    }
}

/// Outcome of the moment criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    /// `E[Y log₊² Y]`.
    pub y_log2: Moment,
    /// `E[Y log₊ Y]`, which decides between the two `Y`-cases.
    pub y_log: Moment,
    /// `E[Z log₊ Z]`.
    pub z_log: Moment,
    pub nondegenerate: bool,
    /// `E[Y log₊² Y] = ∞` with `E[Y log₊ Y] < ∞`.
    pub case_i: bool,
    /// `E[Y log₊ Y] = ∞`.
    pub case_ii: bool,
    /// `E[Z log₊ Z] = ∞`.
    pub case_iii: bool,
}

impl CriterionReport {
    /// Finite-state environments: the quenched and annealed classifications coincide.
    pub const NOTE: &'static str =
        "finite-state i.i.d. environment: every state has positive probability, so the classification holds for almost every path";
}

fn log_plus(x: f64) -> f64 {
    if x > 1.0 {
        log(x)
    } else {
        0.0
    }
}

/// `(Y, Z)` of one realized offspring configuration.
pub fn y_z(step: f64, children: &[(i64, f64)]) -> (f64, f64) {
    let mut y = Sum::new();
    let mut z = Sum::new();
    for &(d, c) in children {
        let v = d as f64 * step;
        let e = c * exp(-v);
        y.add(e);
        if v >= 0.0 {
            z.add(v * e);
        }
    }
    (y.value(), z.value())
}

/// `log K_m`, exact for small shells and `growth·m·Δ` once rounding is immaterial.
fn log_children(t: &ShellTail, step: f64, m: u64) -> f64 {
    let g = t.growth * m as f64 * step;
    if g < 36.0 {
        log(t.children(m))
    } else {
        g
    }
}

/// The three moments restricted to one tail family, with weight `t.weight`.
///
/// Since `q_m Y_m = C m^{−α}` and `log Y_m ~ (growth − shift)Δ·m`, the `Y`
/// moments behave like `Σ m^{k−α}` (`k = 1, 2`); with `shift > 0`,
/// `Z_m = m·shift·Δ·Y_m` and `Z log₊ Z` behaves like `Σ m^{2−α}`. A series
/// `Σ m^{−p}` diverges iff `p ≤ 1`; convergent ones are summed up to a cutoff
/// and closed with the integral bound `M^{1−p}/(p−1)` times the last term's
/// coefficient.
fn tail_moments(t: &ShellTail, step: f64) -> [Moment; 3] {
    let c = t.weight * t.norm();
    let s = t.shift as f64 * step;
    let powers = [1.0, 2.0, if t.shift > 0 { 2.0 } else { f64::NEG_INFINITY }];
    let mut out = [Moment::Finite(0.0); 3];
    for (k, &pw) in powers.iter().enumerate() {
        if pw == f64::NEG_INFINITY {
            continue;
        }
        let p = t.alpha - pw;
        if p <= 1.0 {
            out[k] = Moment::Infinite { exponent: 1.0 - p };
            continue;
        }
        let term = |m: u64| -> f64 {
            let ly = log_children(t, step, m) - m as f64 * s;
            let base = c * pow(m as f64, -t.alpha);
            match k {
                0 => base * ly.max(0.0),
                1 => base * ly.max(0.0) * ly.max(0.0),
                _ => {
                    let z = m as f64 * s;
                    base * z * (log(z) + ly).max(0.0)
                }
            }
        };
        let mut acc = Sum::new();
        let mut m = 1;
        let mut last;
        loop {
            last = term(m);
            acc.add(last);
            if (last <= SHELL_REL * acc.value() && m > 64) || m == SHELL_CAP {
                break;
            }
            m += 1;
        }
        // last ≈ A m^{−p}, so Σ_{j>m} A j^{−p} ≈ A m^{1−p}/(p−1) = last·m/(p−1)
        acc.add(last * m as f64 / (p - 1.0));
        out[k] = Moment::Finite(acc.value());
    }
    out
}

fn state_moments(law: &PointProcessLaw) -> [Moment; 3] {
    let step = law.lattice_step();
    let mut acc = [Sum::new(); 3];
    for o in law.outcomes() {
        let mut counts: Vec<(i64, f64)> = Vec::new();
        for &x in &o.children {
            match counts.iter_mut().find(|e| e.0 == x) {
                Some(e) => e.1 += 1.0,
                None => counts.push((x, 1.0)),
            }
        }
        let (y, z) = y_z(step, &counts);
        let ly = log_plus(y);
        acc[0].add(o.prob * y * ly);
        acc[1].add(o.prob * y * ly * ly);
        acc[2].add(o.prob * z * log_plus(z));
    }
    let head = [
        Moment::Finite(acc[0].value()),
        Moment::Finite(acc[1].value()),
        Moment::Finite(acc[2].value()),
    ];
    match law.tail() {
        Some(t) => {
            let tail = tail_moments(t, step);
            [
                head[0].plus(tail[0]),
                head[1].plus(tail[1]),
                head[2].plus(tail[2]),
            ]
        }
        None => head,
    }
}

/// `E[Y log₊² Y]`, `E[Y log₊ Y]`, `E[Z log₊ Z]` averaged over environment states, and the classification.
pub fn moment_criterion(env: &EnvironmentLaw) -> Result<CriterionReport> {
    let mut total = [Moment::Finite(0.0); 3];
    for (p, law) in env.states() {
        if *p <= 0.0 {
            continue;
        }
        let m = state_moments(law);
        for k in 0..3 {
            total[k] = total[k].plus(match m[k] {
                Moment::Finite(v) => Moment::Finite(p * v),
                i => i,
            });
        }
    }
    let [y_log, y_log2, z_log] = total;
    let case_ii = !y_log.is_finite();
    let case_i = !y_log2.is_finite() && !case_ii;
    let case_iii = !z_log.is_finite();
    Ok(CriterionReport {
        y_log2,
        y_log,
        z_log,
        nondegenerate: y_log2.is_finite() && z_log.is_finite(),
        case_i,
        case_ii,
        case_iii,
    })
}

/// `X̃` for a realized outcome `children` (displacements) of a conditioned particle at `x` in generation `n`.
pub fn tilde_x(h: &Harmonic, n: usize, x: i64, beta: i64, children: &[(i64, f64)]) -> Result<f64> {
    if x < -beta {
        return Err(Error::Contract(
            "conditioned position below the barrier".into(),
        ));
    }
    let step = h.lattice_step();
    let mut s = Sum::new();
    for &(d, c) in children {
        if x + d >= -beta {
            s.add(c * h.u(n + 1, x + d + beta)? * exp(-(d as f64) * step));
        }
    }
    Ok(s.value() / h.u(n, x + beta)?)
}

/// Which series the probe accumulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesVariant {
    /// `E[X̃·((U e^{−ζ} X̃) ∧ 1)]`, summable when the limit is non-degenerate.
    L1,
    /// `E[X̃·1{U e^{−ζ} X̃ ≥ c}]`, divergent when the moment criterion fails.
    Degenerate { c: f64 },
}

/// Expected increment at generation `n` given `ζ_n = x`, exact over outcomes.
///
/// Tail shells with `shift = 0` are summed in closed form through the Hurwitz zeta function.
pub fn series_increment(
    path: &EnvironmentPath,
    h: &Harmonic,
    n: usize,
    x: i64,
    beta: i64,
    variant: SeriesVariant,
) -> Result<f64> {
    let step = h.lattice_step();
    let law = path.state(n + 1);
    let a = h.u(n, x + beta)? * exp(-(x as f64) * step);
    let f = |xt: f64| match variant {
        SeriesVariant::L1 => xt * (a * xt).min(1.0),
        SeriesVariant::Degenerate { c } => {
            if a * xt >= c {
                xt
            } else {
                0.0
            }
        }
    };
    let mut acc = Sum::new();
    for o in law.outcomes() {
        let mut counts: Vec<(i64, f64)> = Vec::new();
        for &d in &o.children {
            match counts.iter_mut().find(|e| e.0 == d) {
                Some(e) => e.1 += 1.0,
                None => counts.push((d, 1.0)),
            }
        }
        acc.add(o.prob * f(tilde_x(h, n, x, beta, &counts)?));
    }
    if let Some(t) = law.tail() {
        if t.shift != 0 {
            return Err(Error::UnsupportedTail(
                "series probe needs tail shells at displacement 0".into(),
            ));
        }
        // every child sits at 0, so X̃_m = K_m·r and q_m X̃_m = weight·C·r·m^{−α}
        let r = h.u(n + 1, x + beta)? / h.u(n, x + beta)?;
        let c0 = t.weight * t.norm() * r;
        let threshold = match variant {
            SeriesVariant::L1 => 1.0,
            SeriesVariant::Degenerate { c } => c,
        };
        let mut m = 1;
        while a * t.children(m) * r < threshold && m < SHELL_CAP {
            if let SeriesVariant::L1 = variant {
                acc.add(c0 * pow(m as f64, -t.alpha) * a * t.children(m) * r);
            }
            m += 1;
        }
        acc.add(c0 * hurwitz_zeta(t.alpha, m as f64));
    }
    Ok(acc.value())
}

/// Partial sums `U(ξ,β)·Σ_{k=1}^{n}` of the series along one sampled conditioned path, at each `n` in `checkpoints`.
pub fn conditioned_series_partial_sums(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    variant: SeriesVariant,
    checkpoints: &[usize],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let horizon = checkpoints.iter().copied().max().unwrap_or(0);
    let zeta = sample_conditioned_path(h, 0, beta, horizon, rng)?;
    let u0 = h.u(0, beta)?;
    let mut acc = Sum::new();
    let mut out = Vec::with_capacity(checkpoints.len());
    for n in 1..=horizon {
        acc.add(series_increment(path, h, n, zeta[n], beta, variant)?);
        if checkpoints.contains(&n) {
            out.push(u0 * acc.value());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Outcome;
    use crate::walk::WalkEnv;
    use alloc::sync::Arc;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn path_of(law: EnvironmentLaw) -> EnvironmentPath {
        EnvironmentPath::realize(Arc::new(law), 3, 128)
    }

    fn brute(env: &EnvironmentLaw) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (p, law) in env.states() {
            for o in law.outcomes() {
                let y: f64 = o
                    .children
                    .iter()
                    .map(|&d| exp(-(d as f64) * law.lattice_step()))
                    .sum();
                let z: f64 = o
                    .children
                    .iter()
                    .map(|&d| d as f64 * law.lattice_step())
                    .filter(|&v| v >= 0.0)
                    .map(|v| v * exp(-v))
                    .sum();
                let ly = if y > 1.0 { y.ln() } else { 0.0 };
                let lz = if z > 1.0 { z.ln() } else { 0.0 };
                out[0] += p * o.prob * y * ly;
                out[1] += p * o.prob * y * ly * ly;
                out[2] += p * o.prob * z * lz;
            }
        }
        out
    }

    fn finite(m: Moment) -> f64 {
        match m {
            Moment::Finite(v) => v,
            Moment::Infinite { .. } => panic!("expected a finite moment"),
        }
    }

    #[test]
    fn single_child_at_zero() {
        let env = EnvironmentLaw::homogeneous(
            PointProcessLaw::new(1.0, vec![Outcome::new(1.0, vec![0])]).unwrap(),
        );
        let r = moment_criterion(&env).unwrap();
        assert_eq!(
            (r.y_log2, r.z_log),
            (Moment::Finite(0.0), Moment::Finite(0.0))
        );
        assert!(r.nondegenerate && !r.case_i && !r.case_ii && !r.case_iii);
    }

    #[test]
    fn finite_laws_match_brute_force() {
        let a = PointProcessLaw::pm1_recipe();
        let b = PointProcessLaw::boundary_recipe(1.0, &[(-2, 0.3), (0, 0.4), (2, 0.3)], 2).unwrap();
        for env in [
            EnvironmentLaw::homogeneous(a.clone()),
            EnvironmentLaw::new(vec![(0.3, a), (0.7, b)]).unwrap(),
        ] {
            let r = moment_criterion(&env).unwrap();
            let o = brute(&env);
            assert!(r.nondegenerate);
            assert_abs_diff_eq!(finite(r.y_log), o[0], epsilon = 1e-12);
            assert_abs_diff_eq!(finite(r.y_log2), o[1], epsilon = 1e-12);
            assert_abs_diff_eq!(finite(r.z_log), o[2], epsilon = 1e-12);
        }
    }

    #[test]
    fn outcome_order_is_irrelevant() {
        let law = PointProcessLaw::boundary_recipe(
            1.0,
            &[(-1, 0.25), (0, 0.25), (1, 0.25), (2, 0.25)],
            3,
        )
        .unwrap();
        let mut rev: Vec<Outcome> = law.outcomes().to_vec();
        rev.reverse();
        let law2 = PointProcessLaw::new(1.0, rev).unwrap();
        let a = moment_criterion(&EnvironmentLaw::homogeneous(law)).unwrap();
        let b = moment_criterion(&EnvironmentLaw::homogeneous(law2)).unwrap();
        assert_abs_diff_eq!(finite(a.y_log2), finite(b.y_log2), epsilon = 1e-15);
        assert_abs_diff_eq!(finite(a.z_log), finite(b.z_log), epsilon = 1e-15);
    }

    #[test]
    fn shell_family_cases() {
        // alpha 2.5: Y log Y ~ Σ m^{-1.5} finite, Y log² Y ~ Σ m^{-0.5} infinite
        let r = moment_criterion(&EnvironmentLaw::homogeneous(
            PointProcessLaw::shell_boundary(1.0, 2.5, 1.0, 0).unwrap(),
        ))
        .unwrap();
        assert!(!r.nondegenerate && r.case_i && !r.case_ii && !r.case_iii);
        assert_eq!(r.y_log2, Moment::Infinite { exponent: 0.5 });
        // alpha 1.8: Y log Y infinite
        let r = moment_criterion(&EnvironmentLaw::homogeneous(
            PointProcessLaw::shell_boundary(1.0, 1.8, 1.0, 0).unwrap(),
        ))
        .unwrap();
        assert!(r.case_ii && !r.case_i);
        // alpha 3 is the log-divergent edge
        let r = moment_criterion(&EnvironmentLaw::homogeneous(
            PointProcessLaw::shell_boundary(1.0, 3.0, 1.0, 0).unwrap(),
        ))
        .unwrap();
        assert_eq!(r.y_log2, Moment::Infinite { exponent: 0.0 });
        // alpha 4: everything finite
        let r = moment_criterion(&EnvironmentLaw::homogeneous(
            PointProcessLaw::shell_boundary(1.0, 4.0, 1.0, 0).unwrap(),
        ))
        .unwrap();
        assert!(r.nondegenerate);
        // shifted shells: Z log Z ~ Σ m^{2-α}
        let r = moment_criterion(&EnvironmentLaw::homogeneous(
            PointProcessLaw::shell_boundary(1.0, 2.5, 2.0, 1).unwrap(),
        ))
        .unwrap();
        assert!(r.case_i && r.case_iii);
    }

    #[test]
    fn convergent_tail_sum_matches_closed_form() {
        // shift 0, log K_m = m·growth for large m: E[Y log² Y] tail = C Σ m^{-α}(g m)²
        let law = PointProcessLaw::shell_boundary(1.0, 4.5, 1.0, 0).unwrap();
        let t = law.tail().unwrap();
        let [_, y2, _] = tail_moments(t, 1.0);
        let c = t.weight * t.norm();
        let mut exact = c * hurwitz_zeta(2.5, 36.0);
        for m in 1..36u64 {
            let ly = log_children(t, 1.0, m);
            exact += c * (m as f64).powf(-4.5) * ly * ly;
        }
        assert_abs_diff_eq!(finite(y2), exact, epsilon = 1e-10);
    }

    #[test]
    fn tilde_x_is_mean_one() {
        let a = PointProcessLaw::pm1_recipe();
        let b = PointProcessLaw::boundary_recipe(1.0, &[(-1, 0.4), (0, 0.2), (1, 0.4)], 1).unwrap();
        let path = path_of(EnvironmentLaw::new(vec![(0.5, a), (0.5, b)]).unwrap());
        let h = Harmonic::new(WalkEnv::from_path(&path).unwrap(), 1e-10, 10_000);
        for n in 0..5 {
            for beta in [0, 2] {
                for x in [-beta, 0, 3, 10] {
                    let mut m = 0.0;
                    for (p, ch) in path.state(n + 1).atoms(0.0) {
                        m += p * tilde_x(&h, n, x, beta, &ch).unwrap();
                    }
                    assert_abs_diff_eq!(m, 1.0, epsilon = 1e-9);
                }
            }
        }
        let x = tilde_x(&h, 0, 0, 0, &[(-1, 2.0)]).unwrap();
        assert_eq!(x, 0.0);
        let x = tilde_x(&h, 0, 4, 1, &[(0, 1.0)]).unwrap();
        assert_abs_diff_eq!(x, h.u(1, 5).unwrap() / h.u(0, 5).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn l1_series_plateaus_and_large_c_empties() {
        let path = path_of(EnvironmentLaw::homogeneous(PointProcessLaw::pm1_recipe()));
        let h = Harmonic::new(WalkEnv::from_path(&path).unwrap(), 1e-10, 10_000);
        let mut rng = RngStream::new(7, 0);
        let mut early = 0.0;
        let mut late = 0.0;
        for _ in 0..20 {
            let s = conditioned_series_partial_sums(
                &path,
                &h,
                0,
                SeriesVariant::L1,
                &[10, 1000, 20_000],
                &mut rng,
            )
            .unwrap();
            assert!(s.windows(2).all(|w| w[1] >= w[0]), "{s:?}");
            early += s[1] - s[0];
            late += s[2] - s[1];
        }
        assert!(late < 0.5 * early, "{early} {late}");
        let d = conditioned_series_partial_sums(
            &path,
            &h,
            0,
            SeriesVariant::Degenerate { c: 1e9 },
            &[200],
            &mut rng,
        )
        .unwrap();
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn degenerate_series_grows_for_heavy_tail() {
        let law = PointProcessLaw::shell_boundary(1.0, 2.5, 1.0, 0).unwrap();
        let path = path_of(EnvironmentLaw::homogeneous(law));
        let h = Harmonic::new(WalkEnv::from_path(&path).unwrap(), 1e-3, 100_000);
        let mut rng = RngStream::new(9, 0);
        let s = conditioned_series_partial_sums(
            &path,
            &h,
            0,
            SeriesVariant::Degenerate { c: 1.0 },
            &[100, 400, 1600],
            &mut rng,
        )
        .unwrap();
        assert!(s[2] - s[1] > 0.5 * (s[1] - s[0]), "{s:?}");
    }
}
