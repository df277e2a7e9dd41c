//! The associated random walk in time-random environment: per-state step
//! measures and the many-to-one identity.

use alloc::sync::Arc;
use alloc::vec::Vec;

use libm::{exp, fabs};

use crate::env::{EnvironmentPath, PointProcessLaw};
use crate::lattice::{StepMeasure, Sum};
use crate::{Error, Result};

/// Step measure of a boundary-case state; rejects laws whose tilted mass is not 1.
pub fn step_measure(state: &PointProcessLaw) -> Result<StepMeasure> {
    let mu = state.raw_step_measure()?;
    let mass = mu.total();
    if fabs(mass - 1.0) > 1e-9 {
        return Err(Error::NotBoundary { mass });
    }
    Ok(mu)
}

#[derive(Debug, Clone)]
enum Source {
    Constant,
    Path(EnvironmentPath),
}

/// The walk's step sequence `μ_1, μ_2, …` seen from the current shift.
#[derive(Debug, Clone)]
pub struct WalkEnv {
    steps: Arc<Vec<StepMeasure>>,
    source: Source,
    offset: usize,
    max_down: i64,
    lattice_step: f64,
}

impl WalkEnv {
    /// Time-homogeneous walk with a raw step measure.
    pub fn homogeneous(step: StepMeasure) -> Self {
        let max_down = step.max_down();
        let lattice_step = step.lattice_step();
        Self {
            steps: Arc::new(alloc::vec![step]),
            source: Source::Constant,
            offset: 0,
            max_down,
            lattice_step,
        }
    }

    pub fn from_path(path: &EnvironmentPath) -> Result<Self> {
        let law = path.law();
        let steps: Vec<StepMeasure> = law
            .states()
            .iter()
            .map(|(_, s)| step_measure(s))
            .collect::<Result<_>>()?;
        let max_down = law
            .states()
            .iter()
            .zip(&steps)
            .filter(|((p, _), _)| *p > 0.0)
            .map(|(_, m)| m.max_down())
            .max()
            .unwrap_or(0);
        Ok(Self {
            steps: Arc::new(steps),
            source: Source::Path(path.clone()),
            offset: 0,
            max_down,
            lattice_step: law.lattice_step(),
        })
    }

    pub fn lattice_step(&self) -> f64 {
        self.lattice_step
    }

    /// Largest downward jump over all states that occur with positive probability.
    pub fn max_down(&self) -> i64 {
        self.max_down
    }

    /// Step measure of `X_t`, `t ≥ 1`, for the shifted walk.
    pub fn step(&self, t: usize) -> &StepMeasure {
        match &self.source {
            Source::Constant => &self.steps[0],
            Source::Path(p) => &self.steps[p.state_index(self.offset + t)],
        }
    }

    pub fn shift(&self, k: usize) -> Self {
        Self {
            offset: self.offset + k,
            ..self.clone()
        }
    }

    /// Absolute shift relative to the unshifted environment.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn path(&self) -> Option<EnvironmentPath> {
        match &self.source {
            Source::Constant => None,
            Source::Path(p) => Some(p.shift(self.offset)),
        }
    }
}

/// Both sides of the many-to-one identity at depth `n` from start `a` (lattice units).
///
/// `lhs` sums `f` over every line of descent of the branching tree weighted by
/// its outcome probabilities; `rhs` sums `e^{S_n − a} f(S_1, …, S_n)` over walk paths.
pub fn many_to_one_check(
    path: &EnvironmentPath,
    a: i64,
    n: usize,
    f: &dyn Fn(&[f64]) -> f64,
    cap: u128,
) -> Result<(f64, f64)> {
    if n > 4 {
        return Err(Error::EnumerationTooLarge {
            size: n as u128,
            cap: 4,
        });
    }
    let walk = WalkEnv::from_path(path)?;
    let step = path.law().lattice_step();
    let mut lines: u128 = 1;
    let mut paths: u128 = 1;
    for t in 1..=n {
        let s = path.state(t);
        if !s.is_finite() {
            return Err(Error::UnsupportedTail(
                "many-to-one enumeration needs finite laws".into(),
            ));
        }
        lines = lines.saturating_mul(s.outcomes().iter().map(|o| o.children.len() as u128).sum());
        paths = paths.saturating_mul(walk.step(t).iter().count() as u128);
    }
    if lines.max(paths) > cap {
        return Err(Error::EnumerationTooLarge {
            size: lines.max(paths),
            cap,
        });
    }

    let mut lhs = Sum::new();
    let mut buf = Vec::with_capacity(n);
    lines_rec(path, step, a, 1, n, 1.0, &mut buf, f, &mut lhs);

    let mut rhs = Sum::new();
    buf.clear();
    paths_rec(&walk, step, a, a, 1, n, 1.0, &mut buf, f, &mut rhs);
    Ok((lhs.value(), rhs.value()))
}

#[allow(clippy::too_many_arguments)]
fn lines_rec(
    path: &EnvironmentPath,
    step: f64,
    pos: i64,
    t: usize,
    n: usize,
    weight: f64,
    buf: &mut Vec<f64>,
    f: &dyn Fn(&[f64]) -> f64,
    acc: &mut Sum,
) {
    if t > n {
        acc.add(weight * f(buf));
        return;
    }
    for o in path.state(t).outcomes() {
        for &c in &o.children {
            let next = pos + c;
            buf.push(next as f64 * step);
            lines_rec(path, step, next, t + 1, n, weight * o.prob, buf, f, acc);
            buf.pop();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn paths_rec(
    walk: &WalkEnv,
    step: f64,
    start: i64,
    pos: i64,
    t: usize,
    n: usize,
    weight: f64,
    buf: &mut Vec<f64>,
    f: &dyn Fn(&[f64]) -> f64,
    acc: &mut Sum,
) {
    if t > n {
        acc.add(weight * exp((pos - start) as f64 * step) * f(buf));
        return;
    }
    for (x, m) in walk.step(t).iter() {
        let next = pos + x;
        buf.push(next as f64 * step);
        paths_rec(walk, step, start, next, t + 1, n, weight * m, buf, f, acc);
        buf.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentLaw, Outcome};
    use approx::assert_abs_diff_eq;
    use core::f64::consts::{E, LN_2};

    fn pm1_path() -> EnvironmentPath {
        EnvironmentPath::realize(
            Arc::new(EnvironmentLaw::homogeneous(PointProcessLaw::pm1_recipe())),
            0,
            8,
        )
    }

    #[test]
    fn step_measure_examples() {
        let two =
            PointProcessLaw::new(LN_2, alloc::vec![Outcome::new(1.0, alloc::vec![1, 1])]).unwrap();
        let mu = step_measure(&two).unwrap();
        assert_abs_diff_eq!(mu.mass(1), 1.0, epsilon = 1e-15);

        let det =
            PointProcessLaw::new(1.0, alloc::vec![Outcome::new(1.0, alloc::vec![1, -1])]).unwrap();
        match step_measure(&det) {
            Err(Error::NotBoundary { mass }) => {
                assert_abs_diff_eq!(mass, 1.0 / E + E, epsilon = 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn many_to_one_constant_depth_one() {
        let p = pm1_path();
        let (l, r) = many_to_one_check(&p, 0, 1, &|_| 1.0, 1 << 20).unwrap();
        // mean number of children = e/2 + 1/(2e)
        assert_abs_diff_eq!(l, E / 2.0 + 1.0 / (2.0 * E), epsilon = 1e-14);
        assert_abs_diff_eq!(l, r, epsilon = 1e-12);
    }

    #[test]
    fn many_to_one_positive_indicator() {
        let p = pm1_path();
        let f = |s: &[f64]| if s[0] >= 0.0 { 1.0 } else { 0.0 };
        let (l, r) = many_to_one_check(&p, 0, 1, &f, 1 << 20).unwrap();
        // E[K_{+1}] = e/2
        assert_abs_diff_eq!(l, E / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l, r, epsilon = 1e-12);
    }

    #[test]
    fn many_to_one_depth_zero() {
        let (l, r) = many_to_one_check(&pm1_path(), 3, 0, &|s| s.len() as f64 + 2.0, 10).unwrap();
        assert_eq!((l, r), (2.0, 2.0));
    }

    #[test]
    fn many_to_one_rejects_deep_enumeration() {
        assert!(many_to_one_check(&pm1_path(), 0, 5, &|_| 1.0, u128::MAX).is_err());
        assert!(matches!(
            many_to_one_check(&pm1_path(), 0, 4, &|_| 1.0, 10),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }
}
