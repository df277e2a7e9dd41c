//! The quenched harmonic function `U(ξ, y) = −E_ξ[S_{τ_y}]` with a certified error bound.
//!
//! With `τ_y = inf{n ≥ 1 : y + S_n < 0}`, the truncations
//! `U_n = E_ξ[(y + S_n) 1{τ_y > n}]` satisfy
//! `U = U_n + E_ξ[O(θⁿξ, y + S_n) 1{τ_y > n}]`, where the residual overshoot
//! `O(θⁿξ, z) = U(θⁿξ, z) − z` lies in `[Δ, MΔ]` for a walk whose downward
//! jumps are at most `M` lattice units (the killed walk lands in `[−MΔ, −Δ]`,
//! and `τ_y < ∞` a.s. because the steps are centred and bounded). The midpoint
//! of that interval gives `U` to within `(M − 1)Δ/2 · P(τ_y > n)`.

use alloc::collections::BTreeMap;
use core::cell::RefCell;

use libm::fabs;

use crate::lattice::{killed_propagate, LatticeDistribution, Sum};
use crate::walk::WalkEnv;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicValue {
    pub value: f64,
    pub horizon: usize,
    pub error_bound: f64,
    /// Barrier shift `y` in real units.
    pub y: f64,
    /// `E[−(y + S_τ) 1{τ ≤ n}]` at the stopping horizon.
    pub overshoot: f64,
    /// `P(τ_y > n)` at the stopping horizon.
    pub survival: f64,
}

/// Computes `U(ξ, y)` for `y ≥ 0` in lattice units, stopping once the certified bound is at most `tol`.
pub fn harmonic_u(walk: &WalkEnv, y: i64, tol: f64, max_horizon: usize) -> Result<HarmonicValue> {
    assert!(y >= 0, "harmonic function needs y >= 0");
    let d = walk.lattice_step();
    let m = walk.max_down();
    let yr = y as f64 * d;
    if m == 0 {
        // Centred steps without downward jumps are the zero step: τ_y = ∞.
        return Ok(HarmonicValue {
            value: yr,
            horizon: 0,
            error_bound: 0.0,
            y: yr,
            overshoot: 0.0,
            survival: 1.0,
        });
    }
    let spread = 0.5 * (m - 1) as f64 * d;
    let centre = 0.5 * (m + 1) as f64 * d;
    let mut dist = LatticeDistribution::delta(d, y);
    let mut overshoot = Sum::new();
    let mut drift = Sum::new();
    let mut survival = 1.0;
    let mut n = 0;
    loop {
        let eps = spread * survival;
        if eps <= tol {
            break;
        }
        if n >= max_horizon {
            return Err(Error::HorizonExceeded {
                horizon: n,
                best_bound: eps,
            });
        }
        let step = walk.step(n + 1);
        drift.add(step.mean() * survival);
        let k = killed_propagate(&dist, step, 0)?;
        overshoot.add(k.overshoot);
        dist = k.survivor;
        survival = dist.total();
        n += 1;
    }
    let direct = dist.first_moment();
    let accumulated = yr + drift.value() + overshoot.value();
    let slack = 1e-12 * (1.0 + fabs(direct)) + 1e-15 * n as f64 * m as f64 * d;
    if fabs(direct - accumulated) > slack {
        return Err(Error::Contract(alloc::format!(
            "U_n direct {direct} vs accumulated overshoot {accumulated} at n = {n}"
        )));
    }
    Ok(HarmonicValue {
        value: direct + centre * survival,
        horizon: n,
        error_bound: spread * survival,
        y: yr,
        overshoot: overshoot.value(),
        survival,
    })
}

/// `|U(ξ,y) − E_ξ[U(θξ, y + S_1) 1{τ_y > 1}]|`, each value computed at `tol / 10`.
pub fn harmonic_residual(walk: &WalkEnv, y: i64, tol: f64, max_horizon: usize) -> Result<f64> {
    let inner = tol / 10.0;
    let lhs = harmonic_u(walk, y, inner, max_horizon)?.value;
    let next = walk.shift(1);
    let mut rhs = Sum::new();
    for (x, p) in walk.step(1).iter() {
        if y + x >= 0 {
            rhs.add(p * harmonic_u(&next, y + x, inner, max_horizon)?.value);
        }
    }
    Ok(fabs(lhs - rhs.value()))
}

/// Memoized `U(θⁿξ, y)` along one environment path.
///
/// Walks with downward jumps of at most one lattice unit need no dynamic
/// programming: the certified rule stops at horizon 0 with `U(ξ, y) = y + Δ`.
#[derive(Debug, Clone)]
pub struct Harmonic {
    walk: WalkEnv,
    tol: f64,
    max_horizon: usize,
    cache: RefCell<BTreeMap<(usize, i64), HarmonicValue>>,
}

impl Harmonic {
    pub fn new(walk: WalkEnv, tol: f64, max_horizon: usize) -> Self {
        Self {
            walk,
            tol,
            max_horizon,
            cache: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn walk(&self) -> &WalkEnv {
        &self.walk
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_horizon(&self) -> usize {
        self.max_horizon
    }

    pub fn lattice_step(&self) -> f64 {
        self.walk.lattice_step()
    }

    /// Whether values are exact (`y + Δ` or `y`) without any dynamic programming.
    pub fn is_closed_form(&self) -> bool {
        self.walk.max_down() <= 1
    }

    /// `U(θⁿξ, y)` with its certificate; `y` in lattice units, `y ≥ 0`.
    pub fn value(&self, n: usize, y: i64) -> Result<HarmonicValue> {
        if self.is_closed_form() {
            let d = self.walk.lattice_step();
            let m = self.walk.max_down() as f64;
            let yr = y as f64 * d;
            return Ok(HarmonicValue {
                value: yr + m * d,
                horizon: 0,
                error_bound: 0.0,
                y: yr,
                overshoot: 0.0,
                survival: 1.0,
            });
        }
        let key = (self.walk.offset() + n, y);
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(*v);
        }
        let v = harmonic_u(&self.walk.shift(n), y, self.tol, self.max_horizon)?;
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }

    /// `U(θⁿξ, y)`, zero for `y < 0`.
    pub fn u(&self, n: usize, y: i64) -> Result<f64> {
        if y < 0 {
            return Ok(0.0);
        }
        if self.is_closed_form() {
            let m = self.walk.max_down() as f64;
            return Ok((y as f64 + m) * self.walk.lattice_step());
        }
        Ok(self.value(n, y)?.value)
    }

    /// Certified error of `u(n, y)`.
    pub fn err(&self, n: usize, y: i64) -> Result<f64> {
        if y < 0 {
            return Ok(0.0);
        }
        Ok(self.value(n, y)?.error_bound)
    }

    /// Same walk, shifted by `k`; shares nothing mutable with `self`.
    pub fn shifted(&self, k: usize) -> Self {
        Self::new(self.walk.shift(k), self.tol, self.max_horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentLaw, EnvironmentPath, PointProcessLaw};
    use crate::lattice::{killed_propagate, StepMeasure};
    use alloc::sync::Arc;
    use alloc::vec;
    use alloc::vec::Vec;

    fn fair() -> WalkEnv {
        WalkEnv::homogeneous(StepMeasure::fair_pm1())
    }

    /// Mean-zero walk with downward jumps of two units.
    fn two_down() -> WalkEnv {
        WalkEnv::homogeneous(
            StepMeasure::new(1.0, &[(-2, 0.25), (-1, 0.25), (1, 0.25), (2, 0.25)]).unwrap(),
        )
    }

    #[test]
    fn fair_walk_oracle() {
        for y in 0..=10 {
            let v = harmonic_u(&fair(), y, 1e-8, 10_000).unwrap();
            assert!((v.value - (y as f64 + 1.0)).abs() <= 1e-12, "y={y}: {v:?}");
        }
    }

    /// Independent oracle: killed DP run to a fixed horizon, no stopping rule.
    fn brute_u_n(walk: &WalkEnv, y: i64, n: usize) -> (f64, f64) {
        let mut d = LatticeDistribution::delta(1.0, y);
        for t in 1..=n {
            d = killed_propagate(&d, walk.step(t), 0).unwrap().survivor;
        }
        (d.first_moment(), d.total())
    }

    #[test]
    fn bound_brackets_truncations() {
        let w = two_down();
        for y in [0, 1, 3] {
            let v = harmonic_u(&w, y, 2e-2, 50_000).unwrap();
            let (un, _) = brute_u_n(&w, y, v.horizon);
            assert!((v.value - v.error_bound - un) > 0.0);
            // More steps keep the lower end increasing and inside the certified interval.
            let (un2, p2) = brute_u_n(&w, y, 4 * v.horizon);
            assert!(un2 + p2 <= v.value + v.error_bound + 1e-12);
            assert!(un2 + 2.0 * p2 >= v.value - v.error_bound - 1e-12);
        }
    }

    #[test]
    fn coarse_tolerance_still_dominates_first_step() {
        let w = two_down();
        let v = harmonic_u(&w, 2, 10.0, 100).unwrap();
        let (u1, _) = brute_u_n(&w, 2, 1);
        assert!(v.value >= u1);
        assert_eq!(v.horizon, 0);
    }

    #[test]
    fn horizon_exceeded_carries_bound() {
        match harmonic_u(&two_down(), 0, 1e-9, 50) {
            Err(Error::HorizonExceeded {
                horizon,
                best_bound,
            }) => {
                assert_eq!(horizon, 50);
                assert!(best_bound > 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn monotone_in_y_and_above_y() {
        let w = two_down();
        let vals: Vec<f64> = (0..6)
            .map(|y| harmonic_u(&w, y, 2e-2, 50_000).unwrap().value)
            .collect();
        for (y, pair) in vals.windows(2).enumerate() {
            assert!(pair[1] + 4e-2 >= pair[0]);
            assert!(pair[0] >= y as f64);
        }
    }

    #[test]
    fn ratio_to_y_tends_to_one() {
        let w = two_down();
        let r: Vec<f64> = [10, 20, 40]
            .iter()
            .map(|&y| harmonic_u(&w, y, 5e-2, 50_000).unwrap().value / y as f64)
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2] && r[2] > 1.0, "{r:?}");
    }

    #[test]
    fn residual_zero_on_fair_walk() {
        assert!(harmonic_residual(&fair(), 2, 1e-8, 1000).unwrap() < 1e-14);
        assert!(harmonic_residual(&fair(), 0, 1e-8, 1000).unwrap() < 1e-14);
    }

    #[test]
    fn residual_within_contract_on_random_environment() {
        let a = PointProcessLaw::pm1_recipe();
        let b =
            PointProcessLaw::boundary_recipe(1.0, &[(-1, 2.0 / 3.0), (2, 1.0 / 3.0)], 0).unwrap();
        let law = Arc::new(EnvironmentLaw::new(vec![(0.5, a), (0.5, b)]).unwrap());
        let w = WalkEnv::from_path(&EnvironmentPath::realize(law, 3, 64)).unwrap();
        for y in [0, 1, 2, 5] {
            assert!(harmonic_residual(&w, y, 1e-8, 10_000).unwrap() <= 3e-8);
        }
    }

    #[test]
    fn martingale_along_killed_law() {
        let a =
            PointProcessLaw::boundary_recipe(1.0, &[(-2, 1.0 / 3.0), (1, 2.0 / 3.0)], 0).unwrap();
        let b = PointProcessLaw::pm1_recipe();
        let law = Arc::new(EnvironmentLaw::new(vec![(0.4, a), (0.6, b)]).unwrap());
        let w = WalkEnv::from_path(&EnvironmentPath::realize(law, 9, 64)).unwrap();
        let tol = 2e-2;
        let h = Harmonic::new(w.clone(), tol, 100_000);
        let y = 1;
        let mut d = LatticeDistribution::delta(1.0, y);
        let u0 = h.u(0, y).unwrap();
        for n in 1..=6 {
            d = killed_propagate(&d, w.step(n), 0).unwrap().survivor;
            let mut s = Sum::new();
            for (x, p) in d.iter() {
                s.add(p * h.u(n, x).unwrap());
            }
            assert!((s.value() - u0).abs() <= 6.0 * tol, "n={n}");
        }
    }
}
