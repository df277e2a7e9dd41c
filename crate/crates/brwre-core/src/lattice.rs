//! Exact sub-probability mass functions on a lattice `Δ·ℤ` and their convolutions.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut s = Sum::new();
    for v in values {
        s.add(v);
    }
    s.value()
}

pub(crate) fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn check_step(a: f64, b: f64) -> Result<()> {
    if same_step(a, b) {
        Ok(())
    } else {
        Err(Error::LatticeMismatch(a, b))
    }
}

/// Dense mass vector indexed from `offset`, trimmed of zero ends.
fn trim(offset: &mut i64, masses: &mut Vec<f64>) {
    let first = masses.iter().position(|&m| m != 0.0);
    match first {
        None => {
            masses.clear();
            *offset = 0;
        }
        Some(f) => {
            let last = masses.iter().rposition(|&m| m != 0.0).unwrap_or(f);
            masses.truncate(last + 1);
            masses.drain(..f);
            *offset += f as i64;
        }
    }
}

/// Law of one walk increment: lattice index → mass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMeasure {
    step: f64,
    offset: i64,
    masses: Vec<f64>,
}

impl StepMeasure {
    pub fn new(step: f64, points: &[(i64, f64)]) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidLaw(
                "lattice step must be positive and finite".into(),
            ));
        }
        if points.is_empty() {
            return Err(Error::InvalidLaw(
                "step measure needs at least one atom".into(),
            ));
        }
        let lo = points.iter().map(|p| p.0).min().unwrap_or(0);
        let hi = points.iter().map(|p| p.0).max().unwrap_or(0);
        let mut masses = vec![0.0; (hi - lo + 1) as usize];
        for &(i, m) in points {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::InvalidLaw(
                    "step masses must be finite and non-negative".into(),
                ));
            }
            masses[(i - lo) as usize] += m;
        }
        let mut offset = lo;
        trim(&mut offset, &mut masses);
        if masses.is_empty() {
            return Err(Error::InvalidLaw("step measure has zero mass".into()));
        }
        Ok(Self {
            step,
            offset,
            masses,
        })
    }

    /// Fair ±1 walk on the unit lattice.
    pub fn fair_pm1() -> Self {
        Self::new(1.0, &[(-1, 0.5), (1, 0.5)]).expect("valid")
    }

    pub fn lattice_step(&self) -> f64 {
        self.step
    }

    pub fn min_index(&self) -> i64 {
        self.offset
    }

    pub fn max_index(&self) -> i64 {
        self.offset + self.masses.len() as i64 - 1
    }

    /// Largest downward jump in lattice units (0 if the walk never moves down).
    pub fn max_down(&self) -> i64 {
        (-self.offset).max(0)
    }

    pub fn mass(&self, i: i64) -> f64 {
        let k = i - self.offset;
        if k < 0 || k >= self.masses.len() as i64 {
            0.0
        } else {
            self.masses[k as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(move |(k, &m)| (self.offset + k as i64, m))
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.masses.iter().copied())
    }

    /// Mean displacement in real units.
    pub fn mean(&self) -> f64 {
        self.step * compensated_sum(self.iter().map(|(i, m)| i as f64 * m))
    }

    /// Mixture `Σ w_k μ_k`.
    pub fn mixture(parts: &[(f64, &StepMeasure)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidLaw("empty mixture".into()))?;
        let step = first.1.step;
        let mut points = Vec::new();
        for (w, m) in parts {
            check_step(step, m.step)?;
            points.extend(m.iter().map(|(i, q)| (i, w * q)));
        }
        Self::new(step, &points)
    }

    /// Greatest common divisor of the support indices.
    pub fn span(&self) -> i64 {
        self.iter().fold(0i64, |g, (i, _)| gcd(g, i.abs()))
    }
}

pub(crate) fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Sub-probability mass function on `Δ·ℤ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDistribution {
    step: f64,
    offset: i64,
    masses: Vec<f64>,
}

/// Result of one killed convolution step.
#[derive(Debug, Clone)]
pub struct KilledStep {
    pub survivor: LatticeDistribution,
    /// `Σ_{x<−y} (−(y+x))·mass(x)` in real units.
    pub overshoot: f64,
    pub killed_mass: f64,
}

impl LatticeDistribution {
    pub fn delta(step: f64, at: i64) -> Self {
        Self {
            step,
            offset: at,
            masses: vec![1.0],
        }
    }

    pub fn empty(step: f64) -> Self {
        Self {
            step,
            offset: 0,
            masses: Vec::new(),
        }
    }

    pub fn from_points(step: f64, points: &[(i64, f64)]) -> Self {
        if points.is_empty() {
            return Self::empty(step);
        }
        let lo = points.iter().map(|p| p.0).min().unwrap_or(0);
        let hi = points.iter().map(|p| p.0).max().unwrap_or(0);
        let mut masses = vec![0.0; (hi - lo + 1) as usize];
        for &(i, m) in points {
            masses[(i - lo) as usize] += m;
        }
        let mut offset = lo;
        trim(&mut offset, &mut masses);
        Self {
            step,
            offset,
            masses,
        }
    }

    pub fn lattice_step(&self) -> f64 {
        self.step
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn min_index(&self) -> Option<i64> {
        (!self.masses.is_empty()).then_some(self.offset)
    }

    pub fn max_index(&self) -> Option<i64> {
        (!self.masses.is_empty()).then(|| self.offset + self.masses.len() as i64 - 1)
    }

    pub fn mass(&self, i: i64) -> f64 {
        let k = i - self.offset;
        if k < 0 || k >= self.masses.len() as i64 {
            0.0
        } else {
            self.masses[k as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(move |(k, &m)| (self.offset + k as i64, m))
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.masses.iter().copied())
    }

    /// `Σ x·mass(x)` in real units.
    pub fn first_moment(&self) -> f64 {
        self.step * compensated_sum(self.iter().map(|(i, m)| i as f64 * m))
    }

    pub fn expect<F: Fn(i64) -> f64>(&self, f: F) -> f64 {
        compensated_sum(self.iter().map(|(i, m)| m * f(i)))
    }

    pub fn map_weights<F: Fn(i64, f64) -> f64>(&self, f: F) -> Self {
        let masses = self
            .masses
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                if m == 0.0 {
                    0.0
                } else {
                    f(self.offset + k as i64, m)
                }
            })
            .collect();
        let mut out = Self {
            step: self.step,
            offset: self.offset,
            masses,
        };
        trim(&mut out.offset, &mut out.masses);
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map_weights(|_, m| m * c)
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = self
            .max_index()
            .unwrap_or(lo)
            .max(other.max_index().unwrap_or(lo));
        0.5 * compensated_sum((lo..=hi).map(|i| (self.mass(i) - other.mass(i)).abs()))
    }
}

/// Exact convolution `dist * step`.
pub fn propagate(dist: &LatticeDistribution, step: &StepMeasure) -> Result<LatticeDistribution> {
    check_step(dist.step, step.step)?;
    if dist.is_empty() {
        return Ok(dist.clone());
    }
    let mut masses = vec![0.0; dist.masses.len() + step.masses.len() - 1];
    for (a, &ma) in dist.masses.iter().enumerate() {
        if ma == 0.0 {
            continue;
        }
        for (b, &mb) in step.masses.iter().enumerate() {
            masses[a + b] += ma * mb;
        }
    }
    let mut offset = dist.offset + step.offset;
    trim(&mut offset, &mut masses);
    Ok(LatticeDistribution {
        step: dist.step,
        offset,
        masses,
    })
}

/// Convolves and removes the mass that lands strictly below `−barrier_y` (lattice units).
pub fn killed_propagate(
    dist: &LatticeDistribution,
    step: &StepMeasure,
    barrier_y: i64,
) -> Result<KilledStep> {
    let full = propagate(dist, step)?;
    let floor = -barrier_y;
    let mut overshoot = Sum::new();
    let mut killed = Sum::new();
    for (i, m) in full.iter() {
        if i >= floor {
            break;
        }
        killed.add(m);
        overshoot.add(-((barrier_y + i) as f64) * m);
    }
    let survivor = if full.offset >= floor {
        full
    } else {
        let cut = ((floor - full.offset) as usize).min(full.masses.len());
        let mut masses = full.masses[cut..].to_vec();
        let mut offset = floor;
        trim(&mut offset, &mut masses);
        LatticeDistribution {
            step: full.step,
            offset,
            masses,
        }
    };
    Ok(KilledStep {
        survivor,
        overshoot: overshoot.value() * dist.step,
        killed_mass: killed.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn delta_times_fair_step() {
        let s = StepMeasure::fair_pm1();
        let d1 = propagate(&LatticeDistribution::delta(1.0, 0), &s).unwrap();
        assert_eq!(d1.mass(-1), 0.5);
        assert_eq!(d1.mass(1), 0.5);
        let d2 = propagate(&d1, &s).unwrap();
        assert_eq!(d2.mass(-2), 0.25);
        assert_eq!(d2.mass(0), 0.5);
        assert_eq!(d2.mass(2), 0.25);
    }

    #[test]
    fn identity_step_leaves_distribution() {
        let id = StepMeasure::new(1.0, &[(0, 1.0)]).unwrap();
        let d = LatticeDistribution::from_points(1.0, &[(-3, 0.2), (4, 0.5)]);
        assert_eq!(propagate(&d, &id).unwrap(), d);
    }

    #[test]
    fn killed_step_examples() {
        let s = StepMeasure::fair_pm1();
        let k = killed_propagate(&LatticeDistribution::delta(1.0, 0), &s, 0).unwrap();
        assert_eq!(k.survivor.mass(1), 0.5);
        assert_eq!(k.survivor.total(), 0.5);
        assert_abs_diff_eq!(k.overshoot, 0.5);
        assert_abs_diff_eq!(k.killed_mass, 0.5);

        let k = killed_propagate(&LatticeDistribution::delta(1.0, 0), &s, 5).unwrap();
        assert_eq!(k.killed_mass, 0.0);

        let step = StepMeasure::new(0.5, &[(-2, 0.25), (1, 0.75)]).unwrap();
        let y = 3;
        let k = killed_propagate(&LatticeDistribution::delta(0.5, -y), &step, y).unwrap();
        assert_abs_diff_eq!(k.overshoot, 2.0 * 0.5 * 0.25, epsilon = 1e-15);
    }

    #[test]
    fn mismatched_lattices_rejected() {
        let s = StepMeasure::new(0.5, &[(0, 1.0)]).unwrap();
        assert!(matches!(
            propagate(&LatticeDistribution::delta(1.0, 0), &s),
            Err(Error::LatticeMismatch(..))
        ));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
