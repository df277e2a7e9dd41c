//! Prospective minima of the conditioned walk and the excursion decomposition at them.
//!
//! The excursion sampler is exact: after drawing `ζ_0, …, ζ_L` it draws the
//! future infimum `inf_{n>L} ζ_n` (capped at `ζ_L`) from
//! `P(inf ≥ z) = U(θ^Lξ, ζ_L − z)/U(θ^Lξ, ζ_L)`, which decides `ν ≤ L` without
//! truncation bias.

use alloc::vec::Vec;

use libm::fabs;

use crate::conditioned::{kernel_row, sample_conditioned_path};
use crate::harmonic::Harmonic;
use crate::lattice::{LatticeDistribution, StepMeasure, Sum};
use crate::rng::RngStream;
use crate::{Error, Result};

/// First `m ≥ 1` with `ζ_{m+k} ≥ ζ_m` for every observed `k`, and whether that choice is unconfirmed.
///
/// The candidate is confirmed when at least `window` values follow it and the
/// path rises at least `min_rise` above it within them.
pub fn prospective_minimum(path: &[i64], window: usize, min_rise: i64) -> (Option<usize>, bool) {
    if path.len() < 2 {
        return (None, true);
    }
    // suffix_min[m] = min(path[m..])
    let mut suffix_min = path.to_vec();
    for i in (0..path.len() - 1).rev() {
        suffix_min[i] = suffix_min[i].min(suffix_min[i + 1]);
    }
    let nu = (1..path.len())
        .find(|&m| suffix_min[m] >= path[m])
        .expect("the last index qualifies");
    let after = &path[nu + 1..];
    let rise = after
        .iter()
        .map(|&v| v - path[nu])
        .max()
        .unwrap_or(i64::MIN);
    let censored = after.len() < window || rise < min_rise;
    (Some(nu), censored)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionRecord {
    pub nu: usize,
    /// `ζ_0, …, ζ_ν`.
    pub excursion: Vec<i64>,
    /// `ζ^ν_1, …, ζ^ν_f` with `ζ^ν_k = ζ_{ν+k} − ζ_ν`.
    pub post: Vec<i64>,
    /// `U(ξ, 0)`, numerator of the importance weight `U(ξ,0)/U(0)`.
    pub u0: f64,
}

impl ExcursionRecord {
    pub fn height(&self) -> i64 {
        self.excursion[self.nu]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Excursion {
    Complete(ExcursionRecord),
    /// `ν > horizon − features`.
    Censored,
}

/// Draws `min(inf_{n>L} ζ_n, ζ_L)` given `ζ_L = x` at time `L`.
fn sample_future_infimum(h: &Harmonic, l: usize, x: i64, rng: &mut RngStream) -> Result<i64> {
    let ux = h.u(l, x)?;
    let u = rng.uniform();
    // P(I ≥ z) = U(x − z)/U(x) is non-increasing in z; find the largest z with P(I ≥ z) > u.
    let mut z = x;
    while z > 0 && h.u(l, x - z)? / ux <= u {
        z -= 1;
    }
    Ok(z)
}

/// One excursion of `ζ` (β = 0) up to its first prospective minimum, with `features` post-ν increments.
pub fn sample_excursion(
    h: &Harmonic,
    horizon: usize,
    features: usize,
    rng: &mut RngStream,
) -> Result<Excursion> {
    let path = sample_conditioned_path(h, 0, 0, horizon, rng)?;
    let inf = sample_future_infimum(h, horizon, path[horizon], rng)?;
    let mut nu = None;
    let mut run = inf;
    // run = min(ζ_{m+1..L}, inf) scanning backwards; record the smallest qualifying m.
    for m in (1..=horizon).rev() {
        if run >= path[m] {
            nu = Some(m);
        }
        run = run.min(path[m]);
    }
    match nu {
        Some(nu) if nu + features <= horizon => {
            let base = path[nu];
            Ok(Excursion::Complete(ExcursionRecord {
                nu,
                excursion: path[..=nu].to_vec(),
                post: path[nu + 1..=nu + features]
                    .iter()
                    .map(|v| v - base)
                    .collect(),
                u0: h.u(0, 0)?,
            }))
        }
        _ => Ok(Excursion::Censored),
    }
}

/// `ζ_0, …, ζ_n` rebuilt from successive excursions, each in the environment shifted to its start.
pub fn reconstruct_path(
    h: &Harmonic,
    n: usize,
    horizon: usize,
    rng: &mut RngStream,
) -> Result<Vec<i64>> {
    let mut out = Vec::with_capacity(n + horizon + 1);
    out.push(0);
    let mut t = 0;
    while t < n {
        let local = h.shifted(t);
        let rec = loop {
            match sample_excursion(&local, horizon, 0, rng)? {
                Excursion::Complete(r) => break r,
                Excursion::Censored => continue,
            }
        };
        let base = *out.last().expect("non-empty");
        out.extend(rec.excursion[1..].iter().map(|v| v + base));
        t += rec.nu;
    }
    out.truncate(n + 1);
    Ok(out)
}

/// Both sides of `U(ξ,0) P_ξ(ν = k, ζ_ν = x) = U(θᵏξ,0) P_ξ(S_k < S_j ∀ 1≤j<k, S_k = x)` for `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TanakaIdentity {
    pub k: usize,
    /// `(x, lhs, rhs)` over every reachable `x ≥ 0`.
    pub rows: Vec<(i64, f64, f64)>,
}

impl TanakaIdentity {
    pub fn max_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| fabs(r.1 - r.2))
            .fold(0.0, f64::max)
    }
}

/// Pairs `(position, min of positions at times 1..t)` with their probability.
type MinState = Vec<((i64, i64), f64)>;

fn merge(states: &mut MinState) {
    states.sort_by_key(|s| s.0);
    let mut out: MinState = Vec::with_capacity(states.len());
    for &(key, p) in states.iter() {
        match out.last_mut() {
            Some(last) if last.0 == key => last.1 += p,
            _ => out.push((key, p)),
        }
    }
    *states = out;
}

pub fn tanaka_identity_check(h: &Harmonic, k: usize) -> Result<TanakaIdentity> {
    if k == 0 || k > 8 {
        return Err(Error::EnumerationTooLarge {
            size: k as u128,
            cap: 8,
        });
    }
    // Conditioned chain, tracking min(ζ_1, …, ζ_{t}).
    let mut zeta: MinState = Vec::new();
    for (y, p) in kernel_row(h, 0, 0, 0)?.targets {
        zeta.push(((y, i64::MAX), p));
    }
    for t in 1..k {
        let mut next = Vec::new();
        for &((x, lo), p) in &zeta {
            let lo = lo.min(x);
            for (y, q) in kernel_row(h, t, x, 0)?.targets {
                next.push(((y, lo), p * q));
            }
        }
        merge(&mut next);
        zeta = next;
    }
    // Raw walk from 0, same bookkeeping.
    let walk = h.walk();
    let mut raw: MinState = walk
        .step(1)
        .iter()
        .map(|(y, p)| ((y, i64::MAX), p))
        .collect();
    for t in 1..k {
        let mut next = Vec::new();
        for &((x, lo), p) in &raw {
            let lo = lo.min(x);
            for (d, q) in walk.step(t + 1).iter() {
                next.push(((x + d, lo), p * q));
            }
        }
        merge(&mut next);
        raw = next;
    }
    let u0 = h.u(0, 0)?;
    let uk = h.u(k, 0)?;
    let mut lhs: Vec<(i64, f64)> = Vec::new();
    for &((x, lo), p) in &zeta {
        if x < lo {
            let hk = h.u(k, 0)? / h.u(k, x)?;
            lhs.push((x, u0 * p * hk));
        }
    }
    let mut rhs: Vec<(i64, f64)> = Vec::new();
    for &((x, lo), p) in &raw {
        if x >= 0 && x < lo {
            rhs.push((x, uk * p));
        }
    }
    let l = LatticeDistribution::from_points(h.lattice_step(), &lhs);
    let r = LatticeDistribution::from_points(h.lattice_step(), &rhs);
    let top = l.max_index().unwrap_or(0).max(r.max_index().unwrap_or(0));
    let rows = (0..=top)
        .map(|x| (x, l.mass(x), r.mass(x)))
        .filter(|r| r.1 != 0.0 || r.2 != 0.0)
        .collect();
    Ok(TanakaIdentity { k, rows })
}

/// Joint law of `(Γ_1, S_{Γ_1})` under a homogeneous step: `(k, x, probability)` for `k ≤ horizon`,
/// and `P(Γ_1 > horizon)`.
pub fn first_ascent_law(
    step: &StepMeasure,
    horizon: usize,
) -> Result<(Vec<(usize, i64, f64)>, f64)> {
    let mut d = LatticeDistribution::delta(step.lattice_step(), 0);
    let mut out = Vec::new();
    let mut alive = 1.0;
    for k in 1..=horizon {
        let full = crate::lattice::propagate(&d, step)?;
        let mut keep = Vec::new();
        for (x, p) in full.iter() {
            if x >= 0 {
                out.push((k, x, p));
            } else {
                keep.push((x, p));
            }
        }
        d = LatticeDistribution::from_points(step.lattice_step(), &keep);
        alive = d.total();
    }
    Ok((out, alive))
}

/// Marginal law of `S_{Γ_1}` restricted to `Γ_1 ≤ horizon`, plus `P(Γ_1 > horizon)`.
pub fn first_ascent_height_law(
    step: &StepMeasure,
    horizon: usize,
) -> Result<(Vec<(i64, f64)>, f64)> {
    let (joint, tail) = first_ascent_law(step, horizon)?;
    let mut heights: Vec<(i64, f64)> = Vec::new();
    for (_, x, p) in joint {
        match heights.iter_mut().find(|h| h.0 == x) {
            Some(h) => h.1 += p,
            None => heights.push((x, p)),
        }
    }
    heights.sort_by_key(|h| h.0);
    Ok((heights, tail))
}

/// Sum of `U(ξ,β) F(ζ_n^{(β)})` over `n = 1..=N`, recorded at each of the increasing `checkpoints`.
pub fn divergence_partial_sums(
    h: &Harmonic,
    beta: i64,
    f: &dyn Fn(f64) -> f64,
    checkpoints: &[usize],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let n = checkpoints.last().copied().unwrap_or(0);
    let path = sample_conditioned_path(h, 0, beta, n, rng)?;
    let base = h.u(0, beta)?;
    let d = h.lattice_step();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut s = Sum::new();
    let mut next = 0;
    for (t, &z) in path.iter().enumerate().skip(1) {
        s.add(base * f(z as f64 * d));
        while next < checkpoints.len() && checkpoints[next] == t {
            out.push(s.value());
            next += 1;
        }
    }
    while out.len() < checkpoints.len() {
        out.push(s.value());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioned::conditioned_marginal;
    use crate::env::{EnvironmentLaw, EnvironmentPath, PointProcessLaw};
    use crate::walk::WalkEnv;
    use alloc::sync::Arc;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn fair() -> Harmonic {
        Harmonic::new(WalkEnv::homogeneous(StepMeasure::fair_pm1()), 1e-9, 10_000)
    }

    fn mixed(seed: u64) -> Harmonic {
        let a = PointProcessLaw::pm1_recipe();
        let b =
            PointProcessLaw::boundary_recipe(1.0, &[(-1, 2.0 / 3.0), (2, 1.0 / 3.0)], 0).unwrap();
        let law = Arc::new(EnvironmentLaw::new(vec![(0.5, a), (0.5, b)]).unwrap());
        Harmonic::new(
            WalkEnv::from_path(&EnvironmentPath::realize(law, seed, 64)).unwrap(),
            1e-9,
            10_000,
        )
    }

    #[test]
    fn prospective_minimum_examples() {
        assert_eq!(prospective_minimum(&[0, 1, 2, 3], 1, 1), (Some(1), false));
        assert_eq!(prospective_minimum(&[0, 1], 1, 1), (Some(1), true));
        assert_eq!(prospective_minimum(&[0], 1, 1), (None, true));
        assert_eq!(
            prospective_minimum(&[0, 2, 1, 3, 4, 5], 64, 1),
            (Some(2), true)
        );
        assert_eq!(
            prospective_minimum(&[0, 2, 1, 3, 4, 5], 3, 1),
            (Some(2), false)
        );
        // A late dip rejects the early candidates.
        assert_eq!(prospective_minimum(&[0, 3, 4, 5, 2, 6], 1, 1).0, Some(4));
    }

    #[test]
    fn fair_excursion_first_step() {
        // From 0 the fair conditioned walk moves to 1; ν = 1 iff it never returns below 1.
        let h = fair();
        let mut rng = RngStream::new(4, 0);
        let mut ones = 0;
        let mut done = 0;
        for _ in 0..4000 {
            if let Excursion::Complete(r) = sample_excursion(&h, 200, 0, &mut rng).unwrap() {
                done += 1;
                assert!(r.excursion[1..r.nu].iter().all(|&v| v > r.height()));
                if r.nu == 1 {
                    ones += 1;
                }
            }
        }
        // P(ν = 1) = P(ζ stays ≥ 1 from 1) = H(1, 1) = U(0)/U(1) = 1/2.
        let p = ones as f64 / done as f64;
        assert!((p - 0.5).abs() < 5.0 * (0.25 / done as f64).sqrt(), "{p}");
    }

    #[test]
    fn identity_dual_route() {
        for h in [fair(), mixed(1), mixed(2)] {
            for k in 1..=4 {
                let t = tanaka_identity_check(&h, k).unwrap();
                assert!(t.max_residual() <= 1e-12, "k={k}: {:?}", t.rows);
                assert!(k > 2 || !t.rows.is_empty());
            }
        }
        assert!(tanaka_identity_check(&fair(), 9).is_err());
    }

    #[test]
    fn identity_k2_fair_by_hand() {
        // S_1 = 1, S_2 = 0 is the only path with S_2 < S_1 and S_2 ≥ 0: probability 1/4, U(0) = 1.
        let t = tanaka_identity_check(&fair(), 2).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].0, 0);
        assert_abs_diff_eq!(t.rows[0].2, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn fair_first_ascent() {
        let (h, tail) = first_ascent_height_law(&StepMeasure::fair_pm1(), 2000).unwrap();
        let p0 = h.iter().find(|x| x.0 == 0).unwrap().1;
        let p1 = h.iter().find(|x| x.0 == 1).unwrap().1;
        assert_abs_diff_eq!(p0 + tail / 2.0, 0.5, epsilon = tail);
        assert_abs_diff_eq!(p0 + p1 + tail, 1.0, epsilon = 1e-12);
        // P(Γ_1 = 1, S = 1) = 1/2; P(Γ_1 = 2, S = 0) = 1/4.
        let (j, _) = first_ascent_law(&StepMeasure::fair_pm1(), 2).unwrap();
        assert!(j.contains(&(1, 1, 0.5)));
        assert!(j.contains(&(2, 0, 0.25)));
    }

    #[test]
    fn excursion_height_matches_first_ascent() {
        let h = fair();
        let horizon = 100;
        let (law, tail) = first_ascent_height_law(&StepMeasure::fair_pm1(), horizon).unwrap();
        let mut rng = RngStream::new(8, 0);
        let n = 20_000;
        let mut zero = 0usize;
        let mut censored = 0usize;
        for _ in 0..n {
            match sample_excursion(&h, horizon, 0, &mut rng).unwrap() {
                Excursion::Complete(r) if r.height() == 0 => zero += 1,
                Excursion::Complete(_) => {}
                Excursion::Censored => censored += 1,
            }
        }
        let p0 = law.iter().find(|x| x.0 == 0).unwrap().1;
        for (count, p) in [(zero, p0), (censored, tail)] {
            let z = (count as f64 - n as f64 * p) / (n as f64 * p * (1.0 - p)).sqrt();
            assert!(z.abs() < 5.0, "z = {z}");
        }
    }

    #[test]
    fn reconstruction_reproduces_marginal_mean() {
        let h = mixed(3);
        let n = 30;
        let exact = conditioned_marginal(&h, 0, n, 0, 10_000).unwrap();
        let mean = exact.first_moment();
        let var = exact.expect(|x| (x as f64 - mean).powi(2));
        let mut rng = RngStream::new(9, 0);
        let trials = 3000;
        let s: f64 = (0..trials)
            .map(|_| reconstruct_path(&h, n, 64, &mut rng).unwrap()[n] as f64)
            .sum();
        let z = (s / trials as f64 - mean) / (var / trials as f64).sqrt();
        assert!(z.abs() < 5.0, "z = {z}");
    }

    #[test]
    fn divergence_sums_vanish_for_zero() {
        let mut rng = RngStream::new(1, 0);
        let s = divergence_partial_sums(&fair(), 0, &|_| 0.0, &[10, 100], &mut rng).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
        let s = divergence_partial_sums(&fair(), 0, &|_| 1.0, &[10, 100], &mut rng).unwrap();
        assert_eq!(s, vec![10.0, 100.0]);
    }
}
