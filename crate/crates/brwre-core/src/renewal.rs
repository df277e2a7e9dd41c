//! Ladder structure and renewal functions of the annealed walk.
//!
//! Exact ladder-height laws come from the Wiener–Hopf factorization
//! `s^M (1 − φ(s)) = (1 − χ⁺(s)) · s^M (1 − χ⁻(s))` of the step generating
//! function, where `χ⁺` is the weak ascending and `χ⁻` the strict descending
//! ladder-height generating function. The `M` roots of the left side in the
//! closed unit disk are the roots of the (monic) descending factor.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, sqrt};
use num_complex::Complex64;

use crate::env::EnvironmentLaw;
use crate::harmonic::Harmonic;
use crate::lattice::{killed_propagate, LatticeDistribution, StepMeasure, Sum};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Ladder epochs and heights of a finite path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LadderAnalysis {
    /// Strict descending epochs `γ_0 = 0 < γ_1 < …`.
    pub descending_epochs: Vec<usize>,
    pub descending_heights: Vec<i64>,
    /// Weak ascending epochs `Γ_0 = 0 < Γ_1 < …`.
    pub ascending_epochs: Vec<usize>,
    pub ascending_heights: Vec<i64>,
    /// The path continues past the last descending epoch without a new one.
    pub descending_censored: bool,
    pub ascending_censored: bool,
}

pub fn ladder_decompose(path: &[i64]) -> LadderAnalysis {
    let mut a = LadderAnalysis {
        descending_epochs: Vec::new(),
        descending_heights: Vec::new(),
        ascending_epochs: Vec::new(),
        ascending_heights: Vec::new(),
        descending_censored: false,
        ascending_censored: false,
    };
    let Some(&start) = path.first() else { return a };
    a.descending_epochs.push(0);
    a.descending_heights.push(start);
    a.ascending_epochs.push(0);
    a.ascending_heights.push(start);
    let (mut lo, mut hi) = (start, start);
    for (n, &s) in path.iter().enumerate().skip(1) {
        if s < lo {
            lo = s;
            a.descending_epochs.push(n);
            a.descending_heights.push(s);
        }
        if s >= hi {
            hi = s;
            a.ascending_epochs.push(n);
            a.ascending_heights.push(s);
        }
    }
    let last = path.len() - 1;
    a.descending_censored = *a.descending_epochs.last().unwrap_or(&0) < last;
    a.ascending_censored = *a.ascending_epochs.last().unwrap_or(&0) < last;
    a
}

/// Laws of the first strict descending and weak ascending ladder heights.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderLaws {
    /// Common divisor of the step support in lattice units; heights are multiples of it.
    pub span: i64,
    /// `descending[i] = P(S_{γ_1} = −i·span)`, index 0 unused (zero).
    pub descending: Vec<f64>,
    /// `ascending[j] = P(S_{Γ_1} = j·span)`.
    pub ascending: Vec<f64>,
}

impl LadderLaws {
    /// `P(S_{γ_1} = −x)`, `x` in lattice units.
    pub fn descending_mass(&self, x: i64) -> f64 {
        if x <= 0 || x % self.span != 0 {
            return 0.0;
        }
        self.descending
            .get((x / self.span) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// `P(S_{Γ_1} = x)`, `x` in lattice units.
    pub fn ascending_mass(&self, x: i64) -> f64 {
        if x < 0 || x % self.span != 0 {
            return 0.0;
        }
        self.ascending
            .get((x / self.span) as usize)
            .copied()
            .unwrap_or(0.0)
    }
}

/// Exact ladder-height laws of a centred lattice walk.
pub fn ladder_laws(step: &StepMeasure) -> Result<LadderLaws> {
    let span = step.span();
    if span == 0 {
        return Err(Error::Contract("walk never moves".into()));
    }
    let lo = step.min_index() / span;
    let hi = step.max_index() / span;
    if lo >= 0 || hi <= 0 {
        return Err(Error::Contract(
            "ladder laws need steps in both directions".into(),
        ));
    }
    let m = (-lo) as usize;
    let k = hi as usize;
    // P(s) = s^M − Σ_j μ_j s^{j+M}
    let mut p = vec![0.0; m + k + 1];
    p[m] = 1.0;
    for (j, mass) in step.iter() {
        p[(j / span + m as i64) as usize] -= mass;
    }
    let q = deflate_double_root_at_one(&p)?;
    let roots = polynomial_roots(&q)?;
    let mut inside: Vec<Complex64> = Vec::new();
    for r in &roots {
        let a = r.norm();
        if fabs(a - 1.0) < 1e-9 {
            return Err(Error::Contract(
                "ladder factorization: root on the unit circle".into(),
            ));
        }
        if a < 1.0 {
            inside.push(*r);
        }
    }
    if inside.len() + 1 != m {
        return Err(Error::Contract(alloc::format!(
            "ladder factorization: {} roots inside the unit disk, expected {}",
            inside.len() + 1,
            m
        )));
    }
    // D(s) = (s − 1) Π (s − r_i), monic of degree M.
    let mut d = vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
    for r in &inside {
        let mut next = vec![Complex64::new(0.0, 0.0); d.len() + 1];
        for (i, c) in d.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        d = next;
    }
    let d: Vec<f64> = d
        .iter()
        .map(|c| {
            if fabs(c.im) > 1e-9 {
                Err(Error::Contract(
                    "ladder factorization: complex descending factor".into(),
                ))
            } else {
                Ok(c.re)
            }
        })
        .collect::<Result<_>>()?;
    let mut descending = vec![0.0; m + 1];
    for i in 1..=m {
        descending[i] = clamp_prob(-d[m - i])?;
    }
    let (a, rem) = poly_div(&p, &d);
    if rem.iter().any(|r| fabs(*r) > 1e-9) {
        return Err(Error::Contract(
            "ladder factorization: inexact division".into(),
        ));
    }
    let mut ascending = vec![0.0; k + 1];
    ascending[0] = clamp_prob(1.0 - a[0])?;
    for j in 1..=k {
        ascending[j] = clamp_prob(-a.get(j).copied().unwrap_or(0.0))?;
    }
    for (name, law) in [("descending", &descending), ("ascending", &ascending)] {
        let total: f64 = law.iter().sum();
        if fabs(total - 1.0) > 1e-9 {
            return Err(Error::Contract(alloc::format!(
                "{name} ladder law has mass {total}"
            )));
        }
    }
    Ok(LadderLaws {
        span,
        descending,
        ascending,
    })
}

fn clamp_prob(x: f64) -> Result<f64> {
    if !(-1e-10..=1.0 + 1e-10).contains(&x) {
        return Err(Error::Contract(alloc::format!(
            "ladder probability {x} out of range"
        )));
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Divides by `(s − 1)²`; fails unless the step law has mass one and mean zero.
fn deflate_double_root_at_one(p: &[f64]) -> Result<Vec<f64>> {
    let mut q = p.to_vec();
    for _ in 0..2 {
        let (quot, rem) = poly_div(&q, &[-1.0, 1.0]);
        let scale = q.iter().map(|c| fabs(*c)).fold(0.0, f64::max);
        if fabs(rem[0]) > 1e-10 * scale.max(1.0) {
            return Err(Error::Contract(
                "step law is not a centred probability measure".into(),
            ));
        }
        q = quot;
    }
    Ok(q)
}

/// Polynomial long division, coefficients in increasing degree.
fn poly_div(num: &[f64], den: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dn = den.len() - 1;
    let lead = den[dn];
    let mut rem = num.to_vec();
    if num.len() <= dn {
        return (vec![0.0], rem);
    }
    let mut quot = vec![0.0; num.len() - dn];
    for i in (0..quot.len()).rev() {
        let c = rem[i + dn] / lead;
        quot[i] = c;
        for (j, &dc) in den.iter().enumerate() {
            rem[i + j] -= c * dc;
        }
    }
    rem.truncate(dn.max(1));
    (quot, rem)
}

fn horner(p: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut v = Complex64::new(0.0, 0.0);
    let mut dv = Complex64::new(0.0, 0.0);
    for &c in p.iter().rev() {
        dv = dv * z + v;
        v = v * z + c;
    }
    (v, dv)
}

/// All complex roots by Aberth–Ehrlich iteration followed by Newton polishing.
fn polynomial_roots(p: &[f64]) -> Result<Vec<Complex64>> {
    let mut p = p.to_vec();
    while p.len() > 1 && p[p.len() - 1] == 0.0 {
        p.pop();
    }
    let deg = p.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = p[deg];
    let radius = 1.0 + p[..deg].iter().map(|c| fabs(c / lead)).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| {
            Complex64::from_polar(
                0.5 * radius,
                2.0 * core::f64::consts::PI * k as f64 / deg as f64 + 0.4,
            )
        })
        .collect();
    let mut converged = false;
    for _ in 0..2000 {
        let mut worst: f64 = 0.0;
        for k in 0..deg {
            let (v, dv) = horner(&p, z[k]);
            if v.norm() == 0.0 {
                continue;
            }
            let ratio = v / dv;
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..deg {
                if j != k {
                    s += (z[k] - z[j]).inv();
                }
            }
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            z[k] -= w;
            worst = worst.max(w.norm() / z[k].norm().max(1.0));
        }
        if worst < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Contract("root finder did not converge".into()));
    }
    for r in &mut z {
        for _ in 0..3 {
            let (v, dv) = horner(&p, *r);
            if dv.norm() == 0.0 {
                break;
            }
            *r -= v / dv;
        }
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenewalMethod {
    Exact,
    /// Simulated ladder chains; each chain may take at most `step_budget` walk steps.
    MonteCarlo {
        chains: usize,
        seed: u64,
        step_budget: u64,
    },
}

/// Renewal functions and measures on lattice points `0..=x_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalTable {
    pub lattice_step: f64,
    pub x_max: i64,
    /// `u⁻(x) = Σ_k P(S_{γ_k} = −x)`, `u⁻(0) = 1`.
    pub u_minus: Vec<f64>,
    /// `u⁺(x) = Σ_{k≥1} P(S_{Γ_k} = x)`: the mass of `𝓡` at `x`.
    pub u_plus: Vec<f64>,
    /// Standard errors of `R⁻` and `R` for the Monte Carlo method.
    pub std_err: Option<(Vec<f64>, Vec<f64>)>,
    r_minus: Vec<f64>,
    r: Vec<f64>,
}

impl RenewalTable {
    fn from_masses(lattice_step: f64, x_max: i64, u_minus: Vec<f64>, u_plus: Vec<f64>) -> Self {
        let mut r_minus = Vec::with_capacity(u_minus.len());
        let mut s = Sum::new();
        for &u in &u_minus {
            s.add(u);
            r_minus.push(s.value());
        }
        // R(x) = Σ_{j<x} u⁺(j), x ≥ 1; R(0) = 1. Index x_max + 1 is stored too.
        let mut r = vec![1.0];
        let mut s = Sum::new();
        for &u in &u_plus {
            s.add(u);
            r.push(s.value());
        }
        Self {
            lattice_step,
            x_max,
            u_minus,
            u_plus,
            std_err: None,
            r_minus,
            r,
        }
    }

    fn check(&self, x: i64) -> Result<usize> {
        if x < 0 {
            return Err(Error::Contract(
                "renewal functions are defined for x >= 0".into(),
            ));
        }
        if x > self.x_max {
            return Err(Error::GridTooSmall {
                needed: x,
                available: self.x_max,
            });
        }
        Ok(x as usize)
    }

    /// `R⁻(x) = Σ_k P(S_{γ_k} ≥ −x)`.
    pub fn r_minus(&self, x: i64) -> Result<f64> {
        Ok(self.r_minus[self.check(x)?])
    }

    /// `R(x) = Σ_{k≥1} P(S_{Γ_k} < x)` for `x ≥ 1`, `R(0) = 1`; valid up to `x_max + 1`.
    pub fn r(&self, x: i64) -> Result<f64> {
        if x == self.x_max + 1 {
            return Ok(self.r[x as usize]);
        }
        Ok(self.r[self.check(x)?])
    }

    /// `R^{(β)}(x) = R(x + β)`.
    pub fn r_beta(&self, x: i64, beta: i64) -> Result<f64> {
        self.r(x + beta)
    }

    /// Mass of `𝓡^{(β)}` at `x ≥ −β`: `u⁺(x + β)`.
    pub fn measure_beta(&self, x: i64, beta: i64) -> Result<f64> {
        Ok(self.u_plus[self.check(x + beta)?])
    }

    /// `Σ_{n≥1} P(S_n = x, min_{k≤n} S_k ≥ −β)` for `x ≥ −β`.
    ///
    /// Splitting a path at the first time it reaches its overall minimum `−y`
    /// gives `Σ_{y=0}^{β} u⁻(y) (δ_{x+y,0} + u⁺(x+y)) − δ_{x,0}`; for `β = 0`
    /// this is `u⁺(x)`.
    pub fn occupation(&self, x: i64, beta: i64) -> Result<f64> {
        if x < -beta {
            return Ok(0.0);
        }
        self.check(x + beta)?;
        self.check(beta)?;
        let mut s = Sum::new();
        for y in 0..=beta {
            if x + y < 0 {
                continue;
            }
            let inner = if x + y == 0 { 1.0 } else { 0.0 } + self.u_plus[(x + y) as usize];
            s.add(self.u_minus[y as usize] * inner);
        }
        if x == 0 {
            s.add(-1.0);
        }
        Ok(s.value())
    }
}

pub fn renewal_functions(
    env: &EnvironmentLaw,
    x_max: i64,
    method: RenewalMethod,
) -> Result<RenewalTable> {
    renewal_from_step(&env.annealed_step()?, x_max, method)
}

pub fn renewal_from_step(
    step: &StepMeasure,
    x_max: i64,
    method: RenewalMethod,
) -> Result<RenewalTable> {
    assert!(x_max >= 0);
    match method {
        RenewalMethod::Exact => exact_renewal(step, x_max),
        RenewalMethod::MonteCarlo {
            chains,
            seed,
            step_budget,
        } => mc_renewal(step, x_max, chains, seed, step_budget),
    }
}

fn exact_renewal(step: &StepMeasure, x_max: i64) -> Result<RenewalTable> {
    let laws = ladder_laws(step)?;
    let n = x_max as usize + 1;
    let g = laws.span;
    let top = n / g as usize + 1;
    // Renewal sequences in reduced units.
    let mut um = vec![0.0; top];
    um[0] = 1.0;
    for j in 1..top {
        let mut s = Sum::new();
        for (i, &h) in laws.descending.iter().enumerate().skip(1) {
            if i <= j {
                s.add(h * um[j - i]);
            }
        }
        um[j] = s.value();
    }
    // v = δ_0 + a * v, with a the weak ascending law (atom a_0 at zero).
    let stay = 1.0 - laws.ascending[0];
    let mut v = vec![0.0; top];
    for j in 0..top {
        let mut s = Sum::new();
        if j == 0 {
            s.add(1.0);
        }
        for (i, &a) in laws.ascending.iter().enumerate().skip(1) {
            if i <= j {
                s.add(a * v[j - i]);
            }
        }
        v[j] = s.value() / stay;
    }
    let mut u_minus = vec![0.0; n];
    let mut u_plus = vec![0.0; n];
    for x in 0..n {
        if x as i64 % g == 0 {
            let j = x / g as usize;
            u_minus[x] = um[j];
            u_plus[x] = v[j] - if j == 0 { 1.0 } else { 0.0 };
        }
    }
    Ok(RenewalTable::from_masses(
        step.lattice_step(),
        x_max,
        u_minus,
        u_plus,
    ))
}

fn mc_renewal(
    step: &StepMeasure,
    x_max: i64,
    chains: usize,
    seed: u64,
    budget: u64,
) -> Result<RenewalTable> {
    if chains < 2 {
        return Err(Error::TooFewSamples {
            got: chains,
            needed: 2,
        });
    }
    let atoms: Vec<(i64, f64)> = step.iter().collect();
    let weights: Vec<f64> = atoms.iter().map(|a| a.1).collect();
    let n = x_max as usize + 1;
    let mut sum_m = vec![0.0; n];
    let mut sq_m = vec![0.0; n];
    let mut sum_p = vec![0.0; n];
    let mut sq_p = vec![0.0; n];
    let mut cm = vec![0.0; n];
    let mut cp = vec![0.0; n];
    for c in 0..chains {
        let mut rng = RngStream::substream(seed, crate::rng::tag::TRIAL, c as u64);
        cm.iter_mut().for_each(|v| *v = 0.0);
        cp.iter_mut().for_each(|v| *v = 0.0);
        // Descending records: count each new strict minimum at depth ≤ x_max.
        cm[0] = 1.0;
        let (mut s, mut lo, mut steps) = (0i64, 0i64, 0u64);
        while lo >= -x_max {
            if steps == budget {
                return Err(Error::BudgetExceeded(alloc::format!(
                    "descending ladder chain {c} exceeded {budget} steps"
                )));
            }
            s += atoms[rng.categorical(&weights)].0;
            steps += 1;
            if s < lo {
                lo = s;
                if lo >= -x_max {
                    cm[(-lo) as usize] += 1.0;
                }
            }
        }
        let (mut s, mut hi, mut steps) = (0i64, 0i64, 0u64);
        while hi <= x_max {
            if steps == budget {
                return Err(Error::BudgetExceeded(alloc::format!(
                    "ascending ladder chain {c} exceeded {budget} steps"
                )));
            }
            s += atoms[rng.categorical(&weights)].0;
            steps += 1;
            if s >= hi {
                hi = s;
                if hi <= x_max {
                    cp[hi as usize] += 1.0;
                }
            }
        }
        // Accumulate the cumulative functions so their errors are per value.
        let (mut am, mut ap) = (0.0, 1.0);
        for x in 0..n {
            am += cm[x];
            sum_m[x] += am;
            sq_m[x] += am * am;
            // R(x+1) = Σ_{j ≤ x} u⁺(j)
            ap = if x == 0 { cp[0] } else { ap + cp[x] };
            sum_p[x] += ap;
            sq_p[x] += ap * ap;
        }
    }
    let k = chains as f64;
    let se = |s: f64, q: f64| sqrt(((q - s * s / k) / (k - 1.0)).max(0.0) / k);
    let r_minus: Vec<f64> = sum_m.iter().map(|s| s / k).collect();
    let r_next: Vec<f64> = sum_p.iter().map(|s| s / k).collect();
    let se_m: Vec<f64> = (0..n).map(|x| se(sum_m[x], sq_m[x])).collect();
    let se_p: Vec<f64> = (0..n).map(|x| se(sum_p[x], sq_p[x])).collect();
    let mut u_minus = vec![0.0; n];
    let mut u_plus = vec![0.0; n];
    for x in 0..n {
        u_minus[x] = r_minus[x] - if x == 0 { 0.0 } else { r_minus[x - 1] };
        u_plus[x] = r_next[x] - if x == 0 { 0.0 } else { r_next[x - 1] };
    }
    let mut t = RenewalTable::from_masses(step.lattice_step(), x_max, u_minus, u_plus);
    // Errors for R are indexed by x; R(x) for x ≥ 1 is r_next[x − 1].
    let mut se_r = vec![0.0];
    se_r.extend_from_slice(&se_p[..n - 1]);
    t.std_err = Some((se_m, se_r));
    Ok(t)
}

/// `(R⁻_N, R_N)` on `0..=x_max`, counting only ladder epochs `≤ horizon`, by DP
/// over (position, running minimum) and (position, running maximum).
pub fn truncated_renewal_dp(
    step: &StepMeasure,
    x_max: i64,
    horizon: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x_max as usize + 1;
    let mut um = vec![0.0; n];
    let mut up = vec![0.0; n];
    um[0] = 1.0;
    let mut down: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut up_state: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    down.insert((0, 0), 1.0);
    up_state.insert((0, 0), 1.0);
    for _ in 0..horizon {
        let mut nd = BTreeMap::new();
        for (&(s, lo), &p) in &down {
            for (d, m) in step.iter() {
                let y = s + d;
                let lo2 = if y < lo {
                    if -y <= x_max {
                        um[(-y) as usize] += p * m;
                    }
                    y
                } else {
                    lo
                };
                *nd.entry((y, lo2)).or_insert(0.0) += p * m;
            }
        }
        down = nd;
        let mut nu = BTreeMap::new();
        for (&(s, hi), &p) in &up_state {
            for (d, m) in step.iter() {
                let y = s + d;
                let hi2 = if y >= hi {
                    if y <= x_max {
                        up[y as usize] += p * m;
                    }
                    y
                } else {
                    hi
                };
                *nu.entry((y, hi2)).or_insert(0.0) += p * m;
            }
        }
        up_state = nu;
    }
    Ok(cumulate(&um, &up))
}

/// Same quantity as [`truncated_renewal_dp`] by decomposing every path of length `horizon`.
pub fn truncated_renewal_enumeration(
    step: &StepMeasure,
    x_max: i64,
    horizon: usize,
    cap: u128,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let atoms: Vec<(i64, f64)> = step.iter().collect();
    let size = (atoms.len() as u128)
        .checked_pow(horizon as u32)
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::EnumerationTooLarge { size, cap });
    }
    let n = x_max as usize + 1;
    let mut um = vec![Sum::new(); n];
    let mut up = vec![Sum::new(); n];
    let mut idx = vec![0usize; horizon];
    let mut path = vec![0i64; horizon + 1];
    loop {
        let mut p = 1.0;
        for (t, &i) in idx.iter().enumerate() {
            path[t + 1] = path[t] + atoms[i].0;
            p *= atoms[i].1;
        }
        let a = ladder_decompose(&path);
        for &h in &a.descending_heights {
            if -h <= x_max {
                um[(-h) as usize].add(p);
            }
        }
        for &h in &a.ascending_heights[1..] {
            if h <= x_max {
                up[h as usize].add(p);
            }
        }
        let mut k = 0;
        loop {
            if k == horizon {
                let um: Vec<f64> = um.iter().map(Sum::value).collect();
                let up: Vec<f64> = up.iter().map(Sum::value).collect();
                return Ok(cumulate(&um, &up));
            }
            idx[k] += 1;
            if idx[k] < atoms.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// `R⁻(x) = Σ_{j≤x} u⁻(j)`; `R(0) = 1`, `R(x) = Σ_{j<x} u⁺(j)`.
fn cumulate(um: &[f64], up: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut rm = Vec::with_capacity(um.len());
    let mut s = Sum::new();
    for &u in um {
        s.add(u);
        rm.push(s.value());
    }
    let mut r = vec![1.0];
    let mut s = Sum::new();
    for &u in &up[..up.len() - 1] {
        s.add(u);
        r.push(s.value());
    }
    (rm, r)
}

/// `|E[R⁻(x + X) 1{x + X ≥ 0}] − R⁻(x)|` for each `x` in the grid.
pub fn harmonic_identity_r_minus(
    table: &RenewalTable,
    step: &StepMeasure,
    grid: &[i64],
) -> Result<Vec<f64>> {
    let reach = step.max_index().max(0);
    grid.iter()
        .map(|&x| {
            if x + reach > table.x_max {
                return Err(Error::GridTooSmall {
                    needed: x + reach,
                    available: table.x_max,
                });
            }
            let mut s = Sum::new();
            for (d, m) in step.iter() {
                if x + d >= 0 {
                    s.add(m * table.r_minus(x + d)?);
                }
            }
            Ok(fabs(s.value() - table.r_minus(x)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationCheck {
    /// `Σ_{n=1}^{N} E[f(S_n); min_{k≤n} S_k ≥ −β]`.
    pub lhs: f64,
    /// `∫ f d(occupation measure)`.
    pub rhs: f64,
    /// Estimate of the omitted terms `n > N`.
    pub bound: f64,
}

impl OccupationCheck {
    pub fn pass(&self) -> bool {
        fabs(self.lhs - self.rhs) <= self.bound + 1e-12 * (1.0 + fabs(self.rhs))
    }
}

/// Per-step terms `a_n = E[f(S_n); min_{k≤n} S_k ≥ −β]`, `n = 1..=horizon`, under a homogeneous step.
pub fn killed_occupation_terms(
    step: &StepMeasure,
    beta: i64,
    f: &[(i64, f64)],
    horizon: usize,
) -> Result<Vec<f64>> {
    let mut d = LatticeDistribution::delta(step.lattice_step(), 0);
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        d = killed_propagate(&d, step, beta)?.survivor;
        let mut s = Sum::new();
        for &(x, w) in f {
            s.add(w * d.mass(x));
        }
        out.push(s.value());
    }
    Ok(out)
}

/// Tail estimate for `Σ_{n>N} a_n` from the block `(N/2, N]`, assuming `a_n ∝ n^{−3/2}`, with a 1.5 safety factor.
pub fn tail_estimate(terms: &[f64]) -> f64 {
    let n = terms.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let block: f64 = terms[n / 2..].iter().sum();
    1.5 * block / (core::f64::consts::SQRT_2 - 1.0)
}

pub fn occupation_identity_check(
    step: &StepMeasure,
    table: &RenewalTable,
    beta: i64,
    f: &[(i64, f64)],
    horizon: usize,
) -> Result<OccupationCheck> {
    let terms = killed_occupation_terms(step, beta, f, horizon)?;
    let lhs = terms.iter().copied().fold(Sum::new(), |mut s, t| {
        s.add(t);
        s
    });
    let mut rhs = Sum::new();
    for &(x, w) in f {
        rhs.add(w * table.occupation(x, beta)?);
    }
    Ok(OccupationCheck {
        lhs: lhs.value(),
        rhs: rhs.value(),
        bound: tail_estimate(&terms),
    })
}

/// One draw of `Σ_{n=1}^{N} G(ζ_n^{(β)}) U(ξ,β)/U(θⁿξ, ζ_n^{(β)} + β)` on a fixed environment.
pub fn killed_series_sample(
    h: &Harmonic,
    beta: i64,
    g: &[(i64, f64)],
    horizon: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let path = crate::conditioned::sample_conditioned_path(h, 0, beta, horizon, rng)?;
    let base = h.u(0, beta)?;
    let mut s = Sum::new();
    for (n, &z) in path.iter().enumerate().skip(1) {
        if let Some(&(_, w)) = g.iter().find(|p| p.0 == z) {
            s.add(w * base / h.u(n, z + beta)?);
        }
    }
    Ok(s.value())
}

/// Exact `Σ_{n=1}^{N} E[G(S_n); τ_β > n]` under the annealed step: the mean of [`killed_series_sample`].
pub fn killed_series_truncated(
    env: &EnvironmentLaw,
    beta: i64,
    g: &[(i64, f64)],
    horizon: usize,
) -> Result<f64> {
    let terms = killed_occupation_terms(&env.annealed_step()?, beta, g, horizon)?;
    Ok(terms.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentPath, PointProcessLaw};
    use crate::walk::WalkEnv;
    use alloc::sync::Arc;
    use approx::assert_abs_diff_eq;

    fn asym() -> StepMeasure {
        StepMeasure::new(1.0, &[(-1, 2.0 / 3.0), (2, 1.0 / 3.0)]).unwrap()
    }

    fn wide() -> StepMeasure {
        StepMeasure::new(
            1.0,
            &[
                (-3, 0.1),
                (-2, 0.2),
                (-1, 0.1),
                (0, 0.1),
                (1, 0.3),
                (2, 0.1),
                (3, 0.1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn wide_is_centred() {
        assert_abs_diff_eq!(wide().mean(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wide().total(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ladder_examples() {
        let a = ladder_decompose(&[0, -1, -2]);
        assert_eq!(a.descending_epochs, vec![0, 1, 2]);
        assert_eq!(a.descending_heights, vec![0, -1, -2]);
        let b = ladder_decompose(&[0, 1, 0, 2]);
        assert_eq!(b.ascending_epochs, vec![0, 1, 3]);
        assert_eq!(b.ascending_heights, vec![0, 1, 2]);
        let c = ladder_decompose(&[0, 1, 2, 3]);
        assert_eq!(c.ascending_epochs, vec![0, 1, 2, 3]);
        assert_eq!(c.descending_epochs, vec![0]);
        assert!(c.descending_censored && !c.ascending_censored);
    }

    #[test]
    fn fair_ladder_laws() {
        let l = ladder_laws(&StepMeasure::fair_pm1()).unwrap();
        assert_eq!(l.descending, vec![0.0, 1.0]);
        assert_abs_diff_eq!(l.ascending[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(l.ascending[1], 0.5, epsilon = 1e-15);
    }

    /// Ladder laws by brute force: killed DP until the surviving mass is negligible.
    fn brute_first_ladder(step: &StepMeasure, descending: bool, steps: usize) -> Vec<(i64, f64)> {
        let mut out: Vec<(i64, f64)> = Vec::new();
        let mut d = LatticeDistribution::delta(1.0, 0);
        // Work with the reflected walk for ascending records: strict ↔ weak swap handled by the barrier.
        let flip: Vec<(i64, f64)> = step.iter().map(|(i, m)| (-i, m)).collect();
        let s = if descending {
            step.clone()
        } else {
            StepMeasure::new(1.0, &flip).unwrap()
        };
        // Descending: killed below 0. Ascending (weak): the reflected walk is killed at ≤ 0, i.e. below 1.
        let barrier = if descending { 0 } else { -1 };
        for _ in 0..steps {
            let full = crate::lattice::propagate(&d, &s).unwrap();
            let mut keep = Vec::new();
            for (x, m) in full.iter() {
                if x < -barrier {
                    let h = if descending { x } else { -x };
                    match out.iter_mut().find(|p| p.0 == h) {
                        Some(p) => p.1 += m,
                        None => out.push((h, m)),
                    }
                } else {
                    keep.push((x, m));
                }
            }
            d = LatticeDistribution::from_points(1.0, &keep);
        }
        out.sort_by_key(|p| p.0);
        out
    }

    #[test]
    fn ladder_laws_match_killed_dp() {
        for s in [asym(), wide()] {
            let l = ladder_laws(&s).unwrap();
            for (h, m) in brute_first_ladder(&s, true, 3000) {
                assert!(
                    (l.descending_mass(-h) - m).abs() < 2e-2,
                    "desc {h}: {} vs {m}",
                    l.descending_mass(-h)
                );
            }
            for (h, m) in brute_first_ladder(&s, false, 3000) {
                assert!(
                    (l.ascending_mass(h) - m).abs() < 2e-2,
                    "asc {h}: {} vs {m}",
                    l.ascending_mass(h)
                );
            }
        }
    }

    #[test]
    fn asym_descending_is_unit() {
        // Skip-free downward: every strict descent lands exactly one unit lower.
        let l = ladder_laws(&asym()).unwrap();
        assert_abs_diff_eq!(l.descending_mass(1), 1.0, epsilon = 1e-12);
    }

    /// Sum over ladder chains of the probability that the k-th partial height sum is ≤ x.
    fn enumerate_chains(
        law: &[(i64, f64)],
        x: i64,
        include_zero_term: bool,
        strict_less: bool,
    ) -> f64 {
        // dist of the sum after k heights, iterated until its mass below the threshold vanishes.
        let mut dist = vec![(0i64, 1.0f64)];
        let mut total = 0.0;
        let hit = |v: i64| if strict_less { v < x } else { v <= x };
        if include_zero_term && hit(0) {
            total += 1.0;
        }
        for _ in 0..10_000 {
            let mut next: Vec<(i64, f64)> = Vec::new();
            for &(s, p) in &dist {
                for &(h, q) in law {
                    let v = s + h;
                    if v > x {
                        continue;
                    }
                    match next.iter_mut().find(|e| e.0 == v) {
                        Some(e) => e.1 += p * q,
                        None => next.push((v, p * q)),
                    }
                }
            }
            let mass: f64 = next.iter().filter(|e| hit(e.0)).map(|e| e.1).sum();
            total += mass;
            dist = next;
            if mass < 1e-17 {
                break;
            }
        }
        total
    }

    #[test]
    fn fair_renewal_oracles() {
        let t = renewal_from_step(&StepMeasure::fair_pm1(), 40, RenewalMethod::Exact).unwrap();
        for x in 0..=40 {
            assert_abs_diff_eq!(t.r_minus(x).unwrap(), x as f64 + 1.0, epsilon = 1e-9);
            let brute = enumerate_chains(&[(1, 1.0)], x, true, false);
            assert_abs_diff_eq!(t.r_minus(x).unwrap(), brute, epsilon = 1e-9);
        }
        assert_eq!(t.r(0).unwrap(), 1.0);
        for x in 1..=41 {
            assert_abs_diff_eq!(t.r(x).unwrap(), 2.0 * x as f64 - 1.0, epsilon = 1e-9);
            let brute = enumerate_chains(&[(0, 0.5), (1, 0.5)], x, false, true);
            assert_abs_diff_eq!(t.r(x).unwrap(), brute, epsilon = 1e-9);
        }
        assert_eq!(t.r_beta(3, 2).unwrap(), t.r(5).unwrap());
    }

    #[test]
    fn harmonic_identity_residuals() {
        for s in [StepMeasure::fair_pm1(), asym(), wide()] {
            let t = renewal_from_step(&s, 200, RenewalMethod::Exact).unwrap();
            let grid: Vec<i64> = (0..=190).collect();
            let r = harmonic_identity_r_minus(&t, &s, &grid).unwrap();
            assert!(
                r.iter().all(|&v| v <= 1e-9),
                "{:?}",
                r.iter().cloned().fold(0.0, f64::max)
            );
        }
        let t = renewal_from_step(&StepMeasure::fair_pm1(), 3, RenewalMethod::Exact).unwrap();
        assert!(matches!(
            harmonic_identity_r_minus(&t, &StepMeasure::fair_pm1(), &[3]),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn renewal_trend_and_monotone() {
        for s in [StepMeasure::fair_pm1(), asym(), wide()] {
            let t = renewal_from_step(&s, 1024, RenewalMethod::Exact).unwrap();
            assert_eq!(t.r_minus(0).unwrap(), 1.0);
            assert_eq!(t.r(0).unwrap(), 1.0);
            for x in 1..=1024 {
                assert!(t.r_minus(x).unwrap() >= t.r_minus(x - 1).unwrap());
                assert!(t.r(x).unwrap() >= t.r(x - 1).unwrap() || x == 1);
            }
            let ratio = t.r_minus(1024).unwrap() / t.r_minus(512).unwrap();
            assert!((ratio - 2.0).abs() <= 0.1);
        }
    }

    #[test]
    fn sandwich_against_lebesgue() {
        for s in [StepMeasure::fair_pm1(), asym(), wide()] {
            let t = renewal_from_step(&s, 1100, RenewalMethod::Exact).unwrap();
            for beta in [0, 3] {
                let mut ratios = Vec::new();
                let mut lo = 1;
                while lo < 1024 {
                    let hi = 2 * lo;
                    let mass: f64 = (lo..hi)
                        .map(|x| t.occupation(x - beta, beta).unwrap())
                        .sum();
                    ratios.push(mass / (hi - lo) as f64);
                    lo = hi;
                }
                let mn = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
                let mx = ratios.iter().cloned().fold(0.0, f64::max);
                assert!(mn > 0.1 && mx < 10.0 * mn, "{ratios:?}");
            }
        }
    }

    #[test]
    fn occupation_identity_beta_zero() {
        let t = renewal_from_step(&StepMeasure::fair_pm1(), 50, RenewalMethod::Exact).unwrap();
        // Σ_n P(S_n = 0, S ≥ 0) = Σ_k C_k 4^{−k} = 1 = u⁺(0).
        assert_abs_diff_eq!(t.occupation(0, 0).unwrap(), 1.0, epsilon = 1e-14);
        let c = occupation_identity_check(&StepMeasure::fair_pm1(), &t, 0, &[(0, 1.0)], 20_000)
            .unwrap();
        assert!(c.pass(), "{c:?}");
        assert!(c.bound < 0.02);
        let z = occupation_identity_check(&StepMeasure::fair_pm1(), &t, 0, &[], 100).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
    }

    #[test]
    fn occupation_identity_with_barrier() {
        for s in [StepMeasure::fair_pm1(), asym(), wide()] {
            let t = renewal_from_step(&s, 60, RenewalMethod::Exact).unwrap();
            for beta in [0, 1, 2] {
                let f: Vec<(i64, f64)> = (-beta..=3).map(|x| (x, 1.0)).collect();
                let c = occupation_identity_check(&s, &t, beta, &f, 5_000).unwrap();
                assert!(c.pass(), "beta={beta}: {c:?}");
            }
        }
    }

    #[test]
    fn shifted_ladder_measure_differs_from_occupation_with_barrier() {
        // Fair walk, β = 1, x = −1: the Green function of the walk killed at +1
        // (by reflection) is 2, while the shifted ladder measure gives u⁺(0) = 1.
        let t = renewal_from_step(&StepMeasure::fair_pm1(), 10, RenewalMethod::Exact).unwrap();
        assert_abs_diff_eq!(t.occupation(-1, 1).unwrap(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t.measure_beta(-1, 1).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn far_target_is_dominated_by_bound() {
        let t = renewal_from_step(&StepMeasure::fair_pm1(), 500, RenewalMethod::Exact).unwrap();
        let c =
            occupation_identity_check(&StepMeasure::fair_pm1(), &t, 0, &[(400, 1.0)], 100).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.rhs > 1.0);
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let s = asym();
        // Ladder epochs have infinite mean, so chains are few and the grid short.
        let ex = renewal_from_step(&s, 3, RenewalMethod::Exact).unwrap();
        let mc = renewal_from_step(
            &s,
            3,
            RenewalMethod::MonteCarlo {
                chains: 300,
                seed: 5,
                step_budget: 1 << 34,
            },
        )
        .unwrap();
        let (se_m, se_r) = mc.std_err.clone().unwrap();
        for x in 0..=3 {
            let d = (mc.r_minus(x).unwrap() - ex.r_minus(x).unwrap()).abs();
            assert!(d <= 5.0 * se_m[x as usize] + 1e-12, "R- at {x}");
            let d = (mc.r(x).unwrap() - ex.r(x).unwrap()).abs();
            assert!(d <= 5.0 * se_r[x as usize] + 1e-12, "R at {x}");
        }
        assert!(matches!(
            renewal_from_step(
                &s,
                6,
                RenewalMethod::MonteCarlo {
                    chains: 10,
                    seed: 1,
                    step_budget: 3
                }
            ),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn killed_series_zero_function() {
        let law = Arc::new(EnvironmentLaw::homogeneous(PointProcessLaw::pm1_recipe()));
        let path = EnvironmentPath::realize(law.clone(), 1, 16);
        let h = Harmonic::new(WalkEnv::from_path(&path).unwrap(), 1e-9, 1000);
        let mut rng = RngStream::new(1, 1);
        assert_eq!(killed_series_sample(&h, 0, &[], 50, &mut rng).unwrap(), 0.0);
        assert_eq!(killed_series_truncated(&law, 0, &[], 50).unwrap(), 0.0);
    }

    #[test]
    fn killed_series_mean_matches_truncated_sum() {
        let law = Arc::new(EnvironmentLaw::homogeneous(PointProcessLaw::pm1_recipe()));
        let g = [(0, 1.0), (1, 1.0), (2, 1.0)];
        let horizon = 60;
        let exact = killed_series_truncated(&law, 0, &g, horizon).unwrap();
        let path = EnvironmentPath::realize(law, 1, 16);
        let h = Harmonic::new(WalkEnv::from_path(&path).unwrap(), 1e-9, 1000);
        let mut rng = RngStream::new(2, 1);
        let xs: Vec<f64> = (0..4000)
            .map(|_| killed_series_sample(&h, 0, &g, horizon, &mut rng).unwrap())
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(
            (m - exact).abs() <= 5.0 * (v / xs.len() as f64).sqrt(),
            "{m} vs {exact}"
        );
    }

    #[test]
    fn truncated_routes_agree_and_approach_the_limit() {
        for step in [StepMeasure::fair_pm1(), asym(), wide()] {
            let h = if step.iter().count() > 3 { 7 } else { 14 };
            let (dm, dr) = truncated_renewal_dp(&step, 6, h).unwrap();
            let (em, er) = truncated_renewal_enumeration(&step, 6, h, 1 << 24).unwrap();
            for x in 0..7 {
                assert_abs_diff_eq!(dm[x], em[x], epsilon = 1e-12);
                assert_abs_diff_eq!(dr[x], er[x], epsilon = 1e-12);
            }
        }
        let exact = renewal_from_step(&StepMeasure::fair_pm1(), 6, RenewalMethod::Exact).unwrap();
        let (m1, _) = truncated_renewal_dp(&StepMeasure::fair_pm1(), 6, 100).unwrap();
        let (m2, r2) = truncated_renewal_dp(&StepMeasure::fair_pm1(), 6, 400).unwrap();
        for x in 0..7 {
            let gap1 = exact.r_minus(x as i64).unwrap() - m1[x];
            let gap2 = exact.r_minus(x as i64).unwrap() - m2[x];
            assert!(gap2 >= 0.0 && gap2 <= gap1);
            assert!(r2[x] <= exact.r(x as i64).unwrap() + 1e-12);
        }
    }

    #[test]
    fn span_of_support() {
        let s = StepMeasure::new(1.0, &[(-2, 0.5), (2, 0.5)]).unwrap();
        assert_eq!(s.span(), 2);
        let t = renewal_from_step(&s, 8, RenewalMethod::Exact).unwrap();
        assert_eq!(t.u_minus[1], 0.0);
        assert_abs_diff_eq!(t.r_minus(2).unwrap(), 2.0, epsilon = 1e-12);
    }
}
