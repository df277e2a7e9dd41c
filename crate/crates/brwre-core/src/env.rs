//! Offspring point-process laws, i.i.d. environment laws, and realized environment paths.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log, pow, round};

use crate::lattice::{compensated_sum, gcd, same_step, StepMeasure, Sum};
use crate::rng::{tag, uniform_at};
use crate::special::zeta;
use crate::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// One realizable offspring configuration: displacements as lattice indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub children: Vec<i64>,
}

impl Outcome {
    pub fn new(prob: f64, children: Vec<i64>) -> Self {
        Self { prob, children }
    }
}

/// Countable family of outcomes indexed by shells `m ≥ 1`.
///
/// Shell `m` has `K_m = round(exp(growth·m·Δ))` children, all at lattice index
/// `m·shift`. Its probability is `weight·q_m` with `q_m ∝ m^{−α} / Y_m`, where
/// `Y_m = K_m e^{−m·shift·Δ}`, so that `q_m Y_m ∝ m^{−α}`: the moments of `Y`
/// are power series in `m` whose convergence is decided by `α` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellTail {
    pub alpha: f64,
    pub growth: f64,
    pub shift: i64,
    pub weight: f64,
    step: f64,
    norm: f64,
}

/// Shells beyond this index carry less than `1e-18` probability in every admissible family.
const SHELL_CAP: u64 = 100_000;

impl ShellTail {
    pub fn new(step: f64, alpha: f64, growth: f64, shift: i64, weight: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::UnsupportedTail(format!(
                "alpha must exceed 1, got {alpha}"
            )));
        }
        if shift < 0 {
            return Err(Error::UnsupportedTail(
                "shell shift must be non-negative".into(),
            ));
        }
        if !(growth > shift as f64) {
            return Err(Error::UnsupportedTail(format!(
                "growth {growth} must exceed the shift {shift} so that shell probabilities are summable"
            )));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::UnsupportedTail(
                "tail weight must lie in (0, 1]".into(),
            ));
        }
        let mut t = Self {
            alpha,
            growth,
            shift,
            weight,
            step,
            norm: 1.0,
        };
        let mut s = Sum::new();
        for m in 1..=SHELL_CAP {
            let term = pow(m as f64, -alpha) / t.y(m);
            s.add(term);
            if term < 1e-20 * s.value() {
                break;
            }
        }
        t.norm = 1.0 / s.value();
        Ok(t)
    }

    pub fn children(&self, m: u64) -> f64 {
        round(exp(self.growth * m as f64 * self.step)).max(1.0)
    }

    pub fn displacement(&self, m: u64) -> i64 {
        m as i64 * self.shift
    }

    pub fn y(&self, m: u64) -> f64 {
        self.children(m) * exp(-(self.displacement(m) as f64) * self.step)
    }

    /// `q_m` (probability within the tail part).
    pub fn prob(&self, m: u64) -> f64 {
        self.norm * pow(m as f64, -self.alpha) / self.y(m)
    }

    /// Normalizer `C` with `q_m Y_m = C m^{−α}`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Shells carrying all but `eps` of the tail probability.
    pub fn table(&self, eps: f64) -> Vec<(u64, f64)> {
        let mut out = Vec::new();
        let mut acc = 0.0;
        for m in 1..=SHELL_CAP {
            let q = self.prob(m);
            out.push((m, q));
            acc += q;
            if 1.0 - acc <= eps {
                break;
            }
        }
        out
    }

    /// `Σ_m q_m Σ_children e^{−tV}`.
    fn laplace(&self, t: f64) -> Result<f64> {
        let a = (1.0 - t) * self.shift as f64 * self.step;
        if self.shift == 0 || t == 1.0 {
            return Ok(self.norm * zeta(self.alpha));
        }
        if a > 0.0 {
            return Err(Error::NonFinite(format!("shell tail diverges at t = {t}")));
        }
        let mut s = Sum::new();
        for m in 1..=SHELL_CAP {
            let term = self.norm * pow(m as f64, -self.alpha) * exp(a * m as f64);
            s.add(term);
            if term < 1e-18 * s.value() {
                break;
            }
        }
        Ok(s.value())
    }

    /// `Σ_m q_m Σ_children V e^{−V}` at `t = 1`.
    fn tilted_mean(&self) -> Result<f64> {
        if self.shift == 0 {
            return Ok(0.0);
        }
        if self.alpha <= 2.0 {
            return Err(Error::NonFinite(
                "shell tail has infinite tilted mean".into(),
            ));
        }
        Ok(self.norm * self.shift as f64 * self.step * zeta(self.alpha - 1.0))
    }
}

/// Offspring law of one environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProcessLaw {
    step: f64,
    outcomes: Vec<Outcome>,
    tail: Option<ShellTail>,
}

impl PointProcessLaw {
    pub fn new(step: f64, outcomes: Vec<Outcome>) -> Result<Self> {
        Self::with_tail(step, outcomes, None)
    }

    pub fn with_tail(step: f64, outcomes: Vec<Outcome>, tail: Option<ShellTail>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidLaw(
                "lattice step must be positive and finite".into(),
            ));
        }
        if outcomes.is_empty() && tail.is_none() {
            return Err(Error::InvalidLaw("law has no outcomes".into()));
        }
        for (k, o) in outcomes.iter().enumerate() {
            if !(o.prob > 0.0 && o.prob <= 1.0) {
                return Err(Error::InvalidLaw(format!(
                    "outcome {k} has probability {} outside (0, 1]",
                    o.prob
                )));
            }
            if o.children.is_empty() {
                return Err(Error::InvalidLaw(format!("outcome {k} has no children")));
            }
        }
        if let Some(t) = &tail {
            if !same_step(t.step, step) {
                return Err(Error::LatticeMismatch(step, t.step));
            }
        }
        let total = compensated_sum(outcomes.iter().map(|o| o.prob))
            + tail.as_ref().map_or(0.0, |t| t.weight);
        if fabs(total - 1.0) > PROB_TOL {
            return Err(Error::InvalidLaw(format!(
                "outcome probabilities sum to {total}"
            )));
        }
        Ok(Self {
            step,
            outcomes,
            tail,
        })
    }

    /// Boundary-case law for a target step measure with randomized child counts.
    ///
    /// For each displacement `x` the count `K_x` has mean `μ({x})e^{x}`; it takes
    /// the value `⌊m⌋` or `⌊m⌋ + 1 + spread`. Counts at different displacements
    /// are independent, so outcomes are the product of the per-site choices.
    pub fn boundary_recipe(step: f64, target: &[(i64, f64)], spread: u32) -> Result<Self> {
        let mut sites: Vec<Vec<(f64, u64)>> = Vec::new();
        let mut idx = Vec::new();
        for &(x, mu) in target {
            if !(mu > 0.0) {
                continue;
            }
            let m = mu * exp(x as f64 * step);
            let base = libm::floor(m);
            let frac = m - base;
            let jump = 1.0 + spread as f64;
            let p_hi = frac / jump;
            let mut opts = Vec::new();
            if p_hi < 1.0 {
                opts.push((1.0 - p_hi, base as u64));
            }
            if p_hi > 0.0 {
                opts.push((p_hi, (base + jump) as u64));
            }
            sites.push(opts);
            idx.push(x);
        }
        let mut outcomes = vec![Outcome::new(1.0, Vec::new())];
        for (opts, &x) in sites.iter().zip(&idx) {
            let mut next = Vec::new();
            for o in &outcomes {
                for &(p, k) in opts {
                    let mut ch = o.children.clone();
                    ch.extend(core::iter::repeat_n(x, k as usize));
                    next.push(Outcome::new(o.prob * p, ch));
                }
            }
            outcomes = next;
        }
        if outcomes.iter().any(|o| o.children.is_empty()) {
            return Err(Error::InvalidLaw(
                "recipe yields an outcome without children; no displacement has mean count >= 1"
                    .into(),
            ));
        }
        Self::new(step, outcomes)
    }

    /// Standard boundary law with step measure `{−1: 1/2, +1: 1/2}` on the unit lattice.
    pub fn pm1_recipe() -> Self {
        Self::boundary_recipe(1.0, &[(-1, 0.5), (1, 0.5)], 0).expect("valid recipe")
    }

    /// Boundary law with a shell tail and three single-child head outcomes at `0, ±1`.
    pub fn shell_boundary(step: f64, alpha: f64, growth: f64, shift: i64) -> Result<Self> {
        let probe = ShellTail::new(step, alpha, growth, shift, 1.0)?;
        let a_t = probe.laplace(1.0)?;
        let b_t = probe.tilted_mean()?;
        let a = exp(-step);
        let mut pi = 0.5;
        for _ in 0..60 {
            let rhs = [1.0 - pi, 1.0 - pi * a_t, -pi * b_t];
            let m = [
                [1.0, 1.0, 1.0],
                [1.0, a, 1.0 / a],
                [0.0, step * a, -step / a],
            ];
            if let Some([p0, pp, pm]) = solve3(m, rhs) {
                if p0 >= 0.0 && pp > 0.0 && pm >= 0.0 {
                    let mut outcomes = Vec::new();
                    for (p, x) in [(p0, 0), (pp, 1), (pm, -1)] {
                        if p > 0.0 {
                            outcomes.push(Outcome::new(p, vec![x]));
                        }
                    }
                    let tail = ShellTail::new(step, alpha, growth, shift, pi)?;
                    return Self::with_tail(step, outcomes, Some(tail));
                }
            }
            pi *= 0.5;
        }
        Err(Error::UnsupportedTail(
            "no non-negative head outcomes balance this tail".into(),
        ))
    }

    pub fn lattice_step(&self) -> f64 {
        self.step
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn tail(&self) -> Option<&ShellTail> {
        self.tail.as_ref()
    }

    pub fn is_finite(&self) -> bool {
        self.tail.is_none()
    }

    /// Outcomes as `(prob, [(displacement, count)])`, with tail shells beyond `eps` mass dropped.
    pub fn atoms(&self, eps: f64) -> Vec<(f64, Vec<(i64, f64)>)> {
        let mut out: Vec<(f64, Vec<(i64, f64)>)> = self
            .outcomes
            .iter()
            .map(|o| {
                let mut c: Vec<(i64, f64)> = Vec::new();
                for &x in &o.children {
                    match c.iter_mut().find(|e| e.0 == x) {
                        Some(e) => e.1 += 1.0,
                        None => c.push((x, 1.0)),
                    }
                }
                (o.prob, c)
            })
            .collect();
        if let Some(t) = &self.tail {
            for (m, q) in t.table(eps) {
                out.push((t.weight * q, vec![(t.displacement(m), t.children(m))]));
            }
        }
        out
    }

    /// Largest number of children over the listed outcomes (tail excluded).
    pub fn max_children(&self) -> usize {
        self.outcomes
            .iter()
            .map(|o| o.children.len())
            .max()
            .unwrap_or(0)
    }

    /// `Σ_outcomes p Σ_children g(V)` over the finite outcomes.
    fn finite_sum<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        let mut s = Sum::new();
        for o in &self.outcomes {
            for &x in &o.children {
                s.add(o.prob * g(x as f64 * self.step));
            }
        }
        s.value()
    }

    /// Log-Laplace transform `Ψ(t) = log Σ p Σ e^{−tV}`.
    pub fn log_laplace(&self, t: f64) -> Result<f64> {
        let mut total = self.finite_sum(|v| exp(-t * v));
        if let Some(tail) = &self.tail {
            total += tail.weight * tail.laplace(t)?;
        }
        Ok(log(total))
    }

    /// `Σ p Σ V e^{−tV}` (equals `−Ψ′(t)e^{Ψ(t)}`).
    fn tilted_first(&self, t: f64) -> Result<f64> {
        let mut total = self.finite_sum(|v| v * exp(-t * v));
        if let Some(tail) = &self.tail {
            if t != 1.0 {
                return Err(Error::UnsupportedTail(
                    "tail derivatives only at t = 1".into(),
                ));
            }
            total += tail.weight * tail.tilted_mean()?;
        }
        Ok(total)
    }

    /// Derivative `Ψ′(t)`.
    pub fn log_laplace_derivative(&self, t: f64) -> Result<f64> {
        Ok(-self.tilted_first(t)? / exp(self.log_laplace(t)?))
    }

    /// Root of `Ψ(t) = tΨ′(t)` on `(0, 64]`, if one exists.
    pub fn tilt_point(&self) -> Option<f64> {
        if !self.is_finite() {
            return None;
        }
        let g = |t: f64| -> f64 {
            let psi = self.log_laplace(t).unwrap_or(f64::NAN);
            let d = self.log_laplace_derivative(t).unwrap_or(f64::NAN);
            psi - t * d
        };
        let (mut lo, mut hi) = (1e-9, 64.0);
        let (glo, ghi) = (g(lo), g(hi));
        if !(glo > 0.0 && ghi < 0.0) {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Step measure `μ(B) = Σ p Σ_{x∈B} e^{−x}` without the boundary check.
    pub fn raw_step_measure(&self) -> Result<StepMeasure> {
        let mut points = Vec::new();
        for o in &self.outcomes {
            for &x in &o.children {
                points.push((x, o.prob * exp(-(x as f64) * self.step)));
            }
        }
        if let Some(t) = &self.tail {
            if t.shift != 0 {
                return Err(Error::UnsupportedTail(
                    "shell tails with positive shift have infinite step support".into(),
                ));
            }
            points.push((0, t.weight * t.laplace(1.0)?));
        }
        StepMeasure::new(self.step, &points)
    }
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    if d == 0.0 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut a = m;
        for row in 0..3 {
            a[row][c] = r[row];
        }
        *slot = det(a) / d;
    }
    Some(out)
}

/// I.i.d. environment: a finite list of states with probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentLaw {
    states: Vec<(f64, PointProcessLaw)>,
}

impl EnvironmentLaw {
    pub fn new(states: Vec<(f64, PointProcessLaw)>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidLaw("environment has no states".into()));
        }
        let step = states[0].1.step;
        for (p, s) in &states {
            if !(*p >= 0.0 && *p <= 1.0) {
                return Err(Error::InvalidLaw(format!(
                    "state probability {p} outside [0, 1]"
                )));
            }
            if !same_step(step, s.step) {
                return Err(Error::LatticeMismatch(step, s.step));
            }
        }
        let total = compensated_sum(states.iter().map(|s| s.0));
        if fabs(total - 1.0) > PROB_TOL {
            return Err(Error::InvalidLaw(format!(
                "state probabilities sum to {total}"
            )));
        }
        Ok(Self { states })
    }

    pub fn homogeneous(law: PointProcessLaw) -> Self {
        Self {
            states: vec![(1.0, law)],
        }
    }

    pub fn lattice_step(&self) -> f64 {
        self.states[0].1.step
    }

    pub fn states(&self) -> &[(f64, PointProcessLaw)] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &PointProcessLaw {
        &self.states[i].1
    }

    /// Annealed step measure `μ^∞ = Σ_s π_s μ_s`.
    pub fn annealed_step(&self) -> Result<StepMeasure> {
        let steps: Vec<StepMeasure> = self
            .states
            .iter()
            .map(|(_, s)| s.raw_step_measure())
            .collect::<Result<_>>()?;
        let parts: Vec<(f64, &StepMeasure)> =
            self.states.iter().map(|s| s.0).zip(steps.iter()).collect();
        StepMeasure::mixture(&parts)
    }

    fn sample_state(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, (p, _)) in self.states.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
        last
    }
}

/// Per-state residuals of the boundary-case equations.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub tol: f64,
    /// `(|Ψ(1)|, |Σ p Σ V e^{−V}|)` per state; infinite when a tail diverges.
    pub residuals: Vec<(f64, f64)>,
    pub pass: bool,
}

pub fn boundary_check(env: &EnvironmentLaw, tol: f64) -> BoundaryReport {
    let residuals: Vec<(f64, f64)> = env
        .states
        .iter()
        .map(|(_, s)| {
            let psi = s.log_laplace(1.0).map(fabs).unwrap_or(f64::INFINITY);
            let d = s.tilted_first(1.0).map(fabs).unwrap_or(f64::INFINITY);
            (psi, d)
        })
        .collect();
    let pass = residuals.iter().all(|&(a, b)| a <= tol && b <= tol);
    BoundaryReport {
        tol,
        residuals,
        pass,
    }
}

/// Replaces each displacement `x` of state `s` by `t*·x + Ψ_s(t*)` on a refined lattice.
pub fn boundary_normalize(
    env: &EnvironmentLaw,
    t_star: f64,
    min_step: f64,
) -> Result<EnvironmentLaw> {
    const TILT_TOL: f64 = 1e-6;
    let step = env.lattice_step();
    let mut shifts = Vec::new();
    for (_, s) in &env.states {
        if !s.is_finite() {
            return Err(Error::UnsupportedTail(
                "normalization needs finite laws".into(),
            ));
        }
        let psi = s.log_laplace(t_star)?;
        let d = s.log_laplace_derivative(t_star)?;
        if fabs(psi - t_star * d) > TILT_TOL {
            let own = s.tilt_point().unwrap_or(f64::NAN);
            return Err(Error::NoCommonTiltPoint {
                first: t_star,
                second: own,
            });
        }
        shifts.push(psi);
    }
    let base = t_star * step;
    let mut new_step = None;
    for q in 1..=1024u32 {
        let cand = base / q as f64;
        if cand < min_step {
            break;
        }
        let fits = shifts.iter().all(|&c| {
            let r = c / cand;
            fabs(r - round(r)) <= 1e-9 * (1.0 + fabs(r))
        });
        if fits {
            new_step = Some((q, cand));
            break;
        }
    }
    let (q, new_step) = new_step.ok_or(Error::LatticeIncompatible { min_step })?;
    let mut states = Vec::new();
    for ((p, s), c) in env.states.iter().zip(&shifts) {
        let shift = round(c / new_step) as i64;
        let outcomes = s
            .outcomes
            .iter()
            .map(|o| {
                Outcome::new(
                    o.prob,
                    o.children.iter().map(|&x| x * q as i64 + shift).collect(),
                )
            })
            .collect();
        states.push((*p, PointProcessLaw::new(new_step, outcomes)?));
    }
    // Reduce the lattice by the common divisor of all displacements.
    let g = states
        .iter()
        .flat_map(|(_, s)| s.outcomes.iter().flat_map(|o| o.children.iter()))
        .fold(0i64, |g, &x| gcd(g, x.abs()));
    if g > 1 && new_step * g as f64 >= min_step {
        let coarse = new_step * g as f64;
        states = states
            .into_iter()
            .map(|(p, s)| {
                let outcomes = s
                    .outcomes
                    .iter()
                    .map(|o| Outcome::new(o.prob, o.children.iter().map(|x| x / g).collect()))
                    .collect();
                PointProcessLaw::new(coarse, outcomes).map(|l| (p, l))
            })
            .collect::<Result<_>>()?;
    }
    EnvironmentLaw::new(states)
}

/// Results of the standing-assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Every outcome has at least one child.
    pub non_extinction: bool,
    /// Some state with positive probability branches into more than one child.
    pub branching: bool,
    /// Per state: `Σ p Σ_{V>0} e^{−V} > 0`.
    pub positive_part: Vec<bool>,
    pub moment_delta: f64,
    /// `E[Σ |V|^{2+δ} e^{−V}]`, `None` when infinite.
    pub moment: Option<f64>,
    pub boundary: BoundaryReport,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.non_extinction
            && self.branching
            && self.positive_part.iter().all(|&b| b)
            && self.moment.is_some()
            && self.boundary.pass
    }
}

pub fn validate_assumptions(
    env: &EnvironmentLaw,
    delta: f64,
    boundary_tol: f64,
) -> AssumptionReport {
    let non_extinction = env
        .states
        .iter()
        .all(|(_, s)| s.outcomes.iter().all(|o| !o.children.is_empty()));
    let branching = env.states.iter().any(|(p, s)| {
        *p > 0.0
            && (s.outcomes.iter().any(|o| o.children.len() > 1)
                || s.tail.as_ref().is_some_and(|t| {
                    t.table(1e-18)
                        .iter()
                        .any(|&(m, q)| q > 0.0 && t.children(m) > 1.0)
                }))
    });
    let positive_part = env
        .states
        .iter()
        .map(|(_, s)| {
            let head = s.finite_sum(|v| if v > 0.0 { exp(-v) } else { 0.0 });
            let tail = s.tail.as_ref().is_some_and(|t| t.shift > 0);
            head > 0.0 || tail
        })
        .collect();
    let mut moment = Some(Sum::new());
    for (p, s) in &env.states {
        let Some(acc) = moment.as_mut() else { break };
        acc.add(p * s.finite_sum(|v| pow(fabs(v), 2.0 + delta) * exp(-v)));
        if let Some(t) = &s.tail {
            if t.shift > 0 {
                let e = t.alpha - 2.0 - delta;
                if e <= 1.0 {
                    moment = None;
                    continue;
                }
                acc.add(
                    p * t.weight * t.norm * pow(t.shift as f64 * t.step, 2.0 + delta) * zeta(e),
                );
            }
        }
    }
    AssumptionReport {
        non_extinction,
        branching,
        positive_part,
        moment_delta: delta,
        moment: moment.map(|s| s.value()),
        boundary: boundary_check(env, boundary_tol),
    }
}

/// Realized environment `ξ₁, ξ₂, …` with a shift counter.
///
/// The state at absolute time `t` is a pure function of `(law, seed, t)`, so
/// the path extends on demand beyond its stored prefix.
#[derive(Debug, Clone)]
pub struct EnvironmentPath {
    law: Arc<EnvironmentLaw>,
    seed: u64,
    states: Arc<Vec<usize>>,
    offset: usize,
}

impl EnvironmentPath {
    pub fn realize(law: Arc<EnvironmentLaw>, seed: u64, len: usize) -> Self {
        let states = (1..=len).map(|t| draw_state(&law, seed, t)).collect();
        Self {
            law,
            seed,
            states: Arc::new(states),
            offset: 0,
        }
    }

    pub fn law(&self) -> &EnvironmentLaw {
        &self.law
    }

    pub fn law_arc(&self) -> &Arc<EnvironmentLaw> {
        &self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Stored prefix of state indices (absolute times `1..=len`).
    pub fn prefix(&self) -> &[usize] {
        &self.states
    }

    /// State index of `ξ_t` for the shifted path (`t ≥ 1`).
    pub fn state_index(&self, t: usize) -> usize {
        debug_assert!(t >= 1);
        let abs = self.offset + t;
        match self.states.get(abs - 1) {
            Some(&s) => s,
            None => draw_state(&self.law, self.seed, abs),
        }
    }

    pub fn state(&self, t: usize) -> &PointProcessLaw {
        self.law.state(self.state_index(t))
    }

    /// `θᵏξ`.
    pub fn shift(&self, k: usize) -> Self {
        Self {
            offset: self.offset + k,
            ..self.clone()
        }
    }
}

fn draw_state(law: &EnvironmentLaw, seed: u64, abs_time: usize) -> usize {
    if law.states.len() == 1 {
        return 0;
    }
    law.sample_state(uniform_at(
        seed,
        (tag::ENVIRONMENT as u64) << 40,
        abs_time as u64,
    ))
}
