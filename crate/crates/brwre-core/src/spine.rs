//! Size-biased measure from the truncated derivative martingale and its spinal construction.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs};

use crate::env::{EnvironmentPath, PointProcessLaw};
use crate::harmonic::Harmonic;
use crate::lattice::{LatticeDistribution, Sum};
use crate::population::{evolve, OffspringTable, PopulationState};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Tail shells below this probability are dropped before size-biasing.
const TAIL_EPS: f64 = 1e-15;

/// Largest number of enumerated configurations in the exhaustive checks.
pub const ENUMERATION_CAP: u128 = 2_000_000;

/// Size-biased offspring law of a spine particle at `x` in generation `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeBiasedLaw {
    /// Renormalized outcome probabilities.
    pub probs: Vec<f64>,
    /// Children of each outcome as `(displacement, count)`.
    pub outcomes: Vec<Vec<(i64, u64)>>,
    /// Per displacement entry, `count·U(θⁿ⁺¹ξ, x+d+β)e^{−d}` (zero below the barrier).
    pub child_weights: Vec<Vec<f64>>,
    /// Sum of the unnormalized weights.
    pub normalizer: f64,
    /// `U(θⁿξ, x+β)`; the common factor `e^{−x}` is dropped from both sides.
    pub expected: f64,
}

impl SizeBiasedLaw {
    /// Probability that the spine moves to `x+d` given outcome `o` and entry `i`.
    pub fn selection(&self, o: usize, i: usize) -> f64 {
        let row = &self.child_weights[o];
        row[i] / row.iter().sum::<f64>()
    }
}

/// Outcome weights `p·Σ_v U(θⁿ⁺¹ξ, x+d_v+β)e^{−(x+d_v)}1{x+d_v ≥ −β}`, checked against the harmonic normalizer.
///
/// `state` is the law of generation `n+1`; `x` and `beta` are lattice indices.
pub fn size_biased_offspring_law(
    state: &PointProcessLaw,
    h: &Harmonic,
    n: usize,
    x: i64,
    beta: i64,
) -> Result<SizeBiasedLaw> {
    if x < -beta {
        return Err(Error::Contract("spine particle below the barrier".into()));
    }
    let step = h.lattice_step();
    let atoms = state.atoms(TAIL_EPS);
    let mut probs = Vec::with_capacity(atoms.len());
    let mut outcomes = Vec::with_capacity(atoms.len());
    let mut child_weights = Vec::with_capacity(atoms.len());
    let mut norm = Sum::new();
    let mut slack = Sum::new();
    for (p, children) in atoms {
        let mut row = Vec::with_capacity(children.len());
        let mut counts = Vec::with_capacity(children.len());
        let mut total = 0.0;
        for &(d, c) in &children {
            let y = x + d;
            let w = if y >= -beta {
                let e = c * exp(-(d as f64) * step);
                slack.add(p * e * h.err(n + 1, y + beta)?);
                e * h.u(n + 1, y + beta)?
            } else {
                0.0
            };
            row.push(w);
            counts.push((d, c as u64));
            total += w;
        }
        norm.add(p * total);
        probs.push(p * total);
        outcomes.push(counts);
        child_weights.push(row);
    }
    let normalizer = norm.value();
    let expected = h.u(n, x + beta)?;
    let bound = 10.0 * h.tol() * expected.max(1.0) + slack.value() + h.err(n, x + beta)?;
    if !(fabs(normalizer - expected) <= bound) {
        return Err(Error::NormalizerMismatch {
            got: normalizer,
            expected,
        });
    }
    for p in &mut probs {
        *p /= normalizer;
    }
    Ok(SizeBiasedLaw {
        probs,
        outcomes,
        child_weights,
        normalizer,
        expected,
    })
}

/// Trajectory of the spine and what it left behind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpineRecord {
    /// Spine positions `V(w₀), …, V(w_n)` in lattice units.
    pub positions: Vec<i64>,
    /// Displacements of the spine's siblings at each step as `(displacement, count)`.
    pub siblings: Vec<Vec<(i64, u64)>>,
    /// Probability with which the spine child was selected among its siblings.
    pub selection: Vec<f64>,
    /// `D_k^{(β)}/D_0^{(β)}` for the whole population; empty when only the spine is sampled.
    pub weights: Vec<f64>,
}

/// One spine step: returns the new position, the sibling multiset and the selection probability.
fn spine_step(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    n: usize,
    x: i64,
    rng: &mut RngStream,
) -> Result<(i64, Vec<(i64, u64)>, f64)> {
    let law = size_biased_offspring_law(path.state(n + 1), h, n, x, beta)?;
    let o = rng.categorical(&law.probs);
    let i = rng.categorical(&law.child_weights[o]);
    let sel = law.selection(o, i);
    let (d, _) = law.outcomes[o][i];
    let mut sib = law.outcomes[o].clone();
    sib[i].1 -= 1;
    sib.retain(|e| e.1 > 0);
    Ok((x + d, sib, sel))
}

/// Samples only the spine; its law does not depend on the rest of the tree.
pub fn sample_spine(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    n: usize,
    rng: &mut RngStream,
) -> Result<SpineRecord> {
    if a < -beta {
        return Err(Error::Contract("start below the barrier".into()));
    }
    let mut rec = SpineRecord {
        positions: vec![a],
        ..Default::default()
    };
    let mut x = a;
    for t in 0..n {
        let (y, sib, sel) = spine_step(path, h, beta, t, x, rng)?;
        rec.positions.push(y);
        rec.siblings.push(sib);
        rec.selection.push(sel);
        x = y;
    }
    Ok(rec)
}

/// Spinal tree to depth `n`: the spine reproduces size-biased, everyone else under the plain law.
///
/// Returns the population of every generation (spine included) and the spine record.
pub fn sample_spinal_tree(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    n: usize,
    rng: &mut RngStream,
    cap: u64,
) -> Result<(Vec<PopulationState>, SpineRecord)> {
    if a < -beta {
        return Err(Error::Contract("start below the barrier".into()));
    }
    let tables: Vec<OffspringTable> = path
        .law()
        .states()
        .iter()
        .map(|(_, s)| OffspringTable::new(s))
        .collect();
    let mut others = PopulationState::from_particles(&[], &[beta])?;
    let mut rec = SpineRecord {
        positions: vec![a],
        ..Default::default()
    };
    let mut full = PopulationState::single(a, &[beta]);
    let d0 = truncated_value(&full, h)?;
    rec.weights.push(1.0);
    let mut gens = vec![full];
    let mut x = a;
    for t in 0..n {
        others = evolve(&others, &tables[path.state_index(t + 1)], rng, cap)?;
        others.generation = t + 1;
        let (y, sib, sel) = spine_step(path, h, beta, t, x, rng)?;
        for &(d, c) in &sib {
            others.insert(x + d, 0, c)?;
        }
        full = others.clone();
        full.insert(y, 0, 1)?;
        if full.total() > cap {
            return Err(Error::PopulationCapExceeded {
                cap,
                count: full.total() as u128,
            });
        }
        rec.weights.push(truncated_value(&full, h)? / d0);
        rec.positions.push(y);
        rec.siblings.push(sib);
        rec.selection.push(sel);
        gens.push(full);
        x = y;
    }
    Ok((gens, rec))
}

fn truncated_value(pop: &PopulationState, h: &Harmonic) -> Result<f64> {
    let step = h.lattice_step();
    let beta = pop.betas()[0];
    let mut s = Sum::new();
    for ((x, class), k) in pop.cells() {
        if class == 0 {
            s.add(k as f64 * h.u(pop.generation, x + beta)? * exp(-(x as f64) * step));
        }
    }
    Ok(s.value())
}

/// A finite marked tree: generation `k` lists `(parent index in generation k−1, position)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MarkedTree {
    pub generations: Vec<Vec<(usize, i64)>>,
}

impl MarkedTree {
    pub fn depth(&self) -> usize {
        self.generations.len() - 1
    }

    /// Whether each vertex of the last generation kept its ancestry at or above `−beta`.
    pub fn survivors(&self, beta: i64) -> Vec<bool> {
        let mut alive: Vec<bool> = self.generations[0].iter().map(|v| v.1 >= -beta).collect();
        for g in &self.generations[1..] {
            alive = g.iter().map(|&(p, x)| alive[p] && x >= -beta).collect();
        }
        alive
    }

    /// `W_n` on the lattice with step `step`.
    pub fn w(&self, step: f64) -> f64 {
        self.generations[self.depth()]
            .iter()
            .map(|v| exp(-(v.1 as f64) * step))
            .sum()
    }

    /// `D_n^{(β)}` using the harmonic function of the unshifted environment.
    pub fn d_beta(&self, h: &Harmonic, beta: i64) -> Result<f64> {
        let n = self.depth();
        let step = h.lattice_step();
        let mut s = Sum::new();
        for (&(_, x), alive) in self.generations[n].iter().zip(self.survivors(beta)) {
            if alive {
                s.add(h.u(n, x + beta)? * exp(-(x as f64) * step));
            }
        }
        Ok(s.value())
    }
}

fn finite_outcomes(path: &EnvironmentPath, n: usize) -> Result<()> {
    for t in 1..=n {
        if !path.state(t).is_finite() {
            return Err(Error::UnsupportedTail(
                "exhaustive enumeration needs finite laws".into(),
            ));
        }
        if path.state(t).outcomes().len() > 64 {
            return Err(Error::EnumerationTooLarge {
                size: path.state(t).outcomes().len() as u128,
                cap: 64,
            });
        }
    }
    Ok(())
}

/// Every depth-`n` tree under the plain law with its probability.
pub fn enumerate_trees(path: &EnvironmentPath, a: i64, n: usize) -> Result<Vec<(MarkedTree, f64)>> {
    finite_outcomes(path, n)?;
    let mut trees = vec![(
        MarkedTree {
            generations: vec![vec![(0, a)]],
        },
        1.0,
    )];
    for t in 0..n {
        let outcomes = path.state(t + 1).outcomes();
        let mut next = Vec::new();
        for (tree, p) in &trees {
            let parents = &tree.generations[t];
            let size = (outcomes.len() as u128)
                .checked_pow(parents.len() as u32)
                .unwrap_or(u128::MAX);
            if size.saturating_add(next.len() as u128) > ENUMERATION_CAP {
                return Err(Error::EnumerationTooLarge {
                    size,
                    cap: ENUMERATION_CAP,
                });
            }
            let mut idx = vec![0usize; parents.len()];
            loop {
                let mut q = *p;
                let mut gen = Vec::new();
                for (i, &(_, x)) in parents.iter().enumerate() {
                    let o = &outcomes[idx[i]];
                    q *= o.prob;
                    gen.extend(o.children.iter().map(|&d| (i, x + d)));
                }
                let mut g = tree.clone();
                g.generations.push(gen);
                next.push((g, q));
                if !advance(&mut idx, outcomes.len()) {
                    break;
                }
            }
        }
        trees = next;
    }
    Ok(trees)
}

/// Every depth-`n` tree with a spine under the spinal construction, with its probability.
pub fn enumerate_spinal_trees(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    n: usize,
) -> Result<Vec<(MarkedTree, usize, f64)>> {
    finite_outcomes(path, n)?;
    if a < -beta {
        return Err(Error::Contract("start below the barrier".into()));
    }
    let mut trees = vec![(
        MarkedTree {
            generations: vec![vec![(0, a)]],
        },
        0usize,
        1.0,
    )];
    for t in 0..n {
        let outcomes = path.state(t + 1).outcomes();
        let mut next = Vec::new();
        for (tree, s, p) in &trees {
            let parents = &tree.generations[t];
            let sx = parents[*s].1;
            let law = size_biased_offspring_law(path.state(t + 1), h, t, sx, beta)?;
            // finite laws list outcomes in order, so atoms and outcomes align
            let spine_children: Vec<Vec<f64>> = outcomes
                .iter()
                .map(|o| {
                    o.children
                        .iter()
                        .map(|&d| {
                            let y = sx + d;
                            if y >= -beta {
                                Ok(h.u(t + 1, y + beta)? * exp(-(y as f64) * h.lattice_step()))
                            } else {
                                Ok(0.0)
                            }
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            let size = (outcomes.len() as u128)
                .checked_pow(parents.len() as u32)
                .unwrap_or(u128::MAX);
            if size.saturating_add(next.len() as u128) > ENUMERATION_CAP {
                return Err(Error::EnumerationTooLarge {
                    size,
                    cap: ENUMERATION_CAP,
                });
            }
            let mut idx = vec![0usize; parents.len()];
            loop {
                let mut q = *p;
                let mut gen = Vec::new();
                let mut spine_range = 0..0;
                for (i, &(_, x)) in parents.iter().enumerate() {
                    let oi = idx[i];
                    let o = &outcomes[oi];
                    if i == *s {
                        q *= law.probs[oi];
                        spine_range = gen.len()..gen.len() + o.children.len();
                    } else {
                        q *= o.prob;
                    }
                    gen.extend(o.children.iter().map(|&d| (i, x + d)));
                }
                if q > 0.0 {
                    let w = &spine_children[idx[*s]];
                    let tot: f64 = w.iter().sum();
                    for (j, &wj) in w.iter().enumerate() {
                        if wj > 0.0 {
                            let mut g = tree.clone();
                            g.generations.push(gen.clone());
                            next.push((g, spine_range.start + j, q * wj / tot));
                        }
                    }
                }
                if !advance(&mut idx, outcomes.len()) {
                    break;
                }
            }
        }
        trees = next;
    }
    Ok(trees)
}

fn advance(idx: &mut [usize], base: usize) -> bool {
    for d in idx.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Both sides of the change of measure at depth `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeOfMeasure {
    /// Expectation of `f` under the spinal construction.
    pub lhs: f64,
    /// `E[f·D_n^{(β)}]/(U(ξ, a+β)e^{−a})` under the plain law.
    pub rhs: f64,
    /// Certified slack from the harmonic values.
    pub slack: f64,
}

impl ChangeOfMeasure {
    pub fn residual(&self) -> f64 {
        fabs(self.lhs - self.rhs)
    }
}

pub fn change_of_measure_check(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    n: usize,
    f: &dyn Fn(&MarkedTree) -> f64,
) -> Result<ChangeOfMeasure> {
    let step = h.lattice_step();
    let d0 = h.u(0, a + beta)? * exp(-(a as f64) * step);
    let mut lhs = Sum::new();
    for (tree, _, q) in enumerate_spinal_trees(path, h, beta, a, n)? {
        lhs.add(q * f(&tree));
    }
    let mut rhs = Sum::new();
    for (tree, p) in enumerate_trees(path, a, n)? {
        if p > 0.0 {
            rhs.add(p * f(&tree) * tree.d_beta(h, beta)?);
        }
    }
    let slack = if h.is_closed_form() {
        0.0
    } else {
        10.0 * h.tol()
    };
    Ok(ChangeOfMeasure {
        lhs: lhs.value(),
        rhs: rhs.value() / d0,
        slack,
    })
}

/// Largest gap between the construction's conditional spine identity given the
/// tree and `U(θⁿξ, V(v)+β)e^{−V(v)}1{survived}/D_n^{(β)}`.
pub fn spine_posterior_check(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    n: usize,
) -> Result<f64> {
    let step = h.lattice_step();
    let mut by_tree: BTreeMap<MarkedTree, Vec<(usize, f64)>> = BTreeMap::new();
    for (tree, s, q) in enumerate_spinal_trees(path, h, beta, a, n)? {
        by_tree.entry(tree).or_default().push((s, q));
    }
    let mut worst: f64 = 0.0;
    for (tree, spines) in by_tree {
        let total: f64 = spines.iter().map(|e| e.1).sum();
        if total <= 0.0 {
            continue;
        }
        let d = tree.d_beta(h, beta)?;
        let alive = tree.survivors(beta);
        let mut posterior = vec![0.0; alive.len()];
        for (s, q) in spines {
            posterior[s] += q / total;
        }
        for (v, (&(_, x), ok)) in tree.generations[n].iter().zip(alive).enumerate() {
            let want = if ok {
                h.u(n, x + beta)? * exp(-(x as f64) * step) / d
            } else {
                0.0
            };
            worst = worst.max(fabs(posterior[v] - want));
        }
    }
    Ok(worst)
}

/// Exact spine marginal at generation `n`, enumerating outcomes and selections of the spine only.
pub fn spine_marginal(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    n: usize,
) -> Result<LatticeDistribution> {
    let step = h.lattice_step();
    let mut dist: BTreeMap<i64, f64> = BTreeMap::new();
    dist.insert(a, 1.0);
    for t in 0..n {
        let mut next: BTreeMap<i64, f64> = BTreeMap::new();
        for (&x, &p) in &dist {
            let law = size_biased_offspring_law(path.state(t + 1), h, t, x, beta)?;
            for (o, q) in law.probs.iter().enumerate() {
                if *q == 0.0 {
                    continue;
                }
                for (i, &(d, _)) in law.outcomes[o].iter().enumerate() {
                    let s = law.selection(o, i);
                    if s > 0.0 {
                        *next.entry(x + d).or_insert(0.0) += p * q * s;
                    }
                }
            }
        }
        dist = next;
    }
    let points: Vec<(i64, f64)> = dist.into_iter().collect();
    Ok(LatticeDistribution::from_points(step, &points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioned::{conditioned_marginal, DEFAULT_CEILING};
    use crate::env::{EnvironmentLaw, Outcome};
    use crate::walk::WalkEnv;
    use alloc::sync::Arc;
    use approx::assert_abs_diff_eq;

    fn path_of(law: EnvironmentLaw, seed: u64) -> EnvironmentPath {
        EnvironmentPath::realize(Arc::new(law), seed, 64)
    }

    fn pm1() -> EnvironmentPath {
        path_of(
            EnvironmentLaw::homogeneous(PointProcessLaw::pm1_recipe()),
            0,
        )
    }

    fn two_state() -> EnvironmentPath {
        let a = PointProcessLaw::pm1_recipe();
        let b = PointProcessLaw::boundary_recipe(1.0, &[(-1, 0.4), (0, 0.2), (1, 0.4)], 1).unwrap();
        path_of(EnvironmentLaw::new(vec![(0.5, a), (0.5, b)]).unwrap(), 9)
    }

    fn harmonic(path: &EnvironmentPath) -> Harmonic {
        Harmonic::new(WalkEnv::from_path(path).unwrap(), 1e-10, 10_000)
    }

    fn inert() -> EnvironmentPath {
        path_of(
            EnvironmentLaw::homogeneous(
                PointProcessLaw::new(1.0, vec![Outcome::new(1.0, vec![0])]).unwrap(),
            ),
            0,
        )
    }

    #[test]
    fn single_outcome_law() {
        let path = inert();
        let h = harmonic(&path);
        let sb = size_biased_offspring_law(path.state(1), &h, 0, 2, 0).unwrap();
        assert_eq!(sb.probs, vec![1.0]);
        assert_abs_diff_eq!(sb.normalizer, sb.expected, epsilon = 1e-15);
    }

    #[test]
    fn children_below_barrier_get_no_weight() {
        let path = pm1();
        let h = harmonic(&path);
        let sb = size_biased_offspring_law(path.state(1), &h, 0, 0, 0).unwrap();
        for (o, out) in sb.outcomes.iter().enumerate() {
            for (i, &(d, _)) in out.iter().enumerate() {
                if d < 0 {
                    assert_eq!(sb.child_weights[o][i], 0.0);
                }
            }
        }
    }

    #[test]
    fn far_above_the_barrier_weights_approach_plain_size_biasing() {
        let path = pm1();
        let h = harmonic(&path);
        let law = path.state(1);
        let sb = size_biased_offspring_law(law, &h, 0, 1_000_000, 0).unwrap();
        for (o, atom) in law.atoms(0.0).iter().enumerate() {
            let y: f64 = atom.1.iter().map(|&(d, c)| c * exp(-(d as f64))).sum();
            assert_abs_diff_eq!(sb.probs[o], atom.0 * y, epsilon = 1e-4);
        }
    }

    #[test]
    fn n1_fair_spine_goes_up() {
        let path = pm1();
        let h = harmonic(&path);
        let m = spine_marginal(&path, &h, 0, 0, 1).unwrap();
        assert_abs_diff_eq!(m.mass(1), 1.0, epsilon = 1e-15);
        let m0 = spine_marginal(&path, &h, 2, 3, 0).unwrap();
        assert_eq!(m0.mass(3), 1.0);
    }

    #[test]
    fn spine_marginal_matches_conditioned_walk() {
        for path in [pm1(), two_state()] {
            let h = harmonic(&path);
            for beta in [0, 2] {
                for n in 0..=4 {
                    let s = spine_marginal(&path, &h, beta, 0, n).unwrap();
                    let c = conditioned_marginal(&h, 0, n, beta, DEFAULT_CEILING).unwrap();
                    assert!(s.total_variation(&c) <= 1e-8, "beta={beta} n={n}");
                }
            }
        }
    }

    #[test]
    fn change_of_measure_and_posterior() {
        for path in [pm1(), two_state()] {
            let h = harmonic(&path);
            for beta in [0, 1] {
                for n in 0..=2 {
                    let one = change_of_measure_check(&path, &h, beta, 0, n, &|_| 1.0).unwrap();
                    assert!(
                        one.residual() <= 1e-8 && fabs(one.lhs - 1.0) <= 1e-10,
                        "{one:?}"
                    );
                    let w = change_of_measure_check(&path, &h, beta, 0, n, &|t| t.w(1.0)).unwrap();
                    assert!(w.residual() <= 1e-8, "{w:?}");
                    assert!(spine_posterior_check(&path, &h, beta, 0, n).unwrap() <= 1e-8);
                }
                let trees = enumerate_trees(&path, 0, 2).unwrap();
                let target = trees
                    .iter()
                    .rev()
                    .find(|(t, p)| *p > 0.0 && t.d_beta(&h, beta).unwrap() > 0.0)
                    .unwrap()
                    .0
                    .clone();
                let ind = change_of_measure_check(&path, &h, beta, 0, 2, &|t| {
                    (*t == target) as u8 as f64
                })
                .unwrap();
                assert!(ind.residual() <= 1e-8 && ind.lhs > 0.0);
            }
        }
    }

    #[test]
    fn inverse_weight_identity() {
        let path = two_state();
        let h = harmonic(&path);
        let beta = 0;
        let d0 = h.u(0, beta).unwrap();
        let mut lhs = 0.0;
        for (tree, _, q) in enumerate_spinal_trees(&path, &h, beta, 0, 2).unwrap() {
            lhs += q * d0 / tree.d_beta(&h, beta).unwrap();
        }
        let rhs: f64 = enumerate_trees(&path, 0, 2)
            .unwrap()
            .iter()
            .filter(|(t, _)| t.d_beta(&h, beta).unwrap() > 0.0)
            .map(|e| e.1)
            .sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn sampled_spine_stays_above_barrier() {
        let path = two_state();
        let h = harmonic(&path);
        let mut rng = RngStream::new(4, 0);
        for _ in 0..2000 {
            let r = sample_spine(&path, &h, 1, 0, 15, &mut rng).unwrap();
            assert!(r.positions.iter().all(|&x| x >= -1));
            assert!(r.selection.iter().all(|&s| s > 0.0 && s <= 1.0));
        }
    }

    #[test]
    fn spinal_tree_tracks_population_and_weights() {
        let path = pm1();
        let h = harmonic(&path);
        let mut rng = RngStream::new(8, 1);
        let (gens, rec) = sample_spinal_tree(&path, &h, 0, 0, 10, &mut rng, 1 << 40).unwrap();
        assert_eq!(gens.len(), 11);
        assert_eq!(rec.weights[0], 1.0);
        for (k, g) in gens.iter().enumerate() {
            assert_eq!(g.generation, k);
            assert!(g.cells().any(|((x, c), _)| x == rec.positions[k] && c == 0));
            assert!(rec.weights[k] > 0.0);
        }
        for (k, sib) in rec.siblings.iter().enumerate() {
            let grown: u64 = sib.iter().map(|e| e.1).sum();
            assert!(gens[k + 1].total() > grown);
        }
    }

    #[test]
    fn single_child_law_has_no_siblings() {
        let path = inert();
        let h = harmonic(&path);
        let mut rng = RngStream::new(1, 1);
        let r = sample_spine(&path, &h, 0, 2, 8, &mut rng).unwrap();
        assert!(r.siblings.iter().all(|s| s.is_empty()));
        assert!(r.positions.iter().all(|&x| x == 2));
        assert!(spine_posterior_check(&path, &h, 0, 2, 2).unwrap() <= 1e-15);
    }
}
