//! Branching population as a histogram over (position, barrier class), and its martingales.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, round};
use rand_distr::{Binomial, Distribution};

use crate::env::{EnvironmentPath, PointProcessLaw};
use crate::harmonic::Harmonic;
use crate::lattice::Sum;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Default bound on the total number of particles.
pub const DEFAULT_CAP: u64 = 10_000_000;

/// Tail shells with less than this much probability are dropped and the rest renormalized.
const TAIL_EPS: f64 = 1e-15;

/// Offspring outcomes of one state with integer child counts per displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringTable {
    pub probs: Vec<f64>,
    pub outcomes: Vec<Vec<(i64, u64)>>,
}

impl OffspringTable {
    pub fn new(law: &PointProcessLaw) -> Self {
        let atoms = law.atoms(TAIL_EPS);
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        let probs = atoms.iter().map(|a| a.0 / total).collect();
        let outcomes = atoms
            .into_iter()
            .map(|(_, c)| c.into_iter().map(|(x, k)| (x, round(k) as u64)).collect())
            .collect();
        Self { probs, outcomes }
    }
}

/// Particle counts keyed by `(position, class)`, where class `i` means the
/// ancestral path stayed at or above `−betas[i]` but not above `−betas[i−1]`;
/// class `betas.len()` means it breached every barrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationState {
    pub generation: usize,
    betas: Vec<i64>,
    cells: BTreeMap<(i64, usize), u64>,
    total: u64,
}

impl PopulationState {
    /// One particle at lattice position `a`; `betas` are barrier depths in lattice units.
    pub fn single(a: i64, betas: &[i64]) -> Self {
        let mut b = betas.to_vec();
        b.sort_unstable();
        b.dedup();
        let class = class_of(&b, a);
        let mut cells = BTreeMap::new();
        cells.insert((a, class), 1);
        Self {
            generation: 0,
            betas: b,
            cells,
            total: 1,
        }
    }

    pub fn from_particles(particles: &[(i64, usize)], betas: &[i64]) -> Result<Self> {
        let mut b = betas.to_vec();
        b.sort_unstable();
        b.dedup();
        let mut cells = BTreeMap::new();
        let mut total: u64 = 0;
        for &(x, class) in particles {
            let c = class.max(class_of(&b, x)).min(b.len());
            *cells.entry((x, c)).or_insert(0) += 1;
            total = total.checked_add(1).ok_or(Error::CountOverflow)?;
        }
        Ok(Self {
            generation: 0,
            betas: b,
            cells,
            total,
        })
    }

    /// Adds `count` particles at `x` whose ancestry is in `class`.
    pub fn insert(&mut self, x: i64, class: usize, count: u64) -> Result<()> {
        let c = class.max(class_of(&self.betas, x)).min(self.betas.len());
        let slot = self.cells.entry((x, c)).or_insert(0);
        *slot = slot.checked_add(count).ok_or(Error::CountOverflow)?;
        self.total = self.total.checked_add(count).ok_or(Error::CountOverflow)?;
        Ok(())
    }

    pub fn betas(&self) -> &[i64] {
        &self.betas
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cells(&self) -> impl Iterator<Item = ((i64, usize), u64)> + '_ {
        self.cells.iter().map(|(k, v)| (*k, *v))
    }

    pub fn min_position(&self) -> Option<i64> {
        self.cells.keys().map(|k| k.0).min()
    }

    /// Particles whose ancestry stayed at or above `−betas[i]`.
    pub fn survivors(&self, i: usize) -> u64 {
        self.cells
            .iter()
            .filter(|(k, _)| k.1 <= i)
            .map(|(_, v)| v)
            .sum()
    }
}

pub(crate) fn class_of(betas: &[i64], x: i64) -> usize {
    betas.iter().position(|&b| x >= -b).unwrap_or(betas.len())
}

/// Splits `k` particles over the outcomes by sequential binomial draws.
fn multinomial(k: u64, probs: &[f64], rng: &mut RngStream, out: &mut Vec<u64>) {
    out.clear();
    let mut left = k;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() || left == 0 {
            out.push(left);
            left = 0;
            continue;
        }
        let q = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let j = if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("valid binomial").sample(rng)
        };
        out.push(j);
        left -= j;
        mass -= p;
    }
}

/// One generation: every particle reproduces independently under `table`.
pub fn evolve(
    pop: &PopulationState,
    table: &OffspringTable,
    rng: &mut RngStream,
    cap: u64,
) -> Result<PopulationState> {
    let mut cells: BTreeMap<(i64, usize), u64> = BTreeMap::new();
    let mut total: u128 = 0;
    let mut draws = Vec::with_capacity(table.probs.len());
    for (&(x, class), &k) in &pop.cells {
        multinomial(k, &table.probs, rng, &mut draws);
        for (outcome, &j) in table.outcomes.iter().zip(&draws) {
            if j == 0 {
                continue;
            }
            for &(d, c) in outcome {
                let n = (j as u128) * (c as u128);
                total += n;
                if total > cap as u128 {
                    return Err(Error::PopulationCapExceeded { cap, count: total });
                }
                let y = x + d;
                let key = (y, class.max(class_of(&pop.betas, y)));
                let slot = cells.entry(key).or_insert(0);
                *slot = slot.checked_add(n as u64).ok_or(Error::CountOverflow)?;
            }
        }
    }
    Ok(PopulationState {
        generation: pop.generation + 1,
        betas: pop.betas.clone(),
        cells,
        total: total as u64,
    })
}

/// `W_n`, `D_n`, and `D_n^{(β)}` for each configured barrier.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleRow {
    pub n: usize,
    pub w: f64,
    pub d: f64,
    pub d_beta: Vec<f64>,
    pub min_position: Option<f64>,
    pub total: u64,
}

/// Martingale values at generation `pop.generation`; `h` is the harmonic function on the unshifted path.
pub fn martingales(pop: &PopulationState, h: &Harmonic) -> Result<MartingaleRow> {
    let step = h.lattice_step();
    let n = pop.generation;
    let mut w = Sum::new();
    let mut d = Sum::new();
    let mut db = vec![Sum::new(); pop.betas.len()];
    for (&(x, class), &k) in &pop.cells {
        let v = x as f64 * step;
        let e = k as f64 * exp(-v);
        w.add(e);
        d.add(v * e);
        for (i, &b) in pop.betas.iter().enumerate().skip(class) {
            db[i].add(h.u(n, x + b)? * e);
        }
    }
    Ok(MartingaleRow {
        n,
        w: w.value(),
        d: d.value(),
        d_beta: db.iter().map(Sum::value).collect(),
        min_position: pop.min_position().map(|x| x as f64 * step),
        total: pop.total,
    })
}

/// Residuals `|E[M_{n+1} | 𝓕_n] − M_n|` for `W`, `D`, `D^{(β)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepResiduals {
    pub w: f64,
    pub d: f64,
    pub d_beta: f64,
    /// Certified slack from the harmonic values.
    pub slack: f64,
}

/// Exact one-step check by enumerating every joint outcome of the listed particles.
///
/// Each particle is `(position, survived)`, where `survived` says whether its
/// ancestry stayed at or above `−beta`.
pub fn one_step_martingale_check(
    particles: &[(i64, bool)],
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    n: usize,
) -> Result<OneStepResiduals> {
    let law = path.state(n + 1);
    if !law.is_finite() {
        return Err(Error::UnsupportedTail(
            "exhaustive enumeration needs finite laws".into(),
        ));
    }
    let outcomes = law.outcomes();
    let size = (outcomes.len() as u128)
        .checked_pow(particles.len() as u32)
        .unwrap_or(u128::MAX);
    if size > 1_000_000 {
        return Err(Error::EnumerationTooLarge {
            size,
            cap: 1_000_000,
        });
    }
    let step = h.lattice_step();
    let value = |x: i64, alive: bool, t: usize| -> Result<(f64, f64, f64, f64)> {
        let v = x as f64 * step;
        let e = exp(-v);
        if alive && x >= -beta {
            Ok((e, v * e, h.u(t, x + beta)? * e, h.err(t, x + beta)? * e))
        } else {
            Ok((e, v * e, 0.0, 0.0))
        }
    };
    let mut before = (Sum::new(), Sum::new(), Sum::new());
    let mut slack = 0.0;
    for &(x, alive) in particles {
        let (a, b, c, s) = value(x, alive, n)?;
        before.0.add(a);
        before.1.add(b);
        before.2.add(c);
        slack += s;
    }
    let mut after = (Sum::new(), Sum::new(), Sum::new());
    let mut idx = vec![0usize; particles.len()];
    loop {
        let mut p = 1.0;
        let mut vals = (0.0, 0.0, 0.0, 0.0);
        for (i, &(x, alive)) in particles.iter().enumerate() {
            let alive = alive && x >= -beta;
            let o = &outcomes[idx[i]];
            p *= o.prob;
            for &c in &o.children {
                let y = x + c;
                let (a, b, cc, s) = value(y, alive, n + 1)?;
                vals.0 += a;
                vals.1 += b;
                vals.2 += cc;
                vals.3 += s;
            }
        }
        after.0.add(p * vals.0);
        after.1.add(p * vals.1);
        after.2.add(p * vals.2);
        slack += p * vals.3;
        // odometer over joint outcomes
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(OneStepResiduals {
                    w: fabs(after.0.value() - before.0.value()),
                    d: fabs(after.1.value() - before.1.value()),
                    d_beta: fabs(after.2.value() - before.2.value()),
                    slack,
                });
            }
            idx[k] += 1;
            if idx[k] < outcomes.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// One trial of the barrier connection probe: `D_n^{(β)}/(D_n + βW_n)` per generation, unless the population breaches `−β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionTrial {
    pub breached: bool,
    pub ratios: Vec<f64>,
}

pub fn connection_trial(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    horizon: usize,
    rng: &mut RngStream,
    cap: u64,
) -> Result<ConnectionTrial> {
    let tables: Vec<OffspringTable> = path
        .law()
        .states()
        .iter()
        .map(|(_, s)| OffspringTable::new(s))
        .collect();
    let mut pop = PopulationState::single(0, &[beta]);
    let bv = beta as f64 * h.lattice_step();
    let mut ratios = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        pop = evolve(&pop, &tables[path.state_index(t)], rng, cap)?;
        if pop.min_position().is_some_and(|m| m < -beta) {
            return Ok(ConnectionTrial {
                breached: true,
                ratios,
            });
        }
        let row = martingales(&pop, h)?;
        ratios.push(row.d_beta[0] / (row.d + bv * row.w));
    }
    Ok(ConnectionTrial {
        breached: false,
        ratios,
    })
}

/// Runs one population to `horizon`, returning the martingale row of every generation (including 0).
pub fn run_population(
    path: &EnvironmentPath,
    h: &Harmonic,
    betas: &[i64],
    horizon: usize,
    rng: &mut RngStream,
    cap: u64,
) -> Result<Vec<MartingaleRow>> {
    let tables: Vec<OffspringTable> = path
        .law()
        .states()
        .iter()
        .map(|(_, s)| OffspringTable::new(s))
        .collect();
    let mut pop = PopulationState::single(0, betas);
    let mut rows = vec![martingales(&pop, h)?];
    for t in 1..=horizon {
        pop = evolve(&pop, &tables[path.state_index(t)], rng, cap)?;
        rows.push(martingales(&pop, h)?);
    }
    Ok(rows)
}
