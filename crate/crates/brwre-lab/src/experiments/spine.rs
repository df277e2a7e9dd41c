//! Spinal decomposition checks under the truncated change of measure.

use std::collections::BTreeMap;
use std::sync::Arc;

use brwre_core::conditioned::{conditioned_marginal, DEFAULT_CEILING};
use brwre_core::env::{EnvironmentLaw, EnvironmentPath};
use brwre_core::harmonic::Harmonic;
use brwre_core::population::{evolve, martingales, OffspringTable, PopulationState};
use brwre_core::spine::{
    change_of_measure_check, enumerate_trees, sample_spinal_tree, sample_spine, spine_marginal,
    spine_posterior_check, MarkedTree,
};
use serde::Serialize;

use super::{draw_seed, harmonic, mean_and_se, par_trials_with, realize, trial_rng, Check};
use crate::config::SpineParams;
use crate::error::LabResult;
use crate::output::{num, Artifacts, Table};
use crate::stats::{chi_square_two_sample, Histogram, Reference, TestReport};

const HARMONIC_HORIZON: usize = 100_000;
/// Trial-index offset of the plain-law runs in the inverse-weight estimate.
const PLAIN_OFFSET: usize = 1 << 32;

#[derive(Debug, Clone, Serialize)]
pub struct SpineSummary {
    pub exact: Vec<Check>,
    pub change_of_measure: Vec<Check>,
    pub posterior: Vec<Check>,
    pub statistical: TestReport,
    pub statistical_pass: bool,
    /// Sampled spine positions below the barrier (always 0 by construction).
    pub below_barrier: usize,
    pub inverse_weight_mean: f64,
    pub inverse_weight_se: f64,
    /// Plain-law estimate of `P(D_n^{(β)} > 0)`, the target of the inverse-weight mean.
    pub survival: f64,
    pub survival_se: f64,
    pub inverse_weight_pass: bool,
}

/// Exact spine marginal against the conditioned-walk marginal for `n ≤ depth`.
pub fn exact_marginals(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    depth: usize,
) -> LabResult<Vec<Check>> {
    (0..=depth)
        .map(|n| {
            let s = spine_marginal(path, h, beta, a, n)?;
            let c = conditioned_marginal(h, a, n, beta, DEFAULT_CEILING)?;
            Ok(Check::at_most(
                format!("spine marginal TV n={n}"),
                s.total_variation(&c),
                1e-8,
            ))
        })
        .collect()
}

/// Change of measure for `f ≡ 1`, `f = W_n` and the indicator of one enumerated tree, for `1 ≤ n ≤ depth`.
pub fn change_of_measure(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    depth: usize,
) -> LabResult<Vec<Check>> {
    let step = h.lattice_step();
    let mut out = Vec::new();
    for n in 1..=depth {
        let trees = enumerate_trees(path, a, n)?;
        let target: Option<MarkedTree> = trees
            .iter()
            .find(|(t, p)| *p > 0.0 && t.d_beta(h, beta).is_ok_and(|d| d > 0.0))
            .map(|e| e.0.clone());
        let mut functionals: Vec<(&str, Box<dyn Fn(&MarkedTree) -> f64>)> = vec![
            ("constant", Box::new(|_| 1.0)),
            ("W_n", Box::new(move |t| t.w(step))),
        ];
        if let Some(target) = target {
            functionals.push((
                "tree_indicator",
                Box::new(move |t| if *t == target { 1.0 } else { 0.0 }),
            ));
        }
        for (name, f) in &functionals {
            let r = change_of_measure_check(path, h, beta, a, n, f.as_ref())?;
            out.push(Check::at_most(
                format!("change of measure {name} n={n}"),
                r.residual(),
                1e-8 + r.slack,
            ));
        }
    }
    Ok(out)
}

pub fn posterior(
    path: &EnvironmentPath,
    h: &Harmonic,
    beta: i64,
    a: i64,
    depth: usize,
) -> LabResult<Vec<Check>> {
    (1..=depth)
        .map(|n| {
            Ok(Check::at_most(
                format!("spine posterior n={n}"),
                spine_posterior_check(path, h, beta, a, n)?,
                1e-8,
            ))
        })
        .collect()
}

/// Chi-square test of sampled spine positions at `depth` against the conditioned marginal.
pub fn statistical(
    path: &EnvironmentPath,
    h: &Harmonic,
    p: &SpineParams,
    seed: u64,
) -> LabResult<(TestReport, usize, Table)> {
    let ends = par_trials_with(
        p.samples,
        || harmonic(path, p.tol, HARMONIC_HORIZON),
        |h, i| {
            let r = sample_spine(path, h, p.beta, p.a, p.depth, &mut trial_rng(seed, i))?;
            let below = r.positions.iter().any(|&x| x < -p.beta);
            Ok((*r.positions.last().expect("non-empty spine"), below))
        },
    )?;
    let mut hist = Histogram::new();
    for &(x, _) in &ends {
        hist.add_unit(x);
    }
    let below = ends.iter().filter(|e| e.1).count();
    let exact: BTreeMap<i64, f64> = conditioned_marginal(h, p.a, p.depth, p.beta, DEFAULT_CEILING)?
        .iter()
        .collect();
    let mut t = Table::new("spine_positions", &["x", "frequency", "conditioned"]);
    let freq = hist.frequencies();
    let mut keys: Vec<i64> = freq.keys().chain(exact.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    for k in keys {
        t.push(vec![
            k.to_string(),
            num(freq.get(&k).copied().unwrap_or(0.0)),
            num(exact.get(&k).copied().unwrap_or(0.0)),
        ]);
    }
    Ok((
        chi_square_two_sample(&hist, &Reference::Exact(exact))?,
        below,
        t,
    ))
}

/// Spinal-tree weights `D_k/D_0` and the inverse-weight identity `E_Q[D_0/D_n] = P(D_n > 0)`.
pub fn inverse_weight(
    path: &EnvironmentPath,
    p: &SpineParams,
    seed: u64,
) -> LabResult<((f64, f64), (f64, f64), Table)> {
    let recs = par_trials_with(
        p.trees,
        || harmonic(path, p.tol, HARMONIC_HORIZON),
        |h, i| {
            let (_, rec) = sample_spinal_tree(
                path,
                h,
                p.beta,
                p.a,
                p.tree_horizon,
                &mut trial_rng(seed, i),
                p.cap,
            )?;
            Ok(rec)
        },
    )?;
    let mut t = Table::new("spine_weights", &["tree", "k", "position", "weight"]);
    for (i, r) in recs.iter().enumerate() {
        for (k, (&x, &w)) in r.positions.iter().zip(&r.weights).enumerate() {
            t.push(vec![i.to_string(), k.to_string(), x.to_string(), num(w)]);
        }
    }
    let inv: Vec<f64> = recs
        .iter()
        .map(|r| 1.0 / r.weights.last().expect("weights start at 1"))
        .collect();
    let tables: Vec<OffspringTable> = path
        .law()
        .states()
        .iter()
        .map(|(_, s)| OffspringTable::new(s))
        .collect();
    let alive = par_trials_with(
        p.trees,
        || harmonic(path, p.tol, HARMONIC_HORIZON),
        |h, i| {
            let mut rng = trial_rng(seed, PLAIN_OFFSET + i);
            let mut pop = PopulationState::single(p.a, &[p.beta]);
            for k in 1..=p.tree_horizon {
                pop = evolve(&pop, &tables[path.state_index(k)], &mut rng, p.cap)?;
                if pop.survivors(0) == 0 {
                    return Ok(0.0);
                }
            }
            Ok(if martingales(&pop, h)?.d_beta[0] > 0.0 {
                1.0
            } else {
                0.0
            })
        },
    )?;
    Ok((mean_and_se(&inv), mean_and_se(&alive), t))
}

pub fn spine(
    law: &Arc<EnvironmentLaw>,
    p: &SpineParams,
    seed: u64,
) -> LabResult<(SpineSummary, Artifacts)> {
    let path = realize(law, draw_seed(seed, 0));
    let h = harmonic(&path, p.tol, HARMONIC_HORIZON)?;
    let exact = exact_marginals(&path, &h, p.beta, p.a, p.exact_depth)?;
    let change_of_measure = change_of_measure(&path, &h, p.beta, p.a, p.tree_depth)?;
    let posterior = posterior(&path, &h, p.beta, p.a, p.tree_depth)?;
    let (statistical, below_barrier, positions) = statistical(&path, &h, p, seed)?;
    let ((im, ise), (sm, sse), weights) = inverse_weight(&path, p, seed)?;
    let summary = SpineSummary {
        exact,
        change_of_measure,
        posterior,
        statistical_pass: statistical.passes(p.alpha),
        statistical,
        below_barrier,
        inverse_weight_mean: im,
        inverse_weight_se: ise,
        survival: sm,
        survival_se: sse,
        inverse_weight_pass: (im - sm).abs() <= 4.0 * (ise * ise + sse * sse).sqrt().max(1e-12),
    };
    let mut art = Artifacts::default();
    art.table(positions);
    art.table(weights);
    art.report("spine_summary", &summary)?;
    Ok((summary, art))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envfile::builtin;

    fn params() -> SpineParams {
        SpineParams {
            env: "x".into(),
            beta: 2,
            a: 0,
            depth: 8,
            samples: 4000,
            exact_depth: 4,
            tree_depth: 2,
            trees: 400,
            tree_horizon: 5,
            cap: 100_000_000,
            alpha: 0.01,
            tol: 1e-10,
        }
    }

    #[test]
    fn exact_checks_pass_on_mixed_environment() {
        let law = builtin::two_state_mixed().build().unwrap();
        let path = realize(&law, 7);
        let h = harmonic(&path, 1e-10, 10_000).unwrap();
        for c in exact_marginals(&path, &h, 2, 0, 4)
            .unwrap()
            .iter()
            .chain(&change_of_measure(&path, &h, 0, 0, 2).unwrap())
            .chain(&posterior(&path, &h, 2, 1, 2).unwrap())
        {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn tree_indicator_is_included() {
        let law = builtin::boundary_pm1().build().unwrap();
        let path = realize(&law, 1);
        let h = harmonic(&path, 1e-10, 10_000).unwrap();
        let checks = change_of_measure(&path, &h, 0, 0, 2).unwrap();
        assert_eq!(checks.len(), 6);
    }

    #[test]
    fn sampled_spine_matches_and_weights_invert() {
        let law = builtin::boundary_pm1().build().unwrap();
        let (s, art) = spine(&law, &params(), 3).unwrap();
        assert_eq!(s.below_barrier, 0);
        assert!(s.statistical_pass, "{:?}", s.statistical);
        assert!(s.inverse_weight_pass, "{s:?}");
        assert_eq!(art.tables.len(), 2);
    }
}
