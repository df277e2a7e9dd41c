//! Branching population runs: martingale tracks, qualitative limit probes, one-step checks.

use std::sync::Arc;

use brwre_core::env::EnvironmentLaw;
use brwre_core::population::{
    connection_trial, one_step_martingale_check, run_population, MartingaleRow,
};
use brwre_core::tanaka::divergence_partial_sums;
use serde::Serialize;

use super::{draw_seed, harmonic, mean_and_se, median, par_trials, realize, trial_rng, Check};
use crate::config::{geometric, BrwreParams, DivergenceParams};
use crate::error::LabResult;
use crate::output::{num, opt, Artifacts, Table};
use crate::stats::wilson;

const HARMONIC_HORIZON: usize = 100_000;
/// Divergence probe: median late/early block ratio at or above this counts as growth.
pub const GROWTH_RATIO: f64 = 0.5;
/// Barrier-connection ratio window at the final horizon.
pub const CONNECTION_WINDOW: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, Serialize)]
pub struct ConnectionSummary {
    pub beta: i64,
    pub horizon: usize,
    pub trials: usize,
    pub breach_fraction: f64,
    /// Median of `D^{(β)}_n / (D_n + βW_n)` at the horizon over non-breaching trials.
    pub median_ratio: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationSummary {
    pub trials: usize,
    pub horizon: usize,
    pub early: usize,
    pub w_median_early: f64,
    pub w_median_final: f64,
    pub w_decay_pass: bool,
    pub epsilon: f64,
    /// Trials with `D_n > ε` at the horizon, with a 95% Wilson interval.
    pub d_positive_fraction: f64,
    pub d_positive_ci: (f64, f64),
    pub d_positive_pass: bool,
    /// Reported only; no sign guarantee holds at finite `n`.
    pub d_negative_fraction: f64,
    /// Median of the population minimum per generation.
    pub min_position_median: Vec<f64>,
    pub connection: Option<ConnectionSummary>,
}

/// Annealed population trials: trial `i` runs on environment draw `i`.
pub fn trials(
    law: &Arc<EnvironmentLaw>,
    p: &BrwreParams,
    seed: u64,
) -> LabResult<Vec<Vec<MartingaleRow>>> {
    par_trials(p.trials, |i| {
        let path = realize(law, draw_seed(seed, i as u64));
        let h = harmonic(&path, p.tol, HARMONIC_HORIZON)?;
        Ok(run_population(
            &path,
            &h,
            &p.betas.0,
            p.horizon,
            &mut trial_rng(seed, i),
            p.cap,
        )?)
    })
}

pub fn connection(
    law: &Arc<EnvironmentLaw>,
    p: &BrwreParams,
    beta: i64,
    seed: u64,
) -> LabResult<ConnectionSummary> {
    let runs = par_trials(p.trials, |i| {
        let path = realize(law, draw_seed(seed, i as u64));
        let h = harmonic(&path, p.tol, HARMONIC_HORIZON)?;
        Ok(connection_trial(
            &path,
            &h,
            beta,
            p.connection_horizon,
            &mut trial_rng(seed, i),
            p.cap,
        )?)
    })?;
    let finals: Vec<f64> = runs
        .iter()
        .filter(|r| !r.breached)
        .filter_map(|r| r.ratios.last().copied())
        .collect();
    let breached = runs.iter().filter(|r| r.breached).count();
    let median_ratio = (!finals.is_empty()).then(|| median(&finals));
    Ok(ConnectionSummary {
        beta,
        horizon: p.connection_horizon,
        trials: p.trials,
        breach_fraction: breached as f64 / p.trials as f64,
        median_ratio,
        pass: median_ratio.is_some_and(|m| m >= CONNECTION_WINDOW.0 && m <= CONNECTION_WINDOW.1),
    })
}

pub fn brwre(
    law: &Arc<EnvironmentLaw>,
    p: &BrwreParams,
    seed: u64,
) -> LabResult<(PopulationSummary, Artifacts)> {
    let runs = trials(law, p, seed)?;
    let mut header = vec!["trial".to_string(), "n".into(), "W".into(), "D".into()];
    header.extend(p.betas.0.iter().map(|b| format!("D_beta_{b}")));
    header.extend(["min_position".to_string(), "total".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new("brwre", &header);
    for (i, rows) in runs.iter().enumerate() {
        for r in rows {
            let mut line = vec![i.to_string(), r.n.to_string(), num(r.w), num(r.d)];
            line.extend(r.d_beta.iter().map(|&v| num(v)));
            line.extend([opt(r.min_position), r.total.to_string()]);
            t.push(line);
        }
    }
    let at = |n: usize| -> Vec<&MartingaleRow> { runs.iter().map(|rows| &rows[n]).collect() };
    let w_early = median(&at(p.early).iter().map(|r| r.w).collect::<Vec<_>>());
    let w_final = median(&at(p.horizon).iter().map(|r| r.w).collect::<Vec<_>>());
    let d_final: Vec<f64> = at(p.horizon).iter().map(|r| r.d).collect();
    let positive = d_final.iter().filter(|&&d| d > p.epsilon).count() as u64;
    let negative = d_final.iter().filter(|&&d| d < 0.0).count();
    let ci = wilson(positive, p.trials as u64, 0.95);
    let min_position_median = (0..=p.horizon)
        .map(|n| {
            median(
                &at(n)
                    .iter()
                    .filter_map(|r| r.min_position)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let connection = match p.connection_beta {
        Some(b) => Some(connection(law, p, b, seed)?),
        None => None,
    };
    let summary = PopulationSummary {
        trials: p.trials,
        horizon: p.horizon,
        early: p.early,
        w_median_early: w_early,
        w_median_final: w_final,
        w_decay_pass: w_final <= 0.5 * w_early,
        epsilon: p.epsilon,
        d_positive_fraction: positive as f64 / p.trials as f64,
        d_positive_ci: ci,
        d_positive_pass: ci.0 > 0.0,
        d_negative_fraction: negative as f64 / p.trials as f64,
        min_position_median,
        connection,
    };
    let mut art = Artifacts::default();
    art.table(t);
    art.report("brwre_summary", &summary)?;
    Ok((summary, art))
}

/// Sample mean of `W₁` against its exact value 1, within four standard errors.
pub fn w1_mean(law: &Arc<EnvironmentLaw>, seed: u64, n: usize, cap: u64) -> LabResult<Check> {
    let w = par_trials(n, |i| {
        let path = realize(law, draw_seed(seed, i as u64));
        let h = harmonic(&path, 1e-8, HARMONIC_HORIZON)?;
        Ok(run_population(&path, &h, &[], 1, &mut trial_rng(seed, i), cap)?[1].w)
    })?;
    let (m, se) = mean_and_se(&w);
    Ok(Check::at_most(
        "mean W_1 deviation in standard errors",
        (m - 1.0).abs() / se,
        4.0,
    ))
}

/// Exhaustive one-step conditional expectations of `W`, `D`, `D^{(β)}` on small populations.
pub fn one_step_checks(law: &Arc<EnvironmentLaw>, seed: u64, tol: f64) -> LabResult<Vec<Check>> {
    let populations: [&[(i64, bool)]; 5] = [
        &[(0, true)],
        &[(3, true)],
        &[(0, true), (2, true)],
        &[(-1, true), (1, true), (4, true)],
        &[(-3, true), (1, false), (2, true)],
    ];
    let mut out = Vec::new();
    for d in 0..2u64 {
        let path = realize(law, draw_seed(seed, d));
        let h = harmonic(&path, tol, HARMONIC_HORIZON)?;
        for n in [0, 1, 3] {
            for beta in [0, 2] {
                for (k, pop) in populations.iter().enumerate() {
                    let r = one_step_martingale_check(pop, &path, &h, beta, n)?;
                    let bound = 1e-8 + r.slack;
                    let name = |m: &str| format!("{m} draw={d} n={n} beta={beta} population={k}");
                    out.push(Check::at_most(name("W"), r.w, bound));
                    out.push(Check::at_most(name("D"), r.d, bound));
                    out.push(Check::at_most(name("D_beta"), r.d_beta, bound));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceRow {
    pub exponent: f64,
    /// Median over trials of (last block increment)/(first block increment).
    pub median_ratio: f64,
    pub median_final_sum: f64,
    pub growth: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceSummary {
    pub beta: i64,
    pub trials: usize,
    pub checkpoints: Vec<usize>,
    pub growth_ratio: f64,
    pub rows: Vec<DivergenceRow>,
    pub note: &'static str,
}

/// Partial sums of `Σ U(ξ,β) F(ζ_k)` with `F(x) = (1+x₊)^{−p}` along conditioned paths.
pub fn divergence(
    law: &Arc<EnvironmentLaw>,
    p: &DivergenceParams,
    seed: u64,
) -> LabResult<(DivergenceSummary, Artifacts)> {
    let checkpoints = geometric(p.first, p.horizon);
    let mut t = Table::new("divergence", &["exponent", "trial", "n", "partial_sum"]);
    let mut rows = Vec::new();
    for &e in &p.exponents.0 {
        let f = move |x: f64| (1.0 + x.max(0.0)).powf(-e);
        let sums = par_trials(p.trials, |i| {
            let path = realize(law, draw_seed(seed, i as u64));
            let h = harmonic(&path, p.tol, HARMONIC_HORIZON)?;
            Ok(divergence_partial_sums(
                &h,
                p.beta,
                &f,
                &checkpoints,
                &mut trial_rng(seed, i),
            )?)
        })?;
        let mut ratios = Vec::new();
        for (i, s) in sums.iter().enumerate() {
            for (&n, &v) in checkpoints.iter().zip(s) {
                t.push(vec![num(e), i.to_string(), n.to_string(), num(v)]);
            }
            let k = s.len();
            if k >= 3 {
                ratios.push((s[k - 1] - s[k - 2]) / (s[1] - s[0]));
            }
        }
        let median_ratio = median(&ratios);
        rows.push(DivergenceRow {
            exponent: e,
            median_ratio,
            median_final_sum: median(
                &sums
                    .iter()
                    .filter_map(|s| s.last().copied())
                    .collect::<Vec<_>>(),
            ),
            growth: median_ratio >= GROWTH_RATIO,
        });
    }
    let summary = DivergenceSummary {
        beta: p.beta,
        trials: p.trials,
        checkpoints,
        growth_ratio: GROWTH_RATIO,
        rows,
        note: "heuristic: blocks double in length, so a divergent sum keeps block increments of constant order while a convergent one shrinks them",
    };
    let mut art = Artifacts::default();
    art.table(t);
    art.report("divergence_summary", &summary)?;
    Ok((summary, art))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FloatList, IntList};
    use crate::envfile::builtin;

    fn params(trials: usize, horizon: usize) -> BrwreParams {
        BrwreParams {
            env: "x".into(),
            horizon,
            betas: IntList(vec![0, 2]),
            trials,
            cap: 1_000_000_000_000,
            epsilon: 0.05,
            early: 2,
            connection_beta: None,
            connection_horizon: 10,
            tol: 1e-8,
        }
    }

    #[test]
    fn initial_row_and_table_shape() {
        let law = builtin::boundary_pm1().build().unwrap();
        let p = params(8, 6);
        let (s, art) = brwre(&law, &p, 1).unwrap();
        assert_eq!(art.tables[0].rows.len(), 8 * 7);
        assert_eq!(art.tables[0].header.len(), 8);
        let runs = trials(&law, &p, 1).unwrap();
        for r in &runs {
            assert_eq!(r[0].w, 1.0);
            assert_eq!(r[0].d, 0.0);
            assert_eq!(r[0].d_beta, vec![1.0, 3.0]);
        }
        assert_eq!(s.min_position_median[0], 0.0);
    }

    #[test]
    fn one_step_residuals_vanish() {
        let law = builtin::two_state_mixed().build().unwrap();
        let checks = one_step_checks(&law, 2, 1e-8).unwrap();
        assert!(
            checks.iter().all(|c| c.pass),
            "{:?}",
            checks.iter().find(|c| !c.pass)
        );
    }

    #[test]
    fn w1_has_mean_one() {
        let law = builtin::two_state_same_step().build().unwrap();
        assert!(w1_mean(&law, 3, 20_000, 1_000_000).unwrap().pass);
    }

    #[test]
    fn divergence_probe_separates_exponents() {
        let law = builtin::boundary_pm1().build().unwrap();
        let p = DivergenceParams {
            env: "x".into(),
            beta: 0,
            exponents: FloatList(vec![2.0, 3.0]),
            trials: 40,
            first: 50,
            horizon: 3200,
            tol: 1e-8,
        };
        let (s, _) = divergence(&law, &p, 4).unwrap();
        assert!(s.rows[0].growth && !s.rows[1].growth, "{:?}", s.rows);
    }
}
