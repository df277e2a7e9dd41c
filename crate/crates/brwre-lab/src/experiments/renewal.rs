//! Renewal tables, their identities, and the occupation-series Monte Carlo check.

use std::sync::Arc;

use brwre_core::env::EnvironmentLaw;
use brwre_core::lattice::StepMeasure;
use brwre_core::renewal::{
    harmonic_identity_r_minus, killed_occupation_terms, killed_series_sample,
    occupation_identity_check, renewal_functions, tail_estimate, truncated_renewal_dp,
    truncated_renewal_enumeration, RenewalMethod, RenewalTable,
};
use brwre_core::Error;
use serde::Serialize;

use super::{draw_seed, harmonic, mean_and_se, par_trials, realize, trial_rng, Check};
use crate::config::{Method, RenewalParams};
use crate::error::LabResult;
use crate::output::{num, opt, Artifacts, Table};

/// Enumeration budget of the truncated path-decomposition route.
pub const ENUMERATION_CAP: u128 = 1 << 22;

#[derive(Debug, Clone, Serialize)]
pub struct OccupationRow {
    pub beta: i64,
    pub lo: i64,
    pub hi: i64,
    /// Killed-walk sum up to the horizon.
    pub lhs: f64,
    /// Integral against the occupation measure.
    pub rhs: f64,
    pub bound: f64,
    /// Integral against the shifted ascending-ladder measure `𝓡^{(β)}`.
    pub shifted_ladder: f64,
    /// `rhs / (hi − lo + 1)`, the sandwich ratio against Lebesgue measure shifted by `β`.
    pub sandwich_ratio: f64,
    pub pass: bool,
    pub shifted_ladder_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationCheck {
    pub horizon: usize,
    pub x_max: i64,
    pub max_diff_r_minus: f64,
    pub max_diff_r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesCheck {
    pub beta: i64,
    pub lo: i64,
    pub hi: i64,
    pub trials: usize,
    pub horizon: usize,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub occupation_integral: f64,
    pub shifted_ladder_integral: f64,
    pub tail_bound: f64,
    pub pass: bool,
    pub shifted_ladder_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewalSummary {
    pub x_max: i64,
    pub monotone: bool,
    pub max_identity_residual: f64,
    pub occupation: Vec<OccupationRow>,
    pub truncation: Option<TruncationCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_skipped: Option<String>,
    pub series: Vec<SeriesCheck>,
}

/// Dyadic intervals `[−β, 0], [1, 2], [3, 6], [7, 14], …` below `limit`.
pub fn dyadic_intervals(beta: i64, limit: i64) -> Vec<(i64, i64)> {
    let mut out = vec![(-beta, 0)];
    let mut lo = 1;
    let mut len = 2;
    while lo + len - 1 <= limit {
        out.push((lo, lo + len - 1));
        lo += len;
        len *= 2;
    }
    out
}

fn indicator(lo: i64, hi: i64, beta: i64) -> Vec<(i64, f64)> {
    (lo.max(-beta)..=hi).map(|x| (x, 1.0)).collect()
}

fn integral(g: &[(i64, f64)], f: impl Fn(i64) -> LabResult<f64>) -> LabResult<f64> {
    let mut s = 0.0;
    for &(x, w) in g {
        s += w * f(x)?;
    }
    Ok(s)
}

pub fn identity_residuals(table: &RenewalTable, step: &StepMeasure) -> LabResult<Vec<f64>> {
    let reach = step.max_index().max(0);
    let grid: Vec<i64> = (0..=table.x_max - reach).collect();
    Ok(harmonic_identity_r_minus(table, step, &grid)?)
}

pub fn truncation_check(
    step: &StepMeasure,
    x_max: i64,
    horizon: usize,
) -> LabResult<TruncationCheck> {
    let (dm, dr) = truncated_renewal_dp(step, x_max, horizon)?;
    let (em, er) = truncated_renewal_enumeration(step, x_max, horizon, ENUMERATION_CAP)?;
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    Ok(TruncationCheck {
        horizon,
        x_max,
        max_diff_r_minus: diff(&dm, &em),
        max_diff_r: diff(&dr, &er),
    })
}

/// Monte Carlo side of the occupation series on freshly drawn environments.
#[allow(clippy::too_many_arguments)]
pub fn series_check(
    law: &Arc<EnvironmentLaw>,
    table: &RenewalTable,
    beta: i64,
    lo: i64,
    hi: i64,
    trials: usize,
    horizon: usize,
    seed: u64,
) -> LabResult<SeriesCheck> {
    let g = indicator(lo, hi, beta);
    let samples = par_trials(trials, |i| {
        let path = realize(law, draw_seed(seed, i as u64));
        let h = harmonic(&path, 1e-10, 100_000)?;
        Ok(killed_series_sample(
            &h,
            beta,
            &g,
            horizon,
            &mut trial_rng(seed, i),
        )?)
    })?;
    let (mc_mean, mc_se) = mean_and_se(&samples);
    let occ = integral(&g, |x| Ok(table.occupation(x, beta)?))?;
    let lit = integral(&g, |x| Ok(table.measure_beta(x, beta)?))?;
    let terms = killed_occupation_terms(&law.annealed_step()?, beta, &g, horizon)?;
    let tail = tail_estimate(&terms);
    let allowed = 3.0 * mc_se + tail;
    Ok(SeriesCheck {
        beta,
        lo,
        hi,
        trials,
        horizon,
        mc_mean,
        mc_se,
        occupation_integral: occ,
        shifted_ladder_integral: lit,
        tail_bound: tail,
        pass: (mc_mean - occ).abs() <= allowed,
        shifted_ladder_pass: (mc_mean - lit).abs() <= allowed,
    })
}

pub fn renewal(
    law: &Arc<EnvironmentLaw>,
    p: &RenewalParams,
    seed: u64,
) -> LabResult<(RenewalSummary, Artifacts)> {
    let step = law.annealed_step()?;
    let method = match p.method {
        Method::Exact => RenewalMethod::Exact,
        Method::MonteCarlo => RenewalMethod::MonteCarlo {
            chains: p.chains,
            seed,
            step_budget: p.step_budget,
        },
    };
    let table = renewal_functions(law, p.x_max, method)?;
    let residuals = identity_residuals(&table, &step)?;
    let mut t = Table::new(
        "renewal",
        &[
            "x",
            "R_minus",
            "R",
            "u_minus",
            "u_plus",
            "R_minus_se",
            "R_se",
            "identity_residual",
        ],
    );
    let mut monotone = true;
    for x in 0..=p.x_max {
        let (rm, r) = (table.r_minus(x)?, table.r(x)?);
        if x > 0 && (rm < table.r_minus(x - 1)? || r < table.r(x - 1)? - 1e-12) {
            monotone = false;
        }
        let se = table
            .std_err
            .as_ref()
            .map(|(a, b)| (a[x as usize], b[x as usize]));
        t.push(vec![
            x.to_string(),
            num(rm),
            num(r),
            num(table.u_minus[x as usize]),
            num(table.u_plus[x as usize]),
            opt(se.map(|s| s.0)),
            opt(se.map(|s| s.1)),
            opt(residuals.get(x as usize).copied()),
        ]);
    }
    let mut occupation = Vec::new();
    let mut ot = Table::new(
        "occupation",
        &[
            "beta",
            "lo",
            "hi",
            "lhs",
            "rhs",
            "bound",
            "shifted_ladder",
            "sandwich_ratio",
            "pass",
        ],
    );
    for &beta in &p.betas.0 {
        for (lo, hi) in dyadic_intervals(beta, p.x_max - beta) {
            let g = indicator(lo, hi, beta);
            let c = occupation_identity_check(&step, &table, beta, &g, p.occupation_horizon)?;
            let lit = integral(&g, |x| Ok(table.measure_beta(x, beta)?))?;
            let row = OccupationRow {
                beta,
                lo,
                hi,
                lhs: c.lhs,
                rhs: c.rhs,
                bound: c.bound,
                shifted_ladder: lit,
                sandwich_ratio: c.rhs / g.len() as f64,
                pass: c.pass(),
                shifted_ladder_pass: (c.lhs - lit).abs() <= c.bound + 1e-12 * (1.0 + lit.abs()),
            };
            ot.push(vec![
                beta.to_string(),
                lo.to_string(),
                hi.to_string(),
                num(row.lhs),
                num(row.rhs),
                num(row.bound),
                num(row.shifted_ladder),
                num(row.sandwich_ratio),
                row.pass.to_string(),
            ]);
            occupation.push(row);
        }
    }
    let (truncation, truncation_skipped) = if p.truncation == 0 {
        (None, Some("disabled".to_string()))
    } else {
        match truncation_check(&step, p.x_max.min(p.truncation as i64), p.truncation) {
            Ok(c) => (Some(c), None),
            Err(crate::LabError::Core(e @ Error::EnumerationTooLarge { .. })) => {
                (None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        }
    };
    let mut series = Vec::new();
    if p.series_trials > 0 {
        let (lo, hi) = (
            p.series_interval.0[0],
            *p.series_interval.0.last().expect("non-empty"),
        );
        for &beta in &p.betas.0 {
            series.push(series_check(
                law,
                &table,
                beta,
                lo,
                hi,
                p.series_trials,
                p.series_horizon,
                seed,
            )?);
        }
    }
    let summary = RenewalSummary {
        x_max: p.x_max,
        monotone,
        max_identity_residual: residuals.iter().copied().fold(0.0, f64::max),
        occupation,
        truncation,
        truncation_skipped,
        series,
    };
    let mut art = Artifacts::default();
    art.table(t);
    art.table(ot);
    art.report("renewal_summary", &summary)?;
    Ok((summary, art))
}

/// Oracle comparison on the fair `±1` walk: `R⁻(x) = x + 1`, `R(x) = 2x − 1`.
pub fn fair_oracle_checks(table: &RenewalTable, tol: f64) -> LabResult<Vec<Check>> {
    let mut em = 0.0f64;
    let mut er = 0.0f64;
    for x in 0..=table.x_max {
        em = em.max((table.r_minus(x)? - (x as f64 + 1.0)).abs());
        if x >= 1 {
            er = er.max((table.r(x)? - (2.0 * x as f64 - 1.0)).abs());
        }
    }
    Ok(vec![
        Check::at_most("exact R⁻ vs x+1", em, tol),
        Check::at_most("exact R vs 2x−1", er, tol),
    ])
}
