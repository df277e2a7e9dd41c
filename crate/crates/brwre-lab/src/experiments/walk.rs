//! Environment validation, harmonic function tables, conditioned-walk marginals, many-to-one.

use std::sync::Arc;

use brwre_core::conditioned::{
    chained_marginal, conditioned_marginal, kernel_row, DEFAULT_CEILING,
};
use brwre_core::env::{boundary_check, validate_assumptions, EnvironmentLaw, EnvironmentPath};
use brwre_core::harmonic::{harmonic_residual, harmonic_u};
use brwre_core::walk::{many_to_one_check, WalkEnv};
use serde::Serialize;

use super::{draw_seed, harmonic, realize, Check};
use crate::config::{ConditionedParams, HarmonicParams, ValidateParams};
use crate::error::LabResult;
use crate::output::{num, Artifacts, Table};

#[derive(Debug, Clone, Serialize)]
pub struct StateValidation {
    pub prob: f64,
    pub log_laplace_1: f64,
    /// `|1 − Σ p Σ e^{−V}|`.
    pub mass_residual: f64,
    /// `|Σ p Σ V e^{−V}|`.
    pub tilted_mean_residual: f64,
    pub positive_part: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub tol: f64,
    pub states: Vec<StateValidation>,
    pub boundary_pass: bool,
    pub non_extinction: bool,
    pub branching: bool,
    pub moment_delta: f64,
    /// `E[Σ |V|^{2+δ} e^{−V}]`, absent when infinite.
    pub moment: Option<f64>,
    pub all_pass: bool,
}

pub fn validate(law: &EnvironmentLaw, p: &ValidateParams) -> ValidationReport {
    let b = boundary_check(law, p.tol);
    let a = validate_assumptions(law, p.delta, p.tol);
    let states = law
        .states()
        .iter()
        .zip(&b.residuals)
        .zip(&a.positive_part)
        .map(|(((prob, s), &(psi, tilted)), &pos)| {
            let psi_signed = s.log_laplace(1.0).unwrap_or(f64::INFINITY);
            StateValidation {
                prob: *prob,
                log_laplace_1: psi_signed,
                mass_residual: if psi.is_finite() {
                    psi_signed.exp_m1().abs()
                } else {
                    f64::INFINITY
                },
                tilted_mean_residual: tilted,
                positive_part: pos,
            }
        })
        .collect();
    ValidationReport {
        tol: p.tol,
        states,
        boundary_pass: b.pass,
        non_extinction: a.non_extinction,
        branching: a.branching,
        moment_delta: a.moment_delta,
        moment: a.moment,
        all_pass: a.all_pass(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicRow {
    pub y: i64,
    pub u: f64,
    pub error_bound: f64,
    pub horizon: usize,
    pub residual: f64,
}

/// `U(θⁿξ, y)` with certificates on one realized environment path.
pub fn harmonic_table(
    path: &EnvironmentPath,
    p: &HarmonicParams,
) -> LabResult<(Vec<HarmonicRow>, Artifacts)> {
    let walk = WalkEnv::from_path(path)?.shift(p.n);
    let mut t = Table::new(
        "harmonic",
        &["y", "U", "error_bound", "horizon", "residual"],
    );
    let mut rows = Vec::new();
    for &y in &p.y.0 {
        let v = harmonic_u(&walk, y, p.tol, p.max_horizon)?;
        let residual = harmonic_residual(&walk, y, p.tol, p.max_horizon)?;
        t.push(vec![
            y.to_string(),
            num(v.value),
            num(v.error_bound),
            v.horizon.to_string(),
            num(residual),
        ]);
        rows.push(HarmonicRow {
            y,
            u: v.value,
            error_bound: v.error_bound,
            horizon: v.horizon,
            residual,
        });
    }
    let mut art = Artifacts::default();
    art.table(t);
    Ok((rows, art))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionedSummary {
    pub beta: i64,
    pub max_tv: f64,
    /// Largest `|row sum − 1|` before renormalization over all visited rows.
    pub max_row_deviation: f64,
    pub rows_checked: usize,
}

/// Direct and kernel-chained marginals of the conditioned walk for `n ≤ horizon`.
pub fn conditioned(
    path: &EnvironmentPath,
    p: &ConditionedParams,
) -> LabResult<(Vec<ConditionedSummary>, Artifacts)> {
    let h = harmonic(path, p.tol, p.max_horizon)?;
    let mut t = Table::new("conditioned", &["beta", "n", "x", "direct", "chained"]);
    let mut out = Vec::new();
    for &beta in &p.betas.0 {
        let mut s = ConditionedSummary {
            beta,
            max_tv: 0.0,
            max_row_deviation: 0.0,
            rows_checked: 0,
        };
        for n in 0..=p.horizon {
            let direct = conditioned_marginal(&h, p.a, n, beta, DEFAULT_CEILING)?;
            let chained = chained_marginal(&h, p.a, n, beta, DEFAULT_CEILING)?;
            s.max_tv = s.max_tv.max(direct.total_variation(&chained));
            let lo = direct
                .min_index()
                .into_iter()
                .chain(chained.min_index())
                .min()
                .unwrap_or(p.a);
            let hi = direct
                .max_index()
                .into_iter()
                .chain(chained.max_index())
                .max()
                .unwrap_or(p.a);
            for x in lo..=hi {
                let (a, b) = (direct.mass(x), chained.mass(x));
                if a != 0.0 || b != 0.0 {
                    t.push(vec![
                        beta.to_string(),
                        n.to_string(),
                        x.to_string(),
                        num(a),
                        num(b),
                    ]);
                }
                if n < p.horizon && a > 0.0 {
                    let row = kernel_row(&h, n, x, beta)?;
                    s.max_row_deviation = s.max_row_deviation.max((row.raw_sum - 1.0).abs());
                    s.rows_checked += 1;
                }
            }
        }
        out.push(s);
    }
    let mut art = Artifacts::default();
    art.table(t);
    art.report("conditioned_summary", &out)?;
    Ok((out, art))
}

/// Many-to-one identity for a constant, a positive-part indicator and the running maximum.
pub fn many_to_one(
    law: &Arc<EnvironmentLaw>,
    seed: u64,
    depths: &[usize],
) -> LabResult<Vec<Check>> {
    let path = realize(law, draw_seed(seed, 0));
    let functionals: [(&str, &dyn Fn(&[f64]) -> f64); 3] = [
        ("constant", &|_| 1.0),
        ("positive_part_indicator", &|s| {
            if s.last().is_some_and(|&v| v > 0.0) {
                1.0
            } else {
                0.0
            }
        }),
        ("running_max", &|s| {
            s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }),
    ];
    let mut out = Vec::new();
    for &n in depths {
        for (name, f) in &functionals {
            let (lhs, rhs) = many_to_one_check(&path, 0, n, *f, 5_000_000)?;
            out.push(Check::at_most(
                format!("n={n} {name}"),
                (lhs - rhs).abs(),
                1e-12 * (1.0 + rhs.abs()),
            ));
        }
    }
    Ok(out)
}
