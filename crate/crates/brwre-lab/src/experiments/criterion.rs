//! Moment criterion for non-degeneracy of the derivative-martingale limit.

use std::sync::Arc;

use brwre_core::criterion::{
    conditioned_series_partial_sums, moment_criterion, CriterionReport, Moment, SeriesVariant,
};
use brwre_core::env::EnvironmentLaw;
use serde::Serialize;

use super::{draw_seed, harmonic, median, par_trials, realize, trial_rng, Check};
use crate::config::{geometric, CriterionParams, Variant};
use crate::error::LabResult;
use crate::output::{num, Artifacts, Table};

const HARMONIC_HORIZON: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentValue {
    Finite {
        value: f64,
    },
    /// Partial sums over shells `m ≤ M` grow like `M^exponent` (`log M` at 0).
    Infinite {
        exponent: f64,
    },
}

impl From<Moment> for MomentValue {
    fn from(m: Moment) -> Self {
        match m {
            Moment::Finite(value) => MomentValue::Finite { value },
            Moment::Infinite { exponent } => MomentValue::Infinite { exponent },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionSummary {
    pub y_log2_y: MomentValue,
    pub y_log_y: MomentValue,
    pub z_log_z: MomentValue,
    pub classification: &'static str,
    pub case_i: bool,
    pub case_ii: bool,
    pub case_iii: bool,
    pub note: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesSummary {
    pub variant: Variant,
    pub beta: i64,
    pub trials: usize,
    pub checkpoints: Vec<usize>,
    /// Median partial sum over trials at each checkpoint.
    pub median: Vec<f64>,
}

impl From<&CriterionReport> for CriterionSummary {
    fn from(r: &CriterionReport) -> Self {
        Self {
            y_log2_y: r.y_log2.into(),
            y_log_y: r.y_log.into(),
            z_log_z: r.z_log.into(),
            classification: if r.nondegenerate {
                "nondegenerate"
            } else {
                "degenerate"
            },
            case_i: r.case_i,
            case_ii: r.case_ii,
            case_iii: r.case_iii,
            note: CriterionReport::NOTE,
            series: None,
        }
    }
}

/// `(E[Y log₊² Y], E[Z log₊ Z])` by a direct sum over states and outcomes; `None` with a tail.
pub fn brute_force(law: &EnvironmentLaw) -> Option<(f64, f64)> {
    let mut y2 = 0.0;
    let mut z1 = 0.0;
    for (p, s) in law.states() {
        if s.tail().is_some() {
            return None;
        }
        let step = s.lattice_step();
        for o in s.outcomes() {
            let y: f64 = o.children.iter().map(|&d| (-(d as f64) * step).exp()).sum();
            let z: f64 = o
                .children
                .iter()
                .map(|&d| d as f64 * step)
                .filter(|&v| v >= 0.0)
                .map(|v| v * (-v).exp())
                .sum();
            let ly = if y > 1.0 { y.ln() } else { 0.0 };
            let lz = if z > 1.0 { z.ln() } else { 0.0 };
            y2 += p * o.prob * y * ly * ly;
            z1 += p * o.prob * z * lz;
        }
    }
    Some((y2, z1))
}

/// Agreement of the criterion's finite moments with [`brute_force`].
pub fn oracle_checks(name: &str, law: &EnvironmentLaw) -> LabResult<Vec<Check>> {
    let r = moment_criterion(law)?;
    let Some((y2, z1)) = brute_force(law) else {
        return Ok(Vec::new());
    };
    let diff = |m: Moment, v: f64| match m {
        Moment::Finite(x) => (x - v).abs(),
        Moment::Infinite { .. } => f64::INFINITY,
    };
    Ok(vec![
        Check::at_most(format!("{name} E[Y log+^2 Y]"), diff(r.y_log2, y2), 1e-12),
        Check::at_most(format!("{name} E[Z log+ Z]"), diff(r.z_log, z1), 1e-12),
    ])
}

pub fn criterion(
    law: &Arc<EnvironmentLaw>,
    p: &CriterionParams,
    seed: u64,
) -> LabResult<(CriterionSummary, Artifacts)> {
    let report = moment_criterion(law)?;
    let mut summary = CriterionSummary::from(&report);
    let mut art = Artifacts::default();
    if p.trials > 0 {
        let checkpoints = geometric(p.first, p.horizon);
        let variant = match p.variant {
            Variant::L1 => SeriesVariant::L1,
            Variant::Degenerate => SeriesVariant::Degenerate { c: p.c },
        };
        let sums = par_trials(p.trials, |i| {
            let path = realize(law, draw_seed(seed, i as u64));
            let h = harmonic(&path, p.tol, HARMONIC_HORIZON)?;
            Ok(conditioned_series_partial_sums(
                &path,
                &h,
                p.beta,
                variant,
                &checkpoints,
                &mut trial_rng(seed, i),
            )?)
        })?;
        let mut t = Table::new("criterion_series", &["trial", "n", "partial_sum"]);
        for (i, s) in sums.iter().enumerate() {
            for (&n, &v) in checkpoints.iter().zip(s) {
                t.push(vec![i.to_string(), n.to_string(), num(v)]);
            }
        }
        let med = (0..checkpoints.len())
            .map(|k| median(&sums.iter().map(|s| s[k]).collect::<Vec<_>>()))
            .collect();
        summary.series = Some(SeriesSummary {
            variant: p.variant,
            beta: p.beta,
            trials: p.trials,
            checkpoints,
            median: med,
        });
        art.table(t);
    }
    art.report("criterion", &summary)?;
    Ok((summary, art))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envfile::builtin;

    #[test]
    fn single_child_is_zero() {
        let law = builtin::single_child_at_zero().build().unwrap();
        let s = CriterionSummary::from(&moment_criterion(&law).unwrap());
        assert_eq!(s.y_log2_y, MomentValue::Finite { value: 0.0 });
        assert_eq!(s.z_log_z, MomentValue::Finite { value: 0.0 });
        assert_eq!(s.classification, "nondegenerate");
    }

    #[test]
    fn finite_laws_match_oracle() {
        for env in [
            builtin::boundary_pm1(),
            builtin::two_state_mixed(),
            builtin::two_state_same_step(),
        ] {
            let law = env.build().unwrap();
            let checks = oracle_checks(&env.name, &law).unwrap();
            assert_eq!(checks.len(), 2);
            assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        }
    }

    #[test]
    fn heavy_shell_is_case_one() {
        let law = builtin::shell_heavy().build().unwrap();
        let s = CriterionSummary::from(&moment_criterion(&law).unwrap());
        assert!(matches!(s.y_log2_y, MomentValue::Infinite { .. }));
        assert!(s.case_i && !s.case_ii && !s.case_iii);
        assert_eq!(s.classification, "degenerate");
        assert!(brute_force(&law).is_none());
    }

    #[test]
    fn series_probe_writes_table() {
        let law = builtin::boundary_pm1().build().unwrap();
        let p = CriterionParams {
            env: "x".into(),
            trials: 4,
            variant: Variant::L1,
            c: 1.0,
            beta: 0,
            first: 10,
            horizon: 80,
            tol: 1e-8,
        };
        let (s, art) = criterion(&law, &p, 1).unwrap();
        assert_eq!(s.series.unwrap().median.len(), 4);
        assert_eq!(art.tables[0].rows.len(), 16);
    }
}
