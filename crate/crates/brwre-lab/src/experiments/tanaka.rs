//! Excursion decomposition at the first prospective minimum.

use std::sync::Arc;

use brwre_core::env::EnvironmentLaw;
use brwre_core::rng::{tag, RngStream};
use brwre_core::tanaka::{
    first_ascent_height_law, first_ascent_law, sample_excursion, tanaka_identity_check, Excursion,
};
use serde::Serialize;

use super::{draw_seed, harmonic, par_trials, realize, trial_rng};
use crate::config::TanakaParams;
use crate::error::{LabError, LabResult};
use crate::output::{num, Artifacts, Table};
use crate::stats::{
    chi_square_two_sample, permutation_independence, Histogram, Reference, TestReport,
};

/// Histogram key of censored excursions.
pub const CENSORED: i64 = i64::MAX;
const BATCH: usize = 8192;
/// Joint `(ν, ζ_ν)` cells are keyed `ν·JOINT_STRIDE + ζ_ν`.
const JOINT_STRIDE: i64 = 1 << 20;
/// Offset separating quenched-test draws and trials from the annealed ones.
const QUENCHED_OFFSET: u64 = 1 << 32;
const HARMONIC_TOL: f64 = 1e-10;
const HARMONIC_HORIZON: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub u0: f64,
    /// `(ν, ζ_ν, post-ν increments)`, `None` when censored.
    pub record: Option<(usize, i64, Vec<i64>)>,
}

/// Draws excursions with trial indices `offset + i` until `target` are uncensored; returns all
/// attempts up to and including the last needed one.
fn collect(
    target: usize,
    offset: u64,
    draw: impl Fn(usize) -> LabResult<Sample> + Sync + Send,
) -> LabResult<Vec<Sample>> {
    let mut out: Vec<Sample> = Vec::new();
    let mut found = 0;
    let mut start = 0;
    loop {
        let batch = par_trials(BATCH, |i| draw(offset as usize + start + i))?;
        for s in batch {
            if s.record.is_some() {
                found += 1;
            }
            out.push(s);
            if found == target {
                return Ok(out);
            }
        }
        start += BATCH;
        if start > 1000 * target.max(BATCH) {
            return Err(LabError::CheckFailed(format!(
                "only {found} of {target} excursions uncensored"
            )));
        }
    }
}

fn to_sample(e: Excursion, u0: f64) -> Sample {
    match e {
        Excursion::Complete(r) => Sample {
            u0,
            record: Some((r.nu, r.height(), r.post)),
        },
        Excursion::Censored => Sample { u0, record: None },
    }
}

/// Annealed excursions: each trial draws its own environment.
pub fn annealed_excursions(
    law: &Arc<EnvironmentLaw>,
    seed: u64,
    target: usize,
    horizon: usize,
) -> LabResult<Vec<Sample>> {
    collect(target, 0, |i| {
        let path = realize(law, draw_seed(seed, i as u64));
        let h = harmonic(&path, HARMONIC_TOL, HARMONIC_HORIZON)?;
        let u0 = h.u(0, 0)?;
        Ok(to_sample(
            sample_excursion(&h, horizon, 0, &mut trial_rng(seed, i))?,
            u0,
        ))
    })
}

/// Quenched excursions on environment draw `d`, with `features` post-ν increments.
pub fn quenched_excursions(
    law: &Arc<EnvironmentLaw>,
    seed: u64,
    d: u64,
    target: usize,
    horizon: usize,
    features: usize,
) -> LabResult<Vec<Sample>> {
    let path = realize(law, draw_seed(seed, QUENCHED_OFFSET + d));
    let offset = (d + 1) * QUENCHED_OFFSET;
    collect(target, offset, |i| {
        let h = harmonic(&path, HARMONIC_TOL, HARMONIC_HORIZON)?;
        let u0 = h.u(0, 0)?;
        Ok(to_sample(
            sample_excursion(&h, horizon, features, &mut trial_rng(seed, i))?,
            u0,
        ))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IndependenceRow {
    pub draw: u64,
    pub feature_a: String,
    pub feature_b: String,
    pub report: TestReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct TanakaSummary {
    pub identity_max_residual: Vec<(usize, f64)>,
    pub identity_pass: bool,
    pub attempts: usize,
    pub uncensored: usize,
    pub censored_fraction: f64,
    /// Plug-in estimate of `E[U(ξ,0)]` used in the importance weights.
    pub u0_estimate: f64,
    pub height_test: TestReport,
    pub joint_test: TestReport,
    pub height_pass: bool,
    pub independence: Vec<IndependenceRow>,
    pub independence_pass: bool,
    /// `p` of the deliberately dependent pair `(ζ_ν, ζ_ν)`; should be minimal.
    pub power_sanity_p: Option<f64>,
}

pub fn identity(
    law: &Arc<EnvironmentLaw>,
    seed: u64,
    k_max: usize,
) -> LabResult<(Vec<(usize, f64)>, Table)> {
    let path = realize(law, draw_seed(seed, 0));
    let h = harmonic(&path, HARMONIC_TOL, HARMONIC_HORIZON)?;
    let mut t = Table::new("tanaka_identity", &["k", "x", "lhs", "rhs"]);
    let mut res = Vec::new();
    for k in 1..=k_max {
        let id = tanaka_identity_check(&h, k)?;
        for &(x, l, r) in &id.rows {
            t.push(vec![k.to_string(), x.to_string(), num(l), num(r)]);
        }
        res.push((k, id.max_residual()));
    }
    Ok((res, t))
}

/// Weighted excursion-height and joint `(ν, ζ_ν)` tests against the first weak ascending ladder law.
pub fn height_tests(
    law: &EnvironmentLaw,
    samples: &[Sample],
    horizon: usize,
) -> LabResult<(TestReport, TestReport, Table)> {
    let u0_hat = samples.iter().map(|s| s.u0).sum::<f64>() / samples.len() as f64;
    let mut heights = Histogram::new();
    let mut joint = Histogram::new();
    for s in samples {
        let w = s.u0 / u0_hat;
        match &s.record {
            Some((nu, x, _)) => {
                heights.add(*x, w);
                joint.add(*nu as i64 * JOINT_STRIDE + x, w);
            }
            None => {
                heights.add(CENSORED, w);
                joint.add(CENSORED, w);
            }
        }
    }
    let step = law.annealed_step()?;
    let (hl, tail) = first_ascent_height_law(&step, horizon)?;
    let mut exact: std::collections::BTreeMap<i64, f64> = hl.iter().copied().collect();
    exact.insert(CENSORED, tail);
    let (jl, jtail) = first_ascent_law(&step, horizon)?;
    let mut jexact: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for (k, x, p) in jl {
        *jexact.entry(k as i64 * JOINT_STRIDE + x).or_insert(0.0) += p;
    }
    jexact.insert(CENSORED, jtail);
    let mut t = Table::new(
        "excursion_heights",
        &["height", "weighted_frequency", "exact"],
    );
    let freq = heights.frequencies();
    let mut keys: Vec<i64> = freq.keys().chain(exact.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    for k in keys {
        let label = if k == CENSORED {
            "censored".to_string()
        } else {
            k.to_string()
        };
        t.push(vec![
            label,
            num(freq.get(&k).copied().unwrap_or(0.0)),
            num(exact.get(&k).copied().unwrap_or(0.0)),
        ]);
    }
    let ht = chi_square_two_sample(&heights, &Reference::Exact(exact))?.bonferroni(2);
    let jt = chi_square_two_sample(&joint, &Reference::Exact(jexact))?.bonferroni(2);
    Ok((ht, jt, t))
}

/// Quenched independence of `(ν, ζ_ν)` and the post-ν increments, one test per pair and draw.
pub fn independence(
    law: &Arc<EnvironmentLaw>,
    p: &TanakaParams,
    seed: u64,
) -> LabResult<(Vec<IndependenceRow>, Option<f64>)> {
    let per_draw = p.excursions.div_ceil(p.env_draws);
    let mut rows = Vec::new();
    let mut power = None;
    let family = p.env_draws * 2 * p.features;
    for d in 0..p.env_draws as u64 {
        let samples = quenched_excursions(law, seed, d, per_draw, p.horizon, p.features)?;
        let recs: Vec<&(usize, i64, Vec<i64>)> =
            samples.iter().filter_map(|s| s.record.as_ref()).collect();
        let mut jobs: Vec<(String, String, Vec<(f64, f64)>)> = Vec::new();
        for j in 0..p.features {
            let post = |r: &(usize, i64, Vec<i64>)| r.2[j] as f64;
            jobs.push((
                "nu".into(),
                format!("post_{}", j + 1),
                recs.iter().map(|r| (r.0 as f64, post(r))).collect(),
            ));
            jobs.push((
                "height".into(),
                format!("post_{}", j + 1),
                recs.iter().map(|r| (r.1 as f64, post(r))).collect(),
            ));
        }
        if d == 0 {
            jobs.push((
                "height".into(),
                "height".into(),
                recs.iter().map(|r| (r.1 as f64, r.1 as f64)).collect(),
            ));
        }
        let base = rows.len() as u64 + d * 64;
        let reports = par_trials(jobs.len(), |i| {
            let mut rng = RngStream::substream(seed, tag::PERMUTATION, base + i as u64);
            permutation_independence(&jobs[i].2, p.permutations, &mut rng)
        })?;
        for ((a, b, _), r) in jobs.into_iter().zip(reports) {
            if a == b {
                power = Some(r.p_value);
                continue;
            }
            rows.push(IndependenceRow {
                draw: d,
                feature_a: a,
                feature_b: b,
                report: r.bonferroni(family),
            });
        }
    }
    Ok((rows, power))
}

pub fn tanaka(
    law: &Arc<EnvironmentLaw>,
    p: &TanakaParams,
    seed: u64,
) -> LabResult<(TanakaSummary, Artifacts)> {
    let (identity_max_residual, it) = identity(law, seed, p.k_max)?;
    let samples = annealed_excursions(law, seed, p.excursions, p.horizon)?;
    let (height_test, joint_test, ht) = height_tests(law, &samples, p.horizon)?;
    let (rows, power) = if p.features > 0 {
        independence(law, p, seed)?
    } else {
        (Vec::new(), None)
    };
    let mut t = Table::new(
        "independence",
        &[
            "draw",
            "feature_a",
            "feature_b",
            "n",
            "statistic",
            "p_value",
            "threshold",
        ],
    );
    for r in &rows {
        t.push(vec![
            r.draw.to_string(),
            r.feature_a.clone(),
            r.feature_b.clone(),
            num(r.report.n_a),
            num(r.report.statistic),
            num(r.report.p_value),
            num(r.report.threshold(p.alpha)),
        ]);
    }
    let uncensored = samples.iter().filter(|s| s.record.is_some()).count();
    let summary = TanakaSummary {
        identity_pass: identity_max_residual.iter().all(|r| r.1 <= p.tol),
        identity_max_residual,
        attempts: samples.len(),
        uncensored,
        censored_fraction: 1.0 - uncensored as f64 / samples.len() as f64,
        u0_estimate: samples.iter().map(|s| s.u0).sum::<f64>() / samples.len() as f64,
        height_pass: height_test.passes(p.alpha) && joint_test.passes(p.alpha),
        height_test,
        joint_test,
        independence_pass: rows.iter().all(|r| r.report.passes(p.alpha)),
        independence: rows,
        power_sanity_p: power,
    };
    let mut art = Artifacts::default();
    art.table(it);
    art.table(ht);
    art.table(t);
    art.report("tanaka_summary", &summary)?;
    Ok((summary, art))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envfile::builtin;

    fn params(excursions: usize) -> TanakaParams {
        TanakaParams {
            env: "x".into(),
            excursions,
            horizon: 128,
            features: 2,
            env_draws: 2,
            permutations: 99,
            k_max: 3,
            alpha: 0.01,
            tol: 1e-9,
        }
    }

    #[test]
    fn fair_walk_excursions() {
        let law = builtin::boundary_pm1().build().unwrap();
        let (s, art) = tanaka(&law, &params(4000), 11).unwrap();
        assert!(s.identity_pass, "{:?}", s.identity_max_residual);
        assert_eq!(s.uncensored, 4000);
        assert!(s.height_pass, "{:?} {:?}", s.height_test, s.joint_test);
        assert!(s.independence_pass, "{:?}", s.independence);
        assert!(s.power_sanity_p.unwrap() <= 0.01);
        assert_eq!(art.tables.len(), 3);
    }

    #[test]
    fn collection_is_deterministic() {
        let law = builtin::two_state_mixed().build().unwrap();
        let a = annealed_excursions(&law, 3, 300, 64).unwrap();
        let b = annealed_excursions(&law, 3, 300, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|s| s.record.is_some()).count(), 300);
    }
}
