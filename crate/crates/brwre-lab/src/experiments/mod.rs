//! Experiment runners behind the subcommands and the acceptance suite.
//!
//! Trials run in parallel on rayon; each trial owns the random stream
//! `(seed, TRIAL, index)` and results are merged in trial order, so output
//! does not depend on the thread count.

pub mod criterion;
pub mod population;
pub mod renewal;
pub mod spine;
pub mod tanaka;
pub mod walk;

use std::sync::Arc;

use brwre_core::env::{EnvironmentLaw, EnvironmentPath};
use brwre_core::harmonic::Harmonic;
use brwre_core::rng::{tag, RngStream};
use brwre_core::walk::WalkEnv;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::LabResult;

/// Stored prefix of realized environment paths; later states are drawn on demand.
pub const PATH_PREFIX: usize = 1024;

/// One numerical comparison with its threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
            note: None,
        }
    }

    /// Passes when `value > threshold`.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value > threshold,
            note: None,
        }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value: pass as u8 as f64,
            threshold: 1.0,
            pass,
            note: None,
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Seed of the `i`-th independent environment draw.
pub fn draw_seed(seed: u64, i: u64) -> u64 {
    RngStream::substream(seed, tag::ENV_DRAW, i).next_u64()
}

pub fn realize(law: &Arc<EnvironmentLaw>, seed: u64) -> EnvironmentPath {
    EnvironmentPath::realize(law.clone(), seed, PATH_PREFIX)
}

pub fn harmonic(path: &EnvironmentPath, tol: f64, max_horizon: usize) -> LabResult<Harmonic> {
    Ok(Harmonic::new(WalkEnv::from_path(path)?, tol, max_horizon))
}

pub fn trial_rng(seed: u64, i: usize) -> RngStream {
    RngStream::substream(seed, tag::TRIAL, i as u64)
}

/// Runs `f(i)` for `i in 0..n` in parallel and returns results in index order;
/// the error of the smallest failing index wins.
pub fn par_trials<T, F>(n: usize, f: F) -> LabResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> LabResult<T> + Sync + Send,
{
    let results: Vec<LabResult<T>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

/// Like [`par_trials`], but each block of consecutive trials shares one state built by `init`
/// (for per-thread caches that cannot be shared).
pub fn par_trials_with<S, T, I, F>(n: usize, init: I, f: F) -> LabResult<Vec<T>>
where
    T: Send,
    I: Fn() -> LabResult<S> + Sync + Send,
    F: Fn(&S, usize) -> LabResult<T> + Sync + Send,
{
    const BLOCK: usize = 256;
    let blocks: Vec<LabResult<Vec<T>>> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let state = init()?;
            (b * BLOCK..((b + 1) * BLOCK).min(n))
                .map(|i| f(&state, i))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile; NaN for an empty slice.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
    }

    #[test]
    fn par_trials_keeps_order_and_first_error() {
        let v = par_trials(100, |i| Ok(i * 2)).unwrap();
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
        let e = par_trials(100, |i| {
            if i % 10 == 3 {
                Err(crate::LabError::CheckFailed(i.to_string()))
            } else {
                Ok(i)
            }
        });
        assert!(matches!(e, Err(crate::LabError::CheckFailed(s)) if s == "3"));
    }

    #[test]
    fn blocked_trials_keep_order() {
        let v = par_trials_with(1000, || Ok(7usize), |s, i| Ok(s + i)).unwrap();
        assert_eq!(v, (7..1007).collect::<Vec<_>>());
    }

    #[test]
    fn draw_seeds_differ() {
        assert_ne!(draw_seed(1, 0), draw_seed(1, 1));
        assert_eq!(draw_seed(1, 5), draw_seed(1, 5));
    }
}
