//! Per-subcommand parameters.
//!
//! Every parameter struct doubles as a clap argument group and a JSON
//! document. A `--config file.json` supplies values for any subset of the
//! keys; flags given explicitly on the command line take precedence, and
//! unknown keys are rejected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

/// Comma list or inclusive range of integers: `0,2,5` or `0..10`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntList(pub Vec<i64>);

impl FromStr for IntList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once("..") {
            let a: i64 = a
                .trim()
                .parse()
                .map_err(|e| format!("bad range start in {s:?}: {e}"))?;
            let b: i64 = b
                .trim()
                .trim_start_matches('=')
                .parse()
                .map_err(|e| format!("bad range end in {s:?}: {e}"))?;
            if b < a {
                return Err(format!("empty range {s:?}"));
            }
            return Ok(IntList((a..=b).collect()));
        }
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|e| format!("bad integer {t:?}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(IntList)
    }
}

impl fmt::Display for IntList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(i64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Comma list of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad number {t:?}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(FloatList)
    }
}

/// Geometric checkpoints `first, first·2, …` up to and including `last`.
pub fn geometric(first: usize, last: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = first.max(1);
    while n < last {
        out.push(n);
        n *= 2;
    }
    out.push(last);
    out
}

fn positive(name: &str, v: f64) -> LabResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::Config(format!(
            "{name} must be a positive finite number, got {v}"
        )))
    }
}

fn at_least_one(name: &str, v: usize) -> LabResult<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(LabError::Config(format!("{name} must be at least 1")))
    }
}

fn non_empty(name: &str, v: &[i64]) -> LabResult<()> {
    if v.is_empty() {
        Err(LabError::Config(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}

fn non_negative(name: &str, v: &[i64]) -> LabResult<()> {
    non_empty(name, v)?;
    if v.iter().any(|&b| b < 0) {
        return Err(LabError::Config(format!("{name} must be non-negative")));
    }
    Ok(())
}

pub trait Validate {
    fn validate(&self) -> LabResult<()>;
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateParams {
    /// Environment JSON file.
    #[arg(long)]
    pub env: PathBuf,
    /// Tolerance of the boundary-case equations.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Exponent offset δ in the `|V|^{2+δ}` moment.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
}

impl Validate for ValidateParams {
    fn validate(&self) -> LabResult<()> {
        positive("tol", self.tol)?;
        positive("delta", self.delta)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicParams {
    #[arg(long)]
    pub env: PathBuf,
    /// Barrier shifts `y` in lattice units: `0..10` or `0,1,5`.
    #[arg(long, default_value = "0..10")]
    pub y: IntList,
    /// Time index `n` of `U(θⁿξ, y)`.
    #[arg(long, default_value_t = 0)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_horizon: usize,
}

impl Validate for HarmonicParams {
    fn validate(&self) -> LabResult<()> {
        positive("tol", self.tol)?;
        non_negative("y", &self.y.0)?;
        at_least_one("max_horizon", self.max_horizon)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionedParams {
    #[arg(long)]
    pub env: PathBuf,
    /// Start position in lattice units.
    #[arg(long, default_value_t = 0)]
    pub a: i64,
    #[arg(long, default_value = "0,2")]
    pub betas: IntList,
    /// Largest time of the compared marginals.
    #[arg(long, default_value_t = 10)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_horizon: usize,
}

impl Validate for ConditionedParams {
    fn validate(&self) -> LabResult<()> {
        positive("tol", self.tol)?;
        non_negative("betas", &self.betas.0)?;
        at_least_one("horizon", self.horizon)?;
        if self.betas.0.iter().any(|&b| self.a < -b) {
            return Err(LabError::Config("start a lies below a barrier −β".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalParams {
    #[arg(long)]
    pub env: PathBuf,
    /// Largest lattice point of the renewal table.
    #[arg(long, default_value_t = 64)]
    pub x_max: i64,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    /// Ladder chains for the Monte Carlo method.
    #[arg(long, default_value_t = 10_000)]
    pub chains: usize,
    /// Walk-step budget per chain for the Monte Carlo method.
    #[arg(long, default_value_t = 1_000_000)]
    pub step_budget: u64,
    /// Barriers of the occupation-measure check.
    #[arg(long, default_value = "0,2")]
    pub betas: IntList,
    /// Horizon of the killed-walk side of the occupation check.
    #[arg(long, default_value_t = 4000)]
    pub occupation_horizon: usize,
    /// Ladder-epoch truncation of the path-enumeration comparison (0 disables it).
    #[arg(long, default_value_t = 16)]
    pub truncation: usize,
    /// Trials of the Monte Carlo side of the occupation-series check (0 disables it).
    #[arg(long, default_value_t = 0)]
    pub series_trials: usize,
    #[arg(long, default_value_t = 1000)]
    pub series_horizon: usize,
    /// Support of the indicator `G`: `lo..hi`, relative to the barrier origin.
    #[arg(long, default_value = "-2..2")]
    pub series_interval: IntList,
}

impl Validate for RenewalParams {
    fn validate(&self) -> LabResult<()> {
        if self.x_max < 1 {
            return Err(LabError::Config("x_max must be at least 1".into()));
        }
        non_negative("betas", &self.betas.0)?;
        at_least_one("occupation_horizon", self.occupation_horizon)?;
        at_least_one("series_horizon", self.series_horizon)?;
        non_empty("series_interval", &self.series_interval.0)?;
        if self.method == Method::MonteCarlo {
            at_least_one("chains", self.chains)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanakaParams {
    #[arg(long)]
    pub env: PathBuf,
    /// Uncensored excursions for the height-law test.
    #[arg(long, default_value_t = 100_000)]
    pub excursions: usize,
    /// Path length simulated per excursion; longer excursions are censored.
    #[arg(long, default_value_t = 256)]
    pub horizon: usize,
    /// Post-excursion increments used by the independence test (0 skips the test).
    #[arg(long, default_value_t = 2)]
    pub features: usize,
    /// Environment paths of the quenched independence test.
    #[arg(long, default_value_t = 4)]
    pub env_draws: usize,
    #[arg(long, default_value_t = 199)]
    pub permutations: usize,
    /// Largest `k` of the exact excursion identity.
    #[arg(long, default_value_t = 4)]
    pub k_max: usize,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

impl Validate for TanakaParams {
    fn validate(&self) -> LabResult<()> {
        at_least_one("excursions", self.excursions)?;
        at_least_one("horizon", self.horizon)?;
        at_least_one("env_draws", self.env_draws)?;
        if self.env_draws > 255 {
            return Err(LabError::Config("env_draws is limited to 255".into()));
        }
        at_least_one("permutations", self.permutations)?;
        positive("alpha", self.alpha)?;
        positive("tol", self.tol)?;
        if self.features >= self.horizon {
            return Err(LabError::Config(
                "features must be smaller than horizon".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceParams {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub beta: i64,
    /// Exponents `p` of `F(x) = (1 + x₊)^{−p}`.
    #[arg(long, default_value = "2,3")]
    pub exponents: FloatList,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// First checkpoint; later ones double up to `horizon`.
    #[arg(long, default_value_t = 50)]
    pub first: usize,
    #[arg(long, default_value_t = 12_800)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

impl Validate for DivergenceParams {
    fn validate(&self) -> LabResult<()> {
        at_least_one("trials", self.trials)?;
        at_least_one("horizon", self.horizon)?;
        at_least_one("first", self.first)?;
        positive("tol", self.tol)?;
        if self.beta < 0 {
            return Err(LabError::Config("beta must be non-negative".into()));
        }
        if self.exponents.0.iter().any(|&p| !(p > 0.0)) || self.exponents.0.is_empty() {
            return Err(LabError::Config("exponents must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrwreParams {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long, default_value_t = 45)]
    pub horizon: usize,
    #[arg(long, default_value = "0,2")]
    pub betas: IntList,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Hard limit on the particle count of one generation.
    #[arg(long, default_value_t = 1_000_000_000_000)]
    pub cap: u64,
    /// Threshold of the positive-limit fraction of `D_n`.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Earlier generation compared with the horizon in the `W_n` median probe.
    #[arg(long, default_value_t = 5)]
    pub early: usize,
    /// Barrier of the `D^{(β)}_n / (D_n + βW_n)` probe (omit to skip).
    #[arg(long)]
    pub connection_beta: Option<i64>,
    #[arg(long, default_value_t = 40)]
    pub connection_horizon: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

impl Validate for BrwreParams {
    fn validate(&self) -> LabResult<()> {
        at_least_one("horizon", self.horizon)?;
        at_least_one("trials", self.trials)?;
        non_negative("betas", &self.betas.0)?;
        positive("epsilon", self.epsilon)?;
        positive("tol", self.tol)?;
        at_least_one("connection_horizon", self.connection_horizon)?;
        if self.early > self.horizon {
            return Err(LabError::Config("early must not exceed horizon".into()));
        }
        if self.connection_beta.is_some_and(|b| b < 0) {
            return Err(LabError::Config(
                "connection_beta must be non-negative".into(),
            ));
        }
        if self.cap == 0 {
            return Err(LabError::Config("cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpineParams {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub beta: i64,
    #[arg(long, default_value_t = 0)]
    pub a: i64,
    /// Depth of the statistical spine-law test.
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Depth of the exact spine-marginal comparison.
    #[arg(long, default_value_t = 4)]
    pub exact_depth: usize,
    /// Depth of the exhaustive change-of-measure and posterior checks.
    #[arg(long, default_value_t = 2)]
    pub tree_depth: usize,
    /// Full spinal trees sampled for the weight table and the inverse-weight estimate.
    #[arg(long, default_value_t = 2000)]
    pub trees: usize,
    #[arg(long, default_value_t = 8)]
    pub tree_horizon: usize,
    #[arg(long, default_value_t = 100_000_000)]
    pub cap: u64,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

impl Validate for SpineParams {
    fn validate(&self) -> LabResult<()> {
        if self.beta < 0 || self.a < -self.beta {
            return Err(LabError::Config("need beta ≥ 0 and a ≥ −beta".into()));
        }
        at_least_one("samples", self.samples)?;
        at_least_one("depth", self.depth)?;
        at_least_one("tree_horizon", self.tree_horizon)?;
        positive("alpha", self.alpha)?;
        positive("tol", self.tol)?;
        if self.tree_depth > 2 {
            return Err(LabError::Config("tree_depth is capped at 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    L1,
    Degenerate,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionParams {
    #[arg(long)]
    pub env: PathBuf,
    /// Conditioned paths of the series probe (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = Variant::L1)]
    pub variant: Variant,
    /// Threshold `c` of the degenerate variant.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub beta: i64,
    #[arg(long, default_value_t = 10)]
    pub first: usize,
    #[arg(long, default_value_t = 5120)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

impl Validate for CriterionParams {
    fn validate(&self) -> LabResult<()> {
        positive("c", self.c)?;
        positive("tol", self.tol)?;
        at_least_one("horizon", self.horizon)?;
        at_least_one("first", self.first)?;
        if self.beta < 0 {
            return Err(LabError::Config("beta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Primary,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceParams {
    #[arg(long, value_enum, default_value_t = Suite::Primary)]
    pub suite: Suite,
    /// Run only these criteria (default: all).
    #[arg(long)]
    pub only: Option<IntList>,
    /// Directory holding the shipped environment files.
    #[arg(long, default_value = "envs")]
    pub envs: PathBuf,
}

impl Validate for AcceptanceParams {
    fn validate(&self) -> LabResult<()> {
        if let Some(o) = &self.only {
            if o.0.iter().any(|&c| !(1..=13).contains(&c)) {
                return Err(LabError::Config("criteria are numbered 1 to 13".into()));
            }
        }
        Ok(())
    }
}

/// Overlays a JSON config file onto parameters parsed from flags; keys whose
/// flag was given explicitly keep the command-line value.
pub fn merge<P>(
    from_flags: &P,
    file: Option<&serde_json::Value>,
    explicit: &[String],
) -> LabResult<P>
where
    P: Serialize + for<'de> Deserialize<'de> + Validate,
{
    let mut value = serde_json::to_value(from_flags)?;
    if let Some(file) = file {
        let obj = file
            .as_object()
            .ok_or_else(|| LabError::Config("config file must hold a JSON object".into()))?;
        let target = value
            .as_object_mut()
            .expect("parameter structs serialize to objects");
        for (k, v) in obj {
            if !explicit.iter().any(|e| e == k) {
                target.insert(k.clone(), v.clone());
            }
        }
    }
    let params: P =
        serde_json::from_value(value).map_err(|e| LabError::Config(format!("config: {e}")))?;
    params.validate()?;
    Ok(params)
}
