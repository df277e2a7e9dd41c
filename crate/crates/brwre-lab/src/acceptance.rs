//! The primary acceptance suite: thirteen criteria, each a list of checks.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use brwre_core::criterion::{moment_criterion, Moment};
use brwre_core::env::{EnvironmentLaw, PointProcessLaw};
use brwre_core::harmonic::harmonic_residual;
use brwre_core::renewal::{renewal_functions, RenewalMethod};
use brwre_core::walk::WalkEnv;
use serde::Serialize;

use crate::config::{
    BrwreParams, ConditionedParams, DivergenceParams, FloatList, HarmonicParams, IntList, Method,
    RenewalParams, SpineParams, TanakaParams, ValidateParams,
};
use crate::envfile::EnvFile;
use crate::error::{LabError, LabResult};
use crate::experiments::{criterion, population, realize, renewal, spine, tanaka, walk, Check};
use crate::output::{num, Artifacts, Manifest, Table};

pub const TITLES: [&str; 13] = [
    "boundary validation",
    "harmonic oracle",
    "harmonic fixed point",
    "many-to-one",
    "conditioned-walk dual route",
    "renewal oracles",
    "occupation series",
    "excursion decomposition",
    "martingale one-step checks",
    "spinal decomposition",
    "moment criterion",
    "qualitative limit probes",
    "reproducibility",
];

/// Checks that fail for a documented reason: `(criterion, check-name fragment, reason)`.
pub const KNOWN_DEVIATIONS: &[(u8, &str, &str)] = &[(
    7,
    "shifted-ladder measure beta=2",
    "the beta-shifted ascending ladder measure is not the occupation measure of the walk killed below -beta when beta > 0",
)];

const ALPHA: f64 = 0.01;
const THREE_ENVS: [&str; 3] = ["boundary_pm1", "two_state_same_step", "two_state_mixed"];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn is_known(&self, c: &Check) -> bool {
        KNOWN_DEVIATIONS
            .iter()
            .any(|&(id, frag, _)| id == self.id && c.name.contains(frag))
    }

    /// Failing checks not listed in [`KNOWN_DEVIATIONS`].
    pub fn unexpected_failures(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| !c.pass && !self.is_known(c))
            .collect()
    }

    /// One status line: `PASS`, `FAIL` or `FAIL (known deviation)`.
    pub fn line(&self) -> String {
        let status = if self.pass() {
            "PASS".to_string()
        } else if self.unexpected_failures().is_empty() {
            "FAIL (known deviation)".to_string()
        } else {
            let first = &self.unexpected_failures()[0];
            format!(
                "FAIL [{}: {} vs {}]",
                first.name,
                num(first.value),
                num(first.threshold)
            )
        };
        let passed = self.checks.iter().filter(|c| c.pass).count();
        format!(
            "criterion {:>2} {:<30} {status} ({passed}/{} checks, {:.1}s)",
            self.id,
            self.title,
            self.checks.len(),
            self.seconds
        )
    }
}

struct Envs<'a>(&'a Path);

impl Envs<'_> {
    fn load(&self, name: &str) -> LabResult<Arc<EnvironmentLaw>> {
        EnvFile::load(&self.0.join(format!("{name}.json")))?.build()
    }
}

fn named(prefix: &str, checks: Vec<Check>) -> Vec<Check> {
    checks
        .into_iter()
        .map(|mut c| {
            c.name = format!("{prefix} {}", c.name);
            c
        })
        .collect()
}

fn boundary(envs: &Envs) -> LabResult<Vec<Check>> {
    let p = ValidateParams {
        env: "".into(),
        tol: 1e-9,
        delta: 1.0,
    };
    let ok = walk::validate(&*envs.load("boundary_pm1")?, &p);
    let bad = walk::validate(&*envs.load("deterministic_pm1")?, &p);
    let expected = (1.0 - ((-1f64).exp() + 1f64.exp())).abs();
    let reported = bad.states[0].mass_residual;
    Ok(vec![
        Check::flag("boundary_pm1 passes the boundary check", ok.boundary_pass),
        Check::flag(
            "deterministic_pm1 fails the boundary check",
            !bad.boundary_pass,
        ),
        Check::at_most(
            "deterministic_pm1 reported residual vs |1-(1/e+e)|",
            (reported - expected).abs(),
            1e-12,
        )
        .note(format!("reported residual {}", num(reported))),
    ])
}

fn harmonic_oracle(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let path = realize(&envs.load("boundary_pm1")?, seed);
    let p = HarmonicParams {
        env: "".into(),
        y: IntList((0..=10).collect()),
        n: 0,
        tol: 1e-6,
        max_horizon: 1_000_000,
    };
    let (rows, _) = walk::harmonic_table(&path, &p)?;
    let err = rows
        .iter()
        .map(|r| (r.u - (r.y as f64 + 1.0)).abs())
        .fold(0.0, f64::max);
    Ok(vec![Check::at_most(
        "max |U(y) - (y+1)| over y=0..10",
        err,
        1e-6,
    )])
}

fn harmonic_fixed_point(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let mut out = Vec::new();
    for name in THREE_ENVS {
        let path = realize(&envs.load(name)?, seed);
        let w = WalkEnv::from_path(&path)?;
        for beta in [0, 2] {
            for y in [0, 1, 2, 5] {
                let r = harmonic_residual(&w, y + beta, 1e-8, 1_000_000)?;
                out.push(Check::at_most(format!("{name} y={y} beta={beta}"), r, 3e-8));
            }
        }
    }
    Ok(out)
}

fn many_to_one(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let mut out = Vec::new();
    for name in THREE_ENVS {
        out.extend(named(
            name,
            walk::many_to_one(&envs.load(name)?, seed, &[1, 2, 3])?,
        ));
    }
    Ok(out)
}

fn conditioned(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let p = ConditionedParams {
        env: "".into(),
        a: 0,
        betas: IntList(vec![0, 2]),
        horizon: 10,
        tol: 1e-10,
        max_horizon: 1_000_000,
    };
    let mut out = Vec::new();
    for name in THREE_ENVS {
        let path = realize(&envs.load(name)?, seed);
        for s in walk::conditioned(&path, &p)?.0 {
            out.push(Check::at_most(
                format!("{name} beta={} TV n<=10", s.beta),
                s.max_tv,
                1e-8,
            ));
            out.push(Check::at_most(
                format!("{name} beta={} max |row sum - 1|", s.beta),
                s.max_row_deviation,
                1e-10,
            ));
        }
    }
    Ok(out)
}

fn renewal_oracles(envs: &Envs) -> LabResult<Vec<Check>> {
    let fair = envs.load("boundary_pm1")?;
    let table = renewal_functions(&fair, 256, RenewalMethod::Exact)?;
    let mut out = renewal::fair_oracle_checks(&table, 1e-9)?;
    let t = renewal::truncation_check(&fair.annealed_step()?, 18, 18)?;
    out.push(Check::at_most(
        "truncated R- DP vs ladder enumeration (18 epochs)",
        t.max_diff_r_minus,
        1e-9,
    ));
    out.push(Check::at_most(
        "truncated R DP vs ladder enumeration (18 epochs)",
        t.max_diff_r,
        1e-9,
    ));
    for name in THREE_ENVS {
        let law = envs.load(name)?;
        let table = renewal_functions(&law, 256, RenewalMethod::Exact)?;
        let r = renewal::identity_residuals(&table, &law.annealed_step()?)?;
        out.push(Check::at_most(
            format!("{name} harmonic identity of R- on 0..256"),
            r.iter().copied().fold(0.0, f64::max),
            1e-9,
        ));
    }
    Ok(out)
}

fn occupation_series(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let mut out = Vec::new();
    for name in ["boundary_pm1", "two_state_mixed"] {
        let law = envs.load(name)?;
        let table = renewal_functions(&law, 512, RenewalMethod::Exact)?;
        for beta in [0, 2] {
            for (lo, hi) in [(-2, 2), (3, 8)] {
                let s = renewal::series_check(&law, &table, beta, lo, hi, 100_000, 1000, seed)?;
                let allowed = 3.0 * s.mc_se + s.tail_bound;
                let label = format!("{name} beta={beta} G=1[{lo},{hi}]");
                out.push(
                    Check::at_most(
                        format!("occupation measure {label}"),
                        (s.mc_mean - s.occupation_integral).abs(),
                        allowed,
                    )
                    .note(format!("mc {} ± {}", num(s.mc_mean), num(s.mc_se))),
                );
                out.push(Check::at_most(
                    format!("shifted-ladder measure beta={beta} {name} G=1[{lo},{hi}]"),
                    (s.mc_mean - s.shifted_ladder_integral).abs(),
                    allowed,
                ));
            }
        }
    }
    Ok(out)
}

fn excursions(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let mut out = Vec::new();
    for name in ["boundary_pm1", "two_state_same_step"] {
        let p = TanakaParams {
            env: "".into(),
            excursions: 100_000,
            horizon: 256,
            features: 2,
            env_draws: 4,
            permutations: 199,
            k_max: 4,
            alpha: ALPHA,
            tol: 1e-8,
        };
        let (s, _) = tanaka::tanaka(&envs.load(name)?, &p, seed)?;
        for (k, r) in &s.identity_max_residual {
            out.push(Check::at_most(
                format!("{name} exact identity k={k}"),
                *r,
                1e-8,
            ));
        }
        out.push(Check::above(
            format!("{name} height chi-square p"),
            s.height_test.p_value,
            s.height_test.threshold(ALPHA),
        ));
        out.push(Check::above(
            format!("{name} (nu, height) chi-square p"),
            s.joint_test.p_value,
            s.joint_test.threshold(ALPHA),
        ));
        for r in &s.independence {
            out.push(Check::above(
                format!(
                    "{name} draw={} {} vs {} permutation p",
                    r.draw, r.feature_a, r.feature_b
                ),
                r.report.p_value,
                r.report.threshold(ALPHA),
            ));
        }
        if let Some(pw) = s.power_sanity_p {
            out.push(Check::at_most(
                format!("{name} dependent pair is detected"),
                pw,
                ALPHA,
            ));
        }
    }
    Ok(out)
}

fn one_step(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let mut out = Vec::new();
    for name in THREE_ENVS {
        out.extend(named(
            name,
            population::one_step_checks(&envs.load(name)?, seed, 1e-10)?,
        ));
    }
    Ok(out)
}

fn spinal(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let mut out = Vec::new();
    for name in ["boundary_pm1", "two_state_mixed"] {
        for (beta, a) in [(0, 0), (2, 0)] {
            let p = SpineParams {
                env: "".into(),
                beta,
                a,
                depth: 20,
                samples: 100_000,
                exact_depth: 4,
                tree_depth: 2,
                trees: 2000,
                tree_horizon: 6,
                cap: 100_000_000,
                alpha: ALPHA,
                tol: 1e-10,
            };
            let (s, _) = spine::spine(&envs.load(name)?, &p, seed)?;
            let label = format!("{name} beta={beta}");
            out.extend(named(&label, s.exact));
            out.extend(named(&label, s.change_of_measure));
            out.extend(named(&label, s.posterior));
            out.push(Check::above(
                format!("{label} spine at n=20 chi-square p"),
                s.statistical.p_value,
                s.statistical.threshold(ALPHA),
            ));
            out.push(Check::at_most(
                format!("{label} spine positions below barrier"),
                s.below_barrier as f64,
                0.0,
            ));
        }
    }
    Ok(out)
}

fn moment(envs: &Envs) -> LabResult<Vec<Check>> {
    let mut out = Vec::new();
    let zero = moment_criterion(&*envs.load("single_child_at_zero")?)?;
    let val = |m: Moment| match m {
        Moment::Finite(v) => v,
        Moment::Infinite { .. } => f64::INFINITY,
    };
    out.push(Check::at_most(
        "single child at 0: E[Y log+^2 Y]",
        val(zero.y_log2),
        0.0,
    ));
    out.push(Check::at_most(
        "single child at 0: E[Z log+ Z]",
        val(zero.z_log),
        0.0,
    ));
    for name in THREE_ENVS {
        out.extend(criterion::oracle_checks(name, &*envs.load(name)?)?);
    }
    let heavy = moment_criterion(&*envs.load("shell_heavy")?)?;
    out.push(Check::flag(
        "shell alpha=2.5: E[Y log+^2 Y] infinite",
        !heavy.y_log2.is_finite(),
    ));
    out.push(Check::flag(
        "shell alpha=2.5: case i only",
        heavy.case_i && !heavy.case_ii && !heavy.case_iii,
    ));
    let light = moment_criterion(&*envs.load("shell_light")?)?;
    out.push(Check::flag(
        "shell alpha=4: nondegenerate",
        light.nondegenerate,
    ));
    let heavier = EnvironmentLaw::homogeneous(PointProcessLaw::shell_boundary(1.0, 1.8, 1.0, 0)?);
    let r = moment_criterion(&heavier)?;
    out.push(Check::flag(
        "shell alpha=1.8: E[Y log+ Y] infinite, case ii",
        r.case_ii && !r.case_i && !r.y_log.is_finite(),
    ));
    Ok(out)
}

fn limit_probes(envs: &Envs, seed: u64) -> LabResult<Vec<Check>> {
    let law = envs.load("boundary_pm1")?;
    let mut p = BrwreParams {
        env: "".into(),
        horizon: 45,
        betas: IntList(vec![0]),
        trials: 200,
        cap: 1_000_000_000_000,
        epsilon: 0.05,
        early: 5,
        connection_beta: None,
        connection_horizon: 40,
        tol: 1e-8,
    };
    let (w, _) = population::brwre(&law, &p, seed)?;
    p.horizon = 40;
    p.trials = 500;
    let (d, _) = population::brwre(&law, &p, seed)?;
    let q = DivergenceParams {
        env: "".into(),
        beta: 0,
        exponents: FloatList(vec![2.0, 3.0]),
        trials: 100,
        first: 50,
        horizon: 12_800,
        tol: 1e-8,
    };
    let (div, _) = population::divergence(&law, &q, seed)?;
    Ok(vec![
        Check::at_most(
            "median W_45 / median W_5",
            w.w_median_final / w.w_median_early,
            0.5,
        ),
        Check::above(
            "Wilson lower bound of P(D_40 > 0.05)",
            d.d_positive_ci.0,
            0.0,
        )
        .note(format!("negative fraction {}", num(d.d_negative_fraction))),
        Check::above(
            "F=(1+x+)^-2 late/early block ratio (growth)",
            div.rows[0].median_ratio,
            population::GROWTH_RATIO,
        )
        .note("heuristic threshold"),
        Check::at_most(
            "F=(1+x+)^-3 late/early block ratio (plateau)",
            div.rows[1].median_ratio,
            population::GROWTH_RATIO,
        )
        .note("heuristic threshold"),
    ])
}

/// Reduced-scale runs of the artifact-producing commands; returns their manifest.
pub fn reproducibility_probe(envs: &Path, seed: u64) -> LabResult<Manifest> {
    let envs = Envs(envs);
    let fair = envs.load("boundary_pm1")?;
    let mixed = envs.load("two_state_mixed")?;
    let mut art = Artifacts::default();
    let b = BrwreParams {
        env: "".into(),
        horizon: 15,
        betas: IntList(vec![0, 2]),
        trials: 24,
        cap: 1_000_000_000_000,
        epsilon: 0.05,
        early: 3,
        connection_beta: Some(4),
        connection_horizon: 10,
        tol: 1e-8,
    };
    art.extend(population::brwre(&mixed, &b, seed)?.1);
    let t = TanakaParams {
        env: "".into(),
        excursions: 3000,
        horizon: 128,
        features: 2,
        env_draws: 2,
        permutations: 49,
        k_max: 2,
        alpha: ALPHA,
        tol: 1e-8,
    };
    art.extend(tanaka::tanaka(&fair, &t, seed)?.1);
    let s = SpineParams {
        env: "".into(),
        beta: 1,
        a: 0,
        depth: 10,
        samples: 3000,
        exact_depth: 2,
        tree_depth: 1,
        trees: 300,
        tree_horizon: 4,
        cap: 100_000_000,
        alpha: ALPHA,
        tol: 1e-10,
    };
    art.extend(spine::spine(&mixed, &s, seed)?.1);
    let r = RenewalParams {
        env: "".into(),
        x_max: 32,
        method: Method::Exact,
        chains: 1,
        step_budget: 1,
        betas: IntList(vec![0, 2]),
        occupation_horizon: 500,
        truncation: 0,
        series_trials: 2000,
        series_horizon: 200,
        series_interval: IntList(vec![-2, 2]),
    };
    art.extend(renewal::renewal(&mixed, &r, seed)?.1);
    let d = DivergenceParams {
        env: "".into(),
        beta: 1,
        exponents: FloatList(vec![2.0]),
        trials: 16,
        first: 25,
        horizon: 400,
        tol: 1e-8,
    };
    art.extend(population::divergence(&mixed, &d, seed)?.1);
    Manifest::build(
        "reproducibility-probe",
        seed,
        serde_json::Value::Null,
        &art.files()?,
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> LabResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn reproducibility(envs: &Path, seed: u64) -> LabResult<Vec<Check>> {
    let one = in_pool(1, || reproducibility_probe(envs, seed))??;
    let eight = in_pool(8, || reproducibility_probe(envs, seed))??;
    let one_again = in_pool(1, || reproducibility_probe(envs, seed))??;
    let eight_again = in_pool(8, || reproducibility_probe(envs, seed))??;
    Ok(vec![
        Check::flag(
            "1 vs 8 threads: identical file hashes",
            one.digest() == eight.digest(),
        )
        .note(format!("{} files", one.files.len())),
        Check::flag(
            "repeat run (1 thread): identical file hashes",
            one.digest() == one_again.digest(),
        ),
        Check::flag(
            "repeat run (8 threads): identical file hashes",
            eight.digest() == eight_again.digest(),
        ),
    ])
}

pub fn run_criterion(id: u8, envs: &Path, seed: u64) -> LabResult<Vec<Check>> {
    let e = Envs(envs);
    match id {
        1 => boundary(&e),
        2 => harmonic_oracle(&e, seed),
        3 => harmonic_fixed_point(&e, seed),
        4 => many_to_one(&e, seed),
        5 => conditioned(&e, seed),
        6 => renewal_oracles(&e),
        7 => occupation_series(&e, seed),
        8 => excursions(&e, seed),
        9 => one_step(&e, seed),
        10 => spinal(&e, seed),
        11 => moment(&e),
        12 => limit_probes(&e, seed),
        13 => reproducibility(envs, seed),
        _ => Err(LabError::Config(format!("no criterion {id}"))),
    }
}

/// Runs the selected criteria; an error inside a criterion becomes one failing check.
pub fn run(
    ids: &[u8],
    envs: &Path,
    seed: u64,
    mut progress: impl FnMut(&CriterionOutcome),
) -> LabResult<(Vec<CriterionOutcome>, Artifacts)> {
    let mut outcomes = Vec::new();
    for &id in ids {
        if !(1..=13).contains(&id) {
            return Err(LabError::Config(format!("no criterion {id}")));
        }
        let start = Instant::now();
        let checks = match run_criterion(id, envs, seed) {
            Ok(c) => c,
            Err(e @ (LabError::Io(_) | LabError::Json(_) | LabError::Config(_))) => return Err(e),
            Err(e) => vec![Check::flag(format!("error: {e}"), false)],
        };
        let o = CriterionOutcome {
            id,
            title: TITLES[id as usize - 1],
            checks,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&o);
        outcomes.push(o);
    }
    let mut t = Table::new(
        "acceptance",
        &[
            "criterion",
            "check",
            "value",
            "threshold",
            "pass",
            "known_deviation",
        ],
    );
    for o in &outcomes {
        for c in &o.checks {
            t.push(vec![
                o.id.to_string(),
                c.name.clone(),
                num(c.value),
                num(c.threshold),
                c.pass.to_string(),
                (!c.pass && o.is_known(c)).to_string(),
            ]);
        }
    }
    let mut art = Artifacts::default();
    art.table(t);
    art.report("acceptance_summary", &outcomes)?;
    Ok((outcomes, art))
}
