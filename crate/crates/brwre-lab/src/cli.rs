//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::acceptance;
use crate::config::{
    merge, AcceptanceParams, BrwreParams, ConditionedParams, CriterionParams, DivergenceParams,
    HarmonicParams, RenewalParams, SpineParams, TanakaParams, Validate, ValidateParams,
};
use crate::envfile::EnvFile;
use crate::error::{LabError, LabResult};
use crate::experiments::{
    criterion, draw_seed, population, realize, renewal, spine, tanaka, walk, Check,
};
use crate::output::{write_all, Artifacts};

#[derive(Debug, Parser)]
#[command(
    name = "brwre-lab",
    version,
    about = "Branching random walks in a time-random environment: simulation and verification"
)]
pub struct Cli {
    /// Master seed of every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for CSV/JSON artifacts and the manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (output does not depend on this).
    #[arg(long, global = true, env = "BRWRE_LAB_THREADS")]
    pub threads: Option<usize>,
    /// JSON file with subcommand parameters; explicit flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the boundary-case normalization and standing assumptions of an environment.
    Validate(ValidateParams),
    /// Tabulate the harmonic function of the walk killed below zero.
    Harmonic(HarmonicParams),
    /// Compare direct and kernel-chained marginals of the conditioned walk.
    Conditioned(ConditionedParams),
    /// Ladder renewal functions and the occupation identities.
    Renewal(RenewalParams),
    /// Excursion decomposition: exact identity, height law, independence.
    TanakaTest(TanakaParams),
    /// Growth of additive functionals along conditioned paths.
    DivergenceProbe(DivergenceParams),
    /// Simulate the branching population and its martingales.
    Brwre(BrwreParams),
    /// Spinal decomposition checks.
    SpineCheck(SpineParams),
    /// Moment criterion for non-degeneracy of the derivative-martingale limit.
    Criterion(CriterionParams),
    /// Run the acceptance suite.
    Acceptance(AcceptanceParams),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Harmonic(_) => "harmonic",
            Command::Conditioned(_) => "conditioned",
            Command::Renewal(_) => "renewal",
            Command::TanakaTest(_) => "tanaka-test",
            Command::DivergenceProbe(_) => "divergence-probe",
            Command::Brwre(_) => "brwre",
            Command::SpineCheck(_) => "spine-check",
            Command::Criterion(_) => "criterion",
            Command::Acceptance(_) => "acceptance",
        }
    }
}

/// What a finished command reports.
struct Outcome {
    artifacts: Artifacts,
    config: Value,
    /// Failed contract checks; non-empty means exit 3 (2 for `validate`).
    failures: Vec<String>,
}

fn explicit_flags(m: &ArgMatches) -> Vec<String> {
    m.ids()
        .filter(|id| m.value_source(id.as_str()) == Some(ValueSource::CommandLine))
        .map(|id| id.as_str().to_string())
        .collect()
}

fn resolve<P>(flags: &P, file: Option<&Value>, explicit: &[String]) -> LabResult<P>
where
    P: Serialize + for<'de> Deserialize<'de> + Validate,
{
    merge(flags, file, explicit)
}

fn load_env(path: &Path) -> LabResult<std::sync::Arc<brwre_core::env::EnvironmentLaw>> {
    EnvFile::load(path)?.build()
}

fn failed(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.clone())
        .collect()
}

fn execute(cli: &Cli, explicit: &[String], file: Option<&Value>) -> LabResult<Outcome> {
    let seed = cli.seed;
    let mut art = Artifacts::default();
    let (config, failures) = match &cli.command {
        Command::Validate(f) => {
            let p = resolve(f, file, explicit)?;
            let r = walk::validate(&*load_env(&p.env)?, &p);
            art.report("validation", &r)?;
            let mut fail = Vec::new();
            if !r.boundary_pass {
                fail.push("boundary normalization".to_string());
            }
            if !r.all_pass {
                fail.push("standing assumptions".to_string());
            }
            (serde_json::to_value(&p)?, fail)
        }
        Command::Harmonic(f) => {
            let p = resolve(f, file, explicit)?;
            let path = realize(&load_env(&p.env)?, draw_seed(seed, 0));
            art.extend(walk::harmonic_table(&path, &p)?.1);
            (serde_json::to_value(&p)?, Vec::new())
        }
        Command::Conditioned(f) => {
            let p = resolve(f, file, explicit)?;
            let path = realize(&load_env(&p.env)?, draw_seed(seed, 0));
            let (s, a) = walk::conditioned(&path, &p)?;
            art.extend(a);
            let checks: Vec<Check> = s
                .iter()
                .flat_map(|s| {
                    [
                        Check::at_most(format!("beta={} TV", s.beta), s.max_tv, p.tol),
                        Check::at_most(
                            format!("beta={} row sums", s.beta),
                            s.max_row_deviation,
                            1e-10,
                        ),
                    ]
                })
                .collect();
            (serde_json::to_value(&p)?, failed(&checks))
        }
        Command::Renewal(f) => {
            let p = resolve(f, file, explicit)?;
            let (s, a) = renewal::renewal(&load_env(&p.env)?, &p, seed)?;
            art.extend(a);
            let mut fail = Vec::new();
            if p.method == crate::config::Method::Exact && s.max_identity_residual > 1e-9 {
                fail.push("harmonic identity of R-".to_string());
            }
            fail.extend(
                s.occupation
                    .iter()
                    .filter(|o| !o.pass)
                    .map(|o| format!("occupation beta={} [{},{}]", o.beta, o.lo, o.hi)),
            );
            fail.extend(
                s.series
                    .iter()
                    .filter(|o| !o.pass)
                    .map(|o| format!("series beta={} [{},{}]", o.beta, o.lo, o.hi)),
            );
            (serde_json::to_value(&p)?, fail)
        }
        Command::TanakaTest(f) => {
            let p = resolve(f, file, explicit)?;
            let (s, a) = tanaka::tanaka(&load_env(&p.env)?, &p, seed)?;
            art.extend(a);
            let mut fail = Vec::new();
            for (ok, name) in [
                (s.identity_pass, "exact identity"),
                (s.height_pass, "height law"),
                (s.independence_pass, "independence"),
            ] {
                if !ok {
                    fail.push(name.to_string());
                }
            }
            (serde_json::to_value(&p)?, fail)
        }
        Command::DivergenceProbe(f) => {
            let p = resolve(f, file, explicit)?;
            art.extend(population::divergence(&load_env(&p.env)?, &p, seed)?.1);
            (serde_json::to_value(&p)?, Vec::new())
        }
        Command::Brwre(f) => {
            let p = resolve(f, file, explicit)?;
            art.extend(population::brwre(&load_env(&p.env)?, &p, seed)?.1);
            (serde_json::to_value(&p)?, Vec::new())
        }
        Command::SpineCheck(f) => {
            let p = resolve(f, file, explicit)?;
            let (s, a) = spine::spine(&load_env(&p.env)?, &p, seed)?;
            art.extend(a);
            let mut fail = failed(&s.exact);
            fail.extend(failed(&s.change_of_measure));
            fail.extend(failed(&s.posterior));
            if !s.statistical_pass {
                fail.push("spine law chi-square".to_string());
            }
            (serde_json::to_value(&p)?, fail)
        }
        Command::Criterion(f) => {
            let p = resolve(f, file, explicit)?;
            art.extend(criterion::criterion(&load_env(&p.env)?, &p, seed)?.1);
            (serde_json::to_value(&p)?, Vec::new())
        }
        Command::Acceptance(f) => {
            let p = resolve(f, file, explicit)?;
            let ids: Vec<u8> = match &p.only {
                Some(list) => list.0.iter().map(|&i| i as u8).collect(),
                None => (1..=13).collect(),
            };
            let (outcomes, a) = acceptance::run(&ids, &p.envs, seed, |o| println!("{}", o.line()))?;
            art.extend(a);
            let passed = outcomes.iter().filter(|o| o.pass()).count();
            println!("acceptance: {passed}/{} criteria passed", outcomes.len());
            let fail = outcomes
                .iter()
                .filter(|o| !o.pass())
                .map(|o| format!("criterion {}", o.id))
                .collect();
            (serde_json::to_value(&p)?, fail)
        }
    };
    Ok(Outcome {
        artifacts: art,
        config,
        failures,
    })
}

fn load_config(path: &Path) -> LabResult<Value> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn diagnostic(e: &LabError) -> Value {
    json!({"error": {"kind": e.kind(), "exit_code": e.exit_code(), "message": e.to_string()}})
}

fn run_parsed(cli: &Cli, explicit: &[String]) -> LabResult<i32> {
    let file = cli.config.as_deref().map(load_config).transpose()?;
    let outcome = execute(cli, explicit, file.as_ref())?;
    let manifest = write_all(
        &cli.out,
        cli.command.name(),
        cli.seed,
        outcome.config,
        &outcome.artifacts,
    )?;
    let code = match (&cli.command, outcome.failures.is_empty()) {
        (_, true) => 0,
        (Command::Validate(_), false) => 2,
        _ => 3,
    };
    let status = json!({
        "command": cli.command.name(),
        "status": if code == 0 { "ok" } else { "check_failed" },
        "failures": outcome.failures,
        "out": cli.out,
        "files": manifest.files.iter().map(|f| &f.name).collect::<Vec<_>>(),
    });
    if code == 0 {
        println!("{status}");
    } else {
        eprintln!("{status}");
    }
    Ok(code)
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let explicit = matches
        .subcommand()
        .map(|(_, m)| explicit_flags(m))
        .unwrap_or_default();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            let e = LabError::Config("threads must be at least 1".into());
            eprintln!("{}", diagnostic(&e));
            return e.exit_code();
        }
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!(
                "{}",
                diagnostic(&LabError::Config(format!("thread pool: {e}")))
            );
            return 2;
        }
    };
    match pool.install(|| run_parsed(&cli, &explicit)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            e.exit_code()
        }
    }
}
