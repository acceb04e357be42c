//! `intertwine`: builds Darboux-Crum chains from a run configuration,
//! factorizes them, audits index balance and writes a reproducible
//! artifact directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure or a
//! failed check (with `diagnostic.json`), 1 for I/O trouble.

mod build;
mod config;
mod drivers;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use intertwine_core::Error;

use config::{Driver, RunConfig};
use output::{diagnostic, Artifacts};

#[derive(Parser)]
#[command(name = "intertwine", version, about = "Darboux-Crum chains: construction, factorization, index audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in reference chain instead of a configuration file.
    #[arg(long, conflicts_with = "config")]
    fixture: Option<String>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tolerance on plan and chain residuals.
    #[arg(long)]
    tol: Option<f64>,
    /// Grid half-width `X`.
    #[arg(long = "grid-x")]
    grid_x: Option<f64>,
    /// Number of grid nodes.
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Dressed factorization: normalizable kernels right, nonnormalizable left.
    Factorize2(Common),
    /// Complete factorization into type-I, first-order and second-order factors.
    Factorize3(Common),
    /// Index balance and the corollary audit table.
    Index(Common),
    /// Leading-term asymptotics and the counterexample Wronskian.
    Asymptotics(Common),
    /// Full audit of a chain, or replay of a recorded plan with `--plan`.
    Verify {
        #[command(flatten)]
        common: Common,
        /// plan.json written by an earlier factorize run.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Runs the reference chains end to end.
    Demo {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const DEFAULT_OUT: &str = "intertwine-out";

fn resolve(driver: Driver, common: &Common, needs_chain: bool) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = match (&common.config, &common.fixture) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(f)) => RunConfig::for_fixture(f),
        (None, None) if !needs_chain => RunConfig { potential: Some("x^2".into()), ..RunConfig::default() },
        (None, None) => return Err(Error::Config("pass --config or --fixture".into())),
    };
    cfg.driver = Some(driver);
    if let Some(t) = common.tol {
        cfg.tolerances.plan = t;
    }
    if let Some(x) = common.grid_x {
        cfg.grid.x = Some(x);
    }
    if let Some(n) = common.grid_n {
        cfg.grid.n = Some(n);
    }
    let out = common.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfg.validate()?;
    Ok((cfg, out))
}

fn kind(e: &Error) -> &'static str {
    match e.exit_code() {
        2 => "config",
        1 => "io",
        _ => "numeric",
    }
}

/// Writes `diagnostic.json` (best effort) and echoes it on stderr.
fn report_failure(out: &Path, body: &serde_json::Value) {
    let text = serde_json::to_string_pretty(body).unwrap_or_default();
    if std::fs::create_dir_all(out).is_ok() {
        let _ = std::fs::write(out.join("diagnostic.json"), format!("{text}\n"));
    }
    eprintln!("{text}");
}

fn execute(driver: Driver, common: &Common, plan: Option<&Path>) -> i32 {
    let fallback = common.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let needs_chain = driver != Driver::Asymptotics && plan.is_none();
    let (cfg, out) = match resolve(driver, common, needs_chain) {
        Ok(v) => v,
        Err(e) => {
            report_failure(&fallback, &diagnostic(kind(&e), &e.to_string(), e.exit_code(), e.witness(), &[]));
            return e.exit_code();
        }
    };
    let mut art = match Artifacts::create(&out) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("cannot create {}: {e}", out.display());
            return e.exit_code();
        }
    };
    match drivers::run(driver, &cfg, &mut art, plan) {
        Ok(o) => {
            let status = if o.ok { "ok" } else { "failed" };
            if let Err(e) = art.manifest(&cfg, driver.name(), Some(&o), status) {
                eprintln!("cannot write manifest: {e}");
                return e.exit_code();
            }
            println!("{}", o.summary);
            if o.ok {
                0
            } else {
                report_failure(&out, &diagnostic("check_failed", &o.summary, 3, None, &o.failures));
                3
            }
        }
        Err(e) => {
            let _ = art.manifest(&cfg, driver.name(), None, "error");
            report_failure(&out, &diagnostic(kind(&e), &e.to_string(), e.exit_code(), e.witness(), &[]));
            e.exit_code()
        }
    }
}

fn demo(out: &Path) -> i32 {
    let runs: [(&str, Driver); 6] = [
        ("ground_deletion", Driver::Verify),
        ("two_level", Driver::Index),
        ("two_level", Driver::Factorize2),
        ("isospectral", Driver::Factorize2),
        ("type_three", Driver::Factorize3),
        ("mixed", Driver::Factorize3),
    ];
    let mut worst = 0;
    for (fixture, driver) in runs {
        let common = Common {
            fixture: Some(fixture.into()),
            out: Some(out.join(format!("{fixture}-{}", driver.name()))),
            ..Common::default()
        };
        worst = worst.max(execute(driver, &common, None));
    }
    let common = Common { out: Some(out.join("asymptotics")), ..Common::default() };
    worst.max(execute(Driver::Asymptotics, &common, None))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Factorize2(c) => execute(Driver::Factorize2, c, None),
        Command::Factorize3(c) => execute(Driver::Factorize3, c, None),
        Command::Index(c) => execute(Driver::Index, c, None),
        Command::Asymptotics(c) => execute(Driver::Asymptotics, c, None),
        Command::Verify { common, plan } => execute(Driver::Verify, common, plan.as_deref()),
        Command::Demo { out } => demo(out.as_deref().unwrap_or(Path::new(DEFAULT_OUT))),
    };
    ExitCode::from(code as u8)
}
