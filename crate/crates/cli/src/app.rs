//! Command-line parsing and the top-level driver.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{exit_code, ConfigError, EXIT_FAILURE};
use crate::pipeline::{execute, Outcome, Verb};
use crate::report::{write_outputs, Report};
use crate::scenario::Scenario;

#[derive(Debug, Parser)]
#[command(
    name = "pnvflow",
    version,
    about = "Evolve and verify spacetimes with a parallel null vector"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the constraints of the initial data.
    Check(RunArgs),
    /// Check the constraints, then evolve and monitor them.
    Evolve(RunArgs),
    /// Run every check listed in the scenario.
    Verify(RunArgs),
    /// Evolve, then verify the W-Killing spinor and its parallel extension.
    Spin(RunArgs),
    /// Rerun the scenario on a refinement ladder and report observed orders.
    Convergence(RunArgs),
    /// Print the JSON schema of scenario files or reports.
    DumpSchema(SchemaArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (TOML)
    #[arg(long, value_name = "PATH")]
    pub scenario: PathBuf,
    /// Output directory (default `pnvflow-out/<scenario name>`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for randomized probes; overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemaKind {
    Scenario,
    Report,
}

#[derive(Debug, Args)]
pub struct SchemaArgs {
    #[arg(value_enum, default_value_t = SchemaKind::Report)]
    pub which: SchemaKind,
}

pub fn schema_json(which: SchemaKind) -> anyhow::Result<String> {
    let schema = match which {
        SchemaKind::Scenario => schemars::schema_for!(Scenario),
        SchemaKind::Report => schemars::schema_for!(Report),
    };
    Ok(serde_json::to_string_pretty(&schema)? + "\n")
}

/// Loads the scenario, runs `verb` and writes the outputs. Returns the
/// outcome and the directory written.
pub fn run_verb(verb: Verb, args: &RunArgs) -> anyhow::Result<(Outcome, PathBuf)> {
    let scn = Scenario::load(&args.scenario)?;
    let seed = args.seed.unwrap_or(scn.seed);
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("pnvflow-out").join(&scn.name));
    let outcome = execute(&scn, verb, seed)?;
    write_outputs(
        &out,
        &outcome.report,
        outcome.trace.as_ref(),
        &outcome.timings,
        &outcome.dumps,
    )?;
    Ok((outcome, out))
}

fn summary(report: &Report, out: &std::path::Path) -> String {
    let mut s = String::new();
    for c in &report.checks {
        s += &format!("{:<22} {}\n", c.name, if c.pass { "pass" } else { "FAIL" });
        for e in c.residuals.failures() {
            s += &format!(
                "    {} = {:e} > {:e}\n",
                e.name,
                e.linf,
                e.tolerance.unwrap_or(f64::NAN)
            );
        }
    }
    for c in report.convergence.iter().filter(|c| c.gated) {
        let order = match c.table.min_order() {
            Some(o) => format!("{o:.2}"),
            None => "exact".into(),
        };
        s += &format!(
            "{:<22} {} (order {order}, need {})\n",
            c.table.name,
            if c.pass { "pass" } else { "FAIL" },
            c.required_order
        );
    }
    if let Some(a) = &report.abort {
        s += &format!("aborted: {a}\n");
    }
    s += &format!(
        "{}: {} (exit {}), outputs in {}\n",
        report.scenario.name,
        if report.pass { "PASS" } else { "FAIL" },
        report.exit_code,
        out.display()
    );
    s
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(ConfigError::new("--threads", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let (verb, args) = match cli.command {
        Command::DumpSchema(a) => {
            print!("{}", schema_json(a.which)?);
            return Ok(0);
        }
        Command::Check(a) => (Verb::Check, a),
        Command::Evolve(a) => (Verb::Evolve, a),
        Command::Verify(a) => (Verb::Verify, a),
        Command::Spin(a) => (Verb::Spin, a),
        Command::Convergence(a) => (Verb::Convergence, a),
    };
    let (outcome, out) = run_verb(verb, &args)?;
    print!("{}", summary(&outcome.report, &out));
    std::io::stdout().flush().ok();
    Ok(outcome.report.exit_code)
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = exit_code(&e);
            if code == 0 {
                EXIT_FAILURE
            } else {
                code
            }
        }
    }
}
