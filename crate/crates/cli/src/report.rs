//! The JSON report and the CSV/grid-dump side outputs.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use pnvflow_core::dump::{write_spinor, write_tensor};
use pnvflow_core::evolution::{MonitorTrace, SystemKind};
use pnvflow_core::fields::TensorField;
use pnvflow_core::report::{ConvergenceTable, ResidualEntry, ResidualReport};
use pnvflow_core::spin::SpinorField;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub residuals: ResidualReport,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, residuals: ResidualReport) -> Self {
        Self {
            name: name.into(),
            pass: residuals.all_pass(),
            residuals,
        }
    }

    pub fn get(&self, name: &str) -> Option<&ResidualEntry> {
        self.residuals.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EvolutionSummary {
    pub system: SystemKind,
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    pub min_u: f64,
    pub min_eig_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConvergenceResult {
    pub table: ConvergenceTable,
    /// Whether `min_order` is enforced for this residual.
    pub gated: bool,
    pub required_order: f64,
    pub pass: bool,
}

impl ConvergenceResult {
    pub fn new(table: ConvergenceTable, gated: bool, required_order: f64) -> Self {
        let pass =
            !gated || table.exact_zero || table.min_order().is_some_and(|o| o >= required_order);
        Self {
            table,
            gated,
            required_order,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub checks: Vec<CheckReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub convergence: Vec<ConvergenceResult>,
    /// Message of the error that ended the run early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort: Option<String>,
    pub pass: bool,
    pub exit_code: i32,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn convergence_table(&self, name: &str) -> Option<&ConvergenceResult> {
        self.convergence.iter().find(|c| c.table.name == name)
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Wall-clock time per stage, kept out of `report.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.stages.push((stage.to_string(), seconds));
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|(_, s)| s).sum()
    }
}

/// Fields written under `fields/` when dumps are requested.
#[derive(Debug, Clone, Default)]
pub struct FieldDumps {
    pub tensors: Vec<(String, TensorField, Option<f64>)>,
    pub spinors: Vec<(String, SpinorField, Option<f64>)>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn residuals_csv(report: &Report) -> String {
    let mut s = String::from("check,name,linf,l2,tolerance,pass\n");
    for c in &report.checks {
        for e in &c.residuals.entries {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{},{}",
                c.name,
                e.name,
                e.linf,
                e.l2,
                fmt_opt(e.tolerance),
                e.pass
            );
        }
    }
    s
}

pub fn convergence_csv(results: &[ConvergenceResult]) -> String {
    let mut s = String::from("name,points,h,error,order,gated,pass\n");
    for r in results {
        for row in &r.table.rows {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{},{},{}",
                r.table.name,
                row.points,
                row.h,
                row.error,
                row.order.map(|o| format!("{o:.4}")).unwrap_or_default(),
                r.gated,
                r.pass
            );
        }
    }
    s
}

/// Writes `report.json`, `timings.json`, `residuals.csv` and, when present,
/// `trace.csv`, `convergence.csv` and `fields/*.bin` into `dir`.
pub fn write_outputs(
    dir: &Path,
    report: &Report,
    trace: Option<&MonitorTrace>,
    timings: &Timings,
    dumps: &FieldDumps,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let put = |name: &str, text: &str| -> anyhow::Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    put("report.json", &report.to_json()?)?;
    put(
        "timings.json",
        &(serde_json::to_string_pretty(timings)? + "\n"),
    )?;
    put("residuals.csv", &residuals_csv(report))?;
    if let Some(t) = trace {
        put("trace.csv", &t.to_csv())?;
    }
    if !report.convergence.is_empty() {
        put("convergence.csv", &convergence_csv(&report.convergence))?;
    }
    if !dumps.tensors.is_empty() || !dumps.spinors.is_empty() {
        let fdir = dir.join("fields");
        fs::create_dir_all(&fdir)?;
        for (name, field, t) in &dumps.tensors {
            let f = fs::File::create(fdir.join(format!("{name}.bin")))?;
            write_tensor(BufWriter::new(f), name, field, *t)?;
        }
        for (name, field, t) in &dumps.spinors {
            let f = fs::File::create(fdir.join(format!("{name}.bin")))?;
            write_spinor(BufWriter::new(f), name, field, *t)?;
        }
    }
    Ok(())
}
