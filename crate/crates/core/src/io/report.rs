//! Run reports (JSON) and sweep tables (CSV).

use super::config::RunConfig;
use crate::diagnostics::{AsymptoticsReport, Verdict};
use crate::hamiltonian::SweepReport;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub data: serde_json::Value,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub stages: Vec<Stage>,
    pub verdicts: Vec<Verdict>,
    /// Files written by the run; each carries the config hash.
    pub outputs: Vec<PathBuf>,
    pub passed: bool,
    pub wall_clock_s: f64,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Report {
            tool: "vortexlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: config.hash(),
            config: config.clone(),
            stages: Vec::new(),
            verdicts: Vec::new(),
            outputs: Vec::new(),
            passed: true,
            wall_clock_s: 0.0,
        }
    }

    pub fn push_stage(&mut self, name: &str, data: impl Serialize, seconds: f64) {
        let data = serde_json::to_value(data).unwrap_or(serde_json::Value::Null);
        self.stages.push(Stage {
            name: name.into(),
            status: StageStatus::Ok,
            error: None,
            data,
            wall_clock_s: seconds,
        });
    }

    pub fn fail_stage(&mut self, name: &str, error: String, data: impl Serialize, seconds: f64) {
        let data = serde_json::to_value(data).unwrap_or(serde_json::Value::Null);
        self.stages.push(Stage {
            name: name.into(),
            status: StageStatus::Failed,
            error: Some(error),
            data,
            wall_clock_s: seconds,
        });
        self.passed = false;
    }

    pub fn push_verdicts(&mut self, v: impl IntoIterator<Item = Verdict>) {
        for v in v {
            self.passed &= v.passed;
            self.verdicts.push(v);
        }
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// The report with every wall-clock field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.wall_clock_s = 0.0;
        r.stages.iter_mut().for_each(|s| s.wall_clock_s = 0.0);
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        super::write_atomic(path, self.to_json().as_bytes())
    }
}

/// Columns of `sweep.csv`, in order.
pub const SWEEP_COLUMNS: [&str; 16] = [
    "gamma",
    "mirrored",
    "xi1_x",
    "xi1_y",
    "xi2_x",
    "xi2_y",
    "hamiltonian",
    "grad_norm",
    "classification",
    "dist_boundary",
    "dist_argmax",
    "boundary_theta",
    "theta_gap",
    "nu_gap",
    "substeps",
    "config_hash",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub mirrored: bool,
    pub xi1_x: f64,
    pub xi1_y: f64,
    pub xi2_x: f64,
    pub xi2_y: f64,
    pub hamiltonian: f64,
    pub grad_norm: f64,
    pub classification: String,
    pub dist_boundary: f64,
    pub dist_argmax: f64,
    pub boundary_theta: f64,
    pub theta_gap: Option<f64>,
    pub nu_gap: f64,
    pub substeps: usize,
    pub config_hash: String,
}

/// One row per scheduled γ. Positions are in the original roles (ξ₁ carries
/// intensity 1).
pub fn sweep_rows(sweep: &SweepReport, asym: Option<&AsymptoticsReport>, hash: &str) -> Vec<SweepRow> {
    sweep
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| SweepRow {
            gamma: r.gamma,
            mirrored: sweep.mirrored,
            xi1_x: r.config.xi1[0],
            xi1_y: r.config.xi1[1],
            xi2_x: r.config.xi2[0],
            xi2_y: r.config.xi2[1],
            hamiltonian: r.value,
            grad_norm: r.grad_norm,
            classification: format!("{:?}", r.classification).to_lowercase(),
            dist_boundary: r.dist_boundary,
            dist_argmax: r.dist_argmax,
            boundary_theta: r.boundary_theta,
            theta_gap: asym.and_then(|a| a.rows.get(i)).and_then(|row| row.theta_gap),
            nu_gap: r.nu_gap,
            substeps: r.substeps,
            config_hash: hash.into(),
        })
        .collect()
}

pub fn format_sweep_csv(rows: &[SweepRow]) -> Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> std::io::Result<()> {
    let text = format_sweep_csv(rows).map_err(std::io::Error::other)?;
    super::write_atomic(path, text.as_bytes())
}
