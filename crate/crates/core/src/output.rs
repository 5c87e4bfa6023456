//! Result files: per-slot CSV, run summary JSON, sweep tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::engine::{RunSummary, SimulationResult};
use crate::error::{Error, Result};

pub const SLOT_HEADER: [&str; 10] = [
    "run_id",
    "t",
    "device_id",
    "app_id",
    "eta_ij",
    "eta_j",
    "w_used",
    "c_used",
    "battery",
    "remaining_work",
];

pub const SWEEP_HEADER: [&str; 7] = [
    "param",
    "value",
    "policy",
    "app_id",
    "mean_completion",
    "std_completion",
    "mean_battery_at_completion",
];

pub const RUNS_HEADER: [&str; 12] = [
    "run_id",
    "param",
    "value",
    "policy",
    "repetition",
    "seed",
    "completion_times",
    "battery_at_completion",
    "final_battery_total",
    "energy_total",
    "total_utility",
    "solver_iterations",
];

/// Plain decimal with at least 9 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0.000000000".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (8 - magnitude).clamp(9, 340) as usize;
    format!("{v:.decimals$}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_slots_csv(path: &Path, run_id: &str, result: &SimulationResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(SLOT_HEADER)?;
    for rec in &result.per_slot {
        let d = &rec.decision;
        for (i, row) in d.eta_ij.iter().enumerate() {
            for (j, &eta) in row.iter().enumerate() {
                w.write_record([
                    run_id.to_string(),
                    rec.t.to_string(),
                    i.to_string(),
                    j.to_string(),
                    fmt_num(eta),
                    fmt_num(d.eta_j[j]),
                    fmt_num(d.w_used[i]),
                    fmt_num(d.c_used[i]),
                    fmt_num(rec.battery[i]),
                    fmt_num(rec.remaining_work[j]),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Outcome of one sweep run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub value_index: usize,
    pub value: f64,
    pub policy: String,
    pub repetition: usize,
    pub seed: u64,
    pub horizon: usize,
    pub summary: RunSummary,
}

impl RunRow {
    pub fn run_id(&self) -> String {
        format!("{}-{}", self.value_index, self.repetition)
    }

    /// Completion slot, with runs that never finish counted as the horizon.
    pub fn completion_or_horizon(&self, app: usize) -> f64 {
        self.summary.completion_time[app].unwrap_or(self.horizon) as f64
    }

    /// Total battery at completion, or at the end of the run when the app never finished.
    pub fn battery_at_completion_or_final(&self, app: usize) -> f64 {
        self.summary.battery_at_completion[app].unwrap_or_else(|| self.summary.final_battery.iter().sum())
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

pub fn write_runs_csv(path: &Path, param: &str, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(RUNS_HEADER)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.run_id(),
            param.to_string(),
            fmt_num(r.value),
            r.policy.clone(),
            r.repetition.to_string(),
            r.seed.to_string(),
            join(&s.completion_time, |c| c.map_or("NA".into(), |v| v.to_string())),
            join(&s.battery_at_completion, |b| b.map_or("NA".into(), fmt_num)),
            fmt_num(s.final_battery.iter().sum()),
            fmt_num(s.energy_consumed.iter().sum()),
            fmt_num(s.total_utility),
            s.solver.total_iterations.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub param: String,
    pub value: f64,
    pub policy: String,
    pub app_id: usize,
    pub mean_completion: f64,
    pub std_completion: f64,
    pub mean_battery_at_completion: f64,
}

pub fn write_sweep_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.param.clone(),
            fmt_num(r.value),
            r.policy.clone(),
            r.app_id.to_string(),
            fmt_num(r.mean_completion),
            fmt_num(r.std_completion),
            fmt_num(r.mean_battery_at_completion),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
