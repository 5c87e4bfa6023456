//! Single scenario runs and parameter sweeps driven by a parsed config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Config, Scenario, SweepParam};
use crate::controller::EstimatorKind;
use crate::engine::{metrics, run_simulation, Policy, RunSummary, SimulationResult};
use crate::error::{Error, Result};
use crate::output::{write_json, write_runs_csv, write_slots_csv, write_sweep_csv, AggregateRow, RunRow};
use crate::parallel::{run_batch, run_batch_sequential};

pub fn simulate(config: &Config, base_dir: &Path) -> Result<SimulationResult> {
    let system = config.system()?;
    let traces = config.traces(base_dir)?;
    run_simulation(&system, &traces, config.sim.policy, &config.sim_config())
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub run_id: String,
    pub estimator: EstimatorKind,
    pub seed: u64,
    pub horizon: usize,
    pub omega: usize,
    pub app_order: Option<Vec<usize>>,
    #[serde(flatten)]
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub slots_csv: PathBuf,
    pub summary_json: PathBuf,
    pub report: ScenarioReport,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs the scenario once and writes `<name>_slots.csv` and `<name>_summary.json`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunOutput> {
    let result = simulate(&scenario.config, &scenario.base_dir)?;
    ensure_dir(out_dir)?;
    let run_id = "0-0";
    let slots_csv = out_dir.join(format!("{}_slots.csv", scenario.name));
    let summary_json = out_dir.join(format!("{}_summary.json", scenario.name));
    write_slots_csv(&slots_csv, run_id, &result)?;
    let sim = &scenario.config.sim;
    let report = ScenarioReport {
        name: scenario.name.clone(),
        run_id: run_id.into(),
        estimator: sim.estimator,
        seed: sim.seed,
        horizon: sim.horizon,
        omega: sim.omega,
        app_order: result.app_order.clone(),
        summary: metrics(&result),
    };
    write_json(&summary_json, &report)?;
    Ok(RunOutput {
        slots_csv,
        summary_json,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon pool; falls back to sequential without the `parallel` feature.
    Parallel { workers: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub value_index: usize,
    pub value: f64,
    pub repetition: usize,
    pub policy: Policy,
    pub estimator: EstimatorKind,
    pub label: String,
}

/// Variant labels in output order: the policy name, suffixed with the estimator
/// when more than one estimator is swept.
pub fn sweep_variants(config: &Config) -> Vec<(Policy, EstimatorKind, String)> {
    let sw = config.sweep.as_ref();
    let policies = sw
        .and_then(|s| s.policies.clone())
        .unwrap_or_else(|| vec![config.sim.policy]);
    let estimators = sw
        .and_then(|s| s.estimators.clone())
        .unwrap_or_else(|| vec![config.sim.estimator]);
    let tagged = estimators.len() > 1;
    policies
        .iter()
        .flat_map(|&p| {
            estimators.iter().map(move |&e| {
                let label = if tagged {
                    format!("{}/{}", p.name(), e.name())
                } else {
                    p.name().to_string()
                };
                (p, e, label)
            })
        })
        .collect()
}

pub fn sweep_jobs(config: &Config) -> Result<Vec<SweepJob>> {
    let sw = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "section required for a sweep"))?;
    let variants = sweep_variants(config);
    let mut jobs = Vec::new();
    for (value_index, &value) in sw.values.iter().enumerate() {
        for repetition in 0..sw.repetitions {
            for (policy, estimator, label) in &variants {
                jobs.push(SweepJob {
                    value_index,
                    value,
                    repetition,
                    policy: *policy,
                    estimator: *estimator,
                    label: label.clone(),
                });
            }
        }
    }
    Ok(jobs)
}

/// Config for one sweep job. The seed depends only on the repetition, so every
/// value and policy of a repetition sees the same random draws.
pub fn job_config(config: &Config, job: &SweepJob) -> Result<Config> {
    let param = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "section required for a sweep"))?
        .param;
    let mut c = match param {
        SweepParam::POn => config.with_p_on(job.value),
        SweepParam::NDevices => config.with_n_devices(job.value as usize),
    };
    c.sim.policy = job.policy;
    c.sim.estimator = job.estimator;
    c.sim.seed = config.sim.seed.wrapping_add(job.repetition as u64);
    c.sweep = None;
    Ok(c)
}

pub fn run_job(config: &Config, base_dir: &Path, job: &SweepJob) -> Result<RunRow> {
    let c = job_config(config, job)?;
    let result = simulate(&c, base_dir)?;
    Ok(RunRow {
        value_index: job.value_index,
        value: job.value,
        policy: job.label.clone(),
        repetition: job.repetition,
        seed: c.sim.seed,
        horizon: c.sim.horizon,
        summary: metrics(&result),
    })
}

pub fn sweep_runs(config: &Config, base_dir: &Path, execution: Execution) -> Result<Vec<RunRow>> {
    let jobs = sweep_jobs(config)?;
    let f = |k: usize| run_job(config, base_dir, &jobs[k]);
    match execution {
        Execution::Sequential => run_batch_sequential(jobs.len(), f),
        Execution::Parallel { workers } => run_batch(jobs.len(), workers, f),
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per (value, policy, app) statistics over repetitions, in sweep order.
pub fn aggregate(config: &Config, runs: &[RunRow]) -> Vec<AggregateRow> {
    let Some(sw) = &config.sweep else {
        return Vec::new();
    };
    let n_apps = config.apps.len();
    let mut rows = Vec::new();
    for (vi, &value) in sw.values.iter().enumerate() {
        for (_, _, label) in sweep_variants(config) {
            let group: Vec<&RunRow> = runs
                .iter()
                .filter(|r| r.value_index == vi && r.policy == label)
                .collect();
            if group.is_empty() {
                continue;
            }
            for app in 0..n_apps {
                let completion: Vec<f64> = group.iter().map(|r| r.completion_or_horizon(app)).collect();
                let battery: Vec<f64> = group.iter().map(|r| r.battery_at_completion_or_final(app)).collect();
                let (mean_completion, std_completion) = mean_std(&completion);
                rows.push(AggregateRow {
                    param: sw.param.name().into(),
                    value,
                    policy: label.clone(),
                    app_id: app,
                    mean_completion,
                    std_completion,
                    mean_battery_at_completion: mean_std(&battery).0,
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub aggregate_csv: PathBuf,
    pub runs_csv: PathBuf,
    pub rows: Vec<AggregateRow>,
    pub runs: Vec<RunRow>,
}

/// Runs every sweep job and writes `<name>_sweep.csv` and `<name>_runs.csv`.
pub fn run_sweep(scenario: &Scenario, out_dir: &Path, execution: Execution) -> Result<SweepOutput> {
    let config = &scenario.config;
    let runs = sweep_runs(config, &scenario.base_dir, execution)?;
    let rows = aggregate(config, &runs);
    ensure_dir(out_dir)?;
    let aggregate_csv = out_dir.join(format!("{}_sweep.csv", scenario.name));
    let runs_csv = out_dir.join(format!("{}_runs.csv", scenario.name));
    let param = config.sweep.as_ref().map_or("", |s| s.param.name());
    write_sweep_csv(&aggregate_csv, &rows)?;
    write_runs_csv(&runs_csv, param, &runs)?;
    Ok(SweepOutput {
        aggregate_csv,
        runs_csv,
        rows,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config_str, SweepSection};

    const BASE: &str = r#"
[sim]
T = 40
omega = 5
policy = "aact"
seed = 3

[[devices]]
id = 0
battery_init = 50.0
cpu = { kind = "constant", level = 1.0 }
bw = { kind = "bernoulli", level = 0.5, p_on = 0.5 }

[[devices]]
id = 1
battery_init = 50.0
cpu = { kind = "constant", level = 0.5 }
bw = { kind = "bernoulli", level = 0.25, p_on = 0.5 }

[[apps]]
id = 0
cpu_req = 0.5
bw_req = 1.0
size = 2.0
interested = [0]

[[apps]]
id = 1
cpu_req = 1.5
bw_req = 0.0
size = 5.0
interested = [1]
"#;

    fn with_sweep(sweep: SweepSection) -> Config {
        let mut c = parse_config_str(BASE).unwrap();
        c.sweep = Some(sweep);
        c.validate().unwrap();
        c
    }

    #[test]
    fn p_on_sweep_cardinality() {
        let c = with_sweep(SweepSection {
            param: SweepParam::POn,
            values: (1..=9).map(|k| k as f64 / 10.0).collect(),
            repetitions: 20,
            policies: None,
            estimators: None,
        });
        assert_eq!(sweep_jobs(&c).unwrap().len(), 180);
    }

    #[test]
    fn n_devices_sweep_rows() {
        let c = with_sweep(SweepSection {
            param: SweepParam::NDevices,
            values: vec![1.0, 2.0, 3.0, 4.0],
            repetitions: 1,
            policies: Some(vec![Policy::Aact, Policy::Sequential]),
            estimators: None,
        });
        let runs = sweep_runs(&c, Path::new("."), Execution::Parallel { workers: Some(2) }).unwrap();
        assert_eq!(runs.len(), 8);
        let rows = aggregate(&c, &runs);
        assert_eq!(rows.len(), 4 * 2 * 2);
        assert!(rows.iter().all(|r| r.std_completion == 0.0));
        assert_eq!(rows[0].policy, "aact");
        assert_eq!(rows[2].policy, "sequential");
    }

    #[test]
    fn estimator_labels_and_common_seeds() {
        let c = with_sweep(SweepSection {
            param: SweepParam::POn,
            values: vec![0.3, 0.7],
            repetitions: 2,
            policies: None,
            estimators: Some(vec![EstimatorKind::Oracle, EstimatorKind::Average]),
        });
        let jobs = sweep_jobs(&c).unwrap();
        assert_eq!(jobs.len(), 8);
        assert_eq!(jobs[0].label, "aact/oracle");
        assert_eq!(jobs[1].label, "aact/average");
        let seeds: Vec<u64> = jobs.iter().map(|j| job_config(&c, j).unwrap().sim.seed).collect();
        assert_eq!(seeds, vec![3, 3, 4, 4, 3, 3, 4, 4]);
    }

    #[test]
    fn parallel_and_sequential_sweeps_agree() {
        let c = with_sweep(SweepSection {
            param: SweepParam::POn,
            values: vec![0.2, 0.8],
            repetitions: 3,
            policies: Some(vec![Policy::Aact, Policy::AactDistributed]),
            estimators: None,
        });
        let a = sweep_runs(&c, Path::new("."), Execution::Sequential).unwrap();
        let b = sweep_runs(&c, Path::new("."), Execution::Parallel { workers: None }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
