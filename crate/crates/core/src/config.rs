//! Scenario files (TOML): schema, validation and conversion into model types.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelKind, DeviceTraces, Resource};
use crate::controller::{ControllerConfig, EstimatorKind};
use crate::engine::{Policy, SimConfig};
use crate::error::{Error, Result};
use crate::model::{AppSpec, DeviceSpec, EnergyModel, System};
use crate::problem::{ProblemSettings, UtilityKind, WorkCap};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Prefix for output files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub sim: SimSection,
    #[serde(default)]
    pub energy: EnergyModel,
    pub devices: Vec<DeviceConfig>,
    pub apps: Vec<AppConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub id: usize,
    pub battery_init: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_schedule: Option<Vec<f64>>,
    pub cpu: ChannelConfig,
    pub bw: ChannelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub id: usize,
    pub cpu_req: f64,
    pub bw_req: f64,
    pub size: f64,
    #[serde(default = "one")]
    pub utility_weight: f64,
    pub interested: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: usize,
    pub omega: usize,
    pub policy: Policy,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub utility: UtilityKind,
    #[serde(default)]
    pub work_cap: WorkCap,
    /// Fixed application order for the sequential policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_order: Option<Vec<usize>>,
    #[serde(default = "yes")]
    pub early_stop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// ON probability of every Bernoulli channel.
    POn,
    /// Device count; devices beyond the listed ones cycle through the list.
    NDevices,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::POn => "p_on",
            SweepParam::NDevices => "n_devices",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
    #[serde(default = "one_usize")]
    pub repetitions: usize,
    /// Defaults to `sim.policy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<Policy>>,
    /// Defaults to `sim.estimator`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_eps() -> f64 {
    ProblemSettings::default().eps
}
fn default_tol() -> f64 {
    SolverOptions::default().tol
}
fn default_max_iters() -> usize {
    SolverOptions::default().max_iters
}

/// A scenario file parsed and validated, plus the directory relative trace paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: Config,
    pub base_dir: PathBuf,
    pub name: String,
}

pub fn parse_config(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = parse_config_str(&text)?;
    let name = config
        .name
        .clone()
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "scenario".into());
    Ok(Scenario {
        config,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        name,
    })
}

pub fn parse_config_str(text: &str) -> Result<Config> {
    let config: Config = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let field = missing_field(&msg).unwrap_or_else(|| "<document>".into());
        Error::config(field, msg)
    })?;
    config.validate()?;
    Ok(config)
}

fn missing_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("missing field `")?;
    Some(rest.split('`').next()?.to_string())
}

pub fn to_toml(config: &Config) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::config("<document>", e.to_string()))
}

fn check(ok: bool, field: impl Into<String>, msg: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, msg))
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sim;
        check(s.horizon >= 1, "sim.T", "must be >= 1")?;
        check(s.omega >= 1, "sim.omega", "must be >= 1")?;
        check(s.eps >= 0.0 && s.eps.is_finite(), "sim.eps", "must be finite and >= 0")?;
        check(s.tol > 0.0 && s.tol.is_finite(), "sim.tol", "must be finite and > 0")?;
        check(s.max_iters >= 1, "sim.max_iters", "must be >= 1")?;
        self.energy
            .validate()
            .map_err(|e| Error::config("energy", inner(e)))?;

        check(!self.devices.is_empty(), "devices", "at least one device is required")?;
        for (k, d) in self.devices.iter().enumerate() {
            let f = format!("devices[{k}]");
            check(d.id == k, format!("{f}.id"), format!("expected {k}, got {}", d.id))?;
            check(
                d.battery_init >= 0.0 && d.battery_init.is_finite(),
                format!("{f}.battery_init"),
                format!("must be finite and >= 0, got {}", d.battery_init),
            )?;
            check(
                (0.0..=1.0).contains(&d.alpha),
                format!("{f}.alpha"),
                format!("must lie in [0, 1], got {}", d.alpha),
            )?;
            if let Some(bad) = d.alpha_schedule.iter().flatten().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(Error::config(
                    format!("{f}.alpha_schedule"),
                    format!("entries must lie in [0, 1], got {bad}"),
                ));
            }
            d.cpu.validate(&format!("{f}.cpu"))?;
            d.bw.validate(&format!("{f}.bw"))?;
        }

        check(!self.apps.is_empty(), "apps", "at least one application is required")?;
        for (k, a) in self.apps.iter().enumerate() {
            let f = format!("apps[{k}]");
            check(a.id == k, format!("{f}.id"), format!("expected {k}, got {}", a.id))?;
            check(a.interested.iter().all(|&d| d < self.devices.len()),
                format!("{f}.interested"),
                format!("refers to a device outside 0..{}", self.devices.len()),
            )?;
            a.to_spec()
                .validate(self.devices.len())
                .map_err(|e| Error::config(f.clone(), inner(e)))?;
        }

        if let Some(order) = &s.app_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            check(
                sorted == (0..self.apps.len()).collect::<Vec<_>>(),
                "sim.app_order",
                format!("must be a permutation of 0..{}", self.apps.len()),
            )?;
        }

        if let Some(sw) = &self.sweep {
            check(!sw.values.is_empty(), "sweep.values", "must not be empty")?;
            check(sw.repetitions >= 1, "sweep.repetitions", "must be >= 1")?;
            check(
                sw.policies.as_ref().is_none_or(|p| !p.is_empty()),
                "sweep.policies",
                "must not be empty",
            )?;
            check(
                sw.estimators.as_ref().is_none_or(|e| !e.is_empty()),
                "sweep.estimators",
                "must not be empty",
            )?;
            match sw.param {
                SweepParam::POn => {
                    check(
                        sw.values.iter().all(|v| (0.0..=1.0).contains(v)),
                        "sweep.values",
                        "p_on values must lie in [0, 1]",
                    )?;
                    let any = self
                        .devices
                        .iter()
                        .any(|d| d.cpu.kind == ChannelKind::Bernoulli || d.bw.kind == ChannelKind::Bernoulli);
                    check(any, "sweep.param", "p_on sweep needs at least one bernoulli channel")?;
                }
                SweepParam::NDevices => check(
                    sw.values.iter().all(|&v| v >= 1.0 && v.fract() == 0.0 && v <= 1e6),
                    "sweep.values",
                    "n_devices values must be positive integers",
                )?,
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<System> {
        let devices = self
            .devices
            .iter()
            .map(|d| DeviceSpec {
                id: d.id,
                battery_init: d.battery_init,
                alpha: d.alpha,
                alpha_schedule: d.alpha_schedule.clone(),
            })
            .collect();
        System::new(devices, self.apps.iter().map(AppConfig::to_spec).collect(), self.energy)
    }

    /// Realizes every channel for the run seed.
    pub fn traces(&self, base_dir: &Path) -> Result<Vec<DeviceTraces>> {
        let (t, seed) = (self.sim.horizon, self.sim.seed);
        self.devices
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let (cpu, cpu_meta) = d.cpu.realize(i, Resource::Compute, t, seed, base_dir)?;
                let (bw, bw_meta) = d.bw.realize(i, Resource::Bandwidth, t, seed, base_dir)?;
                Ok(DeviceTraces {
                    cpu,
                    bw,
                    cpu_meta: Some(cpu_meta),
                    bw_meta: Some(bw_meta),
                })
            })
            .collect()
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            controller: ControllerConfig {
                omega: s.omega,
                estimator: s.estimator,
                problem: ProblemSettings {
                    utility: s.utility,
                    eps: s.eps,
                    work_cap: s.work_cap,
                },
                solver: SolverOptions {
                    tol: s.tol,
                    max_iters: s.max_iters,
                    ..SolverOptions::default()
                },
            },
            seed: s.seed,
            app_order: s.app_order.clone(),
            early_stop: s.early_stop,
        }
    }

    /// Copy with every Bernoulli channel's ON probability replaced.
    pub fn with_p_on(&self, p_on: f64) -> Config {
        let mut c = self.clone();
        for d in &mut c.devices {
            for ch in [&mut d.cpu, &mut d.bw] {
                if ch.kind == ChannelKind::Bernoulli {
                    ch.p_on = Some(p_on);
                }
            }
        }
        c
    }

    /// Copy with `n` devices. Device `k` repeats the listed device `k mod len`;
    /// interested-device ids are folded into range the same way.
    pub fn with_n_devices(&self, n: usize) -> Config {
        let mut c = self.clone();
        let base = &self.devices;
        c.devices = (0..n)
            .map(|k| DeviceConfig {
                id: k,
                ..base[k % base.len()].clone()
            })
            .collect();
        for a in &mut c.apps {
            let mut ids: Vec<usize> = a.interested.iter().map(|&d| d % n).collect();
            ids.sort_unstable();
            ids.dedup();
            a.interested = ids;
        }
        c
    }
}

impl AppConfig {
    fn to_spec(&self) -> AppSpec {
        AppSpec {
            id: self.id,
            cpu_req: self.cpu_req,
            bw_req: self.bw_req,
            size: self.size,
            utility_weight: self.utility_weight,
            interested_devices: self.interested.clone(),
        }
    }
}

fn inner(e: Error) -> String {
    match e {
        Error::Invalid(msg) => msg,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG2: &str = r#"
[sim]
T = 60
omega = 10
policy = "aact"

[[devices]]
id = 0
battery_init = 20.0
cpu = { kind = "constant", level = 1.0 }
bw = { kind = "constant", level = 0.25 }

[[devices]]
id = 1
battery_init = 20.0
cpu = { kind = "constant", level = 0.5 }
bw = { kind = "constant", level = 0.5 }

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

    #[test]
    fn parses_static_pair() {
        let c = parse_config_str(FIG2).unwrap();
        assert_eq!(c.devices.len(), 2);
        assert_eq!(c.sim.horizon, 60);
        assert_eq!(c.sim.omega, 10);
        assert_eq!(c.devices[1].cpu.level, 0.5);
        assert_eq!(c.devices[0].bw.level, 0.25);
        assert_eq!(c.energy, EnergyModel::default());
        assert_eq!(c.sim.estimator, EstimatorKind::Oracle);
        let traces = c.traces(Path::new(".")).unwrap();
        assert_eq!(traces[0].bw.len(), 60);
        c.system().unwrap();
    }

    #[test]
    fn missing_apps_names_apps() {
        let text = FIG2.split("[[apps]]").next().unwrap();
        match parse_config_str(text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "apps"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let text = FIG2.replacen("battery_init = 20.0", "battery_init = 20.0\nalpha = 1.2", 1);
        match parse_config_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "devices[0].alpha"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn bad_p_on_names_channel() {
        let text = FIG2.replacen(
            r#"bw = { kind = "constant", level = 0.25 }"#,
            r#"bw = { kind = "bernoulli", level = 0.25, p_on = 1.5 }"#,
            1,
        );
        match parse_config_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "devices[0].bw.p_on"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_enums_are_rejected() {
        assert!(parse_config_str(&FIG2.replace("omega = 10", "omega = 10\nwindow = 3")).is_err());
        assert!(parse_config_str(&FIG2.replace(r#"policy = "aact""#, r#"policy = "greedy""#)).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = parse_config_str(FIG2).unwrap();
        c.sim.app_order = Some(vec![1, 0]);
        c.sweep = Some(SweepSection {
            param: SweepParam::NDevices,
            values: vec![1.0, 2.0, 3.0],
            repetitions: 2,
            policies: Some(vec![Policy::Aact, Policy::Sequential]),
            estimators: None,
        });
        let text = to_toml(&c).unwrap();
        assert_eq!(parse_config_str(&text).unwrap(), c);
    }

    #[test]
    fn n_devices_cycles_and_folds_interest() {
        let c = parse_config_str(FIG2).unwrap();
        let one = c.with_n_devices(1);
        assert_eq!(one.devices.len(), 1);
        assert_eq!(one.apps[1].interested, vec![0]);
        let four = c.with_n_devices(4);
        assert_eq!(four.devices[3].cpu, c.devices[1].cpu);
        assert_eq!(four.devices[3].id, 3);
        four.validate().unwrap();
    }

    #[test]
    fn p_on_sweep_needs_bernoulli() {
        let text = format!("{FIG2}\n[sweep]\nparam = \"p_on\"\nvalues = [0.5]\n");
        match parse_config_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sweep.param"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
