//! Devices, applications, per-slot state and the device-level constraint
//! arithmetic (bandwidth cap, compute cap, battery evolution).
//!
//! Units: compute in GHz, bandwidth in Mbps, energy in abstract units. An
//! application's requirement is what it consumes over one full slot when it is
//! allocated the whole slot (`eta = 1`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::DeviceTraces;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: usize,
    pub battery_init: f64,
    /// Background drain factor applied to the battery every slot.
    pub alpha: f64,
    /// Optional per-slot override of `alpha`; slots past its end fall back to `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_schedule: Option<Vec<f64>>,
}

impl DeviceSpec {
    pub fn new(id: usize, battery_init: f64, alpha: f64) -> Result<Self> {
        let spec = DeviceSpec {
            id,
            battery_init,
            alpha,
            alpha_schedule: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn alpha_at(&self, t: usize) -> f64 {
        self.alpha_schedule
            .as_ref()
            .and_then(|s| s.get(t).copied())
            .unwrap_or(self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.battery_init >= 0.0) || !self.battery_init.is_finite() {
            return Err(Error::Invalid(format!(
                "device {}: battery_init must be finite and >= 0, got {}",
                self.id, self.battery_init
            )));
        }
        let alphas = std::iter::once(self.alpha).chain(self.alpha_schedule.iter().flatten().copied());
        for a in alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Invalid(format!(
                    "device {}: alpha must lie in [0, 1], got {a}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    /// Energy per GHz of compute used for one slot.
    pub gamma_c: f64,
    /// Energy per Mbps of bandwidth used for one slot.
    pub gamma_w: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            gamma_c: 1.0,
            gamma_w: 1.0,
        }
    }
}

impl EnergyModel {
    pub fn new(gamma_c: f64, gamma_w: f64) -> Result<Self> {
        let m = EnergyModel { gamma_c, gamma_w };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_c >= 0.0 && self.gamma_w >= 0.0) {
            return Err(Error::Invalid(format!(
                "energy coefficients must be >= 0, got gamma_c={} gamma_w={}",
                self.gamma_c, self.gamma_w
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn drain(&self, c_used: f64, w_used: f64) -> f64 {
        self.gamma_c * c_used + self.gamma_w * w_used
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub id: usize,
    pub cpu_req: f64,
    pub bw_req: f64,
    /// Total work, in accumulated slot fractions.
    pub size: f64,
    pub utility_weight: f64,
    pub interested_devices: Vec<usize>,
}

impl AppSpec {
    pub fn validate(&self, n_devices: usize) -> Result<()> {
        let id = self.id;
        if !(self.cpu_req >= 0.0 && self.bw_req >= 0.0) {
            return Err(Error::Invalid(format!("app {id}: requirements must be >= 0")));
        }
        if self.cpu_req == 0.0 && self.bw_req == 0.0 {
            return Err(Error::Invalid(format!(
                "app {id}: cpu_req and bw_req cannot both be zero"
            )));
        }
        if !(self.size > 0.0) {
            return Err(Error::Invalid(format!("app {id}: size must be > 0")));
        }
        if !(self.utility_weight > 0.0) {
            return Err(Error::Invalid(format!("app {id}: utility_weight must be > 0")));
        }
        if self.interested_devices.is_empty() {
            return Err(Error::Invalid(format!(
                "app {id}: interested_devices must be nonempty"
            )));
        }
        if let Some(&d) = self.interested_devices.iter().find(|&&d| d >= n_devices) {
            return Err(Error::Invalid(format!(
                "app {id}: interested device {d} does not exist"
            )));
        }
        Ok(())
    }

    /// Energy drawn by running this application for one full slot.
    pub fn energy_per_unit(&self, energy: &EnergyModel) -> f64 {
        energy.drain(self.cpu_req, self.bw_req)
    }
}

/// The static part of a scenario: who exists, what they need and what energy costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub devices: Vec<DeviceSpec>,
    pub apps: Vec<AppSpec>,
    pub energy: EnergyModel,
}

impl System {
    pub fn new(devices: Vec<DeviceSpec>, apps: Vec<AppSpec>, energy: EnergyModel) -> Result<Self> {
        let sys = System {
            devices,
            apps,
            energy,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() {
            return Err(Error::Invalid("at least one device is required".into()));
        }
        if self.apps.is_empty() {
            return Err(Error::Invalid("at least one application is required".into()));
        }
        for (k, d) in self.devices.iter().enumerate() {
            if d.id != k {
                return Err(Error::Invalid(format!(
                    "device ids must be 0..N-1 in order; position {k} has id {}",
                    d.id
                )));
            }
            d.validate()?;
        }
        for (k, a) in self.apps.iter().enumerate() {
            if a.id != k {
                return Err(Error::Invalid(format!(
                    "app ids must be 0..A-1 in order; position {k} has id {}",
                    a.id
                )));
            }
            a.validate(self.devices.len())?;
        }
        self.energy.validate()
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn n_apps(&self) -> usize {
        self.apps.len()
    }
}

/// Per-slot capacities of one resource on one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace(Vec<f64>);

impl Trace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((t, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "trace entry {t} must be finite and >= 0, got {v}"
            )));
        }
        Ok(Trace(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn at(&self, t: usize) -> f64 {
        self.0[t]
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.0.iter().sum::<f64>() / self.0.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotState {
    pub t: usize,
    pub battery: Vec<f64>,
    pub remaining_work: Vec<f64>,
    /// Per-device progress on private copies of each application, `[device][app]`.
    /// Only the no-cooperation baseline reads or advances this; zero for
    /// applications the device is not interested in.
    pub copy_remaining: Vec<Vec<f64>>,
}

impl SlotState {
    pub fn initial(system: &System) -> Self {
        let copy_remaining = system
            .devices
            .iter()
            .map(|d| {
                system
                    .apps
                    .iter()
                    .map(|a| {
                        if a.interested_devices.contains(&d.id) {
                            a.size
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        SlotState {
            t: 0,
            battery: system.devices.iter().map(|d| d.battery_init).collect(),
            remaining_work: system.apps.iter().map(|a| a.size).collect(),
            copy_remaining,
        }
    }

    pub fn all_complete(&self) -> bool {
        self.remaining_work.iter().all(|&r| r <= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationDecision {
    /// `[device][app]` time fractions.
    pub eta_ij: Vec<Vec<f64>>,
    pub eta_j: Vec<f64>,
    pub w_used: Vec<f64>,
    pub c_used: Vec<f64>,
}

impl AllocationDecision {
    pub fn zeros(n_devices: usize, n_apps: usize) -> Self {
        AllocationDecision {
            eta_ij: vec![vec![0.0; n_apps]; n_devices],
            eta_j: vec![0.0; n_apps],
            w_used: vec![0.0; n_devices],
            c_used: vec![0.0; n_devices],
        }
    }

    /// Sets every usage to its exact demand and caps each `eta_j` by the
    /// cooperative time actually given to it.
    pub fn tighten(&mut self, apps: &[AppSpec]) {
        for (row, (w, c)) in self
            .eta_ij
            .iter()
            .zip(self.w_used.iter_mut().zip(self.c_used.iter_mut()))
        {
            let (cpu, bw) = demand(row, apps);
            *w = bw;
            *c = cpu;
        }
        for (j, e) in self.eta_j.iter_mut().enumerate() {
            let given: f64 = self.eta_ij.iter().map(|row| row[j]).sum();
            *e = e.min(given).max(0.0);
        }
    }
}

/// Battery level after one slot. The raw value is returned, so a negative
/// result signals an infeasible usage.
#[inline]
pub fn battery_step(battery: f64, alpha: f64, energy: &EnergyModel, c_used: f64, w_used: f64) -> f64 {
    alpha * battery - energy.drain(c_used, w_used)
}

fn demand(eta_row: &[f64], apps: &[AppSpec]) -> (f64, f64) {
    eta_row.iter().zip(apps).fold((0.0, 0.0), |(c, w), (&e, a)| {
        (c + e * a.cpu_req, w + e * a.bw_req)
    })
}

/// Compute and bandwidth consumed by one device's time allocation, as `(cpu, bw)`.
pub fn resource_demand(eta_row: &[f64], apps: &[AppSpec]) -> Result<(f64, f64)> {
    if eta_row.len() != apps.len() {
        return Err(Error::Dimension {
            what: "eta row vs applications",
            expected: apps.len(),
            got: eta_row.len(),
        });
    }
    Ok(demand(eta_row, apps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Nonnegative,
    TimeBudget,
    Aggregate,
    BandwidthDemand,
    BandwidthCap,
    ComputeDemand,
    ComputeCap,
    Battery,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintKind::Nonnegative => "nonnegativity",
            ConstraintKind::TimeBudget => "time-budget",
            ConstraintKind::Aggregate => "aggregate-time",
            ConstraintKind::BandwidthDemand => "bandwidth-demand",
            ConstraintKind::BandwidthCap => "bandwidth-cap",
            ConstraintKind::ComputeDemand => "compute-demand",
            ConstraintKind::ComputeCap => "compute-cap",
            ConstraintKind::Battery => "battery",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub device: Option<usize>,
    pub app: Option<usize>,
    /// Amount by which the constraint is exceeded (always > tol).
    pub excess: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(d) = self.device {
            write!(f, " device {d}")?;
        }
        if let Some(a) = self.app {
            write!(f, " app {a}")?;
        }
        write!(f, ", excess {:.6}", self.excess)
    }
}

struct Collector {
    tol: f64,
    out: Vec<Violation>,
}

impl Collector {
    fn check(&mut self, kind: ConstraintKind, device: Option<usize>, app: Option<usize>, lhs: f64, rhs: f64) {
        let excess = lhs - rhs;
        if excess > self.tol || excess.is_nan() {
            self.out.push(Violation {
                kind,
                device,
                app,
                excess,
            });
        }
    }
}

/// Checks a single-slot decision against the true capacities of slot `state.t`.
/// Returns every violated constraint; an empty list means feasible.
pub fn validate_allocation(
    system: &System,
    traces: &[DeviceTraces],
    state: &SlotState,
    decision: &AllocationDecision,
    tol: f64,
) -> Vec<Violation> {
    let n = system.n_devices();
    let a = system.n_apps();
    let mut col = Collector { tol, out: Vec::new() };
    use ConstraintKind::*;

    for i in 0..n {
        let row = &decision.eta_ij[i];
        for (j, &e) in row.iter().enumerate() {
            col.check(Nonnegative, Some(i), Some(j), -e, 0.0);
        }
        col.check(Nonnegative, Some(i), None, -decision.w_used[i], 0.0);
        col.check(Nonnegative, Some(i), None, -decision.c_used[i], 0.0);
        col.check(TimeBudget, Some(i), None, row.iter().sum(), 1.0);

        let (cpu, bw) = demand(row, &system.apps);
        col.check(BandwidthDemand, Some(i), None, bw, decision.w_used[i]);
        col.check(BandwidthCap, Some(i), None, decision.w_used[i], traces[i].bw.at(state.t));
        col.check(ComputeDemand, Some(i), None, cpu, decision.c_used[i]);
        col.check(ComputeCap, Some(i), None, decision.c_used[i], traces[i].cpu.at(state.t));

        let next = battery_step(
            state.battery[i],
            system.devices[i].alpha_at(state.t),
            &system.energy,
            decision.c_used[i],
            decision.w_used[i],
        );
        col.check(Battery, Some(i), None, -next, 0.0);
    }
    for j in 0..a {
        col.check(Nonnegative, None, Some(j), -decision.eta_j[j], 0.0);
        let given: f64 = decision.eta_ij.iter().map(|row| row[j]).sum();
        col.check(Aggregate, None, Some(j), decision.eta_j[j], given);
    }
    col.out
}
