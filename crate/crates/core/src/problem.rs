//! The per-window utility maximization problem as a flat decision vector.
//!
//! Every window slot `tau` owns one contiguous block laid out as
//! `[eta_ij (N*A, device-major) | eta_j (A) | w (N) | c (N) | b (N)]`, where
//! `b` is the battery level *after* the slot. The battery level at the start of
//! the window is data, not a variable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AppSpec, EnergyModel, SlotState, System};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    /// `u * ln(1 + eta)`
    #[default]
    Log1p,
    /// `u * eta`
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    pub weights: Vec<f64>,
}

impl UtilitySpec {
    pub fn value(&self, app: usize, eta: f64) -> f64 {
        let u = self.weights[app];
        match self.kind {
            UtilityKind::Log1p => u * eta.ln_1p(),
            UtilityKind::Linear => u * eta,
        }
    }

    pub fn derivative(&self, app: usize, eta: f64) -> f64 {
        let u = self.weights[app];
        match self.kind {
            UtilityKind::Log1p => u / (1.0 + eta),
            UtilityKind::Linear => u,
        }
    }
}

/// How remaining application work limits the plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WorkCap {
    /// `eta_j <= remaining_j` in every window slot.
    #[default]
    PerSlot,
    /// `sum over the window of eta_j <= remaining_j`. With a strictly concave
    /// utility this spreads the remaining work evenly over the window, so an
    /// application only completes once the window is truncated by the horizon.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSettings {
    pub utility: UtilityKind,
    /// Weight of the energy tie-break term.
    pub eps: f64,
    pub work_cap: WorkCap,
}

impl Default for ProblemSettings {
    fn default() -> Self {
        ProblemSettings {
            utility: UtilityKind::Log1p,
            eps: 1e-4,
            work_cap: WorkCap::PerSlot,
        }
    }
}

/// Estimated capacities of one device over the window.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityWindow {
    pub cpu: Vec<f64>,
    pub bw: Vec<f64>,
}

/// `min(omega, horizon - t)`, or 0 once the horizon is exhausted.
pub fn effective_window(t: usize, horizon: usize, omega: usize) -> usize {
    omega.min(horizon.saturating_sub(t))
}

/// Everything needed to pose one window problem, independent of which policy poses it.
#[derive(Debug, Clone)]
pub struct WindowInputs {
    pub apps: Vec<AppSpec>,
    pub energy: EnergyModel,
    pub battery: Vec<f64>,
    /// `[device][window slot]`
    pub alpha: Vec<Vec<f64>>,
    pub remaining_work: Vec<f64>,
    pub estimates: Vec<CapacityWindow>,
}

impl WindowInputs {
    pub fn from_state(system: &System, state: &SlotState, estimates: Vec<CapacityWindow>) -> Self {
        let len = estimates.first().map_or(0, |e| e.cpu.len());
        WindowInputs {
            apps: system.apps.clone(),
            energy: system.energy,
            battery: state.battery.clone(),
            alpha: system
                .devices
                .iter()
                .map(|d| (0..len).map(|k| d.alpha_at(state.t + k)).collect())
                .collect(),
            remaining_work: state.remaining_work.clone(),
            estimates,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    EtaDeviceApp { device: usize, app: usize },
    EtaApp { app: usize },
    Bandwidth { device: usize },
    Compute { device: usize },
    Battery { device: usize },
}

/// Maps `(role, slot)` to flat positions and back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_devices: usize,
    pub n_apps: usize,
    pub window_len: usize,
}

impl Layout {
    pub fn block(&self) -> usize {
        let (n, a) = (self.n_devices, self.n_apps);
        n * a + a + 3 * n
    }

    pub fn dim(&self) -> usize {
        self.window_len * self.block()
    }

    pub fn index(&self, role: VarRole, slot: usize) -> usize {
        let (n, a) = (self.n_devices, self.n_apps);
        let base = slot * self.block();
        base + match role {
            VarRole::EtaDeviceApp { device, app } => device * a + app,
            VarRole::EtaApp { app } => n * a + app,
            VarRole::Bandwidth { device } => n * a + a + device,
            VarRole::Compute { device } => n * a + a + n + device,
            VarRole::Battery { device } => n * a + a + 2 * n + device,
        }
    }

    pub fn role(&self, index: usize) -> (VarRole, usize) {
        let (n, a) = (self.n_devices, self.n_apps);
        let slot = index / self.block();
        let k = index % self.block();
        let role = if k < n * a {
            VarRole::EtaDeviceApp {
                device: k / a,
                app: k % a,
            }
        } else if k < n * a + a {
            VarRole::EtaApp { app: k - n * a }
        } else if k < n * a + a + n {
            VarRole::Bandwidth {
                device: k - n * a - a,
            }
        } else if k < n * a + a + 2 * n {
            VarRole::Compute {
                device: k - n * a - a - n,
            }
        } else {
            VarRole::Battery {
                device: k - n * a - a - 2 * n,
            }
        };
        (role, slot)
    }

    pub fn eta_ij(&self, device: usize, app: usize, slot: usize) -> usize {
        self.index(VarRole::EtaDeviceApp { device, app }, slot)
    }
    pub fn eta_j(&self, app: usize, slot: usize) -> usize {
        self.index(VarRole::EtaApp { app }, slot)
    }
    pub fn w(&self, device: usize, slot: usize) -> usize {
        self.index(VarRole::Bandwidth { device }, slot)
    }
    pub fn c(&self, device: usize, slot: usize) -> usize {
        self.index(VarRole::Compute { device }, slot)
    }
    pub fn b(&self, device: usize, slot: usize) -> usize {
        self.index(VarRole::Battery { device }, slot)
    }
}

#[derive(Debug, Clone)]
pub struct WindowProblem {
    pub layout: Layout,
    pub cpu_req: Vec<f64>,
    pub bw_req: Vec<f64>,
    /// `[device][slot]`
    pub cpu_cap: Vec<Vec<f64>>,
    /// `[device][slot]`
    pub bw_cap: Vec<Vec<f64>>,
    pub initial_battery: Vec<f64>,
    /// `[device][slot]`
    pub alpha: Vec<Vec<f64>>,
    pub energy: EnergyModel,
    pub utility: UtilitySpec,
    pub remaining_work: Vec<f64>,
    pub work_cap: WorkCap,
    pub eps: f64,
}

pub fn build_window_problem(inputs: &WindowInputs, settings: &ProblemSettings) -> Result<WindowProblem> {
    let n = inputs.estimates.len();
    let a = inputs.apps.len();
    let len = inputs.estimates.first().map_or(0, |e| e.cpu.len());
    if len == 0 || n == 0 {
        return Err(Error::EmptyWindow);
    }
    for (what, got) in [
        ("battery vs devices", inputs.battery.len()),
        ("alpha rows vs devices", inputs.alpha.len()),
    ] {
        if got != n {
            return Err(Error::Dimension { what, expected: n, got });
        }
    }
    if inputs.remaining_work.len() != a {
        return Err(Error::Dimension {
            what: "remaining work vs applications",
            expected: a,
            got: inputs.remaining_work.len(),
        });
    }
    for (i, est) in inputs.estimates.iter().enumerate() {
        if est.cpu.len() != len || est.bw.len() != len || inputs.alpha[i].len() != len {
            return Err(Error::Dimension {
                what: "estimate window length",
                expected: len,
                got: est.cpu.len().min(est.bw.len()).min(inputs.alpha[i].len()),
            });
        }
        if let Some((slot, &value)) = est
            .cpu
            .iter()
            .chain(&est.bw)
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0))
        {
            return Err(Error::NegativeCapacity {
                device: i,
                slot: slot % len,
                value,
            });
        }
        if !(inputs.battery[i] >= 0.0) {
            return Err(Error::Invalid(format!(
                "device {i}: starting battery {} is negative",
                inputs.battery[i]
            )));
        }
    }
    if !(settings.eps >= 0.0) {
        return Err(Error::Invalid(format!("eps must be >= 0, got {}", settings.eps)));
    }

    Ok(WindowProblem {
        layout: Layout {
            n_devices: n,
            n_apps: a,
            window_len: len,
        },
        cpu_req: inputs.apps.iter().map(|x| x.cpu_req).collect(),
        bw_req: inputs.apps.iter().map(|x| x.bw_req).collect(),
        cpu_cap: inputs.estimates.iter().map(|e| e.cpu.clone()).collect(),
        bw_cap: inputs.estimates.iter().map(|e| e.bw.clone()).collect(),
        initial_battery: inputs.battery.clone(),
        alpha: inputs.alpha.clone(),
        energy: inputs.energy,
        utility: UtilitySpec {
            kind: settings.utility,
            weights: inputs.apps.iter().map(|x| x.utility_weight).collect(),
        },
        remaining_work: inputs.remaining_work.iter().map(|&r| r.max(0.0)).collect(),
        work_cap: settings.work_cap,
        eps: settings.eps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowConstraint {
    Nonnegative,
    TimeBudget,
    Aggregate,
    BandwidthDemand,
    BandwidthCap,
    ComputeDemand,
    ComputeCap,
    BatteryChain,
    RemainingWork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowViolation {
    pub constraint: WindowConstraint,
    pub slot: Option<usize>,
    pub device: Option<usize>,
    pub app: Option<usize>,
    pub excess: f64,
}

impl WindowProblem {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn window_len(&self) -> usize {
        self.layout.window_len
    }

    /// Energy one unit of `app` costs over a full slot.
    pub fn unit_energy(&self, app: usize) -> f64 {
        self.energy.drain(self.cpu_req[app], self.bw_req[app])
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                what: "decision vector",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let l = &self.layout;
        let mut utility = 0.0;
        let mut energy = 0.0;
        for slot in 0..l.window_len {
            for j in 0..l.n_apps {
                utility += self.utility.value(j, x[l.eta_j(j, slot)]);
            }
            for i in 0..l.n_devices {
                energy += self.energy.drain(x[l.c(i, slot)], x[l.w(i, slot)]);
            }
        }
        Ok(utility - self.eps * energy)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let l = &self.layout;
        let mut g = vec![0.0; self.dim()];
        for slot in 0..l.window_len {
            for j in 0..l.n_apps {
                let k = l.eta_j(j, slot);
                g[k] = self.utility.derivative(j, x[k]);
            }
            for i in 0..l.n_devices {
                g[l.c(i, slot)] = -self.eps * self.energy.gamma_c;
                g[l.w(i, slot)] = -self.eps * self.energy.gamma_w;
            }
        }
        Ok(g)
    }

    /// Zero allocation with the battery decaying by `alpha` alone. Always feasible.
    pub fn zero_point(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut x = vec![0.0; self.dim()];
        for i in 0..l.n_devices {
            let mut b = self.initial_battery[i];
            for slot in 0..l.window_len {
                b *= self.alpha[i][slot];
                x[l.b(i, slot)] = b;
            }
        }
        x
    }

    /// Battery after each slot given the usages stored in `x`, for device `i`.
    pub fn battery_chain(&self, x: &[f64], i: usize) -> Vec<f64> {
        let l = &self.layout;
        let mut b = self.initial_battery[i];
        (0..l.window_len)
            .map(|slot| {
                b = self.alpha[i][slot] * b - self.energy.drain(x[l.c(i, slot)], x[l.w(i, slot)]);
                b
            })
            .collect()
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> Result<Vec<WindowViolation>> {
        self.check_dim(x)?;
        let l = &self.layout;
        let mut out = Vec::new();
        let mut check = |constraint, slot, device, app, lhs: f64, rhs: f64| {
            let excess = lhs - rhs;
            if excess > tol || excess.is_nan() {
                out.push(WindowViolation {
                    constraint,
                    slot,
                    device,
                    app,
                    excess,
                });
            }
        };
        use WindowConstraint::*;

        for (k, &v) in x.iter().enumerate() {
            if v < -tol || v.is_nan() {
                let (role, slot) = l.role(k);
                let (device, app) = match role {
                    VarRole::EtaDeviceApp { device, app } => (Some(device), Some(app)),
                    VarRole::EtaApp { app } => (None, Some(app)),
                    VarRole::Bandwidth { device } | VarRole::Compute { device } | VarRole::Battery { device } => {
                        (Some(device), None)
                    }
                };
                check(Nonnegative, Some(slot), device, app, -v, 0.0);
            }
        }
        for slot in 0..l.window_len {
            for i in 0..l.n_devices {
                let row = (0..l.n_apps).map(|j| x[l.eta_ij(i, j, slot)]);
                let (mut time, mut cpu, mut bw) = (0.0, 0.0, 0.0);
                for (j, e) in row.enumerate() {
                    time += e;
                    cpu += e * self.cpu_req[j];
                    bw += e * self.bw_req[j];
                }
                let (s, d) = (Some(slot), Some(i));
                check(TimeBudget, s, d, None, time, 1.0);
                check(BandwidthDemand, s, d, None, bw, x[l.w(i, slot)]);
                check(BandwidthCap, s, d, None, x[l.w(i, slot)], self.bw_cap[i][slot]);
                check(ComputeDemand, s, d, None, cpu, x[l.c(i, slot)]);
                check(ComputeCap, s, d, None, x[l.c(i, slot)], self.cpu_cap[i][slot]);
            }
            for j in 0..l.n_apps {
                let given: f64 = (0..l.n_devices).map(|i| x[l.eta_ij(i, j, slot)]).sum();
                check(Aggregate, Some(slot), None, Some(j), x[l.eta_j(j, slot)], given);
            }
        }
        for i in 0..l.n_devices {
            let mut prev = self.initial_battery[i];
            for slot in 0..l.window_len {
                let expect = self.alpha[i][slot] * prev
                    - self.energy.drain(x[l.c(i, slot)], x[l.w(i, slot)]);
                let got = x[l.b(i, slot)];
                check(BatteryChain, Some(slot), Some(i), None, (got - expect).abs(), 0.0);
                prev = got;
            }
        }
        for j in 0..l.n_apps {
            let cap = self.remaining_work[j];
            match self.work_cap {
                WorkCap::PerSlot => {
                    for slot in 0..l.window_len {
                        check(RemainingWork, Some(slot), None, Some(j), x[l.eta_j(j, slot)], cap);
                    }
                }
                WorkCap::Window => {
                    let total: f64 = (0..l.window_len).map(|s| x[l.eta_j(j, s)]).sum();
                    check(RemainingWork, None, None, Some(j), total, cap);
                }
            }
        }
        Ok(out)
    }
}
