//! Receding-horizon control: forecast capacities over the window, solve the
//! window problem, keep only the first slot.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMeta, DeviceTraces, Resource};
use crate::error::{Error, Result};
use crate::model::{AllocationDecision, SlotState, System, Trace};
use crate::problem::{
    build_window_problem, effective_window, CapacityWindow, ProblemSettings, WindowInputs, WindowProblem,
};
use crate::solver::{solve, SolveStatus, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// True future capacities.
    #[default]
    Oracle,
    /// Expected capacity of the channel, repeated over the window.
    Average,
    /// The current slot's capacity, repeated over the window.
    HoldLast,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Average => "average",
            EstimatorKind::HoldLast => "hold-last",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub omega: usize,
    pub estimator: EstimatorKind,
    pub problem: ProblemSettings,
    pub solver: SolverOptions,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            omega: 10,
            estimator: EstimatorKind::Oracle,
            problem: ProblemSettings::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub status: SolveStatus,
    pub objective: f64,
}

impl SolveStats {
    /// Combines the stats of several independent solves in one slot.
    fn merge(self, other: SolveStats) -> SolveStats {
        let rank = |s: SolveStatus| match s {
            SolveStatus::Converged => 0,
            SolveStatus::MaxIters => 1,
            SolveStatus::Infeasible => 2,
        };
        SolveStats {
            iterations: self.iterations + other.iterations,
            status: if rank(other.status) > rank(self.status) { other.status } else { self.status },
            objective: self.objective + other.objective,
        }
    }
}

impl Default for SolveStats {
    fn default() -> Self {
        SolveStats {
            iterations: 0,
            status: SolveStatus::Converged,
            objective: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub decision: AllocationDecision,
    pub stats: SolveStats,
    /// Device that made the decision, for the distributed controller.
    pub decision_maker: Option<usize>,
}

/// Capacity forecast for slots `t .. t + len` of one trace.
pub fn estimate(
    kind: EstimatorKind,
    trace: &Trace,
    meta: Option<&ChannelMeta>,
    t: usize,
    len: usize,
) -> Result<Vec<f64>> {
    if t + len > trace.len() {
        return Err(Error::Invalid(format!(
            "window {t}..{} runs past the trace end {}",
            t + len,
            trace.len()
        )));
    }
    Ok(match kind {
        EstimatorKind::Oracle => trace.values()[t..t + len].to_vec(),
        EstimatorKind::HoldLast => vec![trace.at(t); len],
        EstimatorKind::Average => {
            let meta = meta.ok_or_else(|| Error::Invalid("average estimator needs channel metadata".into()))?;
            vec![meta.expected(); len]
        }
    })
}

fn device_window(
    kind: EstimatorKind,
    device: usize,
    traces: &DeviceTraces,
    t: usize,
    len: usize,
) -> Result<CapacityWindow> {
    let one = |resource: Resource| {
        let (trace, meta) = traces.get(resource);
        estimate(kind, trace, meta, t, len).map_err(|e| match e {
            Error::Invalid(_) if kind == EstimatorKind::Average && meta.is_none() => Error::MissingChannelMeta {
                device,
                resource: resource.name(),
            },
            other => other,
        })
    };
    Ok(CapacityWindow {
        cpu: one(Resource::Compute)?,
        bw: one(Resource::Bandwidth)?,
    })
}

/// Forecast windows for every device; `kind_for(i)` picks each device's estimator.
pub fn estimate_windows(
    traces: &[DeviceTraces],
    t: usize,
    len: usize,
    kind_for: impl Fn(usize) -> EstimatorKind,
) -> Result<Vec<CapacityWindow>> {
    traces
        .iter()
        .enumerate()
        .map(|(i, tr)| device_window(kind_for(i), i, tr, t, len))
        .collect()
}

pub(crate) fn horizon(traces: &[DeviceTraces]) -> usize {
    traces.iter().map(DeviceTraces::horizon).min().unwrap_or(0)
}

pub(crate) fn window_len(traces: &[DeviceTraces], state: &SlotState, omega: usize) -> Result<usize> {
    if omega == 0 {
        return Err(Error::Invalid("window size omega must be >= 1".into()));
    }
    let len = effective_window(state.t, horizon(traces), omega);
    if len == 0 {
        return Err(Error::EmptyWindow);
    }
    Ok(len)
}

/// Slot-`slot` slice of a window solution.
pub fn slot_decision(problem: &WindowProblem, x: &[f64], slot: usize) -> AllocationDecision {
    let l = problem.layout;
    AllocationDecision {
        eta_ij: (0..l.n_devices)
            .map(|i| (0..l.n_apps).map(|j| x[l.eta_ij(i, j, slot)]).collect())
            .collect(),
        eta_j: (0..l.n_apps).map(|j| x[l.eta_j(j, slot)]).collect(),
        w_used: (0..l.n_devices).map(|i| x[l.w(i, slot)]).collect(),
        c_used: (0..l.n_devices).map(|i| x[l.c(i, slot)]).collect(),
    }
}

/// Shrinks each device's row by the largest factor in `[0, 1]` that fits the
/// realized capacities of slot `t`, then re-derives usages and aggregates.
pub fn clamp_to_capacity(system: &System, traces: &[DeviceTraces], t: usize, decision: &mut AllocationDecision) {
    for (i, row) in decision.eta_ij.iter_mut().enumerate() {
        for v in row.iter_mut() {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        let (cpu, bw) = row.iter().zip(&system.apps).fold((0.0, 0.0), |(c, w), (&e, a)| {
            (c + e * a.cpu_req, w + e * a.bw_req)
        });
        let mut factor: f64 = 1.0;
        let time: f64 = row.iter().sum();
        for (used, cap) in [(bw, traces[i].bw.at(t)), (cpu, traces[i].cpu.at(t)), (time, 1.0)] {
            if used > cap {
                factor = factor.min(cap / used);
            }
        }
        if factor < 1.0 {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
    }
    decision.tighten(&system.apps);
}

fn solve_inputs(inputs: &WindowInputs, config: &ControllerConfig) -> Result<(WindowProblem, Vec<f64>, SolveStats)> {
    let problem = build_window_problem(inputs, &config.problem)?;
    let sol = solve(&problem, &config.solver);
    let stats = SolveStats {
        iterations: sol.iterations,
        status: sol.status,
        objective: sol.objective,
    };
    Ok((problem, sol.x, stats))
}

/// Plans over the window from the given forecasts and returns the clamped slot-`t` decision.
pub(crate) fn plan_and_apply(
    system: &System,
    traces: &[DeviceTraces],
    state: &SlotState,
    estimates: Vec<CapacityWindow>,
    config: &ControllerConfig,
) -> Result<StepOutcome> {
    let inputs = WindowInputs::from_state(system, state, estimates);
    let (problem, x, stats) = solve_inputs(&inputs, config)?;
    let mut decision = slot_decision(&problem, &x, 0);
    clamp_to_capacity(system, traces, state.t, &mut decision);
    Ok(StepOutcome {
        decision,
        stats,
        decision_maker: None,
    })
}

/// Centralized AACT: every device's forecast comes from `config.estimator`.
pub fn aact_step(
    system: &System,
    traces: &[DeviceTraces],
    state: &SlotState,
    config: &ControllerConfig,
) -> Result<StepOutcome> {
    let len = window_len(traces, state, config.omega)?;
    let estimates = estimate_windows(traces, state.t, len, |_| config.estimator)?;
    plan_and_apply(system, traces, state, estimates, config)
}

/// AACT-distributed: a uniformly drawn device plans with its own forecast and
/// only the current-slot capacities of every other device.
pub fn aact_distributed_step<R: Rng + ?Sized>(
    system: &System,
    traces: &[DeviceTraces],
    state: &SlotState,
    config: &ControllerConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let len = window_len(traces, state, config.omega)?;
    let maker = rng.gen_range(0..system.n_devices());
    let estimates = estimate_windows(traces, state.t, len, |i| {
        if i == maker {
            config.estimator
        } else {
            EstimatorKind::HoldLast
        }
    })?;
    let mut out = plan_and_apply(system, traces, state, estimates, config)?;
    out.decision_maker = Some(maker);
    Ok(out)
}

pub(crate) fn merge_stats(stats: impl IntoIterator<Item = SolveStats>) -> SolveStats {
    stats.into_iter().fold(SolveStats::default(), SolveStats::merge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{constant_trace, ChannelMeta};
    use crate::model::{validate_allocation, AppSpec, DeviceSpec, EnergyModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn static_pair_system() -> (System, Vec<DeviceTraces>) {
        let apps = vec![
            AppSpec {
                id: 0,
                cpu_req: 0.5,
                bw_req: 1.0,
                size: 2.0,
                utility_weight: 1.0,
                interested_devices: vec![0],
            },
            AppSpec {
                id: 1,
                cpu_req: 1.5,
                bw_req: 0.0,
                size: 5.0,
                utility_weight: 1.0,
                interested_devices: vec![1],
            },
        ];
        let sys = System::new(
            vec![
                DeviceSpec::new(0, 20.0, 1.0).unwrap(),
                DeviceSpec::new(1, 20.0, 1.0).unwrap(),
            ],
            apps,
            EnergyModel::default(),
        )
        .unwrap();
        let traces = vec![
            DeviceTraces::constant(constant_trace(1.0, 60), constant_trace(0.25, 60)),
            DeviceTraces::constant(constant_trace(0.5, 60), constant_trace(0.5, 60)),
        ];
        (sys, traces)
    }

    #[test]
    fn estimator_examples() {
        let trace = Trace::new(vec![0.5, 0.0, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(
            estimate(EstimatorKind::Oracle, &trace, None, 1, 3).unwrap(),
            vec![0.0, 0.5, 0.5]
        );
        let meta = ChannelMeta::Bernoulli { level: 0.5, p_on: 0.5 };
        assert_eq!(
            estimate(EstimatorKind::Average, &trace, Some(&meta), 0, 4).unwrap(),
            vec![0.25; 4]
        );
        assert_eq!(
            estimate(EstimatorKind::HoldLast, &trace, None, 1, 4).unwrap(),
            vec![0.0; 4]
        );
        assert!(estimate(EstimatorKind::Average, &trace, None, 0, 2).is_err());
        assert!(estimate(EstimatorKind::Oracle, &trace, None, 3, 3).is_err());
    }

    #[test]
    fn missing_meta_is_reported_per_device() {
        let (sys, mut traces) = static_pair_system();
        traces[1].bw_meta = None;
        let state = SlotState::initial(&sys);
        let cfg = ControllerConfig {
            estimator: EstimatorKind::Average,
            ..Default::default()
        };
        assert!(matches!(
            aact_step(&sys, &traces, &state, &cfg),
            Err(Error::MissingChannelMeta { device: 1, resource: "bw" })
        ));
    }

    #[test]
    fn estimators_agree_on_constant_traces() {
        let (sys, traces) = static_pair_system();
        let state = SlotState::initial(&sys);
        let decisions: Vec<_> = [EstimatorKind::Oracle, EstimatorKind::Average, EstimatorKind::HoldLast]
            .into_iter()
            .map(|estimator| {
                let cfg = ControllerConfig {
                    estimator,
                    ..Default::default()
                };
                aact_step(&sys, &traces, &state, &cfg).unwrap().decision
            })
            .collect();
        assert_eq!(decisions[0], decisions[1]);
        assert_eq!(decisions[0], decisions[2]);
    }

    #[test]
    fn unit_window_matches_single_slot_problem() {
        let (sys, traces) = static_pair_system();
        let state = SlotState::initial(&sys);
        let cfg = ControllerConfig {
            omega: 1,
            ..Default::default()
        };
        let step = aact_step(&sys, &traces, &state, &cfg).unwrap();
        let estimates = estimate_windows(&traces, 0, 1, |_| EstimatorKind::Oracle).unwrap();
        let inputs = WindowInputs::from_state(&sys, &state, estimates);
        let problem = build_window_problem(&inputs, &cfg.problem).unwrap();
        let direct = solve(&problem, &cfg.solver);
        assert_eq!(step.decision, slot_decision(&problem, &direct.x, 0));
    }

    #[test]
    fn distributed_single_device_matches_centralized() {
        let (mut sys, mut traces) = static_pair_system();
        sys.devices.truncate(1);
        traces.truncate(1);
        for a in &mut sys.apps {
            a.interested_devices = vec![0];
        }
        let state = SlotState::initial(&sys);
        let cfg = ControllerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = aact_distributed_step(&sys, &traces, &state, &cfg, &mut rng).unwrap();
        let c = aact_step(&sys, &traces, &state, &cfg).unwrap();
        assert_eq!(d.decision, c.decision);
        assert_eq!(d.decision_maker, Some(0));
    }

    #[test]
    fn distributed_matches_on_constant_traces_for_any_maker() {
        let (sys, traces) = static_pair_system();
        let state = SlotState::initial(&sys);
        let cfg = ControllerConfig::default();
        let c = aact_step(&sys, &traces, &state, &cfg).unwrap();
        let mut makers = std::collections::BTreeSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..12 {
            let d = aact_distributed_step(&sys, &traces, &state, &cfg, &mut rng).unwrap();
            assert_eq!(d.decision, c.decision);
            makers.insert(d.decision_maker.unwrap());
        }
        assert_eq!(makers.len(), 2);
    }

    #[test]
    fn optimistic_plans_are_clamped_to_reality() {
        let (sys, mut traces) = static_pair_system();
        // Device 0's bandwidth is OFF now, but the average forecast expects 0.25.
        let mut bw = vec![0.25; 60];
        bw[0] = 0.0;
        traces[0].bw = Trace::new(bw).unwrap();
        traces[0].bw_meta = Some(ChannelMeta::Bernoulli { level: 0.5, p_on: 0.5 });
        let state = SlotState::initial(&sys);
        let cfg = ControllerConfig {
            estimator: EstimatorKind::Average,
            ..Default::default()
        };
        let out = aact_step(&sys, &traces, &state, &cfg).unwrap();
        assert_eq!(out.decision.w_used[0], 0.0);
        assert_eq!(out.decision.eta_ij[0][0], 0.0);
        assert!(validate_allocation(&sys, &traces, &state, &out.decision, 1e-9).is_empty());
    }

    #[test]
    fn step_rejects_exhausted_horizon() {
        let (sys, traces) = static_pair_system();
        let mut state = SlotState::initial(&sys);
        state.t = 60;
        assert!(matches!(
            aact_step(&sys, &traces, &state, &ControllerConfig::default()),
            Err(Error::EmptyWindow)
        ));
    }
}
