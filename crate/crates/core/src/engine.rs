//! The slot loop: policy step, validation, battery and progress bookkeeping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{no_cooperation_step, random_app_order, sequential_cooperation_step};
use crate::channel::DeviceTraces;
use crate::controller::{aact_distributed_step, aact_step, horizon, ControllerConfig, SolveStats, StepOutcome};
use crate::error::{Error, Result};
use crate::model::{battery_step, validate_allocation, AllocationDecision, SlotState, System};
use crate::problem::UtilitySpec;
use crate::solver::SolveStatus;

/// Remaining work at or below this is treated as done.
pub const COMPLETION_TOL: f64 = 1e-6;
/// Tolerance for validating every emitted decision.
pub const VALIDATION_TOL: f64 = 1e-6;

const ELECTION_STREAM: u64 = 0;
const ORDER_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Aact,
    AactDistributed,
    NoCoop,
    Sequential,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Aact => "aact",
            Policy::AactDistributed => "aact-distributed",
            Policy::NoCoop => "no-coop",
            Policy::Sequential => "sequential",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub controller: ControllerConfig,
    pub seed: u64,
    /// Fixed order for the sequential policy; drawn from the seed when absent.
    pub app_order: Option<Vec<usize>>,
    pub early_stop: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            controller: ControllerConfig::default(),
            seed: 0,
            app_order: None,
            early_stop: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t: usize,
    pub decision: AllocationDecision,
    /// Battery after the slot.
    pub battery: Vec<f64>,
    /// Remaining work after the slot.
    pub remaining_work: Vec<f64>,
    pub decision_maker: Option<usize>,
    pub solver: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub policy: Policy,
    pub horizon: usize,
    pub initial_battery: Vec<f64>,
    pub per_slot: Vec<SlotRecord>,
    /// 1-indexed slot in which each application finished.
    pub completion_time: Vec<Option<usize>>,
    pub energy_consumed: Vec<f64>,
    pub total_utility: f64,
    /// Order used by the sequential policy.
    pub app_order: Option<Vec<usize>>,
}

/// `max(0, remaining - eta)` elementwise.
pub fn update_completion(remaining: &[f64], eta_j: &[f64]) -> Vec<f64> {
    remaining.iter().zip(eta_j).map(|(&r, &e)| (r - e).max(0.0)).collect()
}

fn snap(v: &mut f64) {
    if *v <= COMPLETION_TOL {
        *v = 0.0;
    }
}

pub fn run_simulation(
    system: &System,
    traces: &[DeviceTraces],
    policy: Policy,
    config: &SimConfig,
) -> Result<SimulationResult> {
    if traces.len() != system.n_devices() {
        return Err(Error::Dimension {
            what: "device traces",
            expected: system.n_devices(),
            got: traces.len(),
        });
    }
    let horizon = horizon(traces);
    if horizon == 0 {
        return Err(Error::Invalid("horizon T must be >= 1".into()));
    }
    let mut election = ChaCha8Rng::seed_from_u64(config.seed);
    election.set_stream(ELECTION_STREAM);
    let app_order = match (policy, &config.app_order) {
        (Policy::Sequential, Some(order)) => Some(order.clone()),
        (Policy::Sequential, None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(ORDER_STREAM);
            Some(random_app_order(system.n_apps(), &mut rng))
        }
        _ => None,
    };
    let utility = UtilitySpec {
        kind: config.controller.problem.utility,
        weights: system.apps.iter().map(|a| a.utility_weight).collect(),
    };

    let mut state = SlotState::initial(system);
    let initial_battery = state.battery.clone();
    let mut completion_time = vec![None; system.n_apps()];
    let mut energy_consumed = vec![0.0; system.n_devices()];
    let mut total_utility = 0.0;
    let mut per_slot = Vec::new();

    for t in 0..horizon {
        if config.early_stop && state.all_complete() {
            break;
        }
        state.t = t;
        let cfg = &config.controller;
        let step: Result<StepOutcome> = match policy {
            Policy::Aact => aact_step(system, traces, &state, cfg),
            Policy::AactDistributed => aact_distributed_step(system, traces, &state, cfg, &mut election),
            Policy::NoCoop => no_cooperation_step(system, traces, &state, cfg),
            Policy::Sequential => {
                sequential_cooperation_step(system, traces, &state, cfg, app_order.as_deref().unwrap_or(&[]))
            }
        };
        let StepOutcome {
            decision,
            stats,
            decision_maker,
        } = step.map_err(|e| Error::AtSlot { t, source: Box::new(e) })?;

        let violations = validate_allocation(system, traces, &state, &decision, VALIDATION_TOL);
        if !violations.is_empty() {
            let detail = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Err(Error::InfeasibleDecision { t, detail });
        }

        for (i, device) in system.devices.iter().enumerate() {
            let (c, w) = (decision.c_used[i], decision.w_used[i]);
            energy_consumed[i] += system.energy.drain(c, w);
            // Validation bounds any negative value by the tolerance.
            state.battery[i] = battery_step(state.battery[i], device.alpha_at(t), &system.energy, c, w).max(0.0);
        }

        if policy == Policy::NoCoop {
            for (i, copies) in state.copy_remaining.iter_mut().enumerate() {
                for (r, &e) in copies.iter_mut().zip(&decision.eta_ij[i]) {
                    *r = (*r - e).max(0.0);
                    snap(r);
                }
            }
            for (j, app) in system.apps.iter().enumerate() {
                state.remaining_work[j] = app
                    .interested_devices
                    .iter()
                    .map(|&i| state.copy_remaining[i][j])
                    .fold(0.0, f64::max);
            }
        } else {
            state.remaining_work = update_completion(&state.remaining_work, &decision.eta_j);
            state.remaining_work.iter_mut().for_each(snap);
        }

        for (j, done) in completion_time.iter_mut().enumerate() {
            if done.is_none() && state.remaining_work[j] <= 0.0 {
                *done = Some(t + 1);
            }
        }
        total_utility += decision
            .eta_j
            .iter()
            .enumerate()
            .map(|(j, &e)| utility.value(j, e))
            .sum::<f64>();
        per_slot.push(SlotRecord {
            t,
            decision,
            battery: state.battery.clone(),
            remaining_work: state.remaining_work.clone(),
            decision_maker,
            solver: stats,
        });
    }

    Ok(SimulationResult {
        policy,
        horizon,
        initial_battery,
        per_slot,
        completion_time,
        energy_consumed,
        total_utility,
        app_order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_iters_slots: usize,
    pub infeasible_slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub policy: Policy,
    pub completion_time: Vec<Option<usize>>,
    /// Total battery over all devices right after each application completed.
    pub battery_at_completion: Vec<Option<f64>>,
    pub final_battery: Vec<f64>,
    pub energy_consumed: Vec<f64>,
    pub total_utility: f64,
    pub slots_simulated: usize,
    pub decision_makers: Vec<usize>,
    pub solver: SolverSummary,
}

pub fn metrics(result: &SimulationResult) -> RunSummary {
    let final_battery = result
        .per_slot
        .last()
        .map_or_else(|| result.initial_battery.clone(), |r| r.battery.clone());
    let battery_at_completion = result
        .completion_time
        .iter()
        .map(|c| c.map(|slot| result.per_slot[slot - 1].battery.iter().sum()))
        .collect();
    let mut decision_makers = vec![0; result.initial_battery.len()];
    for m in result.per_slot.iter().filter_map(|r| r.decision_maker) {
        decision_makers[m] += 1;
    }
    let count = |s: SolveStatus| result.per_slot.iter().filter(|r| r.solver.status == s).count();
    RunSummary {
        policy: result.policy,
        completion_time: result.completion_time.clone(),
        battery_at_completion,
        final_battery,
        energy_consumed: result.energy_consumed.clone(),
        total_utility: result.total_utility,
        slots_simulated: result.per_slot.len(),
        decision_makers,
        solver: SolverSummary {
            total_iterations: result.per_slot.iter().map(|r| r.solver.iterations).sum(),
            max_iterations: result.per_slot.iter().map(|r| r.solver.iterations).max().unwrap_or(0),
            max_iters_slots: count(SolveStatus::MaxIters),
            infeasible_slots: count(SolveStatus::Infeasible),
        },
    }
}
