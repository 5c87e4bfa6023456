//! Comparison policies: every device on its own, and cooperation on one
//! application at a time.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::DeviceTraces;
use crate::controller::{
    clamp_to_capacity, estimate_windows, merge_stats, plan_and_apply, slot_decision, window_len, ControllerConfig,
    SolveStats, StepOutcome,
};
use crate::error::{Error, Result};
use crate::model::{AllocationDecision, SlotState, System};
use crate::problem::{build_window_problem, WindowInputs};
use crate::solver::solve;

/// Each device plans alone over its own copies of the applications it cares about.
/// The returned `eta_j` is the sum of the per-device rows; the engine advances
/// each copy separately.
pub fn no_cooperation_step(
    system: &System,
    traces: &[DeviceTraces],
    state: &SlotState,
    config: &ControllerConfig,
) -> Result<StepOutcome> {
    if let Some(app) = system.apps.iter().find(|a| a.interested_devices.is_empty()) {
        return Err(Error::Invalid(format!("application {} has no interested device", app.id)));
    }
    let len = window_len(traces, state, config.omega)?;
    let estimates = estimate_windows(traces, state.t, len, |_| config.estimator)?;
    let mut decision = AllocationDecision::zeros(system.n_devices(), system.n_apps());
    let mut stats = Vec::with_capacity(system.n_devices());
    for (i, (device, window)) in system.devices.iter().zip(estimates).enumerate() {
        let inputs = WindowInputs {
            apps: system.apps.clone(),
            energy: system.energy,
            battery: vec![state.battery[i]],
            alpha: vec![(0..len).map(|k| device.alpha_at(state.t + k)).collect()],
            remaining_work: state.copy_remaining[i].clone(),
            estimates: vec![window],
        };
        let problem = build_window_problem(&inputs, &config.problem)?;
        let sol = solve(&problem, &config.solver);
        decision.eta_ij[i] = slot_decision(&problem, &sol.x, 0).eta_ij.swap_remove(0);
        stats.push(SolveStats {
            iterations: sol.iterations,
            status: sol.status,
            objective: sol.objective,
        });
    }
    decision.eta_j = (0..system.n_apps())
        .map(|j| decision.eta_ij.iter().map(|row| row[j]).sum())
        .collect();
    clamp_to_capacity(system, traces, state.t, &mut decision);
    Ok(StepOutcome {
        decision,
        stats: merge_stats(stats),
        decision_maker: None,
    })
}

/// All devices cooperate on the first application in `app_order` that still
/// has work left; every other application is held at zero.
pub fn sequential_cooperation_step(
    system: &System,
    traces: &[DeviceTraces],
    state: &SlotState,
    config: &ControllerConfig,
    app_order: &[usize],
) -> Result<StepOutcome> {
    check_order(app_order, system.n_apps())?;
    let len = window_len(traces, state, config.omega)?;
    let Some(&active) = app_order.iter().find(|&&j| state.remaining_work[j] > 0.0) else {
        return Ok(StepOutcome {
            decision: AllocationDecision::zeros(system.n_devices(), system.n_apps()),
            stats: Default::default(),
            decision_maker: None,
        });
    };
    let estimates = estimate_windows(traces, state.t, len, |_| config.estimator)?;
    let mut restricted = state.clone();
    for (j, r) in restricted.remaining_work.iter_mut().enumerate() {
        if j != active {
            *r = 0.0;
        }
    }
    plan_and_apply(system, traces, &restricted, estimates, config)
}

fn check_order(order: &[usize], n_apps: usize) -> Result<()> {
    let mut seen = vec![false; n_apps];
    for &j in order {
        if j >= n_apps || std::mem::replace(&mut seen[j], true) {
            return Err(Error::Invalid(format!(
                "app order {order:?} is not a permutation of 0..{n_apps}"
            )));
        }
    }
    if order.len() != n_apps {
        return Err(Error::Invalid(format!(
            "app order {order:?} is not a permutation of 0..{n_apps}"
        )));
    }
    Ok(())
}

/// Uniform random application order.
pub fn random_app_order<R: Rng + ?Sized>(n_apps: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_apps).collect();
    order.shuffle(rng);
    order
}
