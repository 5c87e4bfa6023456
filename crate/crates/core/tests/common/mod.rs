#![allow(dead_code)]

use aact::model::{AppSpec, EnergyModel};
use aact::problem::{
    build_window_problem, CapacityWindow, ProblemSettings, UtilityKind, WindowInputs, WindowProblem, WorkCap,
};
use rand::Rng;

/// A random window problem with `n * a * len <= 4`, small enough for the grid oracle.
pub fn random_small_problem<R: Rng>(rng: &mut R) -> WindowProblem {
    let (n, a, len) = loop {
        let n = rng.gen_range(1..=2);
        let a = rng.gen_range(1..=2);
        let len = rng.gen_range(1..=2);
        if n * a * len <= 4 {
            break (n, a, len);
        }
    };
    let apps: Vec<AppSpec> = (0..a)
        .map(|id| {
            let (cpu, bw) = match rng.gen_range(0..3) {
                0 => (0.5, 1.0),
                1 => (1.5, 0.0),
                _ => (rng.gen_range(0.0..1.5), rng.gen_range(0.1..1.5)),
            };
            AppSpec {
                id,
                cpu_req: cpu,
                bw_req: bw,
                size: rng.gen_range(0.1..2.0),
                utility_weight: rng.gen_range(0.5..2.0),
                interested_devices: vec![0],
            }
        })
        .collect();
    let estimates = (0..n)
        .map(|_| CapacityWindow {
            cpu: (0..len).map(|_| rng.gen_range(0.0..1.5)).collect(),
            bw: (0..len).map(|_| rng.gen_range(0.0..1.0)).collect(),
        })
        .collect();
    let inputs = WindowInputs {
        remaining_work: apps.iter().map(|x| x.size).collect(),
        apps,
        energy: EnergyModel::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)).unwrap(),
        battery: (0..n).map(|_| rng.gen_range(0.0..3.0)).collect(),
        alpha: (0..n).map(|_| (0..len).map(|_| rng.gen_range(0.8..=1.0)).collect()).collect(),
        estimates,
    };
    let settings = ProblemSettings {
        utility: if rng.gen_bool(0.75) { UtilityKind::Log1p } else { UtilityKind::Linear },
        eps: 1e-4,
        work_cap: if rng.gen_bool(0.5) { WorkCap::PerSlot } else { WorkCap::Window },
    };
    build_window_problem(&inputs, &settings).unwrap()
}
