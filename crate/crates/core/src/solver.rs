//! Projected gradient ascent for [`WindowProblem`], plus an exhaustive grid
//! oracle used to certify it on small instances.
//!
//! The solver works on the device-application time shares alone. Given those,
//! the remaining variables have closed-form optimal values: usage equals demand
//! (the energy tie-break pushes it down), the aggregate share is the sum over
//! devices, and the battery follows its recursion. Battery non-negativity
//! becomes a linear constraint on the shares, so the feasible set is
//! `{y >= 0, A y <= r}` with `A >= 0`, `r >= 0`. It is down-closed, which the
//! repair step relies on.

use crate::error::{Error, Result};
use crate::problem::{UtilityKind, WindowProblem, WorkCap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative objective tolerance and gradient-mapping tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Sweep cap for the alternating projection.
    pub projection_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iters: 10_000,
            projection_sweeps: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Objective after every accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
}

/// `coef . y[idx] <= rhs`
#[derive(Debug, Clone)]
struct Halfspace {
    idx: Vec<usize>,
    coef: Vec<f64>,
    rhs: f64,
    norm2: f64,
}

impl Halfspace {
    fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Option<Self> {
        let terms: Vec<_> = terms.into_iter().filter(|&(_, c)| c > 0.0).collect();
        if terms.is_empty() {
            return None;
        }
        let (idx, coef): (Vec<_>, Vec<_>) = terms.into_iter().unzip();
        let norm2 = coef.iter().map(|c| c * c).sum();
        Some(Halfspace {
            idx,
            coef,
            rhs: rhs.max(0.0),
            norm2,
        })
    }

    fn dot(&self, y: &[f64]) -> f64 {
        self.idx.iter().zip(&self.coef).map(|(&k, &c)| c * y[k]).sum()
    }
}

/// The problem restricted to `eta_ij`, indexed `(slot * N + device) * A + app`.
struct Reduced<'p> {
    problem: &'p WindowProblem,
    n: usize,
    a: usize,
    len: usize,
    unit_energy: Vec<f64>,
    constraints: Vec<Halfspace>,
}

impl<'p> Reduced<'p> {
    fn new(problem: &'p WindowProblem) -> Self {
        let l = problem.layout;
        let (n, a, len) = (l.n_devices, l.n_apps, l.window_len);
        let at = |slot: usize, i: usize, j: usize| (slot * n + i) * a + j;
        let unit_energy: Vec<f64> = (0..a).map(|j| problem.unit_energy(j)).collect();
        let mut constraints = Vec::new();

        for slot in 0..len {
            for i in 0..n {
                let row = |coef: &dyn Fn(usize) -> f64| (0..a).map(|j| (at(slot, i, j), coef(j))).collect();
                constraints.extend(Halfspace::new(row(&|_| 1.0), 1.0));
                constraints.extend(Halfspace::new(row(&|j| problem.bw_req[j]), problem.bw_cap[i][slot]));
                constraints.extend(Halfspace::new(row(&|j| problem.cpu_req[j]), problem.cpu_cap[i][slot]));
            }
        }
        // Battery after slot tau:
        //   prod_{r<=tau} alpha_r * b0 - sum_{s<=tau} prod_{s<r<=tau} alpha_r * e_s >= 0
        for i in 0..n {
            let alpha = &problem.alpha[i];
            for tau in 0..len {
                let mut terms = Vec::new();
                let mut decay = 1.0;
                for s in (0..=tau).rev() {
                    for (j, &e) in unit_energy.iter().enumerate() {
                        terms.push((at(s, i, j), decay * e));
                    }
                    decay *= alpha[s];
                }
                constraints.extend(Halfspace::new(terms, decay * problem.initial_battery[i]));
            }
        }
        for j in 0..a {
            let cap = problem.remaining_work[j];
            match problem.work_cap {
                WorkCap::PerSlot => {
                    for slot in 0..len {
                        let terms = (0..n).map(|i| (at(slot, i, j), 1.0)).collect();
                        constraints.extend(Halfspace::new(terms, cap));
                    }
                }
                WorkCap::Window => {
                    let terms = (0..len)
                        .flat_map(|slot| (0..n).map(move |i| (at(slot, i, j), 1.0)))
                        .collect();
                    constraints.extend(Halfspace::new(terms, cap));
                }
            }
        }

        Reduced {
            problem,
            n,
            a,
            len,
            unit_energy,
            constraints,
        }
    }

    fn dim(&self) -> usize {
        self.len * self.n * self.a
    }

    fn aggregate(&self, y: &[f64], slot: usize, j: usize) -> f64 {
        (0..self.n).map(|i| y[(slot * self.n + i) * self.a + j]).sum()
    }

    fn objective(&self, y: &[f64]) -> f64 {
        let p = self.problem;
        let mut utility = 0.0;
        let mut energy = 0.0;
        for slot in 0..self.len {
            for j in 0..self.a {
                utility += p.utility.value(j, self.aggregate(y, slot, j));
            }
        }
        for (k, &v) in y.iter().enumerate() {
            energy += self.unit_energy[k % self.a] * v;
        }
        utility - p.eps * energy
    }

    fn gradient(&self, y: &[f64], g: &mut [f64]) {
        let p = self.problem;
        for slot in 0..self.len {
            for j in 0..self.a {
                let d = p.utility.derivative(j, self.aggregate(y, slot, j)) - p.eps * self.unit_energy[j];
                for i in 0..self.n {
                    g[(slot * self.n + i) * self.a + j] = d;
                }
            }
        }
    }

    /// Dykstra's alternating projection onto the orthant and every halfspace,
    /// followed by [`Reduced::repair`] so the result is feasible even when the
    /// sweep cap is hit first.
    fn project(&self, z: &[f64], sweeps: usize) -> Vec<f64> {
        let mut y = z.to_vec();
        let mut orthant = vec![0.0; y.len()];
        let mut lambda = vec![0.0; self.constraints.len()];
        let scale = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..sweeps {
            let mut change = 0.0f64;
            for (v, q) in y.iter_mut().zip(orthant.iter_mut()) {
                let shifted = *v + *q;
                let next = shifted.max(0.0);
                *q = shifted - next;
                change = change.max((next - *v).abs());
                *v = next;
            }
            for (h, lam) in self.constraints.iter().zip(lambda.iter_mut()) {
                let mut dot = 0.0;
                for (&k, &c) in h.idx.iter().zip(&h.coef) {
                    y[k] += *lam * c;
                    dot += c * y[k];
                }
                let next = if dot > h.rhs { (dot - h.rhs) / h.norm2 } else { 0.0 };
                for (&k, &c) in h.idx.iter().zip(&h.coef) {
                    y[k] -= next * c;
                }
                change = change.max((next - *lam).abs() * h.norm2.sqrt());
                *lam = next;
            }
            if change <= 1e-15 * scale {
                break;
            }
        }
        self.repair(&mut y);
        y
    }

    /// Clamps to the orthant, then scales down the support of each violated
    /// constraint in turn. Scaling only lowers left-hand sides elsewhere, so one
    /// pass leaves every constraint satisfied.
    fn repair(&self, y: &mut [f64]) {
        for v in y.iter_mut() {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        for h in &self.constraints {
            let lhs = h.dot(y);
            if lhs > h.rhs {
                let f = if h.rhs > 0.0 { (h.rhs / lhs) * (1.0 - 4.0 * f64::EPSILON) } else { 0.0 };
                for &k in &h.idx {
                    y[k] *= f;
                }
            }
        }
    }

    /// Full decision vector with usage at demand and the battery chain applied.
    fn expand(&self, y: &[f64]) -> Vec<f64> {
        let p = self.problem;
        let l = p.layout;
        let mut x = vec![0.0; l.dim()];
        for slot in 0..self.len {
            for i in 0..self.n {
                let (mut cpu, mut bw) = (0.0, 0.0);
                for j in 0..self.a {
                    let v = y[(slot * self.n + i) * self.a + j];
                    x[l.eta_ij(i, j, slot)] = v;
                    cpu += v * p.cpu_req[j];
                    bw += v * p.bw_req[j];
                }
                x[l.w(i, slot)] = bw;
                x[l.c(i, slot)] = cpu;
            }
            for j in 0..self.a {
                let given = self.aggregate(y, slot, j);
                x[l.eta_j(j, slot)] = match p.work_cap {
                    WorkCap::PerSlot => given.min(p.remaining_work[j]),
                    WorkCap::Window => given,
                };
            }
        }
        if p.work_cap == WorkCap::Window {
            cap_window_work(p, &mut x);
        }
        fill_battery(p, &mut x);
        x
    }
}

fn cap_window_work(p: &WindowProblem, x: &mut [f64]) {
    let l = p.layout;
    for j in 0..l.n_apps {
        let total: f64 = (0..l.window_len).map(|s| x[l.eta_j(j, s)]).sum();
        if total > p.remaining_work[j] {
            let f = if total > 0.0 { p.remaining_work[j] / total } else { 0.0 };
            for s in 0..l.window_len {
                x[l.eta_j(j, s)] *= f;
            }
        }
    }
}

fn fill_battery(p: &WindowProblem, x: &mut [f64]) {
    let l = p.layout;
    for i in 0..l.n_devices {
        for (slot, b) in p.battery_chain(x, i).into_iter().enumerate() {
            x[l.b(i, slot)] = b.max(0.0);
        }
    }
}

/// Returns a feasible point near `x`.
///
/// The device-application shares are projected onto their polytope; the
/// aggregate shares are clipped to what the devices give and to the work cap;
/// usages are clipped into `[demand, capacity]`; the battery chain is then
/// recomputed, and a device whose chain goes negative has its usages lowered
/// to demand. A feasible `x` comes back unchanged.
pub fn project_feasible(problem: &WindowProblem, x: &[f64], options: &SolverOptions) -> Result<Vec<f64>> {
    if x.len() != problem.dim() {
        return Err(Error::Dimension {
            what: "decision vector",
            expected: problem.dim(),
            got: x.len(),
        });
    }
    let red = Reduced::new(problem);
    let l = problem.layout;
    let (n, a) = (l.n_devices, l.n_apps);
    let mut y = vec![0.0; red.dim()];
    for slot in 0..l.window_len {
        for i in 0..n {
            for j in 0..a {
                y[(slot * n + i) * a + j] = x[l.eta_ij(i, j, slot)];
            }
        }
    }
    let y = red.project(&y, options.projection_sweeps);

    let mut out = x.to_vec();
    for slot in 0..l.window_len {
        for j in 0..a {
            let given = red.aggregate(&y, slot, j);
            let mut e = out[l.eta_j(j, slot)];
            if !(e > 0.0) {
                e = 0.0;
            }
            if problem.work_cap == WorkCap::PerSlot {
                e = e.min(problem.remaining_work[j]);
            }
            out[l.eta_j(j, slot)] = e.min(given);
        }
        for i in 0..n {
            let (mut cpu, mut bw) = (0.0, 0.0);
            for j in 0..a {
                let v = y[(slot * n + i) * a + j];
                out[l.eta_ij(i, j, slot)] = v;
                cpu += v * problem.cpu_req[j];
                bw += v * problem.bw_req[j];
            }
            let w = &mut out[l.w(i, slot)];
            *w = w.min(problem.bw_cap[i][slot]).max(bw);
            let c = &mut out[l.c(i, slot)];
            *c = c.min(problem.cpu_cap[i][slot]).max(cpu);
        }
    }
    if problem.work_cap == WorkCap::Window {
        cap_window_work(problem, &mut out);
    }
    for i in 0..n {
        if problem.battery_chain(&out, i).iter().any(|&b| b < 0.0) {
            for slot in 0..l.window_len {
                let (cpu, bw) = (0..a).fold((0.0, 0.0), |(c, w), j| {
                    let v = out[l.eta_ij(i, j, slot)];
                    (c + v * problem.cpu_req[j], w + v * problem.bw_req[j])
                });
                out[l.w(i, slot)] = bw;
                out[l.c(i, slot)] = cpu;
            }
        }
        let chain = problem.battery_chain(&out, i);
        for (slot, b) in chain.into_iter().enumerate() {
            let k = l.b(i, slot);
            // Keep an already-consistent value bit-for-bit.
            if (out[k] - b).abs() > 1e-12 * (1.0 + b.abs()) || out[k] < 0.0 {
                out[k] = b.max(0.0);
            }
        }
    }
    Ok(out)
}

/// Maximizes the window objective from the zero allocation.
pub fn solve(problem: &WindowProblem, options: &SolverOptions) -> Solution {
    solve_from(problem, options, None)
}

/// Maximizes the window objective, optionally starting from `warm` (a full
/// decision vector of the same problem; it is projected first).
pub fn solve_from(problem: &WindowProblem, options: &SolverOptions, warm: Option<&[f64]>) -> Solution {
    let red = Reduced::new(problem);
    let dim = red.dim();
    let l = problem.layout;

    let mut y = vec![0.0; dim];
    if let Some(w) = warm.filter(|w| w.len() == problem.dim()) {
        for slot in 0..red.len {
            for i in 0..red.n {
                for j in 0..red.a {
                    y[(slot * red.n + i) * red.a + j] = w[l.eta_ij(i, j, slot)];
                }
            }
        }
        y = red.project(&y, options.projection_sweeps);
        if red.objective(&y) < 0.0 {
            y.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    let max_weight = problem.utility.weights.iter().fold(0.0f64, |m, &u| m.max(u));
    let curvature = match problem.utility.kind {
        UtilityKind::Log1p => max_weight * red.n as f64,
        UtilityKind::Linear => 1.0,
    };
    let mut step = 1.0 / curvature.max(1e-12);

    let mut f = red.objective(&y);
    let mut g = vec![0.0; dim];
    let mut history = vec![f];
    let mut flat_iters = 0;
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let mut trial = vec![0.0; dim];

    while iterations < options.max_iters {
        iterations += 1;
        red.gradient(&y, &mut g);

        let accepted = loop {
            for k in 0..dim {
                trial[k] = y[k] + step * g[k];
            }
            let cand = red.project(&trial, options.projection_sweeps);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for k in 0..dim {
                let d = cand[k] - y[k];
                lin += g[k] * d;
                sq += d * d;
            }
            let f_new = red.objective(&cand);
            let slack = 1e-12 * (1.0 + f.abs());
            if f_new >= f - slack && f_new >= f + lin - sq / (2.0 * step) - slack {
                break Some((cand, f_new, sq.sqrt()));
            }
            step *= 0.5;
            if step < 1e-14 {
                break None;
            }
        };

        let Some((cand, f_new, dist)) = accepted else {
            status = SolveStatus::Converged;
            break;
        };
        let gradient_mapping = dist / step;
        let rel = (f_new - f).abs() / f.abs().max(1.0);
        let improved = f_new > f;
        if improved {
            y = cand;
            f = f_new;
        }
        history.push(f);
        flat_iters = if rel < options.tol { flat_iters + 1 } else { 0 };
        if gradient_mapping < options.tol || flat_iters >= 5 || !improved {
            status = SolveStatus::Converged;
            break;
        }
        step = (step * 2.0).min(1e6);
    }

    let x = red.expand(&y);
    let objective = problem.objective(&x).unwrap_or(f64::NAN);
    if !problem.is_feasible(&x, 1e-6).map(|v| v.is_empty()).unwrap_or(false) {
        status = SolveStatus::Infeasible;
    }
    Solution {
        x,
        objective,
        iterations,
        status,
        history,
    }
}

/// Upper bound on how far the best grid point can trail the true optimum:
/// rounding any feasible share vector down to the grid stays feasible and
/// lowers each aggregate by at most `N * step`, each costing at most `u_j`.
pub fn grid_gap_bound(problem: &WindowProblem, grid_step: f64) -> f64 {
    let l = problem.layout;
    let weights: f64 = problem.utility.weights.iter().sum();
    grid_step * (l.n_devices * l.window_len) as f64 * weights
}

/// Exhaustive search over `eta_ij` on a uniform grid in `[0, 1]`. Dependent
/// variables take their best values given the shares: usage at demand, battery
/// by recursion and aggregate shares water-filled under the work cap.
pub fn brute_force_oracle(problem: &WindowProblem, grid_step: f64) -> Result<Solution> {
    let l = problem.layout;
    let (n, a, len) = (l.n_devices, l.n_apps, l.window_len);
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Invalid(format!("grid step must lie in (0, 1], got {grid_step}")));
    }
    let levels = (1.0 / grid_step).round() as usize + 1;
    let vars = n * a * len;
    let points = (levels as f64).powi(vars as i32);
    if points > 1e8 {
        return Err(Error::OracleTooLarge { points });
    }
    let grid: Vec<f64> = (0..levels).map(|k| (k as f64 * grid_step).min(1.0)).collect();

    // Rows (one device, one slot) that pass the time, bandwidth and compute
    // limits; the battery and work caps are checked on whole points.
    let row_candidates: Vec<Vec<Vec<f64>>> = (0..len * n)
        .map(|r| {
            let (slot, i) = (r / n, r % n);
            let mut rows = Vec::new();
            let mut digits = vec![0usize; a];
            loop {
                let row: Vec<f64> = digits.iter().map(|&d| grid[d]).collect();
                let time: f64 = row.iter().sum();
                let bw: f64 = row.iter().zip(&problem.bw_req).map(|(e, r)| e * r).sum();
                let cpu: f64 = row.iter().zip(&problem.cpu_req).map(|(e, r)| e * r).sum();
                let slack = 1e-12;
                if time <= 1.0 + slack
                    && bw <= problem.bw_cap[i][slot] + slack
                    && cpu <= problem.cpu_cap[i][slot] + slack
                {
                    rows.push(row);
                }
                if !odometer(&mut digits, levels) {
                    break;
                }
            }
            rows
        })
        .collect();

    let unit_energy: Vec<f64> = (0..a)
        .map(|j| problem.energy.gamma_c * problem.cpu_req[j] + problem.energy.gamma_w * problem.bw_req[j])
        .collect();
    let utility = |j: usize, eta: f64| {
        let u = problem.utility.weights[j];
        match problem.utility.kind {
            UtilityKind::Log1p => u * (1.0 + eta).ln(),
            UtilityKind::Linear => u * eta,
        }
    };

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut choice = vec![0usize; len * n];
    let sizes: Vec<usize> = row_candidates.iter().map(Vec::len).collect();
    let mut eta_j = vec![vec![0.0; len]; a];
    loop {
        let row = |slot: usize, i: usize| &row_candidates[slot * n + i][choice[slot * n + i]];
        let mut ok = true;
        'battery: for i in 0..n {
            let mut b = problem.initial_battery[i];
            for slot in 0..len {
                let drain: f64 = row(slot, i).iter().zip(&unit_energy).map(|(e, u)| e * u).sum();
                b = problem.alpha[i][slot] * b - drain;
                if b < -1e-12 {
                    ok = false;
                    break 'battery;
                }
            }
        }
        if ok {
            for (j, per_slot) in eta_j.iter_mut().enumerate() {
                for (slot, v) in per_slot.iter_mut().enumerate() {
                    *v = (0..n).map(|i| row(slot, i)[j]).sum();
                }
            }
            let mut value = 0.0;
            for (j, given) in eta_j.iter().enumerate() {
                let cap = problem.remaining_work[j];
                let granted = match problem.work_cap {
                    WorkCap::PerSlot => given.iter().map(|&g| g.min(cap)).collect(),
                    WorkCap::Window => water_fill(given, cap, problem.utility.kind),
                };
                value += granted.iter().map(|&e| utility(j, e)).sum::<f64>();
            }
            let mut energy = 0.0;
            for slot in 0..len {
                for i in 0..n {
                    energy += row(slot, i).iter().zip(&unit_energy).map(|(e, u)| e * u).sum::<f64>();
                }
            }
            value -= problem.eps * energy;
            if best.as_ref().is_none_or(|(v, _)| value > *v) {
                best = Some((value, choice.clone()));
            }
        }
        if !odometer_sized(&mut choice, &sizes) {
            break;
        }
    }

    let (_, choice) = best.expect("the all-zero point is always on the grid and feasible");
    let mut x = vec![0.0; l.dim()];
    for slot in 0..len {
        for i in 0..n {
            let row = &row_candidates[slot * n + i][choice[slot * n + i]];
            let (mut cpu, mut bw) = (0.0, 0.0);
            for j in 0..a {
                x[l.eta_ij(i, j, slot)] = row[j];
                cpu += row[j] * problem.cpu_req[j];
                bw += row[j] * problem.bw_req[j];
            }
            x[l.w(i, slot)] = bw;
            x[l.c(i, slot)] = cpu;
        }
    }
    for j in 0..a {
        let given: Vec<f64> = (0..len)
            .map(|slot| (0..n).map(|i| x[l.eta_ij(i, j, slot)]).sum())
            .collect();
        let cap = problem.remaining_work[j];
        let granted: Vec<f64> = match problem.work_cap {
            WorkCap::PerSlot => given.iter().map(|&g| g.min(cap)).collect(),
            WorkCap::Window => water_fill(&given, cap, problem.utility.kind),
        };
        for (slot, e) in granted.into_iter().enumerate() {
            x[l.eta_j(j, slot)] = e;
        }
    }
    for i in 0..n {
        let mut b = problem.initial_battery[i];
        for slot in 0..len {
            b = problem.alpha[i][slot] * b
                - (problem.energy.gamma_c * x[l.c(i, slot)] + problem.energy.gamma_w * x[l.w(i, slot)]);
            x[l.b(i, slot)] = b.max(0.0);
        }
    }
    let objective = problem.objective(&x)?;
    Ok(Solution {
        x,
        objective,
        iterations: points as usize,
        status: SolveStatus::Converged,
        history: Vec::new(),
    })
}

/// Best split of at most `cap` units over slots with per-slot ceilings `given`.
/// For a concave utility identical across slots this is a water level.
fn water_fill(given: &[f64], cap: f64, kind: UtilityKind) -> Vec<f64> {
    let total: f64 = given.iter().sum();
    if total <= cap {
        return given.to_vec();
    }
    match kind {
        UtilityKind::Linear => {
            let mut left = cap;
            given
                .iter()
                .map(|&g| {
                    let take = g.min(left);
                    left -= take;
                    take
                })
                .collect()
        }
        UtilityKind::Log1p => {
            let (mut lo, mut hi) = (0.0, given.iter().fold(0.0f64, |m, &g| m.max(g)));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let used: f64 = given.iter().map(|&g| g.min(mid)).sum();
                if used > cap {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            given.iter().map(|&g| g.min(lo)).collect()
        }
    }
}

fn odometer(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

fn odometer_sized(digits: &mut [usize], sizes: &[usize]) -> bool {
    for (d, &s) in digits.iter_mut().zip(sizes) {
        *d += 1;
        if *d < s {
            return true;
        }
        *d = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AppSpec, EnergyModel};
    use crate::problem::{build_window_problem, CapacityWindow, ProblemSettings, WindowInputs};
    use approx::assert_abs_diff_eq;

    fn app(id: usize, cpu: f64, bw: f64, size: f64) -> AppSpec {
        AppSpec {
            id,
            cpu_req: cpu,
            bw_req: bw,
            size,
            utility_weight: 1.0,
            interested_devices: vec![0],
        }
    }

    fn single(cpu_cap: f64, bw_cap: f64, a: AppSpec, battery: f64) -> WindowProblem {
        let inputs = WindowInputs {
            remaining_work: vec![a.size],
            apps: vec![a],
            energy: EnergyModel::default(),
            battery: vec![battery],
            alpha: vec![vec![1.0]],
            estimates: vec![CapacityWindow {
                cpu: vec![cpu_cap],
                bw: vec![bw_cap],
            }],
        };
        build_window_problem(&inputs, &ProblemSettings::default()).unwrap()
    }

    #[test]
    fn time_budget_binds() {
        let p = single(1.0, 1.0, app(0, 0.5, 1.0, 10.0), 100.0);
        let s = solve(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Converged);
        let l = p.layout;
        assert_abs_diff_eq!(s.x[l.eta_ij(0, 0, 0)], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.x[l.eta_j(0, 0)], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.x[l.w(0, 0)], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.x[l.c(0, 0)], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn bandwidth_binds() {
        let p = single(10.0, 0.4, app(0, 0.0, 1.0, 10.0), 100.0);
        let s = solve(&p, &SolverOptions::default());
        assert_abs_diff_eq!(s.x[p.layout.eta_j(0, 0)], 0.4, epsilon = 1e-6);
    }

    #[test]
    fn battery_binds() {
        // 0.3 energy at 1.5 per unit allows 0.2 of a slot.
        let p = single(10.0, 10.0, app(0, 0.5, 1.0, 10.0), 0.3);
        let s = solve(&p, &SolverOptions::default());
        assert_abs_diff_eq!(s.x[p.layout.eta_j(0, 0)], 0.2, epsilon = 1e-6);
        assert!(s.x[p.layout.b(0, 0)] >= 0.0);
    }

    #[test]
    fn finished_app_gets_nothing() {
        let mut p = single(1.0, 1.0, app(0, 0.5, 1.0, 10.0), 100.0);
        p.remaining_work[0] = 0.0;
        let s = solve(&p, &SolverOptions::default());
        assert!(s.x.iter().enumerate().all(|(k, &v)| {
            let (role, _) = p.layout.role(k);
            matches!(role, crate::problem::VarRole::Battery { .. }) || v == 0.0
        }));
        let o = brute_force_oracle(&p, 0.05).unwrap();
        assert_eq!(o.objective, 0.0);
    }

    #[test]
    fn zero_capacity_oracle_is_zero() {
        let p = single(0.0, 0.0, app(0, 0.5, 1.0, 10.0), 100.0);
        let o = brute_force_oracle(&p, 0.05).unwrap();
        assert_eq!(o.objective, 0.0);
        assert!(o.x.iter().take(4).all(|&v| v == 0.0));
        let s = solve(&p, &SolverOptions::default());
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn oracle_finds_full_allocation() {
        let p = single(1.0, 1.0, app(0, 0.5, 1.0, 10.0), 100.0);
        let o = brute_force_oracle(&p, 0.05).unwrap();
        assert_abs_diff_eq!(o.x[p.layout.eta_ij(0, 0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let inputs = WindowInputs {
            remaining_work: vec![1.0; 2],
            apps: vec![app(0, 0.5, 1.0, 1.0), app(1, 1.5, 0.0, 1.0)],
            energy: EnergyModel::default(),
            battery: vec![1.0; 2],
            alpha: vec![vec![1.0; 3]; 2],
            estimates: vec![
                CapacityWindow {
                    cpu: vec![1.0; 3],
                    bw: vec![1.0; 3],
                };
                2
            ],
        };
        let p = build_window_problem(&inputs, &ProblemSettings::default()).unwrap();
        assert!(matches!(brute_force_oracle(&p, 0.05), Err(Error::OracleTooLarge { .. })));
    }

    #[test]
    fn water_fill_levels() {
        let v = water_fill(&[1.0, 0.2, 1.0], 1.0, UtilityKind::Log1p);
        assert_abs_diff_eq!(v[0], 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(v[1], 0.2, epsilon = 1e-9);
        assert_eq!(water_fill(&[0.5, 0.5], 2.0, UtilityKind::Log1p), vec![0.5, 0.5]);
        let v = water_fill(&[0.5, 0.5], 0.7, UtilityKind::Linear);
        assert_eq!(v[0], 0.5);
        assert_abs_diff_eq!(v[1], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn projection_repairs_time_budget_and_chain() {
        let inputs = WindowInputs {
            remaining_work: vec![5.0, 5.0],
            apps: vec![app(0, 0.5, 1.0, 5.0), app(1, 1.5, 0.0, 5.0)],
            energy: EnergyModel::default(),
            battery: vec![2.0],
            alpha: vec![vec![1.0; 2]],
            estimates: vec![CapacityWindow {
                cpu: vec![10.0; 2],
                bw: vec![10.0; 2],
            }],
        };
        let p = build_window_problem(&inputs, &ProblemSettings::default()).unwrap();
        let l = p.layout;
        let mut x = p.zero_point();
        x[l.eta_ij(0, 0, 0)] = 0.8;
        x[l.eta_ij(0, 1, 0)] = 0.5;
        x[l.eta_j(0, 0)] = 0.8;
        x[l.b(0, 1)] = 7.0;
        let y = project_feasible(&p, &x, &SolverOptions::default()).unwrap();
        assert!(p.is_feasible(&y, 1e-9).unwrap().is_empty(), "{:?}", p.is_feasible(&y, 1e-9));
        let budget = y[l.eta_ij(0, 0, 0)] + y[l.eta_ij(0, 1, 0)];
        assert!(budget <= 1.0 + 1e-12);
    }

    #[test]
    fn projection_keeps_feasible_points() {
        let p = single(1.0, 1.0, app(0, 0.5, 1.0, 10.0), 100.0);
        let s = solve(&p, &SolverOptions::default());
        let y = project_feasible(&p, &s.x, &SolverOptions::default()).unwrap();
        let dist: f64 = y.iter().zip(&s.x).map(|(a, b)| (a - b).abs()).sum();
        assert!(dist <= 1e-8 * p.dim() as f64, "moved {dist}");
    }

    #[test]
    fn solve_is_deterministic_and_monotone() {
        let inputs = WindowInputs {
            remaining_work: vec![2.0, 5.0],
            apps: vec![app(0, 0.5, 1.0, 2.0), app(1, 1.5, 0.0, 5.0)],
            energy: EnergyModel::default(),
            battery: vec![3.0, 4.0],
            alpha: vec![vec![1.0; 4]; 2],
            estimates: vec![
                CapacityWindow {
                    cpu: vec![1.0, 0.2, 1.0, 0.7],
                    bw: vec![0.25, 0.0, 0.5, 0.25],
                },
                CapacityWindow {
                    cpu: vec![0.5; 4],
                    bw: vec![0.5, 0.5, 0.0, 0.5],
                },
            ],
        };
        let p = build_window_problem(&inputs, &ProblemSettings::default()).unwrap();
        let a = solve(&p, &SolverOptions::default());
        let b = solve(&p, &SolverOptions::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.status, SolveStatus::Converged);
        for w in a.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(p.is_feasible(&a.x, 1e-6).unwrap().is_empty());
    }
}
