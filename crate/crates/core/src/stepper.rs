//! Implicit time loop: one damped-Newton elliptic solve per step, explicit
//! v-update, memory commit, diagnostics emission.
//!
//! Each step solves the quasilinear elliptic problem assembled in
//! [`crate::grid::assembly`] for the new pressure u_i, then sets
//! `v_i = (v_{i-1} + tau u_i) / (1 + tau)`, commits the play memory and
//! recomputes the saturation from the committed state. The Newton matrix uses
//! floored finite-difference hysteresis slopes and lagged kappa, so it is
//! symmetric positive definite and a preconditioned CG solves it. On
//! stagnation the slope is replaced by a broad secant over the memory range
//! (Picard regime) before the step is declared failed.

use crate::diagnostics::{step_report, StateSummary, StepReport};
use crate::error::{Error, Result};
use crate::grid::assembly::{assemble_jacobian, assemble_residual};
use crate::grid::linsolve::{norm2, pcg_solve};
use crate::grid::Field;
use crate::hysteresis::{preisach_eval_field, update_memory, MemoryState};
use crate::scenario::Problem;
use std::io::{Read, Write};
use std::path::Path;

/// Nonlinear and linear solver knobs. The time step and horizon live in the
/// scenario; their consistency (tau in (0, T], integer step count) is
/// enforced when the scenario is built.
#[derive(Debug, Clone)]
pub struct StepperConfig {
    /// l2 norm tolerance on the assembled residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Backtracking factor of the line search.
    pub line_search_shrink: f64,
    pub line_search_max: usize,
    /// Fall back to a broad-secant (Picard) hysteresis slope on stagnation.
    pub picard_fallback: bool,
    /// Step for the centered FD hysteresis slope in the Jacobian.
    pub fd_step: f64,
    /// Relative residual target of the inner CG solve.
    pub linear_rel_tol: f64,
    pub linear_max_iter: usize,
    /// Retry a failed step by halving tau for that step only.
    pub retry_tau_halving: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-11,
            newton_max_iter: 60,
            line_search_shrink: 0.5,
            line_search_max: 40,
            picard_fallback: true,
            fd_step: 1e-6,
            linear_rel_tol: 1e-12,
            linear_max_iter: 100_000,
            retry_tau_halving: false,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::scenario("config.newton_tol", "must be positive"));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::scenario("config.line_search_shrink", "must lie in (0, 1)"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::scenario("config.fd_step", "must be positive"));
        }
        Ok(())
    }
}

/// Full state of the simulation after step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub step: usize,
    pub time: f64,
    pub u: Field,
    pub v: Field,
    pub theta: Field,
    pub memory: MemoryState,
}

impl SimulationState {
    /// Check the state invariants: theta matches the committed memory and
    /// every play respects its band constraint.
    pub fn check_invariants(&self, problem: &Problem) -> Result<()> {
        let theta = preisach_eval_field(&self.memory, &problem.density, &problem.thresholds);
        for (i, (&have, want)) in self.theta.as_slice().iter().zip(&theta).enumerate() {
            if (have - want).abs() > 1e-10 {
                return Err(Error::InternalInconsistency(format!(
                    "theta[{i}] = {have} disagrees with the committed memory output {want}"
                )));
            }
        }
        self.memory.check_band(self.u.as_slice(), &problem.thresholds)
    }
}

/// Convergence record of one nonlinear solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub newton_iterations: usize,
    pub residual_norm: f64,
    pub used_picard: bool,
}

/// State at t = 0 built from the scenario's initial data.
pub fn initial_state(problem: &Problem) -> SimulationState {
    let memory = problem.initial_memory.to_memory_state();
    let theta = preisach_eval_field(&memory, &problem.density, &problem.thresholds);
    SimulationState {
        step: 0,
        time: 0.0,
        u: problem.u0.clone(),
        v: problem.v0.clone(),
        theta: Field::new(theta),
        memory,
    }
}

/// Advance one implicit step of length `problem.tau`.
pub fn solve_step(
    prev: &SimulationState,
    problem: &Problem,
    config: &StepperConfig,
) -> Result<(SimulationState, SolveStats)> {
    config.validate()?;
    let tau = problem.tau;
    let step = prev.step + 1;
    let t_next = step as f64 * tau;
    match solve_substep(prev, problem, config, tau, t_next, step) {
        Ok(out) => Ok(out),
        Err(Error::StepFailure { residual, iterations, .. }) if config.retry_tau_halving => {
            // Halve tau for this step only: two substeps committing memory.
            let _ = (residual, iterations);
            let half = 0.5 * tau;
            let t_mid = t_next - half;
            let (mid, stats_a) = solve_substep(prev, problem, config, half, t_mid, step)?;
            let (end, stats_b) = solve_substep(&mid, problem, config, half, t_next, step)?;
            Ok((
                end,
                SolveStats {
                    newton_iterations: stats_a.newton_iterations + stats_b.newton_iterations,
                    residual_norm: stats_b.residual_norm,
                    used_picard: stats_a.used_picard || stats_b.used_picard,
                },
            ))
        }
        Err(e) => Err(e),
    }
}

fn solve_substep(
    prev: &SimulationState,
    problem: &Problem,
    config: &StepperConfig,
    tau: f64,
    t_next: f64,
    step: usize,
) -> Result<(SimulationState, SolveStats)> {
    let mut u = prev.u.clone();
    let mut residual = assemble_residual(
        problem,
        &u,
        &prev.memory,
        prev.theta.as_slice(),
        prev.v.as_slice(),
        tau,
        t_next,
    )?;
    let mut norm = norm2(residual.as_slice());
    let mut used_picard = false;
    let mut iterations = 0;

    while norm > config.newton_tol {
        if iterations >= config.newton_max_iter {
            return Err(Error::StepFailure { step, residual: norm, iterations });
        }
        iterations += 1;
        // Newton direction with the FD hysteresis slope; Picard retry uses a
        // broad secant over the memory support instead.
        let mut accepted = false;
        for (attempt, h_slope) in [config.fd_step, problem.thresholds.lambda()].iter().enumerate() {
            if attempt == 1 && !config.picard_fallback {
                break;
            }
            let jac = assemble_jacobian(problem, &u, &prev.memory, tau, *h_slope)?;
            let rhs: Vec<f64> = residual.as_slice().iter().map(|r| -r).collect();
            let (direction, _) = pcg_solve(
                &jac,
                &rhs,
                &vec![0.0; rhs.len()],
                config.linear_rel_tol,
                config.linear_max_iter,
            )?;
            let mut alpha = 1.0;
            for _ in 0..config.line_search_max {
                let mut u_try = u.clone();
                for (ui, di) in u_try.as_mut_slice().iter_mut().zip(&direction) {
                    *ui += alpha * di;
                }
                let r_try = assemble_residual(
                    problem,
                    &u_try,
                    &prev.memory,
                    prev.theta.as_slice(),
                    prev.v.as_slice(),
                    tau,
                    t_next,
                )?;
                let n_try = norm2(r_try.as_slice());
                if n_try <= (1.0 - 1e-4 * alpha) * norm {
                    u = u_try;
                    residual = r_try;
                    norm = n_try;
                    accepted = true;
                    break;
                }
                alpha *= config.line_search_shrink;
            }
            if accepted {
                used_picard |= attempt == 1;
                break;
            }
        }
        if !accepted {
            return Err(Error::StepFailure { step, residual: norm, iterations });
        }
    }

    let mut v = prev.v.clone();
    for (vi, &ui) in v.as_mut_slice().iter_mut().zip(u.as_slice()) {
        *vi = (*vi + tau * ui) / (1.0 + tau);
    }
    let memory = update_memory(&prev.memory, u.as_slice(), &problem.thresholds)?;
    let theta = Field::new(preisach_eval_field(&memory, &problem.density, &problem.thresholds));
    Ok((
        SimulationState { step, time: t_next, u, v, theta, memory },
        SolveStats { newton_iterations: iterations, residual_norm: norm, used_picard },
    ))
}

/// Outcome of a full run.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// One summary per state, the initial state included.
    pub summaries: Vec<StateSummary>,
    pub reports: Vec<StepReport>,
    pub final_state: SimulationState,
}

/// Run all steps from t = 0, streaming `(state, report)` pairs to the observer.
pub fn run(
    problem: &Problem,
    config: &StepperConfig,
    observer: &mut dyn FnMut(&SimulationState, &StepReport) -> Result<()>,
) -> Result<RunResult> {
    run_from(initial_state(problem), problem, config, observer)
}

/// Continue a run from a restored state (checkpoint restart).
pub fn run_from(
    state0: SimulationState,
    problem: &Problem,
    config: &StepperConfig,
    observer: &mut dyn FnMut(&SimulationState, &StepReport) -> Result<()>,
) -> Result<RunResult> {
    config.validate()?;
    let mut state = state0;
    let mut summaries = vec![StateSummary::of(&state)];
    let mut reports = Vec::with_capacity(problem.n_steps.saturating_sub(state.step));
    while state.step < problem.n_steps {
        let (next, stats) = solve_step(&state, problem, config)?;
        let report = step_report(
            problem,
            &state,
            &next,
            config.newton_tol,
            stats.newton_iterations,
            stats.residual_norm,
        )?;
        observer(&next, &report)?;
        summaries.push(StateSummary::of(&next));
        reports.push(report);
        state = next;
    }
    Ok(RunResult { summaries, reports, final_state: state })
}

/// One row of a tau-sweep comparison table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub tau: f64,
    pub n_steps: usize,
    pub max_sup_u: f64,
    pub max_sup_v: f64,
    pub max_sup_theta: f64,
    pub bv_log_total: f64,
    pub total_dissipation: f64,
    /// Mass-weighted l2 distance of the final (u, v) to the finest-tau run.
    pub l2_distance_to_finest: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "tau,n_steps,max_sup_u,max_sup_v,max_sup_theta,bv_log_total,total_dissipation,l2_distance_to_finest";

    pub fn csv_row(&self) -> String {
        let f = crate::fmt_float;
        format!(
            "{},{},{},{},{},{},{},{}",
            f(self.tau),
            self.n_steps,
            f(self.max_sup_u),
            f(self.max_sup_v),
            f(self.max_sup_theta),
            f(self.bv_log_total),
            f(self.total_dissipation),
            f(self.l2_distance_to_finest),
        )
    }
}

/// Run the scenario at every tau of a descending list and compare sup-norms,
/// BV-log totals, dissipation and final states against the finest run.
pub fn tau_sweep(
    problem: &Problem,
    config: &StepperConfig,
    tau_list: &[f64],
) -> Result<Vec<SweepRow>> {
    if tau_list.is_empty() {
        return Err(Error::scenario("tau_list", "need at least one tau"));
    }
    for pair in tau_list.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(Error::scenario("tau_list", "tau values must be strictly descending"));
        }
    }
    let mut results = Vec::with_capacity(tau_list.len());
    for &tau in tau_list {
        let mut scenario = problem.scenario.clone();
        scenario.tau = tau;
        let sub_problem = scenario.build()?;
        let run_result = run(&sub_problem, config, &mut |_, _| Ok(()))?;
        results.push((tau, sub_problem, run_result));
    }
    let (_, finest_problem, finest) = results.last().unwrap();
    let mass = finest_problem.mesh.lumped_mass().to_vec();
    let distance = |state: &SimulationState| -> f64 {
        let fin = &finest.final_state;
        let mut acc = 0.0;
        for i in 0..state.u.len() {
            let du = state.u[i] - fin.u[i];
            let dv = state.v[i] - fin.v[i];
            acc += mass[i] * (du * du + dv * dv);
        }
        acc.sqrt()
    };
    let rows = results
        .iter()
        .map(|(tau, _, rr)| {
            let (max_u, max_v, max_theta) = crate::diagnostics::sup_norm_monitor(&rr.summaries);
            SweepRow {
                tau: *tau,
                n_steps: rr.reports.len(),
                max_sup_u: max_u,
                max_sup_v: max_v,
                max_sup_theta: max_theta,
                bv_log_total: crate::diagnostics::bv_log_total(&rr.reports),
                total_dissipation: rr
                    .reports
                    .iter()
                    .map(|r| r.dissipation_hyst + r.dissipation_visc + r.dissipation_diff)
                    .sum(),
                l2_distance_to_finest: distance(&rr.final_state),
            }
        })
        .collect();
    Ok(rows)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HYSTCKP1";

/// Write the full state (fields plus memory matrix) as little-endian binary.
///
/// Layout: magic, three u64 (step, n_nodes, n_thresholds), one f64 (time),
/// then the u, v, theta arrays and the node-major memory matrix as f64.
pub fn save_checkpoint(state: &SimulationState, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&(state.step as u64).to_le_bytes())?;
    file.write_all(&(state.u.len() as u64).to_le_bytes())?;
    file.write_all(&(state.memory.n_thresholds() as u64).to_le_bytes())?;
    file.write_all(&state.time.to_le_bytes())?;
    for field in [&state.u, &state.v, &state.theta] {
        for v in field.as_slice() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    file.write_all(&state.memory.to_le_bytes())?;
    Ok(())
}

/// Restore a state written by [`save_checkpoint`]; the mesh and threshold
/// grid of `problem` must match.
pub fn load_checkpoint(path: &Path, problem: &Problem) -> Result<SimulationState> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 + 3 * 8 + 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic or truncated header".into()));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
    let step = u64_at(8);
    let n_nodes = u64_at(16);
    let n_thresholds = u64_at(24);
    let time = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    if n_nodes != problem.mesh.n_nodes() || n_thresholds != problem.thresholds.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint is {n_nodes} nodes x {n_thresholds} thresholds, scenario needs {} x {}",
            problem.mesh.n_nodes(),
            problem.thresholds.len()
        )));
    }
    let expected = 40 + 8 * (3 * n_nodes + n_nodes * n_thresholds);
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let read_field = |idx: usize| -> Field {
        let off = 40 + 8 * n_nodes * idx;
        Field::new(
            bytes[off..off + 8 * n_nodes]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    };
    let u = read_field(0);
    let v = read_field(1);
    let theta = read_field(2);
    let memory =
        MemoryState::from_le_bytes(&bytes[40 + 24 * n_nodes..], n_nodes, n_thresholds)?;
    Ok(SimulationState { step, time, u, v, theta, memory })
}
