//! Runtime verification of the structural identities of the scheme: mass
//! balance, energy inequality, dissipation channels, sup-norms and the
//! BV-log sum.
//!
//! The converged step residual tested with y = 1 gives the discrete mass
//! identity; tested with y = u + nu.(x - x0) it gives the energy identity
//! whose inequality form (potential + viscous + diffusive dissipation plus
//! boundary work bounded by the gravity cross term up to solver slack) is
//! checked every step. Violations are reported, never fatal: they flag solver
//! or quadrature bugs.

use crate::error::Result;
use crate::grid::assembly::{diffusion_dissipation_integral, total_boundary_flux};
use crate::hysteresis::potential_and_dissipation_step;
use crate::scenario::Problem;
use crate::stepper::SimulationState;

/// Per-step diagnostic record; one CSV row per step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    /// Total water mass sum_nodes M (theta + v).
    pub mass: f64,
    /// mass_i - mass_{i-1} + tau * boundary outflow; zero up to solver slack.
    pub mass_drift: f64,
    /// Total Robin outflow sum b* (u - u*) ds at the new time.
    pub boundary_outflow: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub sup_theta: f64,
    pub theta_min: f64,
    /// Hysteresis potential change sum M dV.
    pub delta_v_pot: f64,
    pub dissipation_hyst: f64,
    pub dissipation_visc: f64,
    pub dissipation_diff: f64,
    /// Gravity cross term sum M dv . nu.(x - x0).
    pub gravity_cross: f64,
    /// Robin boundary work tau sum b* (u - u*) (u + nu.(x - x0)) ds.
    pub boundary_work: f64,
    /// Potential energy sum M (V + v^2/2 + theta nu.(x - x0)).
    pub energy: f64,
    /// Energy identity slack: dE + dissipation + boundary work + gravity cross.
    pub energy_residual: f64,
    /// Budget the slack is checked against at this step.
    pub energy_budget: f64,
    /// 1 when the energy inequality holds within the budget.
    pub energy_ok: bool,
    /// sum M |du| log(1 + |du| / tau) of this step.
    pub bv_log_increment: f64,
    pub newton_iterations: usize,
    pub residual_norm: f64,
}

impl StepReport {
    pub const CSV_HEADER: &'static str = "step,time,mass,mass_drift,boundary_outflow,sup_u,sup_v,sup_theta,theta_min,delta_v_pot,dissipation_hyst,dissipation_visc,dissipation_diff,gravity_cross,boundary_work,energy,energy_residual,energy_budget,energy_ok,bv_log_increment,newton_iterations,residual_norm";

    pub fn csv_row(&self) -> String {
        let f = crate::fmt_float;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            f(self.time),
            f(self.mass),
            f(self.mass_drift),
            f(self.boundary_outflow),
            f(self.sup_u),
            f(self.sup_v),
            f(self.sup_theta),
            f(self.theta_min),
            f(self.delta_v_pot),
            f(self.dissipation_hyst),
            f(self.dissipation_visc),
            f(self.dissipation_diff),
            f(self.gravity_cross),
            f(self.boundary_work),
            f(self.energy),
            f(self.energy_residual),
            f(self.energy_budget),
            if self.energy_ok { 1 } else { 0 },
            f(self.bv_log_increment),
            self.newton_iterations,
            f(self.residual_norm),
        )
    }
}

/// Summary of one state of the trajectory (the initial state included).
#[derive(Debug, Clone, Copy)]
pub struct StateSummary {
    pub step: usize,
    pub time: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub sup_theta: f64,
}

impl StateSummary {
    pub fn of(state: &SimulationState) -> Self {
        Self {
            step: state.step,
            time: state.time,
            sup_u: state.u.linf(),
            sup_v: state.v.linf(),
            sup_theta: state.theta.linf(),
        }
    }
}

/// Total water mass sum M (theta + v) of a state.
pub fn total_mass(problem: &Problem, state: &SimulationState) -> f64 {
    let mass = problem.mesh.lumped_mass();
    (0..state.u.len())
        .map(|i| mass[i] * (state.theta[i] + state.v[i]))
        .sum()
}

/// Mass balance across one committed step: returns (mass_next, drift,
/// boundary_outflow). With b* = 0 the drift is bounded by the solver slack.
pub fn mass_balance(
    problem: &Problem,
    prev: &SimulationState,
    next: &SimulationState,
) -> (f64, f64, f64) {
    let mass_prev = total_mass(problem, prev);
    let mass_next = total_mass(problem, next);
    let outflow = total_boundary_flux(problem, &next.u, next.time);
    let drift = mass_next - mass_prev + problem.tau * outflow;
    (mass_next, drift, outflow)
}

/// Potential energy sum M (V + v^2/2 + theta nu.(x - x0)) of a state.
pub fn potential_energy(problem: &Problem, state: &SimulationState) -> f64 {
    let mass = problem.mesh.lumped_mass();
    let gx = problem.gravity_coordinate();
    let mut acc = 0.0;
    for node in 0..state.u.len() {
        let mut v_quad = 0.0;
        for (k, (&r, &w)) in problem
            .thresholds
            .nodes()
            .iter()
            .zip(problem.thresholds.weights())
            .enumerate()
        {
            v_quad += w * problem.density.psi_cap(node, r, state.memory.xi(node, k));
        }
        acc += mass[node] * (v_quad + 0.5 * state.v[node] * state.v[node] + state.theta[node] * gx[node]);
    }
    acc
}

/// Energy fields of one committed step.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub energy_prev: f64,
    pub energy_next: f64,
    pub delta_v_pot: f64,
    pub dissipation_hyst: f64,
    pub dissipation_visc: f64,
    pub dissipation_diff: f64,
    pub gravity_cross: f64,
    pub boundary_work: f64,
    /// dE + D_hyst + D_visc + D_diff + W_bdry + gravity_cross; <= budget when
    /// the step converged.
    pub energy_residual: f64,
    pub energy_budget: f64,
    pub ok: bool,
}

/// Evaluate the discrete energy identity across one step. `newton_tol` feeds
/// the accumulated budget newton_tol * (1 + i) * scale with the test-function
/// norm scale.
pub fn energy_report(
    problem: &Problem,
    prev: &SimulationState,
    next: &SimulationState,
    newton_tol: f64,
) -> Result<EnergyReport> {
    let tau = problem.tau;
    let mass = problem.mesh.lumped_mass();
    let gx = problem.gravity_coordinate();
    let n = next.u.len();

    let (dv_nodes, diss_nodes) = potential_and_dissipation_step(
        &prev.memory,
        &next.memory,
        &problem.density,
        &problem.thresholds,
        next.u.as_slice(),
    )?;
    let mut delta_v_pot = 0.0;
    let mut dissipation_hyst = 0.0;
    let mut dissipation_visc = 0.0;
    let mut gravity_cross = 0.0;
    for i in 0..n {
        delta_v_pot += mass[i] * dv_nodes[i];
        dissipation_hyst += mass[i] * diss_nodes[i];
        let dv = next.v[i] - prev.v[i];
        dissipation_visc += mass[i] * dv * dv / tau;
        gravity_cross += mass[i] * dv * gx[i];
    }
    let dissipation_diff =
        tau * diffusion_dissipation_integral(problem, next.u.as_slice(), next.theta.as_slice())?;
    let u_star = problem.u_star(next.time);
    let mut boundary_work = 0.0;
    for b in problem.mesh.boundary() {
        let bs = problem.b_star(b.side);
        boundary_work += tau * bs * (next.u[b.node] - u_star) * (next.u[b.node] + gx[b.node]) * b.measure;
    }
    let energy_prev = potential_energy(problem, prev);
    let energy_next = potential_energy(problem, next);
    let energy_residual = (energy_next - energy_prev)
        + dissipation_hyst
        + dissipation_visc
        + dissipation_diff
        + boundary_work
        + gravity_cross;
    let gx_max = gx.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let scale = (n as f64).sqrt() * (next.u.linf() + gx_max + 1.0);
    let energy_budget = newton_tol * (1.0 + next.step as f64) * scale;
    Ok(EnergyReport {
        energy_prev,
        energy_next,
        delta_v_pot,
        dissipation_hyst,
        dissipation_visc,
        dissipation_diff,
        gravity_cross,
        boundary_work,
        energy_residual,
        energy_budget,
        ok: energy_residual <= energy_budget,
    })
}

/// BV-log increment of one step: sum M |du| log(1 + |du| / tau).
pub fn bv_log_increment(problem: &Problem, prev: &SimulationState, next: &SimulationState) -> f64 {
    let mass = problem.mesh.lumped_mass();
    let tau = problem.tau;
    (0..next.u.len())
        .map(|i| {
            let du = (next.u[i] - prev.u[i]).abs();
            mass[i] * du * (1.0 + du / tau).ln()
        })
        .sum()
}

/// Total BV-log sum over a trajectory of step reports.
pub fn bv_log_total(reports: &[StepReport]) -> f64 {
    reports.iter().map(|r| r.bv_log_increment).sum()
}

/// Trajectory sup-norms (max_i sup |u_i|, sup |v_i|, sup |theta_i|), the
/// initial state included.
pub fn sup_norm_monitor(summaries: &[StateSummary]) -> (f64, f64, f64) {
    summaries.iter().fold((0.0f64, 0.0f64, 0.0f64), |acc, s| {
        (acc.0.max(s.sup_u), acc.1.max(s.sup_v), acc.2.max(s.sup_theta))
    })
}

/// Assemble the full per-step report.
pub fn step_report(
    problem: &Problem,
    prev: &SimulationState,
    next: &SimulationState,
    newton_tol: f64,
    newton_iterations: usize,
    residual_norm: f64,
) -> Result<StepReport> {
    let (mass, mass_drift, boundary_outflow) = mass_balance(problem, prev, next);
    let energy = energy_report(problem, prev, next, newton_tol)?;
    let theta_min = next
        .theta
        .as_slice()
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v));
    Ok(StepReport {
        step: next.step,
        time: next.time,
        mass,
        mass_drift,
        boundary_outflow,
        sup_u: next.u.linf(),
        sup_v: next.v.linf(),
        sup_theta: next.theta.linf(),
        theta_min,
        delta_v_pot: energy.delta_v_pot,
        dissipation_hyst: energy.dissipation_hyst,
        dissipation_visc: energy.dissipation_visc,
        dissipation_diff: energy.dissipation_diff,
        gravity_cross: energy.gravity_cross,
        boundary_work: energy.boundary_work,
        energy: energy.energy_next,
        energy_residual: energy.energy_residual,
        energy_budget: energy.energy_budget,
        energy_ok: energy.ok,
        bv_log_increment: bv_log_increment(problem, prev, next),
        newton_iterations,
        residual_norm,
    })
}
