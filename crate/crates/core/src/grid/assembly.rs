//! Weak-form residual and Jacobian assembly for the per-step elliptic problem.
//!
//! The converged step solves, in weak form with lumped time terms,
//!
//! ```text
//! (1/tau) (G_j(x, u) - theta_prev) M + (u - v_prev) / (1 + tau) M
//!   + int kappa(x, G_j(x, u)) (grad u + nu) . grad y
//!   + sum_boundary b* (u - u*(t)) y ds  =  0,
//! ```
//!
//! where `G_j` is the within-step Preisach output and the `v`-elimination
//! `(v_i - v_{i-1})/tau = (u_i - v_{i-1})/(1 + tau)` has been applied. Mass
//! lumping keeps the hysteresis term strictly nodal, which is what makes the
//! discrete conservation and dissipation identities exact.
//!
//! The Jacobian treats the hysteresis slope by a floored centered finite
//! difference of `G_j` and freezes kappa at the trial saturation (Picard), so
//! the system stays symmetric positive definite.

use crate::error::{Error, Result};
use crate::grid::linsolve::CsrMatrix;
use crate::grid::{Field, Side};
use crate::hysteresis::{within_step_output, MemoryState};
use crate::scenario::Problem;

/// Gauss points of the 2x2 rule on the reference square.
const GP: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

/// Robin flux entry at one boundary quadrature node.
#[derive(Debug, Clone, Copy)]
pub struct FluxEntry {
    pub node: usize,
    pub side: Side,
    /// Flux density b*(x) (u - u*(t)).
    pub value: f64,
    /// Boundary measure carried by the node.
    pub measure: f64,
}

/// Within-step saturation G_j(x, u) at every node.
pub fn trial_saturation(problem: &Problem, state_prev: &MemoryState, u_trial: &Field) -> Vec<f64> {
    (0..u_trial.len())
        .map(|node| {
            within_step_output(
                state_prev,
                &problem.density,
                &problem.thresholds,
                node,
                u_trial[node],
            )
        })
        .collect()
}

/// Nodal residual of the per-step elliptic problem at a trial field.
pub fn assemble_residual(
    problem: &Problem,
    u_trial: &Field,
    state_prev: &MemoryState,
    theta_prev: &[f64],
    v_prev: &[f64],
    tau: f64,
    t_next: f64,
) -> Result<Field> {
    if tau <= 0.0 {
        return Err(Error::scenario("tau", "time step must be positive"));
    }
    u_trial.check_finite("trial pressure field")?;
    let n = problem.mesh.n_nodes();
    if u_trial.len() != n || theta_prev.len() != n || v_prev.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "residual assembly: mesh has {n} nodes, fields have {}, {}, {}",
            u_trial.len(),
            theta_prev.len(),
            v_prev.len()
        )));
    }
    let theta_trial = trial_saturation(problem, state_prev, u_trial);
    let mut residual = vec![0.0; n];
    let mass = problem.mesh.lumped_mass();
    for i in 0..n {
        residual[i] = (theta_trial[i] - theta_prev[i]) / tau * mass[i]
            + (u_trial[i] - v_prev[i]) / (1.0 + tau) * mass[i];
    }
    add_stiffness_gravity_residual(problem, u_trial.as_slice(), &theta_trial, &mut residual)?;
    let u_star = problem.u_star(t_next);
    for b in problem.mesh.boundary() {
        let bs = problem.b_star(b.side);
        residual[b.node] += bs * (u_trial[b.node] - u_star) * b.measure;
    }
    Ok(Field::new(residual))
}

/// Stiffness plus gravity contribution
/// `int kappa(x, theta) (grad u + nu) . grad N_i` added onto `out`.
pub fn add_stiffness_gravity_residual(
    problem: &Problem,
    u: &[f64],
    theta: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let mesh = &problem.mesh;
    let nu = problem.nu;
    if mesh.dimension() == 1 {
        for seg in mesh.segments() {
            let (a, b) = (seg[0], seg[1]);
            let h = mesh.coords()[b][0] - mesh.coords()[a][0];
            let kappa = problem.kappa_eval(0.5 * (theta[a] + theta[b]))?;
            let flux = kappa * ((u[b] - u[a]) / h + nu[0]);
            out[a] -= flux;
            out[b] += flux;
        }
    } else {
        for quad in mesh.quads() {
            let hx = mesh.coords()[quad[1]][0] - mesh.coords()[quad[0]][0];
            let hy = mesh.coords()[quad[3]][1] - mesh.coords()[quad[0]][1];
            let theta_avg = 0.25 * quad.iter().map(|&q| theta[q]).sum::<f64>();
            let kappa = problem.kappa_eval(theta_avg)?;
            let wdet = 0.25 * hx * hy;
            for &gx in &[-GP, GP] {
                for &gy in &[-GP, GP] {
                    let grads = quad_gradients(gx, gy, hx, hy);
                    let mut du = [nu[0], nu[1]];
                    for (corner, g) in quad.iter().zip(&grads) {
                        du[0] += u[*corner] * g[0];
                        du[1] += u[*corner] * g[1];
                    }
                    for (corner, g) in quad.iter().zip(&grads) {
                        out[*corner] += kappa * (du[0] * g[0] + du[1] * g[1]) * wdet;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Gradients of the four bilinear shape functions at a reference point.
#[inline]
fn quad_gradients(gx: f64, gy: f64, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    let sx = 2.0 / hx;
    let sy = 2.0 / hy;
    [
        [-(1.0 - gy) / 4.0 * sx, -(1.0 - gx) / 4.0 * sy],
        [(1.0 - gy) / 4.0 * sx, -(1.0 + gx) / 4.0 * sy],
        [(1.0 + gy) / 4.0 * sx, (1.0 + gx) / 4.0 * sy],
        [-(1.0 + gy) / 4.0 * sx, (1.0 - gx) / 4.0 * sy],
    ]
}

/// Picard/Newton matrix: FD hysteresis slope on the diagonal, kappa frozen at
/// the trial saturation, symmetric stiffness, Robin diagonal.
pub fn assemble_jacobian(
    problem: &Problem,
    u_trial: &Field,
    state_prev: &MemoryState,
    tau: f64,
    h_fd: f64,
) -> Result<CsrMatrix> {
    u_trial.check_finite("trial pressure field")?;
    let n = problem.mesh.n_nodes();
    let mass = problem.mesh.lumped_mass();
    let theta_trial = trial_saturation(problem, state_prev, u_trial);
    let mut mat = CsrMatrix::from_pattern(&problem.mesh.node_adjacency());
    for node in 0..n {
        let up = within_step_output(
            state_prev,
            &problem.density,
            &problem.thresholds,
            node,
            u_trial[node] + h_fd,
        );
        let dn = within_step_output(
            state_prev,
            &problem.density,
            &problem.thresholds,
            node,
            u_trial[node] - h_fd,
        );
        // Floored at zero: G_j is nondecreasing, roundoff must not flip the sign.
        let slope = ((up - dn) / (2.0 * h_fd)).max(0.0);
        mat.add(node, node, mass[node] * (slope / tau + 1.0 / (1.0 + tau)));
    }
    add_stiffness_matrix(problem, &theta_trial, &mut mat)?;
    for b in problem.mesh.boundary() {
        let bs = problem.b_star(b.side);
        if bs != 0.0 {
            mat.add(b.node, b.node, bs * b.measure);
        }
    }
    Ok(mat)
}

/// Symmetric stiffness matrix with kappa frozen at the given saturation.
pub fn add_stiffness_matrix(problem: &Problem, theta: &[f64], mat: &mut CsrMatrix) -> Result<()> {
    let mesh = &problem.mesh;
    if mesh.dimension() == 1 {
        for seg in mesh.segments() {
            let (a, b) = (seg[0], seg[1]);
            let h = mesh.coords()[b][0] - mesh.coords()[a][0];
            let kappa = problem.kappa_eval(0.5 * (theta[a] + theta[b]))?;
            let k = kappa / h;
            mat.add(a, a, k);
            mat.add(b, b, k);
            mat.add(a, b, -k);
            mat.add(b, a, -k);
        }
    } else {
        for quad in mesh.quads() {
            let hx = mesh.coords()[quad[1]][0] - mesh.coords()[quad[0]][0];
            let hy = mesh.coords()[quad[3]][1] - mesh.coords()[quad[0]][1];
            let theta_avg = 0.25 * quad.iter().map(|&q| theta[q]).sum::<f64>();
            let kappa = problem.kappa_eval(theta_avg)?;
            let wdet = 0.25 * hx * hy;
            for &gx in &[-GP, GP] {
                for &gy in &[-GP, GP] {
                    let grads = quad_gradients(gx, gy, hx, hy);
                    for i in 0..4 {
                        for j in 0..4 {
                            let v = kappa * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]) * wdet;
                            mat.add(quad[i], quad[j], v);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Robin boundary flux b*(x) (u - u*(t)) per boundary node.
pub fn boundary_flux(problem: &Problem, u: &Field, t: f64) -> Vec<FluxEntry> {
    let u_star = problem.u_star(t);
    problem
        .mesh
        .boundary()
        .iter()
        .map(|b| FluxEntry {
            node: b.node,
            side: b.side,
            value: problem.b_star(b.side) * (u[b.node] - u_star),
            measure: b.measure,
        })
        .collect()
}

/// Total outward Robin flux: sum of flux density times boundary measure.
pub fn total_boundary_flux(problem: &Problem, u: &Field, t: f64) -> f64 {
    boundary_flux(problem, u, t)
        .iter()
        .map(|f| f.value * f.measure)
        .sum()
}

/// Quadrature of kappa |grad u + nu|^2 over the domain; the diffusive
/// dissipation density (before the time-step factor).
pub fn diffusion_dissipation_integral(problem: &Problem, u: &[f64], theta: &[f64]) -> Result<f64> {
    let mesh = &problem.mesh;
    let nu = problem.nu;
    let mut acc = 0.0;
    if mesh.dimension() == 1 {
        for seg in mesh.segments() {
            let (a, b) = (seg[0], seg[1]);
            let h = mesh.coords()[b][0] - mesh.coords()[a][0];
            let kappa = problem.kappa_eval(0.5 * (theta[a] + theta[b]))?;
            let g = (u[b] - u[a]) / h + nu[0];
            acc += kappa * g * g * h;
        }
    } else {
        for quad in mesh.quads() {
            let hx = mesh.coords()[quad[1]][0] - mesh.coords()[quad[0]][0];
            let hy = mesh.coords()[quad[3]][1] - mesh.coords()[quad[0]][1];
            let theta_avg = 0.25 * quad.iter().map(|&q| theta[q]).sum::<f64>();
            let kappa = problem.kappa_eval(theta_avg)?;
            let wdet = 0.25 * hx * hy;
            for &gx in &[-GP, GP] {
                for &gy in &[-GP, GP] {
                    let grads = quad_gradients(gx, gy, hx, hy);
                    let mut du = [nu[0], nu[1]];
                    for (corner, g) in quad.iter().zip(&grads) {
                        du[0] += u[*corner] * g[0];
                        du[1] += u[*corner] * g[1];
                    }
                    acc += kappa * (du[0] * du[0] + du[1] * du[1]) * wdet;
                }
            }
        }
    }
    Ok(acc)
}
