//! Initial-data compatibility checks.
//!
//! A scenario whose initial memory, pressure and boundary data are mutually
//! inconsistent can fail to admit even a local solution, so the memory curve
//! must anchor at the initial pressure, the saturation must reproduce the
//! memory quadrature, and the Robin flux must balance at t = 0. Only the
//! memory anchor is a hard failure; the remaining items govern regularity of
//! the continuous problem, not solvability of the scheme, and are reported as
//! warnings.

use crate::grid::assembly::add_stiffness_gravity_residual;
use crate::scenario::Problem;
use crate::stepper::initial_state;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone)]
pub struct CompatItem {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Worst sampled residual or mismatch of the check.
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct CompatReport {
    pub items: Vec<CompatItem>,
}

impl CompatReport {
    pub fn hard_fail(&self) -> bool {
        self.items.iter().any(|i| i.status == CheckStatus::Fail)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let tag = match item.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Warn => "WARN",
                CheckStatus::Fail => "FAIL",
            };
            out.push_str(&format!("{tag} {}: {} (worst {:.3e})\n", item.name, item.detail, item.worst));
        }
        out
    }
}

/// Run the four initial-compatibility checks on a built scenario.
pub fn validate_compatibility(problem: &Problem) -> crate::Result<CompatReport> {
    let mut items = Vec::new();
    let mesh = &problem.mesh;
    let grid = &problem.thresholds;
    let memory = &problem.initial_memory;
    let u0 = problem.u0.as_slice();
    let v0 = problem.v0.as_slice();
    let n = mesh.n_nodes();

    // (i) Memory anchor lambda(x, 0) = u0: on the sampled grid the
    // 1-Lipschitz consistency |lambda(r_1) - u0| <= r_1 is the checkable form.
    {
        let r1 = grid.nodes()[0];
        let mut worst = 0.0f64;
        for node in 0..n {
            let slack = (memory.lambda(node, 0) - u0[node]).abs() - r1;
            worst = worst.max(slack);
        }
        items.push(CompatItem {
            name: "c0-memory-anchor",
            status: if worst <= 1e-9 { CheckStatus::Pass } else { CheckStatus::Fail },
            worst,
            detail: format!("|lambda(r_1) - u0| - r_1 over {n} nodes"),
        });
    }

    // (ii) Initial saturation consistency: the threshold-grid quadrature of
    // psi(., lambda) against a refined trapezoid quadrature of the same curve.
    {
        let state0 = initial_state(problem);
        let theta_grid = state0.theta.as_slice();
        let refine = 8 * grid.len();
        let mut worst = 0.0f64;
        for node in 0..n {
            let mut fine = problem.density.g_bar();
            let h = grid.lambda() / refine as f64;
            let mut prev = problem.density.psi(node, 1e-12_f64.max(h * 1e-6), memory.lambda_at_zero(node));
            for j in 1..=refine {
                let r = j as f64 * h;
                let val = problem.density.psi(node, r, memory.lambda_interp(node, grid, r));
                fine += 0.5 * (prev + val) * h;
                prev = val;
            }
            worst = worst.max((fine - theta_grid[node]).abs());
        }
        items.push(CompatItem {
            name: "c0a-theta0-quadrature",
            status: if worst <= 1e-3 { CheckStatus::Pass } else { CheckStatus::Warn },
            worst,
            detail: format!("grid vs refined quadrature of theta_0 over {n} nodes"),
        });
    }

    // (iii) Robin compatibility at t = 0: -kappa (grad u0 + nu) . n = b* (u0 - u*(0)).
    {
        let state0 = initial_state(problem);
        let grads = mesh.nodal_gradient(u0);
        let u_star0 = problem.u_star(0.0);
        let mut worst = 0.0f64;
        for b in mesh.boundary() {
            let kappa = problem.kappa_eval(state0.theta[b.node])?;
            let flux = -kappa
                * ((grads[b.node][0] + problem.nu[0]) * b.normal[0]
                    + (grads[b.node][1] + problem.nu[1]) * b.normal[1]);
            let robin = problem.b_star(b.side) * (u0[b.node] - u_star0);
            worst = worst.max((flux - robin).abs());
        }
        let scale = 1.0 + problem.scenario.kappa.kappa1;
        items.push(CompatItem {
            name: "c2a-robin-balance",
            status: if worst <= 1e-8 * scale { CheckStatus::Pass } else { CheckStatus::Warn },
            worst,
            detail: "boundary flux minus Robin term at t = 0".into(),
        });
    }

    // (iv) Sign condition on -d lambda / dr for small thresholds, sampled.
    // Advisory: the virgin construction satisfies it only where sign(u0)
    // matches the sign of the elliptic residual.
    {
        let state0 = initial_state(problem);
        let mut weak = vec![0.0; n];
        add_stiffness_gravity_residual(problem, u0, state0.theta.as_slice(), &mut weak)?;
        let mass = mesh.lumped_mass();
        let boundary_nodes: std::collections::BTreeSet<usize> =
            mesh.boundary().iter().map(|b| b.node).collect();
        let elliptic: Vec<f64> = (0..n)
            .map(|i| -weak[i] / mass[i] + v0[i] - u0[i])
            .collect();
        let sup_e = elliptic
            .iter()
            .enumerate()
            .filter(|(i, _)| !boundary_nodes.contains(i))
            .fold(0.0f64, |a, (_, &e)| a.max(e.abs()));
        let lipschitz = (sup_e.sqrt() / grid.lambda()).max(1.0);
        let tol_e = 1e-9 * (1.0 + sup_e);
        let mut violations = 0usize;
        let mut samples = 0usize;
        for node in 0..n {
            if boundary_nodes.contains(&node) {
                continue;
            }
            let e = elliptic[node];
            if e.abs() <= tol_e {
                continue;
            }
            let r0 = (e.abs().sqrt() / lipschitz).min(grid.lambda());
            let want = -e.signum();
            let mut prev_r = 0.0;
            let mut prev_l = memory.lambda_at_zero(node);
            for (k, &r) in grid.nodes().iter().enumerate() {
                if r >= r0 {
                    break;
                }
                let slope = (memory.lambda(node, k) - prev_l) / (r - prev_r);
                samples += 1;
                if (slope - want).abs() > 1e-6 {
                    violations += 1;
                }
                prev_r = r;
                prev_l = memory.lambda(node, k);
            }
        }
        let fraction = if samples == 0 { 0.0 } else { violations as f64 / samples as f64 };
        items.push(CompatItem {
            name: "c1-c2-sign-condition",
            status: if violations == 0 { CheckStatus::Pass } else { CheckStatus::Warn },
            worst: fraction,
            detail: format!("{violations} of {samples} sampled (node, r) pairs violate the sign condition"),
        });
    }

    Ok(CompatReport { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{BStarSpec, FieldSpec, Scenario, UStarSpec};

    fn base_scenario() -> Scenario {
        serde_json::from_str(
            r#"{
                "mesh": { "dimension": 1, "extent": [1.0], "nodes": [17] },
                "density": { "kind": { "decay-family": { "m": 4.0, "phi0": 0.5 } }, "g_bar": 0.5 },
                "tau": 0.1,
                "T": 1.0
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn trivial_scenario_all_pass() {
        // Virgin memory, u0 = 0, u* = 0, nu = 0: everything vanishes.
        let problem = base_scenario().build().unwrap();
        let report = validate_compatibility(&problem).unwrap();
        assert!(!report.hard_fail());
        for item in &report.items {
            assert_eq!(item.status, CheckStatus::Pass, "{}", report.render());
        }
    }

    #[test]
    fn robin_mismatch_flags_residual() {
        // u0 = c != u*(0) with b* > 0 and nu = 0: item (iii) carries |b*(c - u*)|.
        let mut scenario = base_scenario();
        scenario.u0 = FieldSpec::Constant(0.4);
        scenario.v0 = FieldSpec::Constant(0.4);
        scenario.b_star = BStarSpec::Uniform(2.0);
        scenario.u_star = UStarSpec::Constant(0.1);
        let problem = scenario.build().unwrap();
        let report = validate_compatibility(&problem).unwrap();
        let item = report.items.iter().find(|i| i.name == "c2a-robin-balance").unwrap();
        assert_eq!(item.status, CheckStatus::Warn);
        assert!((item.worst - 2.0 * (0.4 - 0.1)).abs() < 1e-9, "worst = {}", item.worst);
        assert!(!report.hard_fail());
    }

    #[test]
    fn virgin_memory_passes_anchor_and_quadrature() {
        let mut scenario = base_scenario();
        scenario.u0 = FieldSpec::Constant(0.3);
        let problem = scenario.build().unwrap();
        let report = validate_compatibility(&problem).unwrap();
        let anchor = report.items.iter().find(|i| i.name == "c0-memory-anchor").unwrap();
        assert_eq!(anchor.status, CheckStatus::Pass);
        let quad = report.items.iter().find(|i| i.name == "c0a-theta0-quadrature").unwrap();
        assert_eq!(quad.status, CheckStatus::Pass, "worst = {}", quad.worst);
    }
}
