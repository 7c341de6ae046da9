//! Convexity inequality checker for Prandtl-Ishlinskii operators.
//!
//! For a uniformly counterclockwise convex operator `P` (here: a
//! Prandtl-Ishlinskii operator with positive v-independent density) and an odd
//! increasing function `f` with `f(0) = 0`, there is a constant `beta > 0`
//! such that for every input sequence `{w_i}` in `[-U, U]`
//!
//! ```text
//! sum_i (P_{i+1} - 2 P_i + P_{i-1}) f(w_{i+1} - w_i)
//!     + (P_0 - P_{-1}) / (w_0 - w_{-1}) * F(w_0 - w_{-1})
//!     >= beta / 2 * sum_i Gamma(w_{i+1} - w_i),
//! ```
//!
//! with `F(w) = int_0^w f` and `Gamma(w) = |w| (w f(w) - F(w))`. The checker
//! computes both sides for a concrete sequence; `beta` itself is not known in
//! closed form and is derived by brute force over sampled sequences.

use crate::error::{Error, Result};
use crate::hysteresis::{play_clamp, ThresholdGrid};

/// Prandtl-Ishlinskii operator: Preisach density independent of v.
#[derive(Debug, Clone)]
pub struct PrandtlIshlinskii {
    grid: ThresholdGrid,
    /// Density value p(r_k) > 0 per threshold node.
    density: Vec<f64>,
}

impl PrandtlIshlinskii {
    pub fn new(grid: ThresholdGrid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "PI density has {} entries for {} thresholds",
                density.len(),
                grid.len()
            )));
        }
        if density.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::scenario("pi.density", "density must be positive and finite"));
        }
        Ok(Self { grid, density })
    }

    /// Constant density p(r) = value on (0, lambda].
    pub fn constant(lambda: f64, thresholds: usize, value: f64) -> Result<Self> {
        let grid = ThresholdGrid::midpoint(lambda, thresholds)?;
        let density = vec![value; thresholds];
        Self::new(grid, density)
    }

    /// Exponentially decreasing density p(r) = exp(-rate * r).
    pub fn exponential(lambda: f64, thresholds: usize, rate: f64) -> Result<Self> {
        let grid = ThresholdGrid::midpoint(lambda, thresholds)?;
        let density = grid.nodes().iter().map(|&r| (-rate * r).exp()).collect();
        Self::new(grid, density)
    }

    pub fn grid(&self) -> &ThresholdGrid {
        &self.grid
    }

    /// Feed a scalar input sequence through the operator starting from virgin
    /// memory; returns the output P[w]_i for each input.
    pub fn eval_sequence(&self, inputs: &[f64]) -> Vec<f64> {
        let mut xi = vec![0.0; self.grid.len()];
        let mut out = Vec::with_capacity(inputs.len());
        for &w in inputs {
            let mut acc = 0.0;
            for (k, &r) in self.grid.nodes().iter().enumerate() {
                xi[k] = play_clamp(xi[k], w, r);
                acc += self.grid.weights()[k] * self.density[k] * xi[k];
            }
            out.push(acc);
        }
        out
    }

    /// One-sided branch slopes at the state reached by `inputs`: derivative of
    /// the ascending branch (moving up) and of the descending branch (moving
    /// down). A threshold contributes when its play sits on the corresponding
    /// rail of the current band.
    pub fn branch_slopes(&self, inputs: &[f64]) -> (f64, f64) {
        let mut xi = vec![0.0; self.grid.len()];
        let mut last = 0.0;
        for &w in inputs {
            for (k, &r) in self.grid.nodes().iter().enumerate() {
                xi[k] = play_clamp(xi[k], w, r);
            }
            last = w;
        }
        let mut up = 0.0;
        let mut down = 0.0;
        for (k, &r) in self.grid.nodes().iter().enumerate() {
            let w = self.grid.weights()[k] * self.density[k];
            if (xi[k] - (last - r)).abs() <= 1e-12 * (1.0 + last.abs() + r) {
                up += w;
            }
            if (xi[k] - (last + r)).abs() <= 1e-12 * (1.0 + last.abs() + r) {
                down += w;
            }
        }
        (up, down)
    }
}

/// The odd increasing weight function f and its primitives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FSpec {
    /// f(w) = w / (tau + |w|); the regularized sign driving the BV-log bound.
    TauRegularized { tau: f64 },
    /// f(w) = w; F(w) = w^2 / 2, Gamma(w) = |w|^3 / 2.
    Linear,
}

impl FSpec {
    pub fn f(&self, w: f64) -> f64 {
        match *self {
            FSpec::TauRegularized { tau } => w / (tau + w.abs()),
            FSpec::Linear => w,
        }
    }

    /// F(w) = int_0^w f(v) dv.
    pub fn f_primitive(&self, w: f64) -> f64 {
        match *self {
            FSpec::TauRegularized { tau } => w.abs() - tau * (1.0 + w.abs() / tau).ln(),
            FSpec::Linear => 0.5 * w * w,
        }
    }

    /// Gamma(w) = |w| (w f(w) - F(w)).
    pub fn gamma(&self, w: f64) -> f64 {
        match *self {
            FSpec::TauRegularized { tau } => {
                let a = w.abs();
                tau * a * ((1.0 + a / tau).ln() - a / (tau + a))
            }
            FSpec::Linear => 0.5 * w.abs() * w * w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FSpec::TauRegularized { tau } if !(tau > 0.0) => Err(Error::scenario(
                "f.tau",
                "regularization parameter must be positive",
            )),
            _ => Ok(()),
        }
    }
}

/// Result of one convexity-inequality evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ConvexityCheck {
    /// Left-hand side: second-difference sum plus the initial branch term.
    pub lhs: f64,
    /// Right-hand side: (beta / 2) * sum of Gamma over the increments.
    pub rhs: f64,
    /// Sum of Gamma alone (rhs = beta / 2 * gamma_sum).
    pub gamma_sum: f64,
    pub holds: bool,
}

/// Evaluate both sides of the convexity inequality for the sequence
/// `w = [w_{-1}, w_0, ..., w_n]` (at least two entries).
///
/// When `w_0 = w_{-1}` the initial slope is taken as the one-sided branch
/// derivative: ascending if the first nonzero move is upward, descending
/// otherwise; the term multiplies `F(0) = 0` either way, so the convention
/// only fixes the 0/0 expression.
pub fn check_convexity_inequality(
    operator: &PrandtlIshlinskii,
    sequence: &[f64],
    f_spec: &FSpec,
    beta: f64,
) -> Result<ConvexityCheck> {
    f_spec.validate()?;
    if sequence.len() < 2 {
        return Err(Error::DimensionMismatch(
            "convexity check needs at least w_{-1} and w_0".into(),
        ));
    }
    let p = operator.eval_sequence(sequence);
    let n = sequence.len();

    let mut lhs = 0.0;
    // Second differences are centered at i = 1, ..., n-2 (paper indices 0..n-1).
    for i in 1..n - 1 {
        let second_diff = p[i + 1] - 2.0 * p[i] + p[i - 1];
        lhs += second_diff * f_spec.f(sequence[i + 1] - sequence[i]);
    }
    // Initial branch-slope term.
    let dw0 = sequence[1] - sequence[0];
    let slope = if dw0 != 0.0 {
        (p[1] - p[0]) / dw0
    } else {
        let (up, down) = operator.branch_slopes(&sequence[..1]);
        // Direction of the first nonzero move decides the branch.
        let dir = sequence
            .windows(2)
            .map(|w| w[1] - w[0])
            .find(|d| *d != 0.0)
            .unwrap_or(0.0);
        if dir > 0.0 {
            up
        } else {
            down
        }
    };
    lhs += slope * f_spec.f_primitive(dw0);

    let mut gamma_sum = 0.0;
    for i in 1..n - 1 {
        gamma_sum += f_spec.gamma(sequence[i + 1] - sequence[i]);
    }
    let rhs = 0.5 * beta * gamma_sum;
    // Tolerance guards roundoff when both sides are near zero.
    let scale = lhs.abs().max(rhs.abs()).max(1e-30);
    let holds = lhs >= rhs - 1e-12 * scale.max(1.0);
    Ok(ConvexityCheck { lhs, rhs, gamma_sum, holds })
}

/// Brute-force beta for an operator and weight function: the minimum of
/// `lhs / (gamma_sum / 2)` over the supplied sequences, scaled by a safety
/// margin of 0.5 against unsampled sequences. Sequences whose increments all
/// vanish contribute nothing.
pub fn derive_beta(
    operator: &PrandtlIshlinskii,
    f_spec: &FSpec,
    sequences: &[Vec<f64>],
) -> Result<f64> {
    f_spec.validate()?;
    let mut min_ratio = f64::INFINITY;
    for seq in sequences {
        let check = check_convexity_inequality(operator, seq, f_spec, 0.0)?;
        if check.gamma_sum <= 0.0 {
            continue;
        }
        if check.lhs < 0.0 {
            return Err(Error::InternalInconsistency(format!(
                "convexity lhs = {:.3e} negative for a sampled sequence; operator is not counterclockwise convex",
                check.lhs
            )));
        }
        let ratio = check.lhs / (0.5 * check.gamma_sum);
        if ratio < min_ratio {
            min_ratio = ratio;
        }
    }
    if !min_ratio.is_finite() {
        return Err(Error::InternalInconsistency(
            "beta derivation needs at least one sequence with a nonzero increment".into(),
        ));
    }
    Ok(0.5 * min_ratio)
}

/// Dense set of two-step sequences [w_{-1}, w_0, w_1] on a grid of [-u_max, u_max].
pub fn two_step_sequences(u_max: f64, grid_points: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let coord = |i: usize| -u_max + 2.0 * u_max * i as f64 / (grid_points - 1) as f64;
    for i in 0..grid_points {
        for j in 0..grid_points {
            for k in 0..grid_points {
                out.push(vec![coord(i), coord(j), coord(k)]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi_unit() -> PrandtlIshlinskii {
        PrandtlIshlinskii::constant(1.0, 64, 1.0).unwrap()
    }

    #[test]
    fn constant_sequence_trivially_holds() {
        let op = pi_unit();
        let f = FSpec::TauRegularized { tau: 0.01 };
        let check = check_convexity_inequality(&op, &[0.3, 0.3, 0.3, 0.3], &f, 10.0).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.rhs, 0.0);
        assert!(check.holds);
    }

    #[test]
    fn gamma_and_f_primitive_closed_forms() {
        let f = FSpec::TauRegularized { tau: 0.5 };
        // F(w) = |w| - tau ln(1 + |w|/tau)
        let w = 0.7f64;
        let expect_f = w - 0.5 * (1.0 + w / 0.5).ln();
        assert!((f.f_primitive(w) - expect_f).abs() < 1e-15);
        assert!((f.f_primitive(-w) - expect_f).abs() < 1e-15);
        // Gamma(w) = tau |w| (ln(1 + |w|/tau) - |w|/(tau + |w|)) >= 0, Gamma(0) = 0
        assert_eq!(f.gamma(0.0), 0.0);
        assert!(f.gamma(w) > 0.0);
        assert!((f.gamma(w) - f.gamma(-w)).abs() < 1e-15);
        // F(w) <= |w|
        for i in 0..50 {
            let w = -2.0 + 4.0 * i as f64 / 49.0;
            assert!(f.f_primitive(w) <= w.abs() + 1e-15);
            assert!(f.gamma(w) >= 0.0);
        }
        // Gamma(w) = |w| (w f(w) - F(w)) consistency.
        let direct = w.abs() * (w * f.f(w) - f.f_primitive(w));
        assert!((f.gamma(w) - direct).abs() < 1e-15);
    }

    #[test]
    fn single_monotone_step_beta_positive() {
        let op = pi_unit();
        let f = FSpec::TauRegularized { tau: 0.05 };
        let sequences = two_step_sequences(1.0, 9);
        let beta = derive_beta(&op, &f, &sequences).unwrap();
        assert!(beta > 0.0, "beta = {beta}");
        // The derived beta holds on a fresh two-point monotone step.
        let check = check_convexity_inequality(&op, &[0.0, 0.0, 0.8], &f, beta).unwrap();
        assert!(check.holds, "lhs {} rhs {}", check.lhs, check.rhs);
    }

    #[test]
    fn zero_first_move_uses_branch_convention() {
        let op = pi_unit();
        let f = FSpec::Linear;
        // w_0 = w_{-1}: F(0) = 0, so the term vanishes under either branch slope.
        let check = check_convexity_inequality(&op, &[0.2, 0.2, 0.7, -0.1], &f, 0.0).unwrap();
        assert!(check.lhs.is_finite());
    }

    #[test]
    fn branch_slopes_virgin_state() {
        let op = PrandtlIshlinskii::constant(1.0, 100, 1.0).unwrap();
        // After a single input 0.5 from virgin, plays with r < 0.5 sit on the
        // ascending rail: B'_+ = sum of their weights ~ 0.5, B'_- ~ 0.
        let (up, down) = op.branch_slopes(&[0.5]);
        assert!((up - 0.5).abs() < 0.02, "up = {up}");
        assert_eq!(down, 0.0);
    }
}
