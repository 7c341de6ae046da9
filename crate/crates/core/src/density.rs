//! Preisach density models and initial memory curves.
//!
//! A density phi(x, r, v) >= 0 enters the operator only through its primitives
//!
//! ```text
//! psi(x, r, xi)     = integral of phi(x, r, v) dv from 0 to xi
//! psi_cap(x, r, xi) = integral of v phi(x, r, v) dv from 0 to xi
//! ```
//!
//! Both are evaluated in closed form for the parametric families (uniform box
//! and the polynomial-decay family) and by exact piecewise integration of the
//! bilinear interpolant for tabulated densities. `psi` is odd and
//! nondecreasing in xi, `psi_cap` is even and nonnegative; these properties
//! hold exactly, not up to quadrature error.
//!
//! Spatial dependence is a separable multiplier field: one nonnegative value
//! per mesh node, applied to both primitives.

use crate::error::{Error, Result};
use crate::hysteresis::ThresholdGrid;

/// Density family.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    /// phi = height on (r_lo, r_hi) x (v_lo, v_hi), zero elsewhere.
    UniformBox {
        r_lo: f64,
        r_hi: f64,
        v_lo: f64,
        v_hi: f64,
        height: f64,
    },
    /// phi = phi0 * max(1, r + |v|)^(-m); slow polynomial decay at infinity.
    Decay { m: f64, phi0: f64 },
    /// Bilinear interpolation of a nonnegative (r, v) table, zero outside.
    Tabulated(TabulatedDensity),
}

/// Preisach density with offset saturation and optional spatial modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreisachDensity {
    kind: DensityKind,
    g_bar: f64,
    x_modulation: Option<Vec<f64>>,
}

impl PreisachDensity {
    pub fn uniform_box(r_lo: f64, r_hi: f64, v_lo: f64, v_hi: f64, height: f64, g_bar: f64) -> Result<Self> {
        if !(r_lo >= 0.0 && r_hi > r_lo) {
            return Err(Error::scenario("density.r-support", "need 0 <= r_lo < r_hi"));
        }
        if !(v_hi > v_lo) {
            return Err(Error::scenario("density.v-support", "need v_lo < v_hi"));
        }
        if !(height >= 0.0) || !height.is_finite() {
            return Err(Error::scenario("density.height", "height must be finite and >= 0"));
        }
        Ok(Self {
            kind: DensityKind::UniformBox { r_lo, r_hi, v_lo, v_hi, height },
            g_bar,
            x_modulation: None,
        })
    }

    pub fn decay(m: f64, phi0: f64, g_bar: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::scenario("density.m", "decay exponent must be positive"));
        }
        if !(phi0 > 0.0) || !phi0.is_finite() {
            return Err(Error::scenario("density.phi0", "phi0 must be positive"));
        }
        Ok(Self {
            kind: DensityKind::Decay { m, phi0 },
            g_bar,
            x_modulation: None,
        })
    }

    pub fn tabulated(r_vals: Vec<f64>, v_vals: Vec<f64>, values: Vec<f64>, g_bar: f64) -> Result<Self> {
        let table = TabulatedDensity::new(r_vals, v_vals, values)?;
        Ok(Self {
            kind: DensityKind::Tabulated(table),
            g_bar,
            x_modulation: None,
        })
    }

    /// Attach a per-node multiplier field (piecewise linear in space).
    pub fn with_modulation(mut self, modulation: Vec<f64>) -> Result<Self> {
        if modulation.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::scenario("density.x_modulation", "multipliers must be finite and >= 0"));
        }
        self.x_modulation = Some(modulation);
        Ok(self)
    }

    pub fn g_bar(&self) -> f64 {
        self.g_bar
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    fn modulation(&self, node: usize) -> f64 {
        self.x_modulation.as_ref().map_or(1.0, |m| m[node])
    }

    /// Largest spatial multiplier (1 when no modulation is attached).
    pub fn modulation_max(&self) -> f64 {
        self.x_modulation
            .as_ref()
            .map_or(1.0, |m| m.iter().cloned().fold(0.0, f64::max))
    }

    /// Pointwise density value phi(x_node, r, v).
    pub fn phi(&self, node: usize, r: f64, v: f64) -> f64 {
        self.modulation(node) * self.phi_base(r, v)
    }

    fn phi_base(&self, r: f64, v: f64) -> f64 {
        match &self.kind {
            DensityKind::UniformBox { r_lo, r_hi, v_lo, v_hi, height } => {
                if r > *r_lo && r < *r_hi && v > *v_lo && v < *v_hi {
                    *height
                } else {
                    0.0
                }
            }
            DensityKind::Decay { m, phi0 } => phi0 * (1.0f64).max(r + v.abs()).powf(-m),
            DensityKind::Tabulated(t) => t.phi(r, v),
        }
    }

    /// First primitive: psi(x, r, xi) = int_0^xi phi dv. Odd and nondecreasing in xi.
    pub fn psi(&self, node: usize, r: f64, xi: f64) -> f64 {
        self.modulation(node) * self.psi_base(r, xi)
    }

    pub(crate) fn psi_base(&self, r: f64, xi: f64) -> f64 {
        match &self.kind {
            DensityKind::UniformBox { r_lo, r_hi, v_lo, v_hi, height } => {
                if r <= *r_lo || r >= *r_hi {
                    return 0.0;
                }
                height * (clamp(xi, *v_lo, *v_hi) - clamp(0.0, *v_lo, *v_hi))
            }
            DensityKind::Decay { m, phi0 } => {
                let a = xi.abs();
                phi0 * xi.signum() * decay_psi_plus(r, a, *m)
            }
            DensityKind::Tabulated(t) => t.psi(r, xi),
        }
    }

    /// Second primitive: psi_cap(x, r, xi) = int_0^xi v phi dv. Even and >= 0.
    pub fn psi_cap(&self, node: usize, r: f64, xi: f64) -> f64 {
        self.modulation(node) * self.psi_cap_base(r, xi)
    }

    fn psi_cap_base(&self, r: f64, xi: f64) -> f64 {
        match &self.kind {
            DensityKind::UniformBox { r_lo, r_hi, v_lo, v_hi, height } => {
                if r <= *r_lo || r >= *r_hi {
                    return 0.0;
                }
                let b = clamp(xi, *v_lo, *v_hi);
                let a = clamp(0.0, *v_lo, *v_hi);
                height * 0.5 * (b * b - a * a)
            }
            DensityKind::Decay { m, phi0 } => phi0 * decay_psi_cap_plus(r, xi.abs(), *m),
            DensityKind::Tabulated(t) => t.psi_cap(r, xi),
        }
    }

    /// Saturating value of psi for xi -> +infinity (base density, no modulation).
    pub fn psi_inf_pos(&self, r: f64) -> f64 {
        match &self.kind {
            DensityKind::UniformBox { r_lo, r_hi, v_lo, v_hi, height } => {
                if r <= *r_lo || r >= *r_hi {
                    0.0
                } else {
                    height * (v_hi - clamp(0.0, *v_lo, *v_hi))
                }
            }
            DensityKind::Decay { m, phi0 } => {
                let v1 = (1.0 - r).max(0.0);
                let c = r.max(1.0);
                phi0 * (v1 + c.powf(1.0 - m) / (m - 1.0))
            }
            DensityKind::Tabulated(t) => t.psi(r, f64::INFINITY),
        }
    }

    /// Saturating value of -psi for xi -> -infinity (base density).
    pub fn psi_inf_neg(&self, r: f64) -> f64 {
        match &self.kind {
            DensityKind::UniformBox { r_lo, r_hi, v_lo, v_hi, height } => {
                if r <= *r_lo || r >= *r_hi {
                    0.0
                } else {
                    height * (clamp(0.0, *v_lo, *v_hi) - v_lo)
                }
            }
            DensityKind::Decay { .. } => self.psi_inf_pos(r),
            DensityKind::Tabulated(t) => -t.psi(r, f64::NEG_INFINITY),
        }
    }
}

#[inline]
fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// int_0^a max(1, r+v)^(-m) dv for a >= 0 (phi0 factored out).
fn decay_psi_plus(r: f64, a: f64, m: f64) -> f64 {
    let v1 = (1.0 - r).max(0.0);
    let c = r.max(1.0); // = r + v1
    let head = a.min(v1);
    if a <= v1 {
        head
    } else {
        head + (c.powf(1.0 - m) - (r + a).powf(1.0 - m)) / (m - 1.0)
    }
}

/// int_0^a v max(1, r+v)^(-m) dv for a >= 0 (phi0 factored out).
fn decay_psi_cap_plus(r: f64, a: f64, m: f64) -> f64 {
    let v1 = (1.0 - r).max(0.0);
    let c = r.max(1.0);
    let head = {
        let t = a.min(v1);
        0.5 * t * t
    };
    if a <= v1 {
        head
    } else {
        // antiderivative of (w - r) w^(-m) in w = r + v
        let anti = |w: f64| -w.powf(2.0 - m) / (m - 2.0) + r * w.powf(1.0 - m) / (m - 1.0);
        head + anti(r + a) - anti(c)
    }
}

/// Upper and lower half-plane masses of the density at a reference point:
/// `int_0^inf int_0^inf phi(x, r, +-v) dv dr`. Numerical quadrature on a
/// truncated domain with the analytic tail of the decay family added in
/// closed form.
pub fn density_mass(density: &PreisachDensity) -> Result<(f64, f64)> {
    match density.kind() {
        DensityKind::UniformBox { r_lo, r_hi, v_lo, v_hi, height } => {
            let dr = r_hi - r_lo;
            let above = (v_hi.max(0.0) - v_lo.max(0.0)).max(0.0);
            let below = (v_hi.min(0.0) - v_lo.min(0.0)).max(0.0);
            Ok((height * dr * above, height * dr * below))
        }
        DensityKind::Decay { m, phi0 } => {
            if *m <= 2.0 {
                return Err(Error::DivergentMass(*m));
            }
            let m = *m;
            let phi0 = *phi0;
            let r_cut = 8.0;
            // Inner integral over v with its analytic tail beyond v_cut(r).
            let inner = |r: f64| -> f64 {
                let v1 = (1.0 - r).max(0.0);
                let v_cut = v1 + 4.0;
                let f = |v: f64| (1.0f64).max(r + v).powf(-m);
                let mut acc = 0.0;
                if v1 > 0.0 {
                    acc += adaptive_simpson(&f, 0.0, v1, 1e-12);
                }
                acc += adaptive_simpson(&f, v1, v_cut, 1e-12);
                acc + (r + v_cut).powf(1.0 - m) / (m - 1.0)
            };
            let mut mass = adaptive_simpson(&inner, 0.0, 1.0, 1e-10);
            mass += adaptive_simpson(&inner, 1.0, r_cut, 1e-10);
            // r-tail: inner(r) = r^(1-m)/(m-1) for r >= 1.
            mass += r_cut.powf(2.0 - m) / ((m - 1.0) * (m - 2.0));
            let mass = phi0 * mass;
            Ok((mass, mass))
        }
        DensityKind::Tabulated(t) => Ok(t.half_masses()),
    }
}

/// Recursive adaptive Simpson quadrature.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Bilinear density table on a rectangular (r, v) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    r_vals: Vec<f64>,
    v_vals: Vec<f64>,
    /// Row-major: values[i * n_v + j] = phi(r_i, v_j).
    values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(r_vals: Vec<f64>, v_vals: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if r_vals.len() < 2 || v_vals.len() < 2 {
            return Err(Error::scenario("density.table", "need at least a 2 x 2 grid"));
        }
        if values.len() != r_vals.len() * v_vals.len() {
            return Err(Error::DimensionMismatch(format!(
                "table has {} values, expected {} x {}",
                values.len(),
                r_vals.len(),
                v_vals.len()
            )));
        }
        if !strictly_increasing(&r_vals) || !strictly_increasing(&v_vals) {
            return Err(Error::scenario("density.table", "grid axes must be strictly increasing"));
        }
        if r_vals[0] < 0.0 {
            return Err(Error::scenario("density.table", "threshold axis must be nonnegative"));
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::scenario("density.table", "negative or non-finite entries rejected"));
        }
        Ok(Self { r_vals, v_vals, values })
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.v_vals.len();
        &self.values[i * n..(i + 1) * n]
    }

    fn phi(&self, r: f64, v: f64) -> f64 {
        let (i, tr) = match locate(&self.r_vals, r) {
            Some(p) => p,
            None => return 0.0,
        };
        let (j, tv) = match locate(&self.v_vals, v) {
            Some(p) => p,
            None => return 0.0,
        };
        let n = self.v_vals.len();
        let f00 = self.values[i * n + j];
        let f01 = self.values[i * n + j + 1];
        let f10 = self.values[(i + 1) * n + j];
        let f11 = self.values[(i + 1) * n + j + 1];
        (1.0 - tr) * ((1.0 - tv) * f00 + tv * f01) + tr * ((1.0 - tv) * f10 + tv * f11)
    }

    /// Exact signed integral of the interpolant: int_0^xi phi(r, v) dv.
    fn psi(&self, r: f64, xi: f64) -> f64 {
        let (i, tr) = match locate(&self.r_vals, r) {
            Some(p) => p,
            None => return 0.0,
        };
        let a = (1.0 - tr) * self.row_integral(i, xi, false) + tr * self.row_integral(i + 1, xi, false);
        let b = (1.0 - tr) * self.row_integral(i, 0.0, false) + tr * self.row_integral(i + 1, 0.0, false);
        a - b
    }

    /// Exact signed integral int_0^xi v phi(r, v) dv.
    fn psi_cap(&self, r: f64, xi: f64) -> f64 {
        let (i, tr) = match locate(&self.r_vals, r) {
            Some(p) => p,
            None => return 0.0,
        };
        let a = (1.0 - tr) * self.row_integral(i, xi, true) + tr * self.row_integral(i + 1, xi, true);
        let b = (1.0 - tr) * self.row_integral(i, 0.0, true) + tr * self.row_integral(i + 1, 0.0, true);
        a - b
    }

    /// Integral of the piecewise-linear row (optionally weighted by v) from
    /// v_vals[0] to t, with phi = 0 outside the table.
    fn row_integral(&self, i: usize, t: f64, weight_v: bool) -> f64 {
        let vs = &self.v_vals;
        let row = self.row(i);
        let t = clamp(t, vs[0], vs[vs.len() - 1]);
        let mut acc = 0.0;
        for j in 0..vs.len() - 1 {
            let (a, b) = (vs[j], vs[j + 1]);
            if t <= a {
                break;
            }
            let hi = t.min(b);
            let slope = (row[j + 1] - row[j]) / (b - a);
            // phi(v) = row[j] + slope * (v - a) on [a, hi]
            if weight_v {
                // int v * phi dv
                let p0 = row[j] - slope * a;
                acc += p0 * 0.5 * (hi * hi - a * a) + slope * (hi * hi * hi - a * a * a) / 3.0;
            } else {
                let phi_hi = row[j] + slope * (hi - a);
                acc += 0.5 * (row[j] + phi_hi) * (hi - a);
            }
        }
        acc
    }

    /// Exact (upper, lower) half-plane masses of the bilinear interpolant.
    fn half_masses(&self) -> (f64, f64) {
        let mut upper = vec![0.0; self.r_vals.len()];
        let mut lower = vec![0.0; self.r_vals.len()];
        let v_last = self.v_vals[self.v_vals.len() - 1];
        for i in 0..self.r_vals.len() {
            upper[i] = self.row_integral(i, v_last, false) - self.row_integral(i, 0.0, false);
            lower[i] = self.row_integral(i, 0.0, false) - self.row_integral(i, self.v_vals[0], false);
        }
        let trapz = |f: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..f.len() - 1 {
                acc += 0.5 * (f[i] + f[i + 1]) * (self.r_vals[i + 1] - self.r_vals[i]);
            }
            acc
        };
        (trapz(&upper), trapz(&lower))
    }
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

/// Locate x in a sorted axis; returns (interval index, local coordinate) or
/// None when x lies outside the hull.
fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    if x < axis[0] || x > axis[axis.len() - 1] {
        return None;
    }
    let mut i = match axis.binary_search_by(|a| a.partial_cmp(&x).unwrap()) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    };
    if i >= axis.len() - 1 {
        i = axis.len() - 2;
    }
    let t = (x - axis[i]) / (axis[i + 1] - axis[i]);
    Some((i, t.clamp(0.0, 1.0)))
}

/// Initial memory curve lambda(x, r), tabulated on the threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialMemory {
    /// Node-major values at the grid's threshold nodes.
    lambda: Vec<f64>,
    /// lambda(x, 0) anchor per node (equals u0 by the compatibility condition).
    lambda_at_zero: Vec<f64>,
    /// Support bound: lambda(x, r) = 0 for r >= Lambda.
    lambda_max: f64,
    n_nodes: usize,
    n_thresholds: usize,
}

impl InitialMemory {
    pub fn from_table(
        lambda: Vec<f64>,
        lambda_at_zero: Vec<f64>,
        lambda_max: f64,
        grid: &ThresholdGrid,
    ) -> Result<Self> {
        let n_thresholds = grid.len();
        if lambda.len() % n_thresholds != 0 || lambda.len() / n_thresholds != lambda_at_zero.len() {
            return Err(Error::DimensionMismatch(format!(
                "memory table of {} values does not match {} anchors x {} thresholds",
                lambda.len(),
                lambda_at_zero.len(),
                n_thresholds
            )));
        }
        let mem = Self {
            n_nodes: lambda_at_zero.len(),
            lambda,
            lambda_at_zero,
            lambda_max,
            n_thresholds,
        };
        mem.validate(grid)?;
        Ok(mem)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn lambda(&self, node: usize, k: usize) -> f64 {
        self.lambda[node * self.n_thresholds + k]
    }

    pub fn lambda_at_zero(&self, node: usize) -> f64 {
        self.lambda_at_zero[node]
    }

    /// Check the memory-curve invariants on the grid sample:
    /// support bound, 1-Lipschitz continuity in r, and the r -> 0 anchor.
    pub fn validate(&self, grid: &ThresholdGrid) -> Result<()> {
        let tol = 1e-9;
        for node in 0..self.n_nodes {
            let mut prev_r = 0.0;
            let mut prev_l = self.lambda_at_zero[node];
            for (k, &r) in grid.nodes().iter().enumerate() {
                let l = self.lambda(node, k);
                if l.abs() > (self.lambda_max - r).max(0.0) + tol {
                    return Err(Error::IncompatibleInitialData(format!(
                        "memory at node {node}: |lambda({r})| = {} exceeds support bound {}",
                        l.abs(),
                        (self.lambda_max - r).max(0.0)
                    )));
                }
                if (l - prev_l).abs() > (r - prev_r) + tol {
                    return Err(Error::IncompatibleInitialData(format!(
                        "memory at node {node} violates the r-Lipschitz bound between r = {prev_r} and r = {r}"
                    )));
                }
                prev_r = r;
                prev_l = l;
            }
        }
        Ok(())
    }

    /// Interpolate lambda at an arbitrary threshold (linear between samples,
    /// anchored at lambda(0) and zero beyond the support bound).
    pub fn lambda_interp(&self, node: usize, grid: &ThresholdGrid, r: f64) -> f64 {
        let nodes = grid.nodes();
        if r >= self.lambda_max {
            return 0.0;
        }
        if r <= nodes[0] {
            let t = r / nodes[0];
            return (1.0 - t) * self.lambda_at_zero[node] + t * self.lambda(node, 0);
        }
        for k in 0..nodes.len() - 1 {
            if r <= nodes[k + 1] {
                let t = (r - nodes[k]) / (nodes[k + 1] - nodes[k]);
                return (1.0 - t) * self.lambda(node, k) + t * self.lambda(node, k + 1);
            }
        }
        // Between the last node and the support bound.
        let last = nodes[nodes.len() - 1];
        if self.lambda_max > last {
            let t = (r - last) / (self.lambda_max - last);
            (1.0 - t) * self.lambda(node, nodes.len() - 1)
        } else {
            0.0
        }
    }

    /// Materialize the play states xi^r_0 = lambda(x, r) on the grid.
    pub fn to_memory_state(&self) -> crate::hysteresis::MemoryState {
        crate::hysteresis::MemoryState::from_fn(self.n_nodes, self.n_thresholds, |node, k| {
            self.lambda(node, k)
        })
    }
}

/// Default memory compatible with an initial pressure field:
/// lambda(x, r) = sign(u0) * max(0, |u0| - r).
pub fn build_virgin_memory(u0_field: &[f64], lambda_max: f64, grid: &ThresholdGrid) -> Result<InitialMemory> {
    let sup = u0_field.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if sup > lambda_max + 1e-12 {
        return Err(Error::IncompatibleInitialData(format!(
            "sup |u0| = {sup} exceeds the memory support bound Lambda = {lambda_max}"
        )));
    }
    let n_thresholds = grid.len();
    let mut lambda = Vec::with_capacity(u0_field.len() * n_thresholds);
    for &u0 in u0_field {
        for &r in grid.nodes() {
            lambda.push(u0.signum() * (u0.abs() - r).max(0.0));
        }
    }
    InitialMemory::from_table(lambda, u0_field.to_vec(), lambda_max, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_mass_matches_closed_form() {
        // Closed form: phi0 * (1/2 + 1/(m-2)).
        for &m in &[2.5, 3.0, 4.0, 6.0] {
            let density = PreisachDensity::decay(m, 1.0, 0.5).unwrap();
            let (upper, lower) = density_mass(&density).unwrap();
            let expect = 0.5 + 1.0 / (m - 2.0);
            assert!((upper - expect).abs() < 1e-6, "m = {m}: {upper} vs {expect}");
            assert!((lower - expect).abs() < 1e-6);
        }
        // Scaling in phi0.
        let density = PreisachDensity::decay(4.0, 0.25, 0.5).unwrap();
        let (upper, _) = density_mass(&density).unwrap();
        assert!((upper - 0.25).abs() < 1e-6);
    }

    #[test]
    fn decay_mass_divergent_below_two() {
        let density = PreisachDensity::decay(1.5, 1.0, 0.5).unwrap();
        assert!(matches!(density_mass(&density), Err(Error::DivergentMass(_))));
    }

    #[test]
    fn uniform_box_masses() {
        let density = PreisachDensity::uniform_box(0.0, 1.0, 0.0, 1.0, 0.0, 0.5).unwrap();
        let (upper, lower) = density_mass(&density).unwrap();
        assert_eq!(upper, 0.0);
        assert_eq!(lower, 0.0);
        let density = PreisachDensity::uniform_box(0.0, 1.0, -1.0, 1.0, 0.5, 0.5).unwrap();
        let (upper, lower) = density_mass(&density).unwrap();
        assert!((upper - 0.5).abs() < 1e-15);
        assert!((lower - 0.5).abs() < 1e-15);
    }

    #[test]
    fn decay_primitives_match_numeric_quadrature() {
        let density = PreisachDensity::decay(4.0, 1.0, 0.5).unwrap();
        for &(r, xi) in &[(0.25, 0.5), (0.5, 2.0), (1.5, 3.0), (0.9, -1.7), (2.0, -0.3)] {
            let psi_num = adaptive_simpson(&|v: f64| density.phi(0, r, v), 0.0, xi, 1e-12);
            let cap_num = adaptive_simpson(&|v: f64| v * density.phi(0, r, v), 0.0, xi, 1e-12);
            assert!(
                (density.psi(0, r, xi) - psi_num).abs() < 1e-9,
                "psi mismatch at r={r}, xi={xi}"
            );
            assert!(
                (density.psi_cap(0, r, xi) - cap_num).abs() < 1e-9,
                "psi_cap mismatch at r={r}, xi={xi}"
            );
        }
    }

    #[test]
    fn psi_odd_and_nondecreasing_psi_cap_even() {
        let densities = vec![
            PreisachDensity::decay(3.0, 0.7, 0.5).unwrap(),
            PreisachDensity::uniform_box(0.0, 1.0, -1.0, 1.0, 1.0, 0.5).unwrap(),
        ];
        for d in &densities {
            for &r in &[0.1, 0.5, 0.9, 1.5] {
                let mut prev = f64::NEG_INFINITY;
                for i in 0..=60 {
                    let xi = -3.0 + 6.0 * i as f64 / 60.0;
                    let p = d.psi(0, r, xi);
                    assert!(p >= prev - 1e-15, "psi not nondecreasing");
                    prev = p;
                    assert!((d.psi(0, r, -xi) + p).abs() < 1e-14, "psi not odd");
                    assert!((d.psi_cap(0, r, -xi) - d.psi_cap(0, r, xi)).abs() < 1e-14);
                    assert!(d.psi_cap(0, r, xi) >= -1e-15);
                }
            }
        }
    }

    #[test]
    fn tabulated_matches_uniform_box() {
        // A constant table reproduces the box closed forms inside the hull.
        let r_vals = vec![0.0, 1.0];
        let v_vals = vec![-1.0, 1.0];
        let table = PreisachDensity::tabulated(r_vals, v_vals, vec![1.0; 4], 0.0).unwrap();
        let boxed = PreisachDensity::uniform_box(0.0, 1.0, -1.0, 1.0, 1.0, 0.0).unwrap();
        for &(r, xi) in &[(0.5, 0.5), (0.25, -0.75), (0.9, 1.0), (0.5, 2.5)] {
            assert!((table.psi(0, r, xi) - boxed.psi(0, r, xi)).abs() < 1e-14);
            assert!((table.psi_cap(0, r, xi) - boxed.psi_cap(0, r, xi)).abs() < 1e-14);
        }
        let (up, lo) = density_mass(&table).unwrap();
        assert!((up - 1.0).abs() < 1e-14);
        assert!((lo - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tabulated_rejects_negative_entries() {
        let r_vals = vec![0.0, 1.0];
        let v_vals = vec![-1.0, 1.0];
        assert!(PreisachDensity::tabulated(r_vals, v_vals, vec![1.0, -0.1, 1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn virgin_memory_construction_invariants() {
        let grid = ThresholdGrid::midpoint(1.0, 32).unwrap();
        // u0 = 0 gives the zero curve.
        let mem = build_virgin_memory(&[0.0, 0.0], 1.0, &grid).unwrap();
        assert!(mem.to_memory_state().raw().iter().all(|&v| v == 0.0));
        // u0 = 0.5 gives max(0, 0.5 - r).
        let mem = build_virgin_memory(&[0.5], 1.0, &grid).unwrap();
        for (k, &r) in grid.nodes().iter().enumerate() {
            assert!((mem.lambda(0, k) - (0.5 - r).max(0.0)).abs() < 1e-15);
        }
        // sup |u0| > Lambda rejected.
        assert!(build_virgin_memory(&[1.2], 1.0, &grid).is_err());
    }

    #[test]
    fn virgin_memory_random_fields_pass_validation() {
        let grid = ThresholdGrid::midpoint(2.0, 48).unwrap();
        // Deterministic pseudo-random sweep.
        let mut x = 0.123f64;
        let u0: Vec<f64> = (0..20)
            .map(|_| {
                x = (x * 97.0 + 0.31).fract();
                2.0 * (x - 0.5) * 2.0
            })
            .collect();
        let mem = build_virgin_memory(&u0, 2.0, &grid).unwrap();
        mem.validate(&grid).unwrap();
        // The materialized state satisfies the band constraint for u0.
        mem.to_memory_state().check_band(&u0, &grid).unwrap();
    }
}
