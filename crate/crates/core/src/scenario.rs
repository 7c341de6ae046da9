//! Scenario documents: all problem data in one JSON file.
//!
//! A scenario is plain data (`Scenario`, serde round-trippable); `build`
//! realizes it into a [`Problem`] holding the mesh, density, threshold grid,
//! initial memory and coefficient closures the solver works with. Loading
//! validates every invariant and rejects unknown keys.
//!
//! Minimal document:
//!
//! ```json
//! {
//!   "mesh": { "dimension": 1, "extent": [1.0], "nodes": [9] },
//!   "density": { "kind": { "decay-family": { "m": 4.0, "phi0": 0.5 } }, "g_bar": 0.5 },
//!   "tau": 0.1,
//!   "T": 1.0
//! }
//! ```
//!
//! Every omitted optional field takes the documented default (identity g,
//! kappa0 = kappa1 = 1, gravity off, b* = 0, u* = 0, u0 = v0 = 0, virgin
//! memory, 64 thresholds, Lambda = 1).

use serde::{Deserialize, Serialize};

use crate::density::{build_virgin_memory, density_mass, InitialMemory, PreisachDensity};
use crate::error::{Error, Result};
use crate::grid::{Field, Mesh, Side};
use crate::hysteresis::ThresholdGrid;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mesh: MeshSpec,
    pub density: DensitySpec,
    #[serde(default)]
    pub thresholds: ThresholdSpec,
    /// Memory support bound Lambda.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub g: GSpec,
    #[serde(default)]
    pub kappa: KappaSpec,
    #[serde(default)]
    pub gravity: GravitySpec,
    #[serde(default)]
    pub b_star: BStarSpec,
    #[serde(default)]
    pub u_star: UStarSpec,
    #[serde(default)]
    pub u0: FieldSpec,
    #[serde(default)]
    pub v0: FieldSpec,
    #[serde(default)]
    pub memory: MemorySpec,
    pub tau: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub dimension: usize,
    pub extent: Vec<f64>,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub kind: DensityKindSpec,
    pub g_bar: f64,
    /// Enforce the physical range condition theta in [0, 1] at load.
    #[serde(default)]
    pub range_condition: bool,
    /// Optional per-node multiplier field (piecewise linear in space).
    #[serde(default)]
    pub x_modulation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum DensityKindSpec {
    #[serde(rename = "uniform-box")]
    UniformBox(UniformBoxSpec),
    #[serde(rename = "decay-family")]
    Decay(DecaySpec),
    #[serde(rename = "tabulated")]
    Tabulated(TabulatedSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UniformBoxSpec {
    pub r_lo: f64,
    pub r_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    pub m: f64,
    pub phi0: f64,
}

/// Tabulated density: a CSV file (header `r,v,phi`, row-major grid) or the
/// same grid inline.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct TabulatedSpec {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub r: Option<Vec<f64>>,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    #[serde(default)]
    pub phi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub count: usize,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self { count: 64 }
    }
}

/// Pressure transform g realizing compositions G = P o g.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub enum GSpec {
    #[default]
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "polynomial")]
    Polynomial(PolynomialG),
    #[serde(rename = "table")]
    Table(TableG),
}

/// g(u) = coeffs[0] u + coeffs[1] u^2 + ...; no constant term, so g(0) = 0.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolynomialG {
    pub coeffs: Vec<f64>,
}

/// Piecewise-linear table, linearly extrapolated with the end slopes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TableG {
    pub u: Vec<f64>,
    pub g: Vec<f64>,
}

impl GSpec {
    pub fn eval(&self, u: f64) -> Result<f64> {
        match self {
            GSpec::Identity => Ok(u),
            GSpec::Polynomial(p) => {
                let mut acc = 0.0;
                let mut pow = u;
                for &c in &p.coeffs {
                    acc += c * pow;
                    pow *= u;
                }
                Ok(acc)
            }
            GSpec::Table(t) => {
                if t.u.len() < 2 {
                    return Err(Error::InvalidTransform("table needs at least two points".into()));
                }
                let n = t.u.len();
                let seg = if u <= t.u[0] {
                    0
                } else if u >= t.u[n - 1] {
                    n - 2
                } else {
                    t.u.iter().rposition(|&x| x <= u).unwrap_or(0).min(n - 2)
                };
                let s = (t.g[seg + 1] - t.g[seg]) / (t.u[seg + 1] - t.u[seg]);
                Ok(t.g[seg] + s * (u - t.u[seg]))
            }
        }
    }

    /// Validate Eq.-hg-style conditions on a sampled working range:
    /// g(0) = 0 and a strictly positive finite difference quotient throughout.
    /// Returns the sampled slope bounds (g_lo, g_hi).
    pub fn validate(&self, range: f64) -> Result<(f64, f64)> {
        if let GSpec::Table(t) = self {
            if t.u.len() != t.g.len() || t.u.len() < 2 {
                return Err(Error::InvalidTransform("table axes must match and hold >= 2 points".into()));
            }
            if !t.u.windows(2).all(|w| w[1] > w[0]) {
                return Err(Error::InvalidTransform("table abscissae must be strictly increasing".into()));
            }
        }
        let g0 = self.eval(0.0)?;
        if g0.abs() > 1e-12 {
            return Err(Error::InvalidTransform(format!("g(0) = {g0}, expected 0")));
        }
        let samples = 257;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut prev = self.eval(-range)?;
        for i in 1..samples {
            let u = -range + 2.0 * range * i as f64 / (samples - 1) as f64;
            let val = self.eval(u)?;
            let slope = (val - prev) / (2.0 * range / (samples - 1) as f64);
            if !slope.is_finite() || slope <= 0.0 {
                return Err(Error::InvalidTransform(format!(
                    "sampled slope {slope:.3e} near u = {u} violates 0 < g_* <= g'"
                )));
            }
            lo = lo.min(slope);
            hi = hi.max(slope);
            prev = val;
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KappaSpec {
    pub kappa0: f64,
    pub kappa1: f64,
}

impl Default for KappaSpec {
    fn default() -> Self {
        Self { kappa0: 1.0, kappa1: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GravitySpec {
    pub enabled: bool,
    #[serde(default)]
    pub direction: Vec<f64>,
}

impl Default for GravitySpec {
    fn default() -> Self {
        Self { enabled: false, direction: Vec::new() }
    }
}

/// Boundary permeability: one value for the whole boundary or per side.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BStarSpec {
    Uniform(f64),
    PerSide(BStarSides),
}

impl Default for BStarSpec {
    fn default() -> Self {
        BStarSpec::Uniform(0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct BStarSides {
    #[serde(default)]
    pub left: f64,
    #[serde(default)]
    pub right: f64,
    #[serde(default)]
    pub bottom: f64,
    #[serde(default)]
    pub top: f64,
}

/// Exterior pressure u*(t): constant or a piecewise-linear time table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum UStarSpec {
    Constant(f64),
    Table(UStarTable),
}

impl Default for UStarSpec {
    fn default() -> Self {
        UStarSpec::Constant(0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UStarTable {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
}

/// Nodal field data: one constant or one value per mesh node.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    PerNode(Vec<f64>),
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant(0.0)
    }
}

impl FieldSpec {
    pub fn realize(&self, n_nodes: usize, name: &str) -> Result<Field> {
        match self {
            FieldSpec::Constant(c) => {
                if !c.is_finite() {
                    return Err(Error::scenario(name, "value must be finite"));
                }
                Ok(Field::constant(n_nodes, *c))
            }
            FieldSpec::PerNode(values) => {
                if values.len() != n_nodes {
                    return Err(Error::scenario(
                        name,
                        format!("{} values for a mesh of {} nodes", values.len(), n_nodes),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::scenario(name, "values must be finite"));
                }
                Ok(Field::new(values.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub enum MemorySpec {
    #[default]
    #[serde(rename = "virgin")]
    Virgin,
    #[serde(rename = "table")]
    Table(MemoryTable),
}

/// Explicit lambda(x, r) values: one row per node, one column per threshold node.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MemoryTable {
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Snapshot cadence in steps (0 = no snapshots).
    #[serde(default)]
    pub snapshot_every: usize,
    /// Checkpoint cadence in steps (0 = no checkpoints).
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Default output directory; the CLI flag overrides it.
    #[serde(default)]
    pub dir: Option<String>,
}

/// Load, validate and trial-build a scenario document.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let mut scenario: Scenario =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    // Resolve a relative density CSV against the scenario file location.
    if let DensityKindSpec::Tabulated(tab) = &mut scenario.density.kind {
        if let Some(csv) = &tab.csv {
            let csv_path = Path::new(csv);
            if csv_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *tab.csv.as_mut().unwrap() = dir.join(csv_path).to_string_lossy().into_owned();
                }
            }
        }
    }
    scenario.build()?;
    Ok(scenario)
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    pub fn n_steps(&self) -> Result<usize> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::scenario("tau", "time step must be positive"));
        }
        if !(self.t_end >= self.tau) {
            return Err(Error::scenario("T", "horizon must satisfy T >= tau > 0"));
        }
        let n = (self.t_end / self.tau).round();
        if n < 1.0 || (n * self.tau - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(Error::scenario("tau", format!("T/tau = {} is not an integer step count", self.t_end / self.tau)));
        }
        Ok(n as usize)
    }

    /// Realize the scenario: build mesh, density, threshold grid, transform,
    /// initial data and memory, enforcing every invariant.
    pub fn build(&self) -> Result<Problem> {
        let mesh = self.build_mesh()?;
        let n_nodes = mesh.n_nodes();
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::scenario("lambda", "memory support bound must be positive"));
        }
        let thresholds = ThresholdGrid::midpoint(self.lambda, self.thresholds.count)?;
        let density = self.build_density(n_nodes)?;
        self.check_range_condition(&density, &thresholds)?;

        if !(self.kappa.kappa0 > 0.0) || !(self.kappa.kappa1 >= self.kappa.kappa0) {
            return Err(Error::scenario("kappa", "need 0 < kappa0 <= kappa1"));
        }

        let nu = self.build_nu(mesh.dimension())?;
        let b_star = self.b_star_sides(mesh.dimension())?;
        self.validate_u_star()?;

        let u0 = self.u0.realize(n_nodes, "u0")?;
        let v0 = self.v0.realize(n_nodes, "v0")?;
        if u0.linf() > self.lambda + 1e-12 {
            return Err(Error::scenario(
                "u0",
                format!("sup |u0| = {} exceeds Lambda = {}", u0.linf(), self.lambda),
            ));
        }

        let g = self.g.clone();
        g.validate(self.lambda.max(1.0))?;

        let initial_memory = match &self.memory {
            MemorySpec::Virgin => build_virgin_memory(u0.as_slice(), self.lambda, &thresholds)?,
            MemorySpec::Table(table) => {
                if table.values.len() != n_nodes {
                    return Err(Error::scenario(
                        "memory",
                        format!("{} rows for a mesh of {} nodes", table.values.len(), n_nodes),
                    ));
                }
                let mut flat = Vec::with_capacity(n_nodes * thresholds.len());
                for (i, row) in table.values.iter().enumerate() {
                    if row.len() != thresholds.len() {
                        return Err(Error::scenario(
                            "memory",
                            format!("row {i} has {} columns, expected {}", row.len(), thresholds.len()),
                        ));
                    }
                    flat.extend_from_slice(row);
                }
                InitialMemory::from_table(flat, u0.as_slice().to_vec(), self.lambda, &thresholds)?
            }
        };

        let n_steps = self.n_steps()?;
        Ok(Problem {
            scenario: self.clone(),
            mesh,
            density,
            thresholds,
            initial_memory,
            u0,
            v0,
            g,
            nu,
            b_star,
            tau: self.tau,
            t_end: self.t_end,
            n_steps,
        })
    }

    fn build_mesh(&self) -> Result<Mesh> {
        let spec = &self.mesh;
        match spec.dimension {
            1 => {
                if spec.extent.len() != 1 || spec.nodes.len() != 1 {
                    return Err(Error::scenario("mesh", "1D mesh needs one extent and one node count"));
                }
                Mesh::line(spec.extent[0], spec.nodes[0])
            }
            2 => {
                if spec.extent.len() != 2 || spec.nodes.len() != 2 {
                    return Err(Error::scenario("mesh", "2D mesh needs two extents and two node counts"));
                }
                Mesh::rectangle(spec.extent[0], spec.extent[1], spec.nodes[0], spec.nodes[1])
            }
            d => Err(Error::scenario("mesh.dimension", format!("dimension {d} unsupported (1 or 2)"))),
        }
    }

    fn build_density(&self, n_nodes: usize) -> Result<PreisachDensity> {
        let g_bar = self.density.g_bar;
        if !g_bar.is_finite() {
            return Err(Error::scenario("density.g_bar", "offset must be finite"));
        }
        let density = match &self.density.kind {
            DensityKindSpec::UniformBox(b) => {
                PreisachDensity::uniform_box(b.r_lo, b.r_hi, b.v_lo, b.v_hi, b.height, g_bar)?
            }
            DensityKindSpec::Decay(d) => {
                if !(d.m > 2.0) {
                    return Err(Error::scenario("density.m", "decay exponent must exceed 2"));
                }
                PreisachDensity::decay(d.m, d.phi0, g_bar)?
            }
            DensityKindSpec::Tabulated(tab) => {
                let (r, v, phi) = match (&tab.csv, &tab.r, &tab.v, &tab.phi) {
                    (Some(csv), None, None, None) => read_density_csv(Path::new(csv))?,
                    (None, Some(r), Some(v), Some(phi)) => (r.clone(), v.clone(), phi.clone()),
                    _ => {
                        return Err(Error::scenario(
                            "density.kind.tabulated",
                            "provide either `csv` or all of `r`, `v`, `phi`",
                        ))
                    }
                };
                PreisachDensity::tabulated(r, v, phi, g_bar)?
            }
        };
        match &self.density.x_modulation {
            Some(modulation) => {
                if modulation.len() != n_nodes {
                    return Err(Error::scenario(
                        "density.x_modulation",
                        format!("{} multipliers for a mesh of {} nodes", modulation.len(), n_nodes),
                    ));
                }
                density.with_modulation(modulation.clone())
            }
            None => Ok(density),
        }
    }

    /// Physical range condition theta in [0, 1]: analytic/quadrature masses
    /// and the same sums on the scenario's own threshold grid (the latter is
    /// what bounds the discrete operator).
    fn check_range_condition(&self, density: &PreisachDensity, grid: &ThresholdGrid) -> Result<()> {
        if !self.density.range_condition {
            return Ok(());
        }
        let g_bar = density.g_bar();
        if !(g_bar > 0.0 && g_bar < 1.0) {
            return Err(Error::scenario("density.g_bar", "range condition needs g_bar in (0, 1)"));
        }
        let (upper, lower) = density_mass(density)?;
        let scale = density.modulation_max();
        let tol = 1e-9;
        if scale * upper > 1.0 - g_bar + tol || scale * lower > g_bar + tol {
            return Err(Error::scenario(
                "density.range_condition",
                format!(
                    "half-plane masses ({:.6}, {:.6}) violate <= (1 - g_bar, g_bar) = ({:.6}, {:.6})",
                    scale * upper,
                    scale * lower,
                    1.0 - g_bar,
                    g_bar
                ),
            ));
        }
        let mut grid_upper = 0.0;
        let mut grid_lower = 0.0;
        for (&r, &w) in grid.nodes().iter().zip(grid.weights()) {
            grid_upper += w * density.psi_inf_pos(r);
            grid_lower += w * density.psi_inf_neg(r);
        }
        if scale * grid_upper > 1.0 - g_bar + tol || scale * grid_lower > g_bar + tol {
            return Err(Error::scenario(
                "density.range_condition",
                format!(
                    "threshold-grid masses ({:.6}, {:.6}) violate the discrete range bound",
                    scale * grid_upper,
                    scale * grid_lower
                ),
            ));
        }
        Ok(())
    }

    fn build_nu(&self, dim: usize) -> Result<[f64; 2]> {
        if !self.gravity.enabled {
            return Ok([0.0, 0.0]);
        }
        if self.gravity.direction.len() != dim {
            return Err(Error::scenario(
                "gravity.direction",
                format!("{} components for a {dim}D mesh", self.gravity.direction.len()),
            ));
        }
        let mut nu = [0.0, 0.0];
        for (i, &c) in self.gravity.direction.iter().enumerate() {
            nu[i] = c;
        }
        let norm = (nu[0] * nu[0] + nu[1] * nu[1]).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::scenario("gravity.direction", format!("|nu| = {norm}, expected a unit vector")));
        }
        Ok(nu)
    }

    fn b_star_sides(&self, dim: usize) -> Result<[f64; 4]> {
        let sides = match &self.b_star {
            BStarSpec::Uniform(v) if dim == 1 => [*v, *v, 0.0, 0.0],
            BStarSpec::Uniform(v) => [*v; 4],
            BStarSpec::PerSide(s) => [s.left, s.right, s.bottom, s.top],
        };
        if sides.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::scenario("b_star", "boundary permeability must be finite and >= 0"));
        }
        if dim == 1 && (sides[2] != 0.0 || sides[3] != 0.0) {
            return Err(Error::scenario("b_star", "bottom/top sides are undefined on a 1D mesh"));
        }
        Ok(sides)
    }

    fn validate_u_star(&self) -> Result<()> {
        if let UStarSpec::Table(t) = &self.u_star {
            if t.t.len() != t.value.len() || t.t.is_empty() {
                return Err(Error::scenario("u_star", "time table axes must match and be nonempty"));
            }
            if !t.t.windows(2).all(|w| w[1] > w[0]) {
                return Err(Error::scenario("u_star", "time table must be strictly increasing in t"));
            }
            if t.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::scenario("u_star", "values must be finite"));
            }
        }
        Ok(())
    }
}

/// Parse a tabulated-density CSV: header `r,v,phi`, one row per grid point,
/// row-major over a complete rectangular grid.
pub fn read_density_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read density table {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "r,v,phi" => {}
        other => {
            return Err(Error::Parse(format!(
                "density table {}: expected header `r,v,phi`, found {:?}",
                path.display(),
                other.map(|(_, l)| l)
            )))
        }
    }
    let mut triples = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Parse(format!(
                "density table {} line {}: expected 3 columns",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("density table {} line {}: {e}", path.display(), lineno + 1)))
        };
        triples.push((parse(cols[0])?, parse(cols[1])?, parse(cols[2])?));
    }
    let mut r_axis: Vec<f64> = triples.iter().map(|t| t.0).collect();
    r_axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    r_axis.dedup();
    let mut v_axis: Vec<f64> = triples.iter().map(|t| t.1).collect();
    v_axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v_axis.dedup();
    if triples.len() != r_axis.len() * v_axis.len() {
        return Err(Error::Parse(format!(
            "density table {}: {} rows do not fill a {} x {} grid",
            path.display(),
            triples.len(),
            r_axis.len(),
            v_axis.len()
        )));
    }
    let find = |axis: &[f64], x: f64| axis.iter().position(|&a| a == x).unwrap();
    let mut phi = vec![f64::NAN; triples.len()];
    for (r, v, p) in triples {
        let i = find(&r_axis, r);
        let j = find(&v_axis, v);
        phi[i * v_axis.len() + j] = p;
    }
    if phi.iter().any(|p| p.is_nan()) {
        return Err(Error::Parse(format!(
            "density table {}: duplicate or missing grid points",
            path.display()
        )));
    }
    Ok((r_axis, v_axis, phi))
}

/// A realized scenario: everything the solver needs, immutable.
#[derive(Debug, Clone)]
pub struct Problem {
    pub scenario: Scenario,
    pub mesh: Mesh,
    pub density: PreisachDensity,
    pub thresholds: ThresholdGrid,
    pub initial_memory: InitialMemory,
    pub u0: Field,
    pub v0: Field,
    pub g: GSpec,
    /// Gravity direction; zero vector when gravity is off.
    pub nu: [f64; 2],
    /// Robin coefficients indexed left/right/bottom/top.
    pub b_star: [f64; 4],
    pub tau: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl Problem {
    pub fn b_star(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.b_star[0],
            Side::Right => self.b_star[1],
            Side::Bottom => self.b_star[2],
            Side::Top => self.b_star[3],
        }
    }

    /// Exterior pressure at time t (piecewise linear, clamped outside the table).
    pub fn u_star(&self, t: f64) -> f64 {
        match &self.scenario.u_star {
            UStarSpec::Constant(c) => *c,
            UStarSpec::Table(table) => {
                let ts = &table.t;
                let vs = &table.value;
                if t <= ts[0] {
                    return vs[0];
                }
                if t >= ts[ts.len() - 1] {
                    return vs[vs.len() - 1];
                }
                let i = ts.iter().rposition(|&x| x <= t).unwrap().min(ts.len() - 2);
                let s = (vs[i + 1] - vs[i]) / (ts[i + 1] - ts[i]);
                vs[i] + s * (t - ts[i])
            }
        }
    }

    /// Permeability kappa(theta) = kappa0 + (kappa1 - kappa0) clamp(theta, 0, 1),
    /// clamped into [kappa0, kappa1].
    pub fn kappa_eval(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::NonFinite("saturation passed to kappa".into()));
        }
        let k = &self.scenario.kappa;
        let v = k.kappa0 + (k.kappa1 - k.kappa0) * theta.clamp(0.0, 1.0);
        if v < k.kappa0 - 1e-12 || v > k.kappa1 + 1e-12 {
            return Err(Error::scenario("kappa", format!("kappa({theta}) = {v} outside [{}, {}]", k.kappa0, k.kappa1)));
        }
        Ok(v)
    }

    /// Gravity potential coordinate nu . (x - x0) per node, x0 the centroid.
    pub fn gravity_coordinate(&self) -> Vec<f64> {
        let x0 = self.mesh.centroid();
        self.mesh
            .coords()
            .iter()
            .map(|c| self.nu[0] * (c[0] - x0[0]) + self.nu[1] * (c[1] - x0[1]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_json() -> &'static str {
        r#"{
            "mesh": { "dimension": 1, "extent": [1.0], "nodes": [9] },
            "density": { "kind": { "decay-family": { "m": 4.0, "phi0": 0.5 } }, "g_bar": 0.5 },
            "tau": 0.1,
            "T": 1.0
        }"#
    }

    #[test]
    fn minimal_document_gets_defaults() {
        let s: Scenario = serde_json::from_str(minimal_json()).unwrap();
        assert_eq!(s.thresholds.count, 64);
        assert_eq!(s.lambda, 1.0);
        assert_eq!(s.g, GSpec::Identity);
        assert_eq!(s.kappa, KappaSpec { kappa0: 1.0, kappa1: 1.0 });
        assert!(!s.gravity.enabled);
        assert_eq!(s.b_star, BStarSpec::Uniform(0.0));
        assert_eq!(s.u_star, UStarSpec::Constant(0.0));
        assert_eq!(s.memory, MemorySpec::Virgin);
        let problem = s.build().unwrap();
        assert_eq!(problem.n_steps, 10);
        assert_eq!(problem.mesh.n_nodes(), 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal_json().replace("\"tau\": 0.1", "\"tau\": 0.1, \"typo_key\": 3");
        let err = serde_json::from_str::<Scenario>(&text);
        assert!(err.is_err());
    }

    #[test]
    fn negative_b_star_named_error() {
        let mut s: Scenario = serde_json::from_str(minimal_json()).unwrap();
        s.b_star = BStarSpec::Uniform(-1.0);
        match s.build() {
            Err(Error::InvalidScenario { field, .. }) => assert_eq!(field, "b_star"),
            other => panic!("expected named invariant error, got {other:?}"),
        }
    }

    #[test]
    fn scenario_round_trip_identity() {
        let s: Scenario = serde_json::from_str(minimal_json()).unwrap();
        let text = s.to_json();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn non_integer_step_count_rejected() {
        let mut s: Scenario = serde_json::from_str(minimal_json()).unwrap();
        s.tau = 0.3;
        assert!(matches!(s.build(), Err(Error::InvalidScenario { .. })));
    }

    #[test]
    fn range_condition_enforced() {
        let mut s: Scenario = serde_json::from_str(minimal_json()).unwrap();
        s.density.range_condition = true;
        // m = 4, phi0 = 0.5: masses are exactly (0.5, 0.5) = (1 - g_bar, g_bar). Passes.
        s.build().unwrap();
        // phi0 too large violates the bound.
        s.density.kind = DensityKindSpec::Decay(DecaySpec { m: 4.0, phi0: 0.8 });
        assert!(s.build().is_err());
    }

    #[test]
    fn gravity_direction_must_be_unit() {
        let mut s: Scenario = serde_json::from_str(minimal_json()).unwrap();
        s.gravity = GravitySpec { enabled: true, direction: vec![2.0] };
        assert!(s.build().is_err());
        s.gravity = GravitySpec { enabled: true, direction: vec![-1.0] };
        s.build().unwrap();
    }

    #[test]
    fn g_polynomial_validates_and_evaluates() {
        let g = GSpec::Polynomial(PolynomialG { coeffs: vec![1.0, 0.0, 0.1] });
        let (lo, hi) = g.validate(1.0).unwrap();
        assert!(lo > 0.0 && hi >= lo);
        assert_eq!(g.eval(0.0).unwrap(), 0.0);
        let u = 0.7;
        assert!((g.eval(u).unwrap() - (u + 0.1 * u * u * u)).abs() < 1e-15);
        // Decreasing polynomial rejected.
        let bad = GSpec::Polynomial(PolynomialG { coeffs: vec![-1.0] });
        assert!(bad.validate(1.0).is_err());
    }

    #[test]
    fn g_table_round_trips_sample_points() {
        let u: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let g: Vec<f64> = u.iter().map(|&x| x + 0.2 * x * x * x).collect();
        let spec = GSpec::Table(TableG { u: u.clone(), g: g.clone() });
        spec.validate(1.0).unwrap();
        for (ui, gi) in u.iter().zip(&g) {
            assert!((spec.eval(*ui).unwrap() - gi).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_transform_examples() {
        assert_eq!(crate::hysteresis::compose_with_g(0.7, &GSpec::Identity).unwrap(), 0.7);
        let g = GSpec::Polynomial(PolynomialG { coeffs: vec![1.0, 0.0, 0.1] });
        assert_eq!(crate::hysteresis::compose_with_g(0.0, &g).unwrap(), 0.0);
    }
}
