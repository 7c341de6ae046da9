//! Spatial discretization: 1D interval and 2D structured quadrilateral meshes
//! with lumped mass, tagged Robin boundary, and linear/bilinear elements.

pub mod assembly;
pub mod linsolve;

use crate::error::{Error, Result};

/// Boundary side tag; 1D meshes use Left/Right only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// One boundary quadrature entry: a node with the boundary measure and
/// outward normal contributed by one side. Corner nodes in 2D appear twice,
/// once per adjacent side.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEntry {
    pub node: usize,
    pub side: Side,
    /// Boundary measure lumped at the node (1 per endpoint in 1D, half the
    /// edge length per adjacent edge in 2D).
    pub measure: f64,
    /// Unit outward normal of the contributing side.
    pub normal: [f64; 2],
}

/// Structured mesh, immutable after construction.
#[derive(Debug, Clone)]
pub struct Mesh {
    dimension: usize,
    coords: Vec<[f64; 2]>,
    /// 1D elements (node pairs); empty on 2D meshes.
    segments: Vec<[usize; 2]>,
    /// 2D elements (counterclockwise corner quadruples); empty on 1D meshes.
    quads: Vec<[usize; 4]>,
    lumped_mass: Vec<f64>,
    boundary: Vec<BoundaryEntry>,
    extent: [f64; 2],
    nodes_per_axis: [usize; 2],
}

impl Mesh {
    /// Uniform 1D mesh on (0, extent) with `n` nodes.
    pub fn line(extent: f64, n: usize) -> Result<Self> {
        if !(extent > 0.0) {
            return Err(Error::scenario("mesh.extent", "extent must be positive"));
        }
        if n < 2 {
            return Err(Error::scenario("mesh.nodes", "need at least 2 nodes per axis"));
        }
        let h = extent / (n - 1) as f64;
        let coords = (0..n).map(|i| [i as f64 * h, 0.0]).collect();
        let segments: Vec<[usize; 2]> = (0..n - 1).map(|i| [i, i + 1]).collect();
        let mut lumped_mass = vec![0.0; n];
        for seg in &segments {
            lumped_mass[seg[0]] += 0.5 * h;
            lumped_mass[seg[1]] += 0.5 * h;
        }
        let boundary = vec![
            BoundaryEntry { node: 0, side: Side::Left, measure: 1.0, normal: [-1.0, 0.0] },
            BoundaryEntry { node: n - 1, side: Side::Right, measure: 1.0, normal: [1.0, 0.0] },
        ];
        Ok(Self {
            dimension: 1,
            coords,
            segments,
            quads: Vec::new(),
            lumped_mass,
            boundary,
            extent: [extent, 0.0],
            nodes_per_axis: [n, 1],
        })
    }

    /// Structured 2D mesh of bilinear quadrilaterals on (0, ex) x (0, ey).
    pub fn rectangle(ex: f64, ey: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(ex > 0.0 && ey > 0.0) {
            return Err(Error::scenario("mesh.extent", "extents must be positive"));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::scenario("mesh.nodes", "need at least 2 nodes per axis"));
        }
        let hx = ex / (nx - 1) as f64;
        let hy = ey / (ny - 1) as f64;
        let id = |i: usize, j: usize| j * nx + i;
        let mut coords = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                coords.push([i as f64 * hx, j as f64 * hy]);
            }
        }
        let mut quads = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                quads.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mut lumped_mass = vec![0.0; nx * ny];
        let cell = 0.25 * hx * hy;
        for q in &quads {
            for &n in q {
                lumped_mass[n] += cell;
            }
        }
        let mut boundary = Vec::new();
        for j in 0..ny - 1 {
            for (side, i, normal) in [(Side::Left, 0usize, [-1.0, 0.0]), (Side::Right, nx - 1, [1.0, 0.0])] {
                boundary.push(BoundaryEntry { node: id(i, j), side, measure: 0.5 * hy, normal });
                boundary.push(BoundaryEntry { node: id(i, j + 1), side, measure: 0.5 * hy, normal });
            }
        }
        for i in 0..nx - 1 {
            for (side, j, normal) in [(Side::Bottom, 0usize, [0.0, -1.0]), (Side::Top, ny - 1, [0.0, 1.0])] {
                boundary.push(BoundaryEntry { node: id(i, j), side, measure: 0.5 * hx, normal });
                boundary.push(BoundaryEntry { node: id(i + 1, j), side, measure: 0.5 * hx, normal });
            }
        }
        Ok(Self {
            dimension: 2,
            coords,
            segments: Vec::new(),
            quads,
            lumped_mass,
            boundary,
            extent: [ex, ey],
            nodes_per_axis: [nx, ny],
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn segments(&self) -> &[[usize; 2]] {
        &self.segments
    }

    pub fn quads(&self) -> &[[usize; 4]] {
        &self.quads
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn boundary(&self) -> &[BoundaryEntry] {
        &self.boundary
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn nodes_per_axis(&self) -> [usize; 2] {
        self.nodes_per_axis
    }

    /// Total domain measure (length or area).
    pub fn domain_measure(&self) -> f64 {
        if self.dimension == 1 {
            self.extent[0]
        } else {
            self.extent[0] * self.extent[1]
        }
    }

    /// Domain centroid; the gravity potential reference point.
    pub fn centroid(&self) -> [f64; 2] {
        if self.dimension == 1 {
            [0.5 * self.extent[0], 0.0]
        } else {
            [0.5 * self.extent[0], 0.5 * self.extent[1]]
        }
    }

    /// Sorted sparsity pattern coupling each node to itself and its element
    /// neighbors.
    pub fn node_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = (0..self.n_nodes()).map(|i| vec![i]).collect();
        let link = |a: usize, b: usize, adj: &mut Vec<Vec<usize>>| {
            adj[a].push(b);
            adj[b].push(a);
        };
        for seg in &self.segments {
            link(seg[0], seg[1], &mut adj);
        }
        for quad in &self.quads {
            for a in 0..4 {
                for b in a + 1..4 {
                    link(quad[a], quad[b], &mut adj);
                }
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        adj
    }

    /// Volume-weighted average of element gradients at each node.
    pub fn nodal_gradient(&self, u: &[f64]) -> Vec<[f64; 2]> {
        let mut grad = vec![[0.0; 2]; self.n_nodes()];
        let mut weight = vec![0.0; self.n_nodes()];
        if self.dimension == 1 {
            for seg in &self.segments {
                let h = self.coords[seg[1]][0] - self.coords[seg[0]][0];
                let g = (u[seg[1]] - u[seg[0]]) / h;
                for &n in seg {
                    grad[n][0] += g * h;
                    weight[n] += h;
                }
            }
        } else {
            for quad in &self.quads {
                let hx = self.coords[quad[1]][0] - self.coords[quad[0]][0];
                let hy = self.coords[quad[3]][1] - self.coords[quad[0]][1];
                // Bilinear gradient at the element center.
                let gx = 0.5 * ((u[quad[1]] + u[quad[2]]) - (u[quad[0]] + u[quad[3]])) / hx;
                let gy = 0.5 * ((u[quad[3]] + u[quad[2]]) - (u[quad[0]] + u[quad[1]])) / hy;
                let a = hx * hy;
                for &n in quad {
                    grad[n][0] += gx * a;
                    grad[n][1] += gy * a;
                    weight[n] += a;
                }
            }
        }
        for (g, &w) in grad.iter_mut().zip(&weight) {
            g[0] /= w;
            g[1] /= w;
        }
        grad
    }

    /// Mesh nodes as CSV (node id, coordinates).
    pub fn nodes_csv(&self) -> String {
        let mut out = String::from(if self.dimension == 1 { "node,x\n" } else { "node,x,y\n" });
        for (i, c) in self.coords.iter().enumerate() {
            if self.dimension == 1 {
                out.push_str(&format!("{},{}\n", i, crate::fmt_float(c[0])));
            } else {
                out.push_str(&format!("{},{},{}\n", i, crate::fmt_float(c[0]), crate::fmt_float(c[1])));
            }
        }
        out
    }

    /// Element connectivity as CSV.
    pub fn connectivity_csv(&self) -> String {
        let mut out = String::new();
        if self.dimension == 1 {
            out.push_str("element,n0,n1\n");
            for (e, seg) in self.segments.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", e, seg[0], seg[1]));
            }
        } else {
            out.push_str("element,n0,n1,n2,n3\n");
            for (e, q) in self.quads.iter().enumerate() {
                out.push_str(&format!("{},{},{},{},{}\n", e, q[0], q[1], q[2], q[3]));
            }
        }
        out
    }
}

/// Nodal scalar field in the normalized units of the flow system.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Field(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what.to_string()));
        }
        Ok(())
    }

    pub fn linf(&self) -> f64 {
        self.0.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_mesh_masses_sum_to_extent() {
        let mesh = Mesh::line(2.0, 9).unwrap();
        let sum: f64 = mesh.lumped_mass().iter().sum();
        assert!((sum - 2.0).abs() < 1e-12);
        assert_eq!(mesh.boundary().len(), 2);
        for b in mesh.boundary() {
            let norm = (b.normal[0] * b.normal[0] + b.normal[1] * b.normal[1]).sqrt();
            assert!((norm - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rectangle_mesh_masses_and_boundary() {
        let mesh = Mesh::rectangle(2.0, 1.0, 5, 3).unwrap();
        let sum: f64 = mesh.lumped_mass().iter().sum();
        assert!((sum - 2.0).abs() < 1e-12);
        // Boundary measure sums to the perimeter.
        let per: f64 = mesh.boundary().iter().map(|b| b.measure).sum();
        assert!((per - 6.0).abs() < 1e-12);
        assert_eq!(mesh.quads().len(), 8);
    }

    #[test]
    fn nodal_gradient_of_linear_field_is_exact() {
        let mesh = Mesh::rectangle(1.0, 1.0, 4, 4).unwrap();
        let u: Vec<f64> = mesh.coords().iter().map(|c| 2.0 * c[0] - 3.0 * c[1] + 1.0).collect();
        for g in mesh.nodal_gradient(&u) {
            assert!((g[0] - 2.0).abs() < 1e-12);
            assert!((g[1] + 3.0).abs() < 1e-12);
        }
    }
}
