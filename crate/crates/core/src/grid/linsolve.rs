//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient solver.
//!
//! The per-step linear systems are symmetric positive definite: a symmetric
//! stiffness part plus nonnegative diagonal (lumped mass and Robin) terms.
//! The solver contract is a relative residual of 1e-12; everything is
//! single-threaded and bit-deterministic.

use crate::error::{Error, Result};

/// Square CSR matrix with a fixed symmetric sparsity pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Build an all-zero matrix from per-row sorted column lists.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in rows {
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        Self { n, indptr, indices, data: vec![0.0; nnz] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn zero_data(&mut self) {
        self.data.fill(0.0);
    }

    /// Accumulate `v` at (i, j); the pair must belong to the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&j) {
            Ok(k) => self.data[lo + k] += v,
            Err(_) => panic!("entry ({i}, {j}) outside the sparsity pattern"),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&j) {
            Ok(k) => self.data[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Maximum relative asymmetry over the pattern; diagnostic only.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                let d = (self.data[k] - self.get(j, i)).abs();
                worst = worst.max(d);
            }
        }
        worst
    }
}

/// Jacobi-preconditioned conjugate gradients down to a relative residual of
/// `rel_tol`. Returns the solution and the iteration count.
pub fn pcg_solve(a: &CsrMatrix, b: &[f64], x0: &[f64], rel_tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.n();
    if b.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "pcg: matrix {n} x {n}, rhs {} and guess {}",
            b.len(),
            x0.len()
        )));
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InternalInconsistency(
            "pcg: system diagonal is not strictly positive".into(),
        ));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|&d| 1.0 / d).collect();

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let target = rel_tol * b_norm;
    for iter in 0..max_iter {
        if norm2(&r) <= target {
            return Ok((x, iter));
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::InternalInconsistency(format!(
                "pcg: non-positive curvature p'Ap = {pap:.3e}; system not SPD"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm2(&r) <= target {
        return Ok((x, max_iter));
    }
    Err(Error::InternalInconsistency(format!(
        "pcg: no convergence after {max_iter} iterations, residual {:.3e} (target {:.3e})",
        norm2(&r),
        target
    )))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, diag: f64, off: f64) -> CsrMatrix {
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r.sort_unstable();
                r
            })
            .collect();
        let mut m = CsrMatrix::from_pattern(&rows);
        for i in 0..n {
            m.add(i, i, diag);
            if i > 0 {
                m.add(i, i - 1, off);
            }
            if i + 1 < n {
                m.add(i, i + 1, off);
            }
        }
        m
    }

    #[test]
    fn pcg_solves_spd_tridiagonal() {
        let n = 50;
        let a = tridiag(n, 2.5, -1.0);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let (x, iters) = pcg_solve(&a, &b, &vec![0.0; n], 1e-12, 1000).unwrap();
        assert!(iters > 0);
        let err = x.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        assert!(err < 1e-9, "max error {err}");
    }

    #[test]
    fn pcg_zero_rhs_returns_zero() {
        let a = tridiag(5, 2.0, -1.0);
        let (x, iters) = pcg_solve(&a, &[0.0; 5], &[1.0; 5], 1e-12, 100).unwrap();
        assert_eq!(iters, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pcg_rejects_indefinite_diagonal() {
        let mut a = tridiag(4, 0.0, -1.0);
        a.add(0, 0, 1.0); // leave other diagonals at zero
        assert!(pcg_solve(&a, &[1.0; 4], &[0.0; 4], 1e-12, 100).is_err());
    }
}
