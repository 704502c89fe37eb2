//! Sparse symmetric systems and a diagonally preconditioned conjugate
//! gradient solver. Assembly and solve are strictly serial and
//! deterministic: identical inputs produce bit-identical outputs.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("conjugate gradient did not reach {tol:e} within {max_iter} iterations (residual {achieved:e})")]
    NoConvergence {
        tol: f64,
        max_iter: usize,
        achieved: f64,
        history: Vec<f64>,
    },
    #[error("matrix/vector dimension mismatch")]
    DimensionMismatch,
    #[error("zero or negative diagonal entry at row {0}; system is not SPD")]
    BadDiagonal(usize),
}

/// Row-major builder with deterministic (sorted) column order per row.
pub struct CooBuilder {
    n: usize,
    rows: Vec<std::collections::BTreeMap<usize, f64>>,
}

impl CooBuilder {
    pub fn new(n: usize) -> Self {
        CooBuilder {
            n,
            rows: vec![std::collections::BTreeMap::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            *self.rows[row].entry(col).or_insert(0.0) += value;
        }
    }

    pub fn build(self) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in self.rows {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Compressed sparse row square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                if c == r {
                    d[r] = v;
                }
            }
        }
        d
    }

    /// Largest absolute asymmetry `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                let transposed = self.get(c, r);
                worst = worst.max((v - transposed).abs());
            }
        }
        worst
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Exact structural and numerical equality (same sparsity, same bits).
    pub fn entrywise_equal(&self, other: &CsrMatrix) -> bool {
        self == other
    }
}

#[derive(Debug, Clone)]
pub struct PcgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Achieved relative residual `|b - A x| / |b|`.
    pub residual: f64,
}

/// Conjugate gradient with Jacobi (diagonal) preconditioning.
/// Convergence criterion: `|r|_2 <= tol |b|_2`.
pub fn pcg(
    matrix: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<PcgSolution, SolveError> {
    let n = matrix.n();
    if b.len() != n {
        return Err(SolveError::DimensionMismatch);
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(PcgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let diag = matrix.diagonal();
    let mut inv_diag = vec![0.0; n];
    for (i, d) in diag.iter().enumerate() {
        if *d <= 0.0 {
            return Err(SolveError::BadDiagonal(i));
        }
        inv_diag[i] = 1.0 / d;
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();

    for iter in 1..=max_iter {
        matrix.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(SolveError::BadDiagonal(0));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm2(&r) / b_norm;
        history.push(res);
        if res <= tol {
            return Ok(PcgSolution {
                x,
                iterations: iter,
                residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NoConvergence {
        tol,
        max_iter,
        achieved: *history.last().unwrap_or(&f64::INFINITY),
        history,
    })
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

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut b = CooBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn builder_accumulates_and_sorts() {
        let mut b = CooBuilder::new(2);
        b.add(0, 1, 1.0);
        b.add(0, 0, 2.0);
        b.add(0, 1, 0.5);
        let m = b.build();
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(0, 2.0), (1, 1.5)]);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn pcg_solves_laplacian() {
        let m = laplacian_1d(50);
        let b = vec![1.0; 50];
        let sol = pcg(&m, &b, 1e-12, 1000).unwrap();
        let mut check = vec![0.0; 50];
        m.matvec(&sol.x, &mut check);
        for i in 0..50 {
            assert!((check[i] - 1.0).abs() < 1e-9);
        }
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn zero_rhs_returns_zero_in_no_iterations() {
        let m = laplacian_1d(10);
        let zero = vec![0.0; 10];
        let sol = pcg(&m, &zero, 1e-12, 100).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_convergence_carries_history() {
        let m = laplacian_1d(50);
        let b = vec![1.0; 50];
        match pcg(&m, &b, 1e-14, 3) {
            Err(SolveError::NoConvergence { history, .. }) => assert_eq!(history.len(), 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn determinism_bitwise() {
        let m = laplacian_1d(64);
        let b: Vec<f64> = (0..64).map(|i| (i as f64).sin()).collect();
        let s1 = pcg(&m, &b, 1e-11, 1000).unwrap();
        let s2 = pcg(&m, &b, 1e-11, 1000).unwrap();
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.iterations, s2.iterations);
    }
}
