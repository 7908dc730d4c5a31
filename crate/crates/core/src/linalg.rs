//! Sparse symmetric matrices and the two SPD solvers used by Newton:
//! a banded Cholesky factorization and Jacobi-preconditioned CG.

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sparsity pattern (each row sorted, unique).
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        let cols = &self.col_idx[start..self.row_ptr[i + 1]];
        cols.binary_search(&j).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` at `(i, j)`; the entry must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside sparsity pattern"));
        self.values[k] += v;
    }

    pub fn add_diagonal(&mut self, diag: &[f64]) {
        for (i, &d) in diag.iter().enumerate() {
            self.add(i, i, d);
        }
    }

    pub fn scale_values(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `max |A − Aᵀ|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Half bandwidth `max |i − j|` over the pattern.
    pub fn half_bandwidth(&self) -> usize {
        (0..self.n)
            .map(|i| {
                let (cols, _) = self.row(i);
                cols.first().map_or(0, |&j| i.saturating_sub(j))
            })
            .max()
            .unwrap_or(0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular banded Cholesky factor of an SPD matrix.
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..=i]
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let bw = a.half_bandwidth();
        let stride = bw + 1;
        let mut l = vec![0.0; n * stride];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    l[i * stride + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * stride + (j + bw - i)];
                for k in k0..j {
                    s -= l[i * stride + (k + bw - i)] * l[j * stride + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::LinearSolveFailure(format!(
                            "matrix not positive definite at pivot {i} (value {s:e})"
                        )));
                    }
                    l[i * stride + bw] = s.sqrt();
                } else {
                    l[i * stride + (j + bw - i)] = s / l[j * stride + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, stride) = (self.n, self.bw, self.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = y[i];
            for j in j0..i {
                s -= self.l[i * stride + (j + bw - i)] * y[j];
            }
            y[i] = s / self.l[i * stride + bw];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.l[k * stride + (i + bw - k)] * y[k];
            }
            y[i] = s / self.l[i * stride + bw];
        }
        y
    }
}

/// Jacobi-preconditioned conjugate gradients to `rel_tol · ‖b‖`.
pub fn cg_jacobi(a: &CsrMatrix, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let n = a.n();
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::LinearSolveFailure(format!("non-positive diagonal at row {i}")));
    }
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 10 * n.max(10);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::LinearSolveFailure(format!(
                "CG met non-positive curvature {curvature:e}"
            )));
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= rel_tol * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveFailure(format!(
        "CG did not reach relative residual {rel_tol:e} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                if i > 0 {
                    r.push(i - 1);
                }
                r.push(i);
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let mut a = CsrMatrix::from_pattern(rows);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
                a.add(i - 1, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let a = laplace_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let x1 = BandCholesky::factor(&a).unwrap().solve(&b);
        let x2 = cg_jacobi(&a, &b, 1e-14).unwrap();
        let r = a.mul_vec(&x1);
        for i in 0..50 {
            assert!((r[i] - b[i]).abs() < 1e-12);
            assert!((x1[i] - x2[i]).abs() < 1e-9);
        }
        assert_eq!(a.half_bandwidth(), 1);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = laplace_1d(4);
        a.add(2, 2, -10.0);
        assert!(matches!(BandCholesky::factor(&a), Err(Error::LinearSolveFailure(_))));
        assert!(cg_jacobi(&a, &[1.0, 1.0, 1.0, 1.0], 1e-12).is_err());
    }
}
