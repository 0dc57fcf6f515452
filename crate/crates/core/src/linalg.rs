//! Small linear-algebra toolbox: compressed sparse rows, a banded Cholesky
//! factorization, conjugate gradients, power iteration and dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug)]
pub struct Csr {
    pub dim: usize,
    pub row_start: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = rows.len();
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if cols.len() > *row_start.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Csr {
            dim,
            row_start,
            cols,
            vals,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_rows((0..dim).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Largest `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.dim)
            .flat_map(|i| self.row(i).map(move |(c, _)| i.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (c, v) in self.row(i) {
                m[(i, c)] += v;
            }
        }
        m
    }

    /// Sub-matrix on the index set `idx` (rows and columns), as a dense matrix.
    pub fn restrict_dense(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut pos = std::collections::HashMap::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            pos.insert(i, k);
        }
        let mut m = DMatrix::zeros(idx.len(), idx.len());
        for (k, &i) in idx.iter().enumerate() {
            for (c, v) in self.row(i) {
                if let Some(&l) = pos.get(&c) {
                    m[(k, l)] += v;
                }
            }
        }
        m
    }
}

/// Cholesky factor of a symmetric positive definite band matrix, stored by
/// rows: `lower[i·(bw+1) + (bw − (i − j))] = L(i, j)` for `i − bw ≤ j ≤ i`.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    dim: usize,
    bw: usize,
    lower: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &Csr) -> Result<Self> {
        let dim = a.dim;
        let bw = a.bandwidth();
        let width = bw + 1;
        let mut lower = vec![0.0; dim * width];
        for i in 0..dim {
            for (c, v) in a.row(i) {
                if c <= i {
                    lower[i * width + bw - (i - c)] += v;
                }
            }
        }
        for i in 0..dim {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = lower[i * width + bw - (i - j)];
                let ri = i * width + bw - i;
                let rj = j * width + bw - j;
                for k in k0..j {
                    s -= lower[ri + k] * lower[rj + k];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::SingularOperator(format!(
                            "banded Cholesky pivot {s:.3e} at row {i}"
                        )));
                    }
                    lower[ri + i] = s.sqrt();
                } else {
                    lower[ri + j] = s / lower[rj + j];
                }
            }
        }
        Ok(BandedCholesky { dim, bw, lower })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let width = self.bw + 1;
        for i in 0..self.dim {
            let ri = i * width + self.bw - i;
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.lower[ri + k] * b[k];
            }
            b[i] = s / self.lower[ri + i];
        }
        for i in (0..self.dim).rev() {
            let mut s = b[i];
            for k in i + 1..(i + self.bw + 1).min(self.dim) {
                s -= self.lower[k * width + self.bw - k + i] * b[k];
            }
            b[i] = s / self.lower[i * width + self.bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b − Ax‖₂ / ‖b‖₂`.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for a symmetric positive definite operator.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rr_new.sqrt() / bnorm,
            });
        }
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::NoConvergence {
        context: format!("conjugate gradients after {max_iter} iterations"),
        factor: rr.sqrt() / bnorm,
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration from a fixed, deterministic start vector.
pub fn power_iteration(apply: impl Fn(&[f64]) -> Vec<f64>, dim: usize, iters: usize) -> f64 {
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|c| *c /= norm);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        let n = dot(&w, &w).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &w);
        v = w.into_iter().map(|c| c / n).collect();
    }
    lambda
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularOperator(format!("{what} is not positive definite")))?;
    Ok(chol.inverse())
}

/// Inverse of a general square matrix by LU.
pub fn lu_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularOperator(format!("{what} is singular")))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Largest absolute row sum `sup_i Σ_j |m_ij|`.
pub fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral norm via singular values.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
