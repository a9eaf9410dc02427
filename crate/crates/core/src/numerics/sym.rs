use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::{TOL_PD, TOL_PSD, TOL_SYM};
use crate::error::{Error, Result};

/// Square symmetric matrix. Symmetry is exact: construction averages `(M + Mᵀ)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Rejects inputs whose asymmetry exceeds `TOL_SYM` relative to the entry scale,
    /// then symmetrizes.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::dims("SymMatrix::new (square)", m.rows(), m.cols()));
        }
        let asym = m.max_asymmetry();
        if asym > TOL_SYM * m.max_abs().max(1.0) {
            return Err(Error::NotSymmetric { max_asym: asym });
        }
        Ok(Self::symmetrize(m))
    }

    fn symmetrize(mut m: Matrix) -> Self {
        let n = m.rows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        SymMatrix(m)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        SymMatrix(Matrix::from_diag(d))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        SymMatrix(Matrix::identity(n).scale(s))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// `XᵀX`, symmetrized.
    pub fn gram(x: &Matrix) -> Self {
        let g = x.tr_matmul(x).expect("gram dims always agree");
        Self::symmetrize(g)
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn add(&self, rhs: &SymMatrix) -> Result<SymMatrix> {
        Ok(SymMatrix(self.0.add(&rhs.0)?))
    }

    pub fn sub(&self, rhs: &SymMatrix) -> Result<SymMatrix> {
        Ok(SymMatrix(self.0.sub(&rhs.0)?))
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.scale(s))
    }

    /// `Bᵀ · self · B`.
    pub fn congruence(&self, b: &Matrix) -> Result<SymMatrix> {
        let sb = self.0.matmul(b)?;
        Ok(Self::symmetrize(b.tr_matmul(&sb)?))
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let row = self.0.row(i);
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * x[j];
            }
            acc += x[i] * s;
        }
        acc
    }

    pub fn eigen(&self) -> SymEigen {
        jacobi_eigen(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen()
            .values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen()
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_psd(&self) -> bool {
        self.dim() == 0 || self.min_eigenvalue() >= -TOL_PSD
    }

    pub fn is_pd(&self) -> bool {
        self.dim() == 0 || self.min_eigenvalue() > TOL_PD
    }

    pub fn is_zero(&self) -> bool {
        self.0.max_abs() == 0.0
    }

    /// Inverse of a positive definite matrix via its spectrum.
    pub fn inverse_pd(&self) -> Result<SymMatrix> {
        let eig = self.eigen();
        let min = eig.min();
        if self.dim() > 0 && min <= TOL_PD {
            return Err(Error::NotPd { min_eig: min });
        }
        Ok(eig.rebuild(|l| 1.0 / l))
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        SymMatrix::new(m)
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Matrix {
        s.0
    }
}

/// Spectral decomposition `M = V diag(values) Vᵀ`; columns of `vectors` are eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `V diag(map(λ)) Vᵀ`.
    pub fn rebuild(&self, map: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| map(l)).collect();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v[(i, k)] * mapped[k] * v[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        SymMatrix(out)
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigenvalue iteration.
pub fn jacobi_eigen(m: &SymMatrix) -> SymEigen {
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius();
    if n <= 1 || scale == 0.0 {
        let values = (0..n).map(|i| a[(i, i)]).collect();
        return SymEigen { values, vectors: v };
    }

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[(i, i)]).collect();
    SymEigen { values, vectors: v }
}
