//! Quadratic supply rates and quadratic storage functions.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::netcore::Real;
use crate::numerics::{Matrix, SymMatrix, TOL_PSD};

/// `w(u, y) = yᵀQy + 2yᵀSu + uᵀRu`, with `Q` (l×l), `S` (l×m), `R` (m×m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyRate {
    pub q: SymMatrix,
    pub s: Matrix,
    pub r: SymMatrix,
}

impl SupplyRate {
    pub fn new(q: SymMatrix, s: Matrix, r: SymMatrix) -> Result<Self> {
        check_dim("SupplyRate S rows", q.dim(), s.rows())?;
        check_dim("SupplyRate S cols", r.dim(), s.cols())?;
        Ok(Self { q, s, r })
    }

    pub fn output_dim(&self) -> usize {
        self.q.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.r.dim()
    }

    pub fn eval(&self, u: &[f64], y: &[f64]) -> Result<f64> {
        check_dim("supply input", self.input_dim(), u.len())?;
        check_dim("supply output", self.output_dim(), y.len())?;
        let su = self.s.matvec(u)?;
        let cross: f64 = y.iter().zip(&su).map(|(a, b)| a * b).sum();
        Ok(self.q.quad_form(y) + 2.0 * cross + self.r.quad_form(u))
    }

    /// Requirement of the `j ≡ 0` projections: `R ⪰ 0`.
    pub fn validate_psd_r(&self) -> Result<()> {
        let min = self.r.min_eigenvalue();
        if self.r.dim() > 0 && min < -TOL_PSD {
            return Err(Error::InvalidPreset(format!(
                "R must be positive semi-definite (min eigenvalue {min:e})"
            )));
        }
        Ok(())
    }

    /// Requirement of the feed-through projection: `Q ≺ 0` and `R − SᵀQ⁻¹S ⪰ 0`.
    /// Returns the ellipsoid radius `R − SᵀQ⁻¹S`.
    pub fn validate_general(&self) -> Result<SymMatrix> {
        let neg_q = self.q.scale(-1.0);
        if !neg_q.is_pd() {
            return Err(Error::InvalidPreset("Q must be negative definite".into()));
        }
        let radius = self.general_radius()?;
        let min = radius.min_eigenvalue();
        if radius.dim() > 0 && min < -TOL_PSD {
            return Err(Error::InvalidPreset(format!(
                "R − SᵀQ⁻¹S must be positive semi-definite (min eigenvalue {min:e})"
            )));
        }
        Ok(radius)
    }

    /// `R − SᵀQ⁻¹S`; `Q` must be invertible.
    pub fn general_radius(&self) -> Result<SymMatrix> {
        let q_inv = self.q.scale(-1.0).inverse_pd()?.scale(-1.0);
        self.r.sub(&q_inv.congruence(&self.s)?)
    }

    pub fn is_stable_preset(&self) -> bool {
        self.q.is_zero() && self.s.max_abs() == 0.0 && self.r.is_zero()
    }

    /// `Some(γ)` when `Q = −I`, `S = 0`, `R = γ²I`.
    pub fn io_gain(&self) -> Option<f64> {
        let l = self.output_dim();
        let m = self.input_dim();
        let minus_i = SymMatrix::scaled_identity(l, -1.0);
        if self.q != minus_i || self.s.max_abs() != 0.0 || m == 0 {
            return None;
        }
        let g2 = self.r.get(0, 0);
        (g2 > 0.0 && self.r == SymMatrix::scaled_identity(m, g2)).then(|| g2.sqrt())
    }
}

/// Named supply-rate configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupplyPreset {
    /// `Q = S = R = 0`.
    Stable,
    /// `Q = −I`, `S = 0`, `R = γ²I`.
    IoStable { gamma2: f64 },
    /// `Q = R = 0`, `S = ½I`.
    Passive,
    /// `R = 0` with the given `Q`, `S`.
    Conservative { q: Vec<Vec<f64>>, s: Vec<Vec<f64>> },
    /// Mass-spring-damper rate: `Q = diag(0, −c)`, `S = (0, ½)ᵀ`, `R = 0`.
    Msd { c: f64 },
    /// n-link pendulum rate: `Q = diag(0, −c₁)`, `S = (0, ½)ᵀ`, `R = 0`.
    Pendulum { c1: f64 },
    Custom {
        q: Vec<Vec<f64>>,
        s: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
    },
}

impl SupplyPreset {
    /// Builds the supply rate for output dimension `l` and input dimension `m`.
    pub fn build(&self, l: usize, m: usize) -> Result<SupplyRate> {
        let rate = match self {
            SupplyPreset::Stable => SupplyRate::new(
                SymMatrix::zeros(l),
                Matrix::zeros(l, m),
                SymMatrix::zeros(m),
            )?,
            SupplyPreset::IoStable { gamma2 } => {
                if !(*gamma2 > 0.0) {
                    return Err(Error::InvalidPreset(format!(
                        "io_stable needs γ² > 0, got {gamma2}"
                    )));
                }
                SupplyRate::new(
                    SymMatrix::scaled_identity(l, -1.0),
                    Matrix::zeros(l, m),
                    SymMatrix::scaled_identity(m, *gamma2),
                )?
            }
            SupplyPreset::Passive => {
                if l != m {
                    return Err(Error::InvalidPreset(format!(
                        "passivity needs equal input and output dimensions (m = {m}, l = {l})"
                    )));
                }
                SupplyRate::new(
                    SymMatrix::zeros(l),
                    Matrix::identity(l).scale(0.5),
                    SymMatrix::zeros(m),
                )?
            }
            SupplyPreset::Conservative { q, s } => SupplyRate::new(
                SymMatrix::from_rows(q)?,
                matrix_or_empty(s, l, m)?,
                SymMatrix::zeros(m),
            )?,
            SupplyPreset::Msd { c } => energy_rate(*c, l, m)?,
            SupplyPreset::Pendulum { c1 } => energy_rate(*c1, l, m)?,
            SupplyPreset::Custom { q, s, r } => SupplyRate::new(
                SymMatrix::from_rows(q)?,
                matrix_or_empty(s, l, m)?,
                SymMatrix::from_rows(r)?,
            )?,
        };
        check_dim("supply preset output dim", l, rate.output_dim())?;
        check_dim("supply preset input dim", m, rate.input_dim())?;
        Ok(rate)
    }
}

fn matrix_or_empty(rows: &[Vec<f64>], l: usize, m: usize) -> Result<Matrix> {
    if rows.is_empty() {
        Ok(Matrix::zeros(l, m))
    } else {
        Matrix::from_rows(rows)
    }
}

/// Supply rate `w = u·y₂ − c·y₂²` for outputs `y = (position, velocity)`.
fn energy_rate(c: f64, l: usize, m: usize) -> Result<SupplyRate> {
    if l != 2 || m != 1 {
        return Err(Error::InvalidPreset(format!(
            "energy supply rate needs l = 2, m = 1 (got l = {l}, m = {m})"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidPreset(format!(
            "damping must be positive, got {c}"
        )));
    }
    SupplyRate::new(
        SymMatrix::from_diag(&[0.0, -c]),
        Matrix::column(&[0.0, 0.5]),
        SymMatrix::zeros(1),
    )
}

pub const EPSILON_GUARD: f64 = 1e-8;

/// `V(x) = ½ xᵀPx` with `P ≻ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageFunction {
    pub p: SymMatrix,
    /// Lower bound applied to `‖∇V‖²` wherever it divides.
    pub epsilon_guard: f64,
}

impl StorageFunction {
    pub fn quadratic(p: SymMatrix) -> Result<Self> {
        if !p.is_pd() {
            return Err(Error::InvalidPreset(
                "storage matrix must be positive definite".into(),
            ));
        }
        Ok(Self {
            p,
            epsilon_guard: EPSILON_GUARD,
        })
    }

    /// `V(x) = ½‖x‖²`.
    pub fn half_norm(n: usize) -> Self {
        Self {
            p: SymMatrix::identity(n),
            epsilon_guard: EPSILON_GUARD,
        }
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        0.5 * self.p.quad_form(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.grad_generic(x)
    }

    pub fn grad_generic<T: Real>(&self, x: &[T]) -> Vec<T> {
        let p = self.p.as_matrix();
        (0..self.dim()).map(|i| T::lincomb(p.row(i), x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_supply_is_zero() {
        let w = SupplyPreset::Stable.build(2, 1).unwrap();
        assert_eq!(w.eval(&[3.0], &[1.0, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn io_stable_rate() {
        let w = SupplyPreset::IoStable { gamma2: 2.0 }.build(2, 2).unwrap();
        let (u, y) = ([1.0, 2.0], [0.5, -1.0]);
        let expected = 2.0 * 5.0 - 1.25;
        assert!((w.eval(&u, &y).unwrap() - expected).abs() < 1e-14);
        assert_eq!(w.io_gain(), Some(2f64.sqrt()));
    }

    #[test]
    fn fluid_sized_io_preset() {
        let w = SupplyPreset::IoStable { gamma2: 2.0 }
            .build(16, 16)
            .unwrap();
        assert_eq!(w.q, SymMatrix::scaled_identity(16, -1.0));
        assert_eq!(w.s, Matrix::zeros(16, 16));
        assert_eq!(w.r, SymMatrix::scaled_identity(16, 2.0));
    }

    #[test]
    fn passive_rate_is_inner_product() {
        let w = SupplyPreset::Passive.build(1, 1).unwrap();
        assert_eq!(w.eval(&[1.0], &[1.0]).unwrap(), 1.0);
        assert!(SupplyPreset::Passive.build(2, 1).is_err());
    }

    #[test]
    fn msd_rate_matrices() {
        let w = SupplyPreset::Msd { c: 1.0 }.build(2, 1).unwrap();
        assert_eq!(w.q, SymMatrix::from_diag(&[0.0, -1.0]));
        assert_eq!(w.s, Matrix::column(&[0.0, 0.5]));
        assert!(w.r.is_zero());
    }

    #[test]
    fn stable_preset_dims() {
        let w = SupplyPreset::Stable.build(2, 1).unwrap();
        assert!(w.is_stable_preset());
        assert_eq!(w.s.shape(), (2, 1));
    }

    #[test]
    fn custom_with_negative_r_fails_theorem_path() {
        let w = SupplyPreset::Custom {
            q: vec![vec![0.0]],
            s: vec![vec![0.0]],
            r: vec![vec![-1.0]],
        }
        .build(1, 1)
        .unwrap();
        assert!(matches!(w.validate_psd_r(), Err(Error::InvalidPreset(_))));
    }

    #[test]
    fn general_path_validation() {
        let ok = SupplyPreset::Custom {
            q: vec![vec![-1.0]],
            s: vec![vec![0.0]],
            r: vec![vec![1.0]],
        }
        .build(1, 1)
        .unwrap();
        let radius = ok.validate_general().unwrap();
        assert!((radius.get(0, 0) - 1.0).abs() < 1e-15);
        let singular_q = SupplyPreset::Stable.build(1, 1).unwrap();
        assert!(singular_q.validate_general().is_err());
    }

    #[test]
    fn storage_examples() {
        let v = StorageFunction::half_norm(2);
        assert_eq!(v.eval(&[0.0, 0.0]), 0.0);
        assert_eq!(v.grad(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(v.eval(&[3.0, 4.0]), 12.5);
        assert_eq!(v.grad(&[3.0, 4.0]), vec![3.0, 4.0]);
        let w = StorageFunction::quadratic(SymMatrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_eq!(w.eval(&[1.0, 1.0]), 1.5);
        assert_eq!(w.grad(&[1.0, 1.0]), vec![2.0, 1.0]);
    }

    #[test]
    fn storage_rejects_indefinite() {
        assert!(StorageFunction::quadratic(SymMatrix::from_diag(&[1.0, -1.0])).is_err());
    }
}
