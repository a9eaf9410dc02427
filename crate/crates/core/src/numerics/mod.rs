//! Small dense linear algebra: spectral functions of symmetric matrices and the
//! matrix-ellipsoid projection used for the direct feed-through term.

mod matrix;
mod sym;

pub use matrix::{dot, norm_sq, Matrix};
pub use sym::{jacobi_eigen, SymEigen, SymMatrix};

use crate::error::{Error, Result};

/// Eigenvalues in `[-TOL_PSD, 0)` are treated as zero.
pub const TOL_PSD: f64 = 1e-9;
/// Smallest eigenvalue a positive definite matrix may have.
pub const TOL_PD: f64 = 1e-12;
/// Smallest eigenvalue of `XᵀX` accepted by [`angle_of`].
pub const TOL_RANK: f64 = 1e-10;
/// Relative asymmetry tolerated when ingesting a symmetric matrix.
pub const TOL_SYM: f64 = 1e-9;

/// Symmetric PSD square root. Eigenvalues in `[-TOL_PSD, 0)` are clamped to zero.
pub fn psd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = m.eigen();
    let min = eig.min();
    if m.dim() > 0 && min < -TOL_PSD * m.as_matrix().max_abs().max(1.0) {
        return Err(Error::NotPsd { min_eig: min });
    }
    Ok(eig.rebuild(|l| l.max(0.0).sqrt()))
}

/// Eigenvalue-wise positive part `Uᵀ diag(max(λ, 0)) U`.
pub fn ramp_eig(m: &SymMatrix) -> SymMatrix {
    m.eigen().rebuild(|l| l.max(0.0))
}

/// Orthonormalizes the columns of `x`: `X (XᵀX)^{-1/2}`.
pub fn angle_of(x: &Matrix) -> Result<Matrix> {
    let gram = SymMatrix::gram(x);
    let eig = gram.eigen();
    let min = eig.min();
    if x.cols() > 0 && min <= TOL_RANK {
        return Err(Error::RankDeficient { min_eig: min });
    }
    let inv_sqrt = eig.rebuild(|l| 1.0 / l.sqrt());
    x.matmul(inv_sqrt.as_matrix())
}

/// `{X : (X − B)ᵀ A (X − B) ⪯ C}` with `A ≻ 0` (n×n), `B` (n×m), `C ⪰ 0` (m×m).
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    a: SymMatrix,
    center: Matrix,
    radius: SymMatrix,
    sqrt_a: SymMatrix,
    inv_sqrt_a: SymMatrix,
}

impl Ellipsoid {
    pub fn new(a: SymMatrix, center: Matrix, radius: SymMatrix) -> Result<Self> {
        if center.rows() != a.dim() {
            return Err(Error::dims("Ellipsoid center rows", a.dim(), center.rows()));
        }
        if center.cols() != radius.dim() {
            return Err(Error::dims(
                "Ellipsoid center cols",
                radius.dim(),
                center.cols(),
            ));
        }
        let eig_a = a.eigen();
        let min_a = eig_a.min();
        if a.dim() > 0 && min_a <= TOL_PD {
            return Err(Error::NotPd { min_eig: min_a });
        }
        let min_c = radius.min_eigenvalue();
        if radius.dim() > 0 && min_c < -TOL_PSD {
            return Err(Error::NotPsd { min_eig: min_c });
        }
        let sqrt_a = eig_a.rebuild(f64::sqrt);
        let inv_sqrt_a = eig_a.rebuild(|l| 1.0 / l.sqrt());
        Ok(Self {
            a,
            center,
            radius,
            sqrt_a,
            inv_sqrt_a,
        })
    }

    pub fn shape_matrix(&self) -> &SymMatrix {
        &self.a
    }

    pub fn center(&self) -> &Matrix {
        &self.center
    }

    pub fn radius(&self) -> &SymMatrix {
        &self.radius
    }

    /// `(X − B)ᵀ A (X − B)`.
    pub fn form(&self, x: &Matrix) -> Result<SymMatrix> {
        let z = self.sqrt_a.as_matrix().matmul(&x.sub(&self.center)?)?;
        Ok(SymMatrix::gram(&z))
    }

    /// Largest eigenvalue of `(X − B)ᵀ A (X − B) − C`; non-positive means `X` is inside.
    pub fn membership_residual(&self, x: &Matrix) -> Result<f64> {
        Ok(self.form(x)?.sub(&self.radius)?.max_eigenvalue())
    }

    fn membership_tol(&self) -> f64 {
        TOL_PSD * self.radius.as_matrix().max_abs().max(1.0)
    }
}

/// Projects `x` onto the ellipsoid:
/// `B + A^{-1/2} Angle(√A (X − B)) · sqrt(D)`, where `D = C − Ramp(C − (X−B)ᵀA(X−B))`.
///
/// Points already inside (up to `TOL_PSD`) are returned unchanged. If `√A (X − B)`
/// lacks full column rank, `Angle` is replaced by its polar factor. When `m ≥ 2` and
/// `C` does not commute with the current form, `D` above can be indefinite; in that
/// case `D` is replaced by the spectral clamp of the form in the metric of `C`,
/// `X (XᵀX)^{+1/2}`: the polar factor `UVᵀ` of a thin SVD, for `X` without full
/// column rank (always the case when it has more columns than rows).
fn partial_isometry(x: &Matrix) -> Result<Matrix> {
    let eig = SymMatrix::gram(x).eigen();
    let cutoff = TOL_RANK * eig.max().max(1.0);
    x.matmul(
        eig.rebuild(|l| if l > cutoff { 1.0 / l.sqrt() } else { 0.0 })
            .as_matrix(),
    )
}

/// `C^{1/2} min(C^{-1/2} G C^{-1/2}, I) C^{1/2}`, which agrees with the formula
/// above whenever the two commute and always satisfies `0 ⪯ D ⪯ C`.
pub fn ellipsoid_project(e: &Ellipsoid, x: &Matrix) -> Result<Matrix> {
    let shifted = x.sub(&e.center)?;
    let z = e.sqrt_a.as_matrix().matmul(&shifted)?;
    let form = SymMatrix::gram(&z);
    let excess = form.sub(&e.radius)?;
    if excess.dim() == 0 || excess.max_eigenvalue() <= e.membership_tol() {
        return Ok(x.clone());
    }

    let direction = match angle_of(&z) {
        Ok(d) => d,
        Err(Error::RankDeficient { .. }) => partial_isometry(&z)?,
        Err(e) => return Err(e),
    };
    let slack = ramp_eig(&e.radius.sub(&form)?);
    let d = e.radius.sub(&slack)?;
    let d = if d.min_eigenvalue() >= -e.membership_tol() {
        d
    } else {
        metric_clamp(&e.radius, &form)?
    };
    let root = psd_sqrt(&d)?;
    let step = e
        .inv_sqrt_a
        .as_matrix()
        .matmul(&direction.matmul(root.as_matrix())?)?;
    e.center.add(&step)
}

/// `C^{1/2} min(C^{+1/2} G C^{+1/2}, I) C^{1/2}` with `C^{+1/2}` the pseudo-inverse root.
fn metric_clamp(radius: &SymMatrix, form: &SymMatrix) -> Result<SymMatrix> {
    let eig = radius.eigen();
    let cutoff = TOL_PSD * radius.as_matrix().max_abs().max(1.0);
    let root = eig.rebuild(|l| l.max(0.0).sqrt());
    let pinv_root = eig.rebuild(|l| if l > cutoff { 1.0 / l.sqrt() } else { 0.0 });
    let whitened = form.congruence(pinv_root.as_matrix())?;
    let clamped = whitened.eigen().rebuild(|l| l.clamp(0.0, 1.0));
    clamped.congruence(root.as_matrix())
}
