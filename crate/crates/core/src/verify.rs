//! Numerical audits of the dissipativity guarantees.

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, SimConfig, Trajectory};
use crate::error::{check_dim, Result};
use crate::numerics::{dot, norm_sq, Matrix};
use crate::projection::{qme_build, Certificate, ProjectedModel, QmeInstance};
use crate::supply::{StorageFunction, SupplyRate};

pub const KYP_THRESHOLD: f64 = 1e-8;
pub const IDEMPOTENCE_THRESHOLD: f64 = 1e-9;
pub const HJ_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_C_TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub check: String,
    pub samples: usize,
    pub max_residual: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Index of the worst sample when the check fails.
    pub offending: Option<usize>,
}

impl VerifyReport {
    /// Builds a report from per-sample residuals; NaN counts as a failure.
    pub fn from_residuals(check: &str, residuals: &[f64], threshold: f64) -> Self {
        let mut worst = f64::NEG_INFINITY;
        let mut worst_idx = None;
        for (i, &r) in residuals.iter().enumerate() {
            let r = if r.is_nan() { f64::INFINITY } else { r };
            if worst_idx.is_none() || r > worst {
                worst = r;
                worst_idx = Some(i);
            }
        }
        let max_residual = if residuals.is_empty() { 0.0 } else { worst };
        let pass = max_residual <= threshold;
        Self {
            check: check.to_string(),
            samples: residuals.len(),
            max_residual,
            threshold,
            pass,
            offending: if pass { None } else { worst_idx },
        }
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<28} {:>7} {:>12.3e} {:>10.1e}  {}",
            self.check,
            self.samples,
            self.max_residual,
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Residuals of the KYP conditions at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct KypResidual {
    /// `∇Vᵀf − hᵀQh + lᵀl`.
    pub r1: f64,
    /// `½∇Vᵀg − hᵀ(S + Qj) + lᵀW`.
    pub r2: Vec<f64>,
    /// `WᵀW − R − jᵀS − Sᵀj − jᵀQj`.
    pub r3: Matrix,
}

impl KypResidual {
    pub fn max_abs(&self) -> f64 {
        self.r2
            .iter()
            .fold(self.r1.abs().max(self.r3.max_abs()), |a, v| a.max(v.abs()))
    }
}

pub fn kyp_from_certificate(cert: &Certificate, x: &[f64]) -> Result<KypResidual> {
    let d = &cert.dyn_d;
    let w = &cert.supply;
    let n = x.len();
    let m = w.input_dim();
    check_dim("kyp f", n, d.f.len())?;
    check_dim("kyp l", cert.w.rows(), cert.l.len())?;
    let gv = cert.storage.grad(x);
    let r1 = dot(&gv, &d.f) - w.q.quad_form(&d.h) + norm_sq(&cert.l);
    let zero_j = Matrix::zeros(w.output_dim(), m);
    let j = d.j.as_ref().unwrap_or(&zero_j);
    let s_eff = w.s.add(&w.q.as_matrix().matmul(j)?)?;
    let hs = s_eff.tr_matvec(&d.h)?;
    let lw = cert.w.tr_matvec(&cert.l)?;
    let r2 = (0..m)
        .map(|k| 0.5 * dot(&gv, d.g_col(k)) - hs[k] + lw[k])
        .collect();
    let sj = w.s.tr_matmul(j)?;
    let r3 = cert
        .w
        .tr_matmul(&cert.w)?
        .sub(w.r.as_matrix())?
        .sub(&sj)?
        .sub(&sj.transpose())?
        .sub(w.q.congruence(j)?.as_matrix())?;
    Ok(KypResidual { r1, r2, r3 })
}

/// KYP residuals of the projected model at `x`, with the model's own certificate.
pub fn kyp_residual(model: &ProjectedModel, x: &[f64]) -> Result<KypResidual> {
    kyp_from_certificate(&model.certificate_at(x)?, x)
}

pub fn kyp_audit(model: &ProjectedModel, xs: &[Vec<f64>], threshold: f64) -> Result<VerifyReport> {
    let res = xs
        .iter()
        .map(|x| kyp_residual(model, x).map(|r| r.max_abs()))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport::from_residuals(
        "kyp_residual",
        &res,
        threshold,
    ))
}

/// `max(∇Vᵀf, 0)` per sample. The stable kind leaves `g` and `h` free, so this
/// decrease condition is all its certificate covers.
pub fn lyapunov_audit(
    model: &ProjectedModel,
    xs: &[Vec<f64>],
    threshold: f64,
) -> Result<VerifyReport> {
    let res = xs
        .iter()
        .map(|x| {
            let (_, d) = model.evaluate(x)?;
            Ok(dot(&model.spec.storage.grad(x), &d.f).max(0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport::from_residuals(
        "lyapunov_decrease",
        &res,
        threshold,
    ))
}

/// QME instance of the projected model at `x`.
pub fn qme_at(model: &ProjectedModel, x: &[f64]) -> Result<QmeInstance> {
    let cert = model.certificate_at(x)?;
    qme_build(
        &cert.supply,
        &cert.storage.grad(x),
        &cert.dyn_d,
        &cert.l,
        &cert.w,
    )
}

/// `‖XᵀAX + BᵀX + XᵀB + C‖_F`.
pub fn qme_residual(q: &QmeInstance) -> Result<f64> {
    q.residual()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissipationMode {
    /// `V(x_k) − V(x_0) ≤ ∫w + tol`.
    Inequality,
    /// `|V(x_k) − V(x_0) − ∫w| ≤ tol`.
    Equality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    Trapezoid,
    /// `Σ w(u_k, y_k)·dt`, the exact budget of an Euler step with held input.
    LeftRiemann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationOptions {
    pub c_tol: f64,
    pub quadrature: Quadrature,
}

impl Default for DissipationOptions {
    fn default() -> Self {
        Self {
            c_tol: DEFAULT_C_TOL,
            quadrature: Quadrature::Trapezoid,
        }
    }
}

/// Per-prefix `V(x_k) − V(x_0) − ∫₀^{t_k} w`.
pub fn dissipation_gaps(
    traj: &Trajectory,
    v: &StorageFunction,
    w: &SupplyRate,
    quadrature: Quadrature,
) -> Result<Vec<f64>> {
    let states = traj.states()?;
    let v0 = v.eval(&states[0]);
    let mut integral = 0.0;
    let mut gaps = Vec::with_capacity(states.len());
    gaps.push(0.0);
    for k in 1..states.len() {
        let dt = traj.times[k] - traj.times[k - 1];
        // input held over [t_{k-1}, t_k]
        let u = &traj.inputs[k - 1];
        let left = w.eval(u, &traj.outputs[k - 1])?;
        integral += match quadrature {
            Quadrature::Trapezoid => 0.5 * dt * (left + w.eval(u, &traj.outputs[k])?),
            Quadrature::LeftRiemann => dt * left,
        };
        gaps.push(v.eval(&states[k]) - v0 - integral);
    }
    Ok(gaps)
}

/// Checks the dissipation inequality (or equality) on every prefix of `traj`,
/// with tolerance `c_tol·dt·horizon`.
pub fn dissipativity_check(
    traj: &Trajectory,
    v: &StorageFunction,
    w: &SupplyRate,
    mode: DissipationMode,
    opts: DissipationOptions,
) -> Result<VerifyReport> {
    let gaps = dissipation_gaps(traj, v, w, opts.quadrature)?;
    let tol = opts.c_tol * traj.dt * traj.horizon() as f64;
    let (name, res): (&str, Vec<f64>) = match mode {
        DissipationMode::Inequality => ("dissipation_inequality", gaps),
        DissipationMode::Equality => (
            "dissipation_equality",
            gaps.iter().map(|g| g.abs()).collect(),
        ),
    };
    Ok(VerifyReport::from_residuals(name, &res, tol))
}

/// `∇Vᵀf + ‖∇Vᵀg‖²/(4γ²) + ‖h‖²` at `x`; non-positive everywhere certifies gain `γ`.
pub fn hj_lhs(model: &ProjectedModel, x: &[f64], gamma: f64) -> Result<f64> {
    let (_, d) = model.evaluate(x)?;
    let gv = model.spec.storage.grad(x);
    let m = d.input_dim();
    let gtv: f64 = (0..m).map(|k| dot(&gv, d.g_col(k)).powi(2)).sum();
    Ok(dot(&gv, &d.f) + gtv / (4.0 * gamma * gamma) + norm_sq(&d.h))
}

pub fn hj_check(
    model: &ProjectedModel,
    xs: &[Vec<f64>],
    gamma: f64,
    threshold: f64,
) -> Result<VerifyReport> {
    let res = xs
        .iter()
        .map(|x| hj_lhs(model, x, gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport::from_residuals(
        "hamilton_jacobi",
        &res,
        threshold,
    ))
}

/// `sqrt(Σ_k ‖v_k‖² dt)`.
pub fn l2_norm(rows: &[Vec<f64>], dt: f64) -> f64 {
    (rows.iter().map(|r| norm_sq(r)).sum::<f64>() * dt).sqrt()
}

/// `‖y‖ − γ‖u‖` per input signal, simulated from rest; divergence yields `+∞`.
pub fn gain_check(
    model: &ProjectedModel,
    inputs: &[Vec<Vec<f64>>],
    dt: f64,
    gamma: f64,
    tol: f64,
) -> Result<VerifyReport> {
    let mut res = Vec::with_capacity(inputs.len());
    for u in inputs {
        let cfg = SimConfig::new(dt, u.len());
        match simulate(model, u, &cfg) {
            Ok(traj) => res.push(l2_norm(&traj.outputs, dt) - gamma * l2_norm(u, dt)),
            Err(crate::Error::NonFiniteState { .. }) => res.push(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    Ok(VerifyReport::from_residuals("l2_gain", &res, tol))
}

/// Max abs difference between projecting once and twice at each sample.
pub fn idempotence_residuals(model: &ProjectedModel, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let p = model.params();
    xs.iter()
        .map(|x| {
            let raw = model.raw_at(&p, x);
            let l = model.l_at(&p, x);
            let gv = model.grad_v(x);
            let once = model.spec.project(&gv, &l, &raw)?;
            let twice = model.spec.project(&gv, &l, &once)?;
            Ok(once.max_abs_diff(&twice))
        })
        .collect()
}

pub fn idempotence_audit(
    model: &ProjectedModel,
    xs: &[Vec<f64>],
    threshold: f64,
) -> Result<VerifyReport> {
    let res = idempotence_residuals(model, xs)?;
    Ok(VerifyReport::from_residuals("idempotence", &res, threshold))
}
