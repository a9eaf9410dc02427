//! Projections of raw network dynamics onto dissipative dynamics.

mod point;

use serde::{Deserialize, Serialize};

pub use point::{
    project_conservative, project_dissipative, project_general_point, project_io_stable,
    project_passive_alpha, project_passive_beta, project_stable, GradV, PointDyn,
};

use crate::error::{check_dim, Error, Result};
use crate::netcore::{Activation, Mlp, Real, Tape, Var};
use crate::numerics::{
    ellipsoid_project, psd_sqrt, ramp_eig, Ellipsoid, Matrix, SymMatrix, TOL_PSD,
};
use crate::supply::{StorageFunction, SupplyPreset, SupplyRate, EPSILON_GUARD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    /// No projection; the baseline model.
    Naive,
    Dissipative,
    Stable,
    IoStable,
    Conservative,
    PassiveBeta,
    PassiveAlpha,
    /// Dissipative with a direct feed-through term projected onto its ellipsoid.
    General,
}

impl ProjectionKind {
    pub const ALL: [ProjectionKind; 8] = [
        ProjectionKind::Naive,
        ProjectionKind::Dissipative,
        ProjectionKind::Stable,
        ProjectionKind::IoStable,
        ProjectionKind::Conservative,
        ProjectionKind::PassiveBeta,
        ProjectionKind::PassiveAlpha,
        ProjectionKind::General,
    ];

    /// Kinds whose certificate carries a learned `l(x)`.
    pub fn uses_l_net(self) -> bool {
        matches!(
            self,
            ProjectionKind::Dissipative | ProjectionKind::IoStable | ProjectionKind::General
        )
    }

    pub fn is_passive(self) -> bool {
        matches!(
            self,
            ProjectionKind::PassiveBeta | ProjectionKind::PassiveAlpha
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ProjectionKind::Naive => "naive",
            ProjectionKind::Dissipative => "dissipative",
            ProjectionKind::Stable => "stable",
            ProjectionKind::IoStable => "io_stable",
            ProjectionKind::Conservative => "conservative",
            ProjectionKind::PassiveBeta => "passive_beta",
            ProjectionKind::PassiveAlpha => "passive_alpha",
            ProjectionKind::General => "general",
        }
    }
}

/// `(I − ∇V∇Vᵀ/‖∇V‖²) v`, with `‖∇V‖²` floored at the default epsilon guard.
pub fn complement_projector(grad_v: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_dim("complement_projector", grad_v.len(), v.len())?;
    Ok(GradV::new(grad_v.to_vec(), EPSILON_GUARD).complement(v))
}

/// Hidden layout of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetArch {
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "one")]
    pub output_scale: f64,
    /// Shift the network so that it vanishes at the origin.
    #[serde(default)]
    pub anchored: bool,
}

fn one() -> f64 {
    1.0
}

impl NetArch {
    pub fn new(hidden: &[usize], activation: Activation, output_scale: f64) -> Self {
        Self {
            hidden: hidden.to_vec(),
            activation,
            output_scale,
            anchored: false,
        }
    }

    pub fn anchored(self) -> Self {
        Self {
            anchored: true,
            ..self
        }
    }

    pub fn affine() -> Self {
        Self::new(&[], Activation::Relu, 1.0)
    }

    pub fn build(&self, in_dim: usize, out_dim: usize, seed: u64) -> Mlp {
        let mut net = Mlp::new(
            in_dim,
            out_dim,
            &self.hidden,
            self.activation,
            self.output_scale,
            seed,
        );
        net.anchored = self.anchored;
        net
    }
}

/// The unprojected tuple `(f, g, h, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDynamics {
    /// `n → n`.
    pub f: Mlp,
    /// `n → n·m`, reshaped column-major.
    pub g: Mlp,
    /// `n → l`.
    pub h: Mlp,
    /// Constant `l × m` feed-through; absent means zero.
    pub j: Option<Matrix>,
}

impl RawDynamics {
    pub fn new(
        dims: (usize, usize, usize),
        f: &NetArch,
        g: &NetArch,
        h: &NetArch,
        seed: u64,
    ) -> Self {
        let (n, m, l) = dims;
        Self {
            f: f.build(n, n, seed),
            g: g.build(n, n * m, seed.wrapping_add(1)),
            h: h.build(n, l, seed.wrapping_add(2)),
            j: None,
        }
    }

    /// `(n, m, l)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let n = self.f.in_dim;
        let m = if n == 0 { 0 } else { self.g.out_dim / n };
        (n, m, self.h.out_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m, l) = self.dims();
        for net in [&self.f, &self.g, &self.h] {
            net.validate()?;
            check_dim("raw network input", n, net.in_dim)?;
        }
        check_dim("f output", n, self.f.out_dim)?;
        check_dim("g output", n * m, self.g.out_dim)?;
        if let Some(j) = &self.j {
            check_dim("j rows", l, j.rows())?;
            check_dim("j cols", m, j.cols())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecParts {
    kind: ProjectionKind,
    supply: SupplyRate,
    storage: StorageFunction,
    l_net: Option<Mlp>,
}

/// Projection kind together with the certificate ingredients `(supply, V, l, √R)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpecParts", into = "SpecParts")]
pub struct ProjectionSpec {
    pub kind: ProjectionKind,
    pub supply: SupplyRate,
    pub storage: StorageFunction,
    /// `l : ℝⁿ → ℝᵐ`, present exactly for kinds with [`ProjectionKind::uses_l_net`].
    pub l_net: Option<Mlp>,
    sqrt_r: SymMatrix,
    gamma: f64,
    /// Feed-through ellipsoid `(j + Q⁻¹S)ᵀ(−Q)(j + Q⁻¹S) ⪯ R − SᵀQ⁻¹S`.
    ellipsoid: Option<Ellipsoid>,
}

impl PartialEq for ProjectionSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.supply == other.supply
            && self.storage == other.storage
            && self.l_net == other.l_net
    }
}

impl TryFrom<SpecParts> for ProjectionSpec {
    type Error = Error;

    fn try_from(p: SpecParts) -> Result<Self> {
        ProjectionSpec::new(p.kind, p.supply, p.storage, p.l_net)
    }
}

impl From<ProjectionSpec> for SpecParts {
    fn from(s: ProjectionSpec) -> Self {
        SpecParts {
            kind: s.kind,
            supply: s.supply,
            storage: s.storage,
            l_net: s.l_net,
        }
    }
}

impl ProjectionSpec {
    pub fn new(
        kind: ProjectionKind,
        supply: SupplyRate,
        storage: StorageFunction,
        l_net: Option<Mlp>,
    ) -> Result<Self> {
        let n = storage.dim();
        let m = supply.input_dim();
        let l = supply.output_dim();
        match (&l_net, kind.uses_l_net()) {
            (Some(net), true) => {
                net.validate()?;
                check_dim("l network input", n, net.in_dim)?;
                check_dim("l network output", m, net.out_dim)?;
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::Config(format!(
                    "projection kind {} takes no l network",
                    kind.name()
                )))
            }
            (None, true) => {
                return Err(Error::Config(format!(
                    "projection kind {} needs an l network",
                    kind.name()
                )))
            }
        }
        let mut gamma = 0.0;
        let mut ellipsoid = None;
        match kind {
            ProjectionKind::Naive => {}
            ProjectionKind::Dissipative => supply.validate_psd_r()?,
            ProjectionKind::Stable => {
                if !supply.is_stable_preset() {
                    return Err(Error::InvalidPreset(
                        "stable projection needs Q = S = R = 0".into(),
                    ));
                }
            }
            ProjectionKind::IoStable => {
                gamma = supply.io_gain().ok_or_else(|| {
                    Error::InvalidPreset("io_stable projection needs Q = −I, S = 0, R = γ²I".into())
                })?;
            }
            ProjectionKind::Conservative => {
                if !supply.r.is_zero() {
                    return Err(Error::InvalidPreset(
                        "conservative projection needs R = 0".into(),
                    ));
                }
            }
            ProjectionKind::PassiveBeta | ProjectionKind::PassiveAlpha => {
                check_dim("passive output dim", m, l)?;
                if supply != SupplyPreset::Passive.build(l, m)? {
                    return Err(Error::InvalidPreset(
                        "passive projection needs Q = R = 0, S = ½I".into(),
                    ));
                }
            }
            ProjectionKind::General => {
                let radius = supply.validate_general()?;
                let neg_q = supply.q.scale(-1.0);
                let center = neg_q.inverse_pd()?.as_matrix().matmul(&supply.s)?;
                ellipsoid = Some(Ellipsoid::new(neg_q, center, radius)?);
            }
        }
        let sqrt_r = psd_sqrt(&ramp_eig(&supply.r))?;
        Ok(Self {
            kind,
            supply,
            storage,
            l_net,
            sqrt_r,
            gamma,
            ellipsoid,
        })
    }

    pub fn sqrt_r(&self) -> &SymMatrix {
        &self.sqrt_r
    }

    /// `γ` of the io_stable kind, zero otherwise.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn ellipsoid(&self) -> Option<&Ellipsoid> {
        self.ellipsoid.as_ref()
    }

    /// `(j_d, W)` with `j_d` the ellipsoid projection of `j` and
    /// `W = sqrt(Ramp(R + j_dᵀS + Sᵀj_d + j_dᵀQj_d))`. Only for the general kind.
    pub fn project_feedthrough(&self, j: Option<&Matrix>) -> Result<(Matrix, Matrix)> {
        let e = self.ellipsoid.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "kind {} has no feed-through term",
                self.kind.name()
            ))
        })?;
        let zero = Matrix::zeros(self.supply.output_dim(), self.supply.input_dim());
        let j_d = ellipsoid_project(e, j.unwrap_or(&zero))?;
        let w = feedthrough_weight(&self.supply, &j_d)?;
        Ok((j_d, w))
    }

    /// Projects pointwise values. `l` is `l(x)` (ignored by kinds without an l network).
    pub fn project<T: Real>(
        &self,
        gv: &GradV<T>,
        l: &[T],
        raw: &PointDyn<T>,
    ) -> Result<PointDyn<T>> {
        let n = self.storage.dim();
        let m = self.supply.input_dim();
        check_dim("projection f", n, raw.f.len())?;
        check_dim("projection g", n * m, raw.g.len())?;
        check_dim("projection h", self.supply.output_dim(), raw.h.len())?;
        if self.kind.uses_l_net() {
            check_dim("projection l", m, l.len())?;
        }
        Ok(match self.kind {
            ProjectionKind::Naive => raw.clone(),
            ProjectionKind::Dissipative => {
                project_dissipative(&self.supply, &self.sqrt_r, gv, l, &without_j(raw))
            }
            ProjectionKind::Stable => project_stable(gv, &without_j(raw)),
            ProjectionKind::IoStable => project_io_stable(self.gamma, gv, l, &without_j(raw)),
            ProjectionKind::Conservative => project_conservative(&self.supply, gv, &without_j(raw)),
            ProjectionKind::PassiveBeta => project_passive_beta(gv, &without_j(raw)),
            ProjectionKind::PassiveAlpha => project_passive_alpha(gv, &without_j(raw)),
            ProjectionKind::General => {
                let (j_d, w) = self.project_feedthrough(raw.j.as_ref())?;
                project_general_point(&self.supply, &j_d, &w, gv, l, raw)
            }
        })
    }

    /// Storage function of the certificate. The passive kinds enforce `∇Vᵀg = 2hᵀ`,
    /// which certifies `w = uᵀy` with storage `V/2`.
    pub fn certificate_storage(&self) -> StorageFunction {
        if self.kind.is_passive() {
            StorageFunction {
                p: self.storage.p.scale(0.5),
                epsilon_guard: self.storage.epsilon_guard,
            }
        } else {
            self.storage.clone()
        }
    }
}

/// The `j ≡ 0` kinds drop any configured feed-through.
fn without_j<T: Real>(raw: &PointDyn<T>) -> PointDyn<T> {
    if raw.j.is_none() {
        return raw.clone();
    }
    PointDyn {
        j: None,
        ..raw.clone()
    }
}

fn feedthrough_weight(supply: &SupplyRate, j_d: &Matrix) -> Result<Matrix> {
    let cross = supply.s.tr_matmul(j_d)?;
    let cross_sym = cross.add(&cross.transpose())?;
    let m = supply
        .r
        .as_matrix()
        .add(&cross_sym)?
        .add(supply.q.congruence(j_d)?.as_matrix())?;
    let m = SymMatrix::new(m)?;
    let min = m.min_eigenvalue();
    if min < -TOL_PSD * m.as_matrix().max_abs().max(1.0) {
        return Err(Error::NotPsd { min_eig: min });
    }
    Ok(psd_sqrt(&ramp_eig(&m))?.into_matrix())
}

/// Network parameters of a model, split by role.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub h: Vec<T>,
    pub l: Vec<T>,
    pub eta: Vec<T>,
}

impl<T: Clone> ModelParams<T> {
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(
            self.f.len() + self.g.len() + self.h.len() + self.l.len() + self.eta.len(),
        );
        for part in [&self.f, &self.g, &self.h, &self.l, &self.eta] {
            out.extend(part.iter().cloned());
        }
        out
    }
}

/// Projected model: raw networks, projection, optional reconstruction map `η : ℝˡ → ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedModel {
    pub raw: RawDynamics,
    pub spec: ProjectionSpec,
    pub eta: Option<Mlp>,
}

/// KYP certificate ingredients at one state.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub storage: StorageFunction,
    pub supply: SupplyRate,
    pub dyn_d: PointDyn<f64>,
    pub l: Vec<f64>,
    pub w: Matrix,
}

impl ProjectedModel {
    pub fn new(raw: RawDynamics, spec: ProjectionSpec, eta: Option<Mlp>) -> Result<Self> {
        raw.validate()?;
        let (n, m, l) = raw.dims();
        check_dim("storage dim", n, spec.storage.dim())?;
        check_dim("supply input dim", m, spec.supply.input_dim())?;
        check_dim("supply output dim", l, spec.supply.output_dim())?;
        if let Some(eta) = &eta {
            eta.validate()?;
            check_dim("eta input", l, eta.in_dim)?;
            check_dim("eta output", n, eta.out_dim)?;
        }
        Ok(Self { raw, spec, eta })
    }

    /// `(n, m, l)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.raw.dims()
    }

    pub fn kind(&self) -> ProjectionKind {
        self.spec.kind
    }

    pub fn params(&self) -> ModelParams<f64> {
        ModelParams {
            f: self.raw.f.params.clone(),
            g: self.raw.g.params.clone(),
            h: self.raw.h.params.clone(),
            l: self
                .spec
                .l_net
                .as_ref()
                .map_or_else(Vec::new, |n| n.params.clone()),
            eta: self
                .eta
                .as_ref()
                .map_or_else(Vec::new, |n| n.params.clone()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.raw.f.param_count()
            + self.raw.g.param_count()
            + self.raw.h.param_count()
            + self.spec.l_net.as_ref().map_or(0, Mlp::param_count)
            + self.eta.as_ref().map_or(0, Mlp::param_count)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().flatten()
    }

    /// Splits a flat vector (order f, g, h, l, η) by role.
    pub fn split<T: Clone>(&self, flat: &[T]) -> Result<ModelParams<T>> {
        check_dim("flat parameter vector", self.param_count(), flat.len())?;
        let mut rest = flat;
        let mut take = |k: usize| {
            let (head, tail) = rest.split_at(k);
            rest = tail;
            head.to_vec()
        };
        Ok(ModelParams {
            f: take(self.raw.f.param_count()),
            g: take(self.raw.g.param_count()),
            h: take(self.raw.h.param_count()),
            l: take(self.spec.l_net.as_ref().map_or(0, Mlp::param_count)),
            eta: take(self.eta.as_ref().map_or(0, Mlp::param_count)),
        })
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let p = self.split(flat)?;
        self.raw.f.params = p.f;
        self.raw.g.params = p.g;
        self.raw.h.params = p.h;
        if let Some(net) = &mut self.spec.l_net {
            net.params = p.l;
        }
        if let Some(net) = &mut self.eta {
            net.params = p.eta;
        }
        Ok(())
    }

    /// All parameters as fresh variables on `tape`.
    pub fn params_on<'t>(&self, tape: &'t Tape) -> ModelParams<Var<'t>> {
        let p = self.params();
        ModelParams {
            f: tape.vars(&p.f),
            g: tape.vars(&p.g),
            h: tape.vars(&p.h),
            l: tape.vars(&p.l),
            eta: tape.vars(&p.eta),
        }
    }

    pub fn grad_v<T: Real>(&self, x: &[T]) -> GradV<T> {
        GradV::new(
            self.spec.storage.grad_generic(x),
            self.spec.storage.epsilon_guard,
        )
    }

    pub fn raw_at<T: Real>(&self, p: &ModelParams<T>, x: &[T]) -> PointDyn<T> {
        PointDyn {
            f: self.raw.f.eval(&p.f, x),
            g: self.raw.g.eval(&p.g, x),
            h: self.raw.h.eval(&p.h, x),
            j: self.raw.j.clone(),
        }
    }

    pub fn l_at<T: Real>(&self, p: &ModelParams<T>, x: &[T]) -> Vec<T> {
        match &self.spec.l_net {
            Some(net) => net.eval(&p.l, x),
            None => Vec::new(),
        }
    }

    /// Projected `(f_d, g_d, h_d, j_d)` at `x` under parameters `p`.
    pub fn eval_at<T: Real>(&self, p: &ModelParams<T>, x: &[T]) -> Result<PointDyn<T>> {
        let raw = self.raw_at(p, x);
        if self.spec.kind == ProjectionKind::Naive {
            return Ok(raw);
        }
        let l = self.l_at(p, x);
        self.spec.project(&self.grad_v(x), &l, &raw)
    }

    /// Raw and projected values at `x` with the current parameters.
    pub fn evaluate(&self, x: &[f64]) -> Result<(PointDyn<f64>, PointDyn<f64>)> {
        check_dim("state", self.dims().0, x.len())?;
        let p = self.params();
        let raw = self.raw_at(&p, x);
        let projected = self.eval_at(&p, x)?;
        Ok((raw, projected))
    }

    /// `η(y)`.
    pub fn reconstruct<T: Real>(&self, p: &ModelParams<T>, y: &[T]) -> Result<Vec<T>> {
        let eta = self.eta.as_ref().ok_or(Error::MissingEta)?;
        check_dim("eta input", eta.in_dim, y.len())?;
        Ok(eta.eval(&p.eta, y))
    }

    /// Certificate `(V, w, l, W)` for the projected dynamics at `x`.
    pub fn certificate_at(&self, x: &[f64]) -> Result<Certificate> {
        let (_, m, _) = self.dims();
        let p = self.params();
        let dyn_d = self.eval_at(&p, x)?;
        let storage = self.spec.certificate_storage();
        let (l, w) = match self.spec.kind {
            ProjectionKind::Dissipative | ProjectionKind::IoStable => {
                (self.l_at(&p, x), self.spec.sqrt_r.as_matrix().clone())
            }
            ProjectionKind::General => {
                let (_, w) = self.spec.project_feedthrough(self.raw.j.as_ref())?;
                (self.l_at(&p, x), w)
            }
            ProjectionKind::Naive | ProjectionKind::Conservative => {
                (vec![0.0; m], self.spec.sqrt_r.as_matrix().clone())
            }
            ProjectionKind::Stable | ProjectionKind::PassiveBeta | ProjectionKind::PassiveAlpha => {
                let decay = crate::numerics::dot(&storage.grad(x), &dyn_d.f);
                (vec![(-decay).max(0.0).sqrt()], Matrix::zeros(1, m))
            }
        };
        Ok(Certificate {
            storage,
            supply: self.spec.supply.clone(),
            dyn_d,
            l,
            w,
        })
    }
}

/// Quadratic-matrix-equation form of the KYP conditions at one state:
/// `XᵀAX + BᵀX + XᵀB + C = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QmeInstance {
    /// `[[f, g], [h, j]]`, `(n+l) × (1+m)`.
    pub x: Matrix,
    /// `blkdiag(0, −Q)`.
    pub a: Matrix,
    /// `[[½∇V, 0], [0, −S]]`.
    pub b: Matrix,
    /// `[[‖l‖², lᵀW], [Wᵀl, WᵀW − R]]`.
    pub c: Matrix,
}

impl QmeInstance {
    pub fn residual(&self) -> Result<f64> {
        let xax = self.x.tr_matmul(&self.a.matmul(&self.x)?)?;
        let bx = self.b.tr_matmul(&self.x)?;
        let total = xax.add(&bx)?.add(&bx.transpose())?.add(&self.c)?;
        Ok(total.frobenius())
    }
}

pub fn qme_build(
    supply: &SupplyRate,
    grad_v: &[f64],
    d: &PointDyn<f64>,
    l: &[f64],
    w: &Matrix,
) -> Result<QmeInstance> {
    let n = grad_v.len();
    let m = supply.input_dim();
    let lo = supply.output_dim();
    check_dim("qme f", n, d.f.len())?;
    check_dim("qme g", n * m, d.g.len())?;
    check_dim("qme h", lo, d.h.len())?;
    check_dim("qme W rows", l.len(), w.rows())?;
    check_dim("qme W cols", m, w.cols())?;
    let mut x = Matrix::zeros(n + lo, 1 + m);
    let mut a = Matrix::zeros(n + lo, n + lo);
    let mut b = Matrix::zeros(n + lo, 1 + m);
    let mut c = Matrix::zeros(1 + m, 1 + m);
    for i in 0..n {
        x[(i, 0)] = d.f[i];
        for k in 0..m {
            x[(i, 1 + k)] = d.g[k * n + i];
        }
        b[(i, 0)] = 0.5 * grad_v[i];
    }
    for i in 0..lo {
        x[(n + i, 0)] = d.h[i];
        for k in 0..m {
            x[(n + i, 1 + k)] = d.j.as_ref().map_or(0.0, |j| j[(i, k)]);
            b[(n + i, 1 + k)] = -supply.s[(i, k)];
        }
        for k in 0..lo {
            a[(n + i, n + k)] = -supply.q.get(i, k);
        }
    }
    c[(0, 0)] = crate::numerics::norm_sq(l);
    let lw = w.tr_matvec(l)?;
    let wtw = w.tr_matmul(w)?;
    for k in 0..m {
        c[(0, 1 + k)] = lw[k];
        c[(1 + k, 0)] = lw[k];
        for k2 in 0..m {
            c[(1 + k, 1 + k2)] = wtw[(k, k2)] - supply.r.get(k, k2);
        }
    }
    Ok(QmeInstance { x, a, b, c })
}
