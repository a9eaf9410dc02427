//! Pointwise projection formulas, generic over plain values and tape variables.

use crate::netcore::Real;
use crate::numerics::{Matrix, SymMatrix};
use crate::supply::SupplyRate;

/// Values of `(f, g, h, j)` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDyn<T> {
    pub f: Vec<T>,
    /// `n × m`, column-major: column `k` is `g[k*n..(k+1)*n]`.
    pub g: Vec<T>,
    pub h: Vec<T>,
    /// Direct feed-through (`l × m`); `None` means zero.
    pub j: Option<Matrix>,
}

impl<T: Real> PointDyn<T> {
    pub fn state_dim(&self) -> usize {
        self.f.len()
    }

    pub fn input_dim(&self) -> usize {
        if self.f.is_empty() {
            0
        } else {
            self.g.len() / self.f.len()
        }
    }

    pub fn g_col(&self, k: usize) -> &[T] {
        let n = self.f.len();
        &self.g[k * n..(k + 1) * n]
    }

    /// `f + g u`.
    pub fn rhs(&self, u: &[T]) -> Vec<T> {
        let mut out = self.f.clone();
        for (k, &uk) in u.iter().enumerate() {
            for (o, &gi) in out.iter_mut().zip(self.g_col(k)) {
                *o += gi * uk;
            }
        }
        out
    }

    /// `h + j u`.
    pub fn output(&self, u: &[T]) -> Vec<T> {
        match &self.j {
            None => self.h.clone(),
            Some(j) => (0..self.h.len())
                .map(|i| self.h[i] + T::lincomb(j.row(i), u))
                .collect(),
        }
    }

    pub fn values(&self) -> PointDyn<f64> {
        PointDyn {
            f: self.f.iter().map(Real::value).collect(),
            g: self.g.iter().map(Real::value).collect(),
            h: self.h.iter().map(Real::value).collect(),
            j: self.j.clone(),
        }
    }
}

impl PointDyn<f64> {
    /// Max abs difference over all four components (a missing `j` counts as zero).
    pub fn max_abs_diff(&self, other: &PointDyn<f64>) -> f64 {
        let vec_diff = |a: &[f64], b: &[f64]| {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let j_diff = match (&self.j, &other.j) {
            (None, None) => 0.0,
            (Some(a), Some(b)) => a.max_abs_diff(b),
            (Some(a), None) | (None, Some(a)) => a.max_abs(),
        };
        vec_diff(&self.f, &other.f)
            .max(vec_diff(&self.g, &other.g))
            .max(vec_diff(&self.h, &other.h))
            .max(j_diff)
    }
}

/// `∇V(x)` with its squared norm floored at the epsilon guard.
#[derive(Debug, Clone)]
pub struct GradV<T> {
    pub gv: Vec<T>,
    pub norm_sq: T,
    pub denom: T,
}

impl<T: Real> GradV<T> {
    pub fn new(gv: Vec<T>, epsilon_guard: f64) -> Self {
        let norm_sq = T::dot(&gv, &gv);
        Self {
            denom: norm_sq.floor_at(epsilon_guard),
            gv,
            norm_sq,
        }
    }

    /// `(I − ∇V∇Vᵀ/‖∇V‖²) v`.
    pub fn complement(&self, v: &[T]) -> Vec<T> {
        let c = T::dot(&self.gv, v) / self.denom;
        v.iter()
            .zip(&self.gv)
            .map(|(&vi, &gi)| vi - gi * c)
            .collect()
    }

    /// `P^C v + ∇V·shift/‖∇V‖²`.
    fn complement_shift(&self, v: &[T], shift: T) -> Vec<T> {
        let c = (T::dot(&self.gv, v) - shift) / self.denom;
        v.iter()
            .zip(&self.gv)
            .map(|(&vi, &gi)| vi - gi * c)
            .collect()
    }

    /// `v − ∇V·c`.
    fn sub_along(&self, v: &[T], c: T) -> Vec<T> {
        v.iter()
            .zip(&self.gv)
            .map(|(&vi, &gi)| vi - gi * c)
            .collect()
    }
}

/// `hᵀ M h` for symmetric `M`.
pub(crate) fn quad<T: Real>(m: &SymMatrix, h: &[T]) -> T {
    let mm = m.as_matrix();
    let mut acc = T::zero();
    for (i, &hi) in h.iter().enumerate() {
        acc += hi * T::lincomb(mm.row(i), h);
    }
    acc
}

/// `vᵀ M` for `M` given by its transpose.
pub(crate) fn row_times<T: Real>(v: &[T], m_t: &Matrix) -> Vec<T> {
    (0..m_t.rows()).map(|k| T::lincomb(m_t.row(k), v)).collect()
}

/// `f_d = P^C f + ∇V·f_shift/‖∇V‖²`, `g_d[:, k] = P^C g[:, k] + ∇V·g_shift[k]/‖∇V‖²`.
fn shifted<T: Real>(gv: &GradV<T>, raw: &PointDyn<T>, f_shift: T, g_shift: &[T]) -> PointDyn<T> {
    let n = raw.state_dim();
    let mut g = Vec::with_capacity(raw.g.len());
    for (k, &shift) in g_shift.iter().enumerate() {
        g.extend(gv.complement_shift(&raw.g[k * n..(k + 1) * n], shift));
    }
    PointDyn {
        f: gv.complement_shift(&raw.f, f_shift),
        g,
        h: raw.h.clone(),
        j: raw.j.clone(),
    }
}

/// Dissipative projection for `j ≡ 0` and `R ⪰ 0`:
/// `f_d = P^C f + (hᵀQh − ‖l‖²)∇V/‖∇V‖²`, `g_d = P^C g + 2∇V(hᵀS − lᵀ√R)/‖∇V‖²`.
pub fn project_dissipative<T: Real>(
    supply: &SupplyRate,
    sqrt_r: &SymMatrix,
    gv: &GradV<T>,
    l: &[T],
    raw: &PointDyn<T>,
) -> PointDyn<T> {
    let h = &raw.h;
    let f_shift = quad(&supply.q, h) - T::dot(l, l);
    let hs = row_times(h, &supply.s.transpose());
    let lw = row_times(l, sqrt_r.as_matrix());
    let g_shift: Vec<T> = hs
        .iter()
        .zip(&lw)
        .map(|(&a, &b)| (a - b).scale(2.0))
        .collect();
    shifted(gv, raw, f_shift, &g_shift)
}

/// `f_d = f − ∇V·ReLU(∇Vᵀf)/‖∇V‖²`; `g`, `h` unchanged.
pub fn project_stable<T: Real>(gv: &GradV<T>, raw: &PointDyn<T>) -> PointDyn<T> {
    let c = T::dot(&gv.gv, &raw.f).relu() / gv.denom;
    PointDyn {
        f: gv.sub_along(&raw.f, c),
        g: raw.g.clone(),
        h: raw.h.clone(),
        j: raw.j.clone(),
    }
}

/// `f_d = P^C f − ∇V(‖h‖² + ‖l‖²)/‖∇V‖²`, `g_d = P^C g − 2γ∇V lᵀ/‖∇V‖²`.
pub fn project_io_stable<T: Real>(
    gamma: f64,
    gv: &GradV<T>,
    l: &[T],
    raw: &PointDyn<T>,
) -> PointDyn<T> {
    let f_shift = -(T::dot(&raw.h, &raw.h) + T::dot(l, l));
    let g_shift: Vec<T> = l.iter().map(|&lk| lk.scale(-2.0 * gamma)).collect();
    shifted(gv, raw, f_shift, &g_shift)
}

/// `R = 0`, `l = 0`: `f_d = P^C f + ∇V hᵀQh/‖∇V‖²`, `g_d = P^C g + 2∇V hᵀS/‖∇V‖²`.
pub fn project_conservative<T: Real>(
    supply: &SupplyRate,
    gv: &GradV<T>,
    raw: &PointDyn<T>,
) -> PointDyn<T> {
    let f_shift = quad(&supply.q, &raw.h);
    let g_shift: Vec<T> = row_times(&raw.h, &supply.s.transpose())
        .into_iter()
        .map(|v| v.scale(2.0))
        .collect();
    shifted(gv, raw, f_shift, &g_shift)
}

/// Lur'e residual `∇Vᵀg − 2hᵀ` (length `m`).
fn lure_residual<T: Real>(gv: &GradV<T>, g: &[T], h: &[T]) -> Vec<T> {
    let n = gv.gv.len();
    h.iter()
        .enumerate()
        .map(|(k, &hk)| T::dot(&gv.gv, &g[k * n..(k + 1) * n]) - hk.scale(2.0))
        .collect()
}

/// `f_d` as in [`project_stable`]; `g_d = g − ∇V(∇Vᵀg − 2hᵀ)/‖∇V‖²`; `h_d = h`.
pub fn project_passive_beta<T: Real>(gv: &GradV<T>, raw: &PointDyn<T>) -> PointDyn<T> {
    let mut out = project_stable(gv, raw);
    let n = raw.state_dim();
    let res = lure_residual(gv, &raw.g, &raw.h);
    out.g.clear();
    for (k, &r) in res.iter().enumerate() {
        out.g
            .extend(gv.sub_along(&raw.g[k * n..(k + 1) * n], r / gv.denom));
    }
    out
}

/// Joint minimum-norm correction of `g` and `h`:
/// `g_d = g − ∇V r/(4 + ‖∇V‖²)`, `h_d = h + 2r/(4 + ‖∇V‖²)` with `r = ∇Vᵀg − 2hᵀ`.
pub fn project_passive_alpha<T: Real>(gv: &GradV<T>, raw: &PointDyn<T>) -> PointDyn<T> {
    let mut out = project_stable(gv, raw);
    let n = raw.state_dim();
    let res = lure_residual(gv, &raw.g, &raw.h);
    let denom = gv.norm_sq + T::cst(4.0);
    out.g.clear();
    out.h.clear();
    for (k, &r) in res.iter().enumerate() {
        let c = r / denom;
        out.g.extend(gv.sub_along(&raw.g[k * n..(k + 1) * n], c));
        out.h.push(raw.h[k] + c.scale(2.0));
    }
    out
}

/// General dissipative projection for a feed-through `j_d` already on the ellipsoid and
/// `W = P_W(j)`: `f_d = P^C f + (hᵀQh − ‖l‖²)∇V/‖∇V‖²`,
/// `g_d = P^C g + 2∇V(hᵀ(S + Q j_d) − lᵀW)/‖∇V‖²`.
pub fn project_general_point<T: Real>(
    supply: &SupplyRate,
    j_d: &Matrix,
    w: &Matrix,
    gv: &GradV<T>,
    l: &[T],
    raw: &PointDyn<T>,
) -> PointDyn<T> {
    let h = &raw.h;
    let f_shift = quad(&supply.q, h) - T::dot(l, l);
    let s_eff = supply
        .s
        .add(&supply.q.as_matrix().matmul(j_d).expect("Q j dims"))
        .expect("S + Qj dims");
    let hs = row_times(h, &s_eff.transpose());
    let lw = row_times(l, &w.transpose());
    let g_shift: Vec<T> = hs
        .iter()
        .zip(&lw)
        .map(|(&a, &b)| (a - b).scale(2.0))
        .collect();
    let mut out = shifted(gv, raw, f_shift, &g_shift);
    out.j = Some(j_d.clone());
    out
}
