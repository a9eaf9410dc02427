#![allow(dead_code)]

use dissipnet_core::numerics::{Matrix, SymMatrix};
use dissipnet_core::projection::NetArch;
use dissipnet_core::supply::{StorageFunction, SupplyPreset, SupplyRate};
use dissipnet_core::{
    Activation, Mlp, ProjectedModel, ProjectionKind, ProjectionSpec, RawDynamics,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const N: usize = 3;
pub const M: usize = 2;
pub const L: usize = 2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn normal_samples(seed: u64, n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count).map(|_| normal_vec(&mut r, n)).collect()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_row_major(rows, cols, normal_vec(rng, rows * cols)).unwrap()
}

/// `G Gᵀ` for a Gaussian `G`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    SymMatrix::gram(&normal_matrix(rng, n, n).transpose())
}

/// Indefinite `Q`, random `S`, PSD `R`.
pub fn dissipative_supply(rng: &mut ChaCha8Rng) -> SupplyRate {
    let q = SymMatrix::from_rows(&[vec![-1.0, 0.3], vec![0.3, 0.5]]).unwrap();
    let s = normal_matrix(rng, L, M).scale(0.5);
    let r = random_psd(rng, M);
    SupplyRate::new(q, s, r).unwrap()
}

/// `Q ≺ 0` with `R − SᵀQ⁻¹S ≻ 0`.
pub fn general_supply(rng: &mut ChaCha8Rng) -> SupplyRate {
    let q = random_psd(rng, L)
        .add(&SymMatrix::identity(L))
        .unwrap()
        .scale(-1.0);
    let s = normal_matrix(rng, L, M).scale(0.5);
    let q_inv = q.scale(-1.0).inverse_pd().unwrap();
    let base = q_inv.congruence(&s).unwrap();
    let r = base
        .add(&random_psd(rng, M).scale(0.5))
        .unwrap()
        .add(&SymMatrix::scaled_identity(M, 0.2))
        .unwrap();
    SupplyRate::new(q, s, r).unwrap()
}

pub fn supply_for(kind: ProjectionKind, rng: &mut ChaCha8Rng) -> SupplyRate {
    match kind {
        ProjectionKind::Stable => SupplyPreset::Stable.build(L, M).unwrap(),
        ProjectionKind::IoStable => SupplyPreset::IoStable { gamma2: 2.0 }.build(L, M).unwrap(),
        ProjectionKind::PassiveBeta | ProjectionKind::PassiveAlpha => {
            SupplyPreset::Passive.build(L, M).unwrap()
        }
        ProjectionKind::Conservative => {
            let s = dissipative_supply(rng);
            SupplyRate::new(s.q, s.s, SymMatrix::zeros(M)).unwrap()
        }
        ProjectionKind::General => general_supply(rng),
        ProjectionKind::Naive | ProjectionKind::Dissipative => dissipative_supply(rng),
    }
}

pub fn arch() -> NetArch {
    NetArch::new(&[8], Activation::Sigmoid, 1.0)
}

/// Random model of `kind` with `(n, m, l) = (3, 2, 2)` and `V = ½xᵀPx`; `h` and `l`
/// vanish at the origin so rollouts from rest stay regular.
pub fn random_model(kind: ProjectionKind, seed: u64) -> ProjectedModel {
    let mut r = rng(seed ^ 0x5151);
    let supply = supply_for(kind, &mut r);
    let p = random_psd(&mut r, N).add(&SymMatrix::identity(N)).unwrap();
    let storage = StorageFunction::quadratic(p).unwrap();
    let a = arch();
    let mut raw = RawDynamics::new((N, M, L), &a, &a, &a.clone().anchored(), seed);
    if kind == ProjectionKind::General {
        raw.j = Some(normal_matrix(&mut r, L, M).scale(2.0));
    }
    let l_net = kind
        .uses_l_net()
        .then(|| a.clone().anchored().build(N, M, seed + 7));
    let spec = ProjectionSpec::new(kind, supply, storage, l_net).unwrap();
    let eta = Some(Mlp::new(L, N, &[], Activation::Relu, 1.0, seed + 9));
    ProjectedModel::new(raw, spec, eta).unwrap()
}

/// Same as [`random_model`] with `V = ½‖x‖²`.
pub fn random_model_half_norm(kind: ProjectionKind, seed: u64) -> ProjectedModel {
    let mut m = random_model(kind, seed);
    let spec = ProjectionSpec::new(
        m.spec.kind,
        m.spec.supply.clone(),
        StorageFunction::half_norm(N),
        m.spec.l_net.clone(),
    )
    .unwrap();
    m.spec = spec;
    m
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    let d = max_abs_diff(a, b);
    assert!(d <= tol, "max abs diff {d:e} > {tol:e}: {a:?} vs {b:?}");
}
