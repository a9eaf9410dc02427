//! Fixtures shared by the criterion benches.

use dissipnet_core::benchmarks::{make_dataset, Dataset, SignalKind};
use dissipnet_core::numerics::{Matrix, SymMatrix};
use dissipnet_core::training::proj_samples;
use dissipnet_core::{ExperimentConfig, ProjectedModel, ProjectionKind};

/// Positive definite `n × n` matrix `XᵀX + I` with standard-normal `X`.
pub fn spd(n: usize, seed: u64) -> SymMatrix {
    let rows = proj_samples(n, n, seed);
    let x = Matrix::from_rows(&rows).expect("square rows");
    SymMatrix::gram(&x)
        .add(&SymMatrix::identity(n))
        .expect("same dim")
}

/// Default experiment on the mass-spring-damper with the given projection kind.
pub fn msd_config(kind: ProjectionKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.projection.kind = kind;
    cfg
}

pub fn msd_model(kind: ProjectionKind) -> ProjectedModel {
    msd_config(kind)
        .build_model(1, 2)
        .expect("valid default config")
}

pub fn msd_dataset(count: usize) -> Dataset {
    let cfg = msd_config(ProjectionKind::Conservative);
    let spec = cfg.signal_spec(SignalKind::Rectangle, cfg.sim_config().horizon);
    make_dataset(&cfg.system, &spec, count, 0, None).expect("simulation")
}
