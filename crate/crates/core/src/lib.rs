//! Learning input-output dynamical systems with dissipativity guaranteed by construction.
//!
//! Raw network dynamics `(f, g, h, j)` are mapped pointwise onto the set of systems
//! satisfying the nonlinear KYP conditions for a chosen storage function and quadratic
//! supply rate, then integrated with explicit Euler and trained end to end.

pub mod benchmarks;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod netcore;
pub mod numerics;
pub mod projection;
pub mod supply;
pub mod training;
pub mod verify;

pub use config::ExperimentConfig;
pub use dynamics::{SimConfig, Trajectory};
pub use error::{Error, Result};
pub use netcore::{Activation, Mlp, Real, Tape, Var};
pub use numerics::{Ellipsoid, Matrix, SymMatrix};
pub use projection::{PointDyn, ProjectedModel, ProjectionKind, ProjectionSpec, RawDynamics};
pub use supply::{StorageFunction, SupplyPreset, SupplyRate};
