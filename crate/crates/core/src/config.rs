//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmarks::{MsdParams, SignalKind, SignalSpec, SystemSpec};
use crate::dynamics::SimConfig;
use crate::error::{Error, Result};
use crate::netcore::Activation;
use crate::numerics::SymMatrix;
use crate::projection::{NetArch, ProjectedModel, ProjectionKind, ProjectionSpec, RawDynamics};
use crate::supply::{StorageFunction, SupplyPreset};
use crate::training::{LossConfig, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub count: usize,
    /// Overrides the system's default sampling interval.
    pub dt: Option<f64>,
    /// Overrides the system's default number of steps per trajectory.
    pub horizon: Option<usize>,
    pub signal: SignalKind,
    pub amplitude: f64,
    pub variance: f64,
    pub min_segment: usize,
    pub max_segment: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            count: 100,
            dt: None,
            horizon: None,
            signal: SignalKind::Rectangle,
            amplitude: 1.0,
            variance: 0.005,
            min_segment: 5,
            max_segment: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Latent state dimension; defaults to the system's physical state dimension.
    pub state_dim: Option<usize>,
    pub f: NetArch,
    pub g: NetArch,
    pub h: NetArch,
    pub l: NetArch,
    pub eta: NetArch,
    /// Train a reconstruction map `η`.
    pub use_eta: bool,
    /// Constant feed-through `j` (rows of an `l × m` matrix); only for the general kind.
    pub j: Option<Vec<Vec<f64>>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            state_dim: None,
            f: NetArch::new(&[32, 32], Activation::Relu, 0.1),
            g: NetArch::new(&[32], Activation::Relu, 1.0),
            h: NetArch::affine().anchored(),
            l: NetArch::new(&[32], Activation::Relu, 1.0).anchored(),
            eta: NetArch::affine(),
            use_eta: true,
            j: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub kind: ProjectionKind,
    /// Defaults by kind: the system's own rate for conservative/dissipative, `γ² = 2`
    /// for io_stable.
    pub supply: Option<SupplyPreset>,
    /// Diagonal of `P` in `V = ½xᵀPx`; identity when absent.
    pub storage_diag: Option<Vec<f64>>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            kind: ProjectionKind::Conservative,
            supply: None,
            storage_diag: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub val_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { val_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub samples: usize,
    pub kyp_threshold: f64,
    pub idempotence_threshold: f64,
    pub hj_threshold: f64,
    pub c_tol: f64,
    pub rollouts: usize,
    pub gain_tol: f64,
    /// Euler substeps per sample in verification rollouts; the integration error of
    /// explicit Euler grows the storage by `O(dt)` and would otherwise swamp `c_tol`.
    pub substeps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            kyp_threshold: crate::verify::KYP_THRESHOLD,
            idempotence_threshold: crate::verify::IDEMPOTENCE_THRESHOLD,
            hj_threshold: crate::verify::HJ_THRESHOLD,
            c_tol: crate::verify::DEFAULT_C_TOL,
            rollouts: 20,
            gain_tol: 1e-2,
            substeps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub system: SystemSpec,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub projection: ProjectionConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            system: SystemSpec::Msd(MsdParams::default()),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            projection: ProjectionConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            training: TrainingConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let SystemSpec::Pendulum(p) = &self.system {
            p.validate()?;
        }
        if let SystemSpec::Msd(p) = &self.system {
            p.validate()?;
        }
        if !(0.0..1.0).contains(&self.training.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        self.optimizer.validate()?;
        self.sim_config().validate()?;
        if self.verify.substeps == 0 {
            return Err(Error::Config("verify.substeps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        let (dt, horizon) = self.system.default_grid();
        SimConfig::new(
            self.data.dt.unwrap_or(dt),
            self.data.horizon.unwrap_or(horizon),
        )
    }

    pub fn signal_spec(&self, kind: SignalKind, horizon: usize) -> SignalSpec {
        let d = &self.data;
        SignalSpec {
            kind,
            amplitude: d.amplitude,
            horizon,
            dt: self.sim_config().dt,
            seed: self.seed,
            channels: self.system.io_dims().map_or(1, |(m, _)| m),
            variance: d.variance,
            min_segment: d.min_segment,
            max_segment: d.max_segment,
        }
    }

    pub fn state_dim(&self) -> Result<usize> {
        if let Some(n) = self.model.state_dim {
            return Ok(n);
        }
        match &self.system {
            SystemSpec::Msd(_) => Ok(2),
            SystemSpec::Pendulum(p) => Ok(2 * p.n_links),
            SystemSpec::External { .. } => Err(Error::Config(
                "model.state_dim is required for external data".into(),
            )),
        }
    }

    pub fn supply_preset(&self) -> Result<SupplyPreset> {
        if let Some(p) = &self.projection.supply {
            return Ok(p.clone());
        }
        Ok(match self.projection.kind {
            ProjectionKind::Stable => SupplyPreset::Stable,
            ProjectionKind::IoStable => SupplyPreset::IoStable { gamma2: 2.0 },
            ProjectionKind::PassiveBeta | ProjectionKind::PassiveAlpha => SupplyPreset::Passive,
            ProjectionKind::Naive | ProjectionKind::Conservative | ProjectionKind::Dissipative => {
                match &self.system {
                    SystemSpec::Msd(p) => SupplyPreset::Msd { c: p.c },
                    SystemSpec::Pendulum(p) => SupplyPreset::Pendulum { c1: p.dampings[0] },
                    SystemSpec::External { .. } => SupplyPreset::Stable,
                }
            }
            ProjectionKind::General => {
                return Err(Error::Config(
                    "the general kind needs an explicit projection.supply".into(),
                ))
            }
        })
    }

    /// Builds an untrained model for input dim `m` and output dim `l`.
    pub fn build_model(&self, m: usize, l: usize) -> Result<ProjectedModel> {
        let n = self.state_dim()?;
        let mc = &self.model;
        let seed = self.seed;
        let mut raw = RawDynamics::new((n, m, l), &mc.f, &mc.g, &mc.h, seed);
        if let Some(rows) = &mc.j {
            raw.j = Some(crate::numerics::Matrix::from_rows(rows)?);
        }
        let kind = self.projection.kind;
        let supply = self.supply_preset()?.build(l, m)?;
        let storage = match &self.projection.storage_diag {
            Some(d) => StorageFunction::quadratic(SymMatrix::from_diag(d))?,
            None => StorageFunction::half_norm(n),
        };
        let l_net = kind
            .uses_l_net()
            .then(|| mc.l.build(n, m, seed.wrapping_add(3)));
        let spec = ProjectionSpec::new(kind, supply, storage, l_net)?;
        let eta = mc.use_eta.then(|| mc.eta.build(l, n, seed.wrapping_add(4)));
        ProjectedModel::new(raw, spec, eta)
    }
}
