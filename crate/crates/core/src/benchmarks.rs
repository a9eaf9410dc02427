//! Ground-truth systems, input signals and dataset files.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{time_grid, SimConfig, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{dot, Matrix};
use crate::supply::{StorageFunction, SupplyPreset, SupplyRate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// Piecewise constant `±amplitude` with random segment lengths.
    Rectangle,
    /// Constant `amplitude` from `t = 0`.
    Step,
    /// Cumulative sum of `N(0, variance)` increments.
    RandomWalk,
}

impl std::str::FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangle" => Ok(SignalKind::Rectangle),
            "step" => Ok(SignalKind::Step),
            "random_walk" => Ok(SignalKind::RandomWalk),
            _ => Err(Error::Config(format!("unknown signal kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub kind: SignalKind,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub horizon: usize,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Number of input channels.
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_variance")]
    pub variance: f64,
    /// Rectangle segment lengths are uniform in `[min_segment, max_segment]` steps.
    #[serde(default = "default_min_segment")]
    pub min_segment: usize,
    #[serde(default = "default_max_segment")]
    pub max_segment: usize,
}

fn default_amplitude() -> f64 {
    1.0
}
fn default_channels() -> usize {
    1
}
fn default_variance() -> f64 {
    0.005
}
fn default_min_segment() -> usize {
    5
}
fn default_max_segment() -> usize {
    30
}

impl SignalSpec {
    pub fn new(kind: SignalKind, horizon: usize, dt: f64, seed: u64) -> Self {
        Self {
            kind,
            amplitude: default_amplitude(),
            horizon,
            dt,
            seed,
            channels: default_channels(),
            variance: default_variance(),
            min_segment: default_min_segment(),
            max_segment: default_max_segment(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// `horizon × channels` input samples.
pub fn gen_signal(spec: &SignalSpec) -> Result<Vec<Vec<f64>>> {
    if spec.horizon == 0 {
        return Err(Error::Config("signal horizon must be at least 1".into()));
    }
    if spec.channels == 0 {
        return Err(Error::Config("signal needs at least one channel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = vec![vec![0.0; spec.channels]; spec.horizon];
    for c in 0..spec.channels {
        match spec.kind {
            SignalKind::Step => out.iter_mut().for_each(|r| r[c] = spec.amplitude),
            SignalKind::Rectangle => {
                if spec.min_segment == 0 || spec.min_segment > spec.max_segment {
                    return Err(Error::Config(format!(
                        "invalid rectangle segment range [{}, {}]",
                        spec.min_segment, spec.max_segment
                    )));
                }
                let mut k = 0;
                while k < spec.horizon {
                    let len = rng.random_range(spec.min_segment..=spec.max_segment);
                    let level = if rng.random_bool(0.5) {
                        spec.amplitude
                    } else {
                        -spec.amplitude
                    };
                    for row in out.iter_mut().skip(k).take(len) {
                        row[c] = level;
                    }
                    k += len;
                }
            }
            SignalKind::RandomWalk => {
                if !(spec.variance >= 0.0) {
                    return Err(Error::Config(
                        "random walk variance must be non-negative".into(),
                    ));
                }
                let normal = Normal::new(0.0, spec.variance.sqrt())
                    .map_err(|e| Error::Config(e.to_string()))?;
                let mut level = 0.0;
                for row in out.iter_mut() {
                    level += normal.sample(&mut rng);
                    row[c] = level;
                }
            }
        }
    }
    Ok(out)
}

/// Repeats every row `factor` times (zero-order hold on a finer grid).
pub fn upsample(u: &[Vec<f64>], factor: usize) -> Vec<Vec<f64>> {
    u.iter()
        .flat_map(|r| std::iter::repeat_n(r.clone(), factor))
        .collect()
}

/// Default internal RK4 substeps per sampling interval.
pub const SUBSTEPS: usize = 100;

fn rk4_step(rhs: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    let k1 = rhs(x);
    let k2 = rhs(&axpy(x, 0.5 * h, &k1));
    let k3 = rhs(&axpy(x, 0.5 * h, &k2));
    let k4 = rhs(&axpy(x, h, &k3));
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates `ẋ = rhs(x, u)` with held inputs and RK4 substeps.
fn integrate(
    rhs: &(dyn Fn(&[f64], &[f64]) -> Vec<f64> + Sync),
    output: &dyn Fn(&[f64]) -> Vec<f64>,
    u: &[Vec<f64>],
    cfg: &SimConfig,
    n: usize,
    substeps: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_dim("input signal rows", cfg.horizon, u.len())?;
    let substeps = substeps.max(1);
    let h = cfg.dt / substeps as f64;
    let mut x = cfg.initial_state(n)?;
    let mut states = Vec::with_capacity(cfg.horizon + 1);
    let mut outputs = Vec::with_capacity(cfg.horizon + 1);
    for k in 0..=cfg.horizon {
        states.push(x.clone());
        outputs.push(output(&x));
        if k < cfg.horizon {
            let uk = &u[k];
            let f = |x: &[f64]| rhs(x, uk);
            for _ in 0..substeps {
                x = rk4_step(&f, &x, h);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { step: k + 1 });
            }
        }
    }
    Ok(Trajectory {
        dt: cfg.dt,
        times: time_grid(cfg.dt, cfg.horizon),
        inputs: u.to_vec(),
        outputs,
        states: Some(states),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdParams {
    pub m: f64,
    pub k: f64,
    pub c: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            k: 1.0,
            c: 1.0,
        }
    }
}

impl MsdParams {
    pub fn validate(&self) -> Result<()> {
        if self.m > 0.0 && self.k > 0.0 && self.c > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(
                "mass-spring-damper parameters must be positive".into(),
            ))
        }
    }

    /// `ẋ = [[0, 1], [−k/m, −c/m]] x + [0, 1/m] u`.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vec![x[1], (-self.k * x[0] - self.c * x[1] + u[0]) / self.m]
    }

    /// `V = ½kq² + ½mq̇²`.
    pub fn storage(&self) -> StorageFunction {
        StorageFunction::quadratic(crate::numerics::SymMatrix::from_diag(&[self.k, self.m]))
            .expect("positive parameters")
    }

    /// `w = u q̇ − c q̇²`.
    pub fn supply(&self) -> SupplyRate {
        SupplyPreset::Msd { c: self.c }
            .build(2, 1)
            .expect("valid preset")
    }
}

pub fn simulate_msd(p: &MsdParams, u: &[Vec<f64>], cfg: &SimConfig) -> Result<Trajectory> {
    simulate_msd_with(p, u, cfg, SUBSTEPS)
}

pub fn simulate_msd_with(
    p: &MsdParams,
    u: &[Vec<f64>],
    cfg: &SimConfig,
    substeps: usize,
) -> Result<Trajectory> {
    p.validate()?;
    for row in u {
        check_dim("msd input width", 1, row.len())?;
    }
    integrate(&|x, u| p.rhs(x, u), &|x| x.to_vec(), u, cfg, 2, substeps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    pub n_links: usize,
    pub g_accel: f64,
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    pub dampings: Vec<f64>,
}

impl PendulumParams {
    /// `l_i = 1/n`, `m_i = 2(n+1)/n`, `c_i = 1`, `g = 9.81`.
    pub fn standard(n: usize) -> Self {
        let nf = n as f64;
        Self {
            n_links: n,
            g_accel: 9.81,
            lengths: vec![1.0 / nf; n],
            masses: vec![2.0 * (nf + 1.0) / nf; n],
            dampings: vec![1.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_links;
        if !(1..=3).contains(&n) {
            return Err(Error::Config(format!(
                "pendulum supports 1 to 3 links, got {n}"
            )));
        }
        check_dim("pendulum lengths", n, self.lengths.len())?;
        check_dim("pendulum masses", n, self.masses.len())?;
        check_dim("pendulum dampings", n, self.dampings.len())?;
        let all_pos = self
            .lengths
            .iter()
            .chain(&self.masses)
            .chain(&self.dampings)
            .all(|&v| v > 0.0);
        if !all_pos {
            return Err(Error::Config("pendulum parameters must be positive".into()));
        }
        Ok(())
    }

    /// `μ_j = Σ_{i ≥ j} m_i`.
    fn tail_masses(&self) -> Vec<f64> {
        let mut mu = self.masses.clone();
        for j in (0..mu.len().saturating_sub(1)).rev() {
            mu[j] += mu[j + 1];
        }
        mu
    }

    /// `a_jk = l_j l_k μ_max(j,k)`, so that `M_jk = a_jk cos(q_j − q_k)`.
    fn coupling(&self) -> Matrix {
        let n = self.n_links;
        let mu = self.tail_masses();
        let mut a = Matrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                a[(j, k)] = self.lengths[j] * self.lengths[k] * mu[j.max(k)];
            }
        }
        a
    }

    /// Tridiagonal damping matrix of the relative-velocity dissipation function.
    pub fn damping_matrix(&self) -> Matrix {
        let n = self.n_links;
        let c = &self.dampings;
        let mut d = Matrix::zeros(n, n);
        for j in 0..n {
            d[(j, j)] = c[j] + if j + 1 < n { c[j + 1] } else { 0.0 };
            if j + 1 < n {
                d[(j, j + 1)] = -c[j + 1];
                d[(j + 1, j)] = -c[j + 1];
            }
        }
        d
    }

    pub fn mass_matrix(&self, q: &[f64]) -> Matrix {
        let mut m = self.coupling();
        let n = self.n_links;
        for j in 0..n {
            for k in 0..n {
                m[(j, k)] *= (q[j] - q[k]).cos();
            }
        }
        m
    }

    /// `P(q) − P(0)` with angles measured from the downward vertical.
    pub fn potential(&self, q: &[f64]) -> f64 {
        let mu = self.tail_masses();
        (0..self.n_links)
            .map(|j| self.g_accel * self.lengths[j] * mu[j] * (1.0 - q[j].cos()))
            .sum()
    }

    pub fn kinetic(&self, q: &[f64], qd: &[f64]) -> f64 {
        let mqd = self.mass_matrix(q).matvec(qd).expect("dims");
        0.5 * dot(qd, &mqd)
    }

    /// `V(q, q̇) = P(q) − P(0) + K(q, q̇)` for state `x = (q, q̇)`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let n = self.n_links;
        self.potential(&x[..n]) + self.kinetic(&x[..n], &x[n..])
    }

    /// `q̈` from `M q̈ = τe₁ − Cq̇ − c(q, q̇) − ∂P/∂q`.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.n_links;
        let (q, qd) = (&x[..n], &x[n..]);
        let a = self.coupling();
        let mu = self.tail_masses();
        let damp = self.damping_matrix().matvec(qd).expect("dims");
        let mut force = vec![0.0; n];
        for j in 0..n {
            let coriolis: f64 = (0..n)
                .map(|k| a[(j, k)] * (q[j] - q[k]).sin() * qd[k] * qd[k])
                .sum();
            let gravity = self.g_accel * self.lengths[j] * mu[j] * q[j].sin();
            force[j] = -damp[j] - coriolis - gravity;
        }
        force[0] += u[0];
        let qdd = solve_spd(self.mass_matrix(q), force);
        let mut out = qd.to_vec();
        out.extend(qdd);
        out
    }

    /// `w = τ q̇₁ − c₁ q̇₁²` on outputs `(q₁, q̇₁)`.
    pub fn supply(&self) -> SupplyRate {
        SupplyPreset::Pendulum {
            c1: self.dampings[0],
        }
        .build(2, 1)
        .expect("valid preset")
    }
}

/// Gaussian elimination with partial pivoting for the small mass matrix.
fn solve_spd(mut a: Matrix, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap_or(col);
        if piv != col {
            for k in 0..n {
                let t = a[(col, k)];
                a[(col, k)] = a[(piv, k)];
                a[(piv, k)] = t;
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = a[(r, col)] / a[(col, col)];
            for k in col..n {
                a[(r, k)] -= f * a[(col, k)];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[(r, k)] * x[k]).sum();
        x[r] = (b[r] - s) / a[(r, r)];
    }
    x
}

pub fn simulate_pendulum(
    p: &PendulumParams,
    u: &[Vec<f64>],
    cfg: &SimConfig,
) -> Result<Trajectory> {
    simulate_pendulum_with(p, u, cfg, SUBSTEPS)
}

pub fn simulate_pendulum_with(
    p: &PendulumParams,
    u: &[Vec<f64>],
    cfg: &SimConfig,
    substeps: usize,
) -> Result<Trajectory> {
    p.validate()?;
    for row in u {
        check_dim("pendulum input width", 1, row.len())?;
    }
    let n = p.n_links;
    integrate(
        &|x, u| p.rhs(x, u),
        &|x| vec![x[0], x[n]],
        u,
        cfg,
        2 * n,
        substeps,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Msd(MsdParams),
    Pendulum(PendulumParams),
    /// Trajectory files produced elsewhere.
    External {
        path: PathBuf,
    },
}

impl SystemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Msd(_) => "msd",
            SystemSpec::Pendulum(_) => "pendulum",
            SystemSpec::External { .. } => "external",
        }
    }

    /// `(input dim, output dim)`.
    pub fn io_dims(&self) -> Option<(usize, usize)> {
        match self {
            SystemSpec::Msd(_) | SystemSpec::Pendulum(_) => Some((1, 2)),
            SystemSpec::External { .. } => None,
        }
    }

    /// Default `(dt, horizon)`: `0.1 × 100` for the mass-spring-damper, `0.01 × 100`
    /// for the pendulum.
    pub fn default_grid(&self) -> (f64, usize) {
        match self {
            SystemSpec::Pendulum(_) => (0.01, 100),
            _ => (0.1, 100),
        }
    }

    pub fn simulate(&self, u: &[Vec<f64>], cfg: &SimConfig) -> Result<Trajectory> {
        match self {
            SystemSpec::Msd(p) => simulate_msd(p, u, cfg),
            SystemSpec::Pendulum(p) => simulate_pendulum(p, u, cfg),
            SystemSpec::External { path } => Err(Error::Config(format!(
                "external system {} cannot be simulated",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub system: SystemSpec,
    pub dt: f64,
    pub horizon: usize,
    pub count: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn dt(&self) -> f64 {
        self.manifest.dt
    }

    /// `(m, l)`.
    pub fn io_dims(&self) -> (usize, usize) {
        self.trajectories
            .first()
            .map_or((0, 0), |t| (t.input_dim(), t.output_dim()))
    }

    pub fn split(&self, which: Split) -> Vec<&Trajectory> {
        self.manifest
            .files
            .iter()
            .zip(&self.trajectories)
            .filter(|(e, _)| e.split == which)
            .map(|(_, t)| t)
            .collect()
    }

    /// Training trajectories divided into `(fit, validation)`; the last
    /// `round(val_fraction · count)` training entries are held out.
    pub fn train_val(&self, val_fraction: f64) -> (Vec<&Trajectory>, Vec<&Trajectory>) {
        let train = self.split(Split::Train);
        let n_val = ((train.len() as f64) * val_fraction).round() as usize;
        let n_val = n_val.min(train.len().saturating_sub(1));
        let (fit, val) = train.split_at(train.len() - n_val);
        (fit.to_vec(), val.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(
            "manifest file count",
            self.manifest.files.len(),
            self.trajectories.len(),
        )?;
        let (m, l) = self.io_dims();
        for t in &self.trajectories {
            check_dim("dataset horizon", self.manifest.horizon, t.horizon())?;
            check_dim("dataset input dim", m, t.input_dim())?;
            check_dim("dataset output dim", l, t.output_dim())?;
            if (t.dt - self.manifest.dt).abs() > 1e-12 * self.manifest.dt.max(1.0) {
                return Err(Error::Config(format!(
                    "trajectory dt {} differs from dataset dt {}",
                    t.dt, self.manifest.dt
                )));
            }
        }
        Ok(())
    }

    /// Writes the manifest and every trajectory file into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (entry, traj) in self.manifest.files.iter().zip(&self.trajectories) {
            traj.save_csv(&dir.join(&entry.file))?;
        }
        let text = toml::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            row: e.span().map_or(0, |s| text[..s.start].lines().count()),
            msg: e.message().to_string(),
        })?;
        let trajectories = manifest
            .files
            .par_iter()
            .map(|e| Trajectory::load_csv(&dir.join(&e.file)))
            .collect::<Result<Vec<_>>>()?;
        let ds = Self {
            manifest,
            trajectories,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Seeded 90/10 train/test assignment.
pub fn split_assignment(count: usize, seed: u64) -> Vec<Split> {
    let n_test = ((count as f64) * 0.1).round().max(1.0) as usize;
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED));
    let mut out = vec![Split::Train; count];
    for &i in idx.iter().take(n_test.min(count)) {
        out[i] = Split::Test;
    }
    out
}

/// Simulates `count` trajectories driven by `signal` with per-sample seeds `seed + i`.
/// Writes them to `dir` when given.
pub fn make_dataset(
    system: &SystemSpec,
    signal: &SignalSpec,
    count: usize,
    seed: u64,
    dir: Option<&Path>,
) -> Result<Dataset> {
    if count < 2 {
        return Err(Error::Config(format!(
            "dataset needs at least 2 samples, got {count}"
        )));
    }
    let cfg = SimConfig::new(signal.dt, signal.horizon);
    let seeds: Vec<u64> = (0..count as u64).map(|i| seed.wrapping_add(i)).collect();
    let trajectories = seeds
        .par_iter()
        .map(|&s| system.simulate(&gen_signal(&signal.with_seed(s))?, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let splits = split_assignment(count, seed);
    let width = count.to_string().len().max(3);
    let files = seeds
        .iter()
        .zip(splits)
        .enumerate()
        .map(|(i, (&s, split))| ManifestEntry {
            file: format!("traj_{i:0width$}.csv"),
            seed: s,
            split,
        })
        .collect();
    let ds = Dataset {
        manifest: Manifest {
            system: system.clone(),
            dt: signal.dt,
            horizon: signal.horizon,
            count,
            seed,
            signal: Some(signal.clone()),
            config_hash: None,
            files,
        },
        trajectories,
    };
    if let Some(dir) = dir {
        ds.save(dir)?;
    }
    Ok(ds)
}

/// Reads trajectory files produced elsewhere. A directory is scanned for `*.csv`
/// in name order. Dimensions and grids must agree across files; the split is 90/10.
pub fn load_external(paths: &[PathBuf], seed: u64) -> Result<Dataset> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.len() < 2 {
        return Err(Error::Config(
            "external dataset needs at least 2 files".into(),
        ));
    }
    let trajectories = files
        .par_iter()
        .map(|f| Trajectory::load_csv(f))
        .collect::<Result<Vec<_>>>()?;
    let first = &trajectories[0];
    for (f, t) in files.iter().zip(&trajectories) {
        let mismatch = t.input_dim() != first.input_dim()
            || t.output_dim() != first.output_dim()
            || t.horizon() != first.horizon()
            || (t.dt - first.dt).abs() > 1e-12 * first.dt.max(1.0);
        if mismatch {
            return Err(Error::Format {
                path: f.clone(),
                row: 1,
                msg: "dimensions or time grid differ from the first file".into(),
            });
        }
    }
    let splits = split_assignment(files.len(), seed);
    let entries = files
        .iter()
        .zip(splits)
        .map(|(f, split)| ManifestEntry {
            file: f.to_string_lossy().into_owned(),
            seed: 0,
            split,
        })
        .collect();
    Ok(Dataset {
        manifest: Manifest {
            system: SystemSpec::External {
                path: paths.first().cloned().unwrap_or_default(),
            },
            dt: first.dt,
            horizon: first.horizon(),
            count: files.len(),
            seed,
            signal: None,
            config_hash: None,
            files: entries,
        },
        trajectories,
    })
}
