//! Regularized rollout loss and a deterministic minibatch trainer.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout, simulate, SimConfig, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::netcore::{Real, Tape, Var};
use crate::projection::{ModelParams, ProjectedModel};

/// Loss assigned to a trajectory whose rollout diverged; its gradient is zero.
pub const CAPPED_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub n_proj_samples: usize,
    pub rng_seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.001,
            lambda2: 1e-4,
            n_proj_samples: 100,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adam,
    AdamW,
    RmsProp,
    Momentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the batch gradient to at most this norm.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Adam,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            batch_size: 32,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Moment estimates carried between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = &self.config;
        self.step += 1;
        let mut scale = 1.0;
        if let Some(max) = c.clip_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max {
                scale = max / norm;
            }
        }
        let lr = c.learning_rate;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for i in 0..params.len() {
            let mut g = grad[i] * scale;
            if c.algorithm != Algorithm::AdamW {
                g += c.weight_decay * params[i];
            }
            match c.algorithm {
                Algorithm::Adam | Algorithm::AdamW => {
                    self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
                    self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
                    let mh = self.m[i] / bc1;
                    let vh = self.v[i] / bc2;
                    if c.algorithm == Algorithm::AdamW {
                        params[i] -= lr * c.weight_decay * params[i];
                    }
                    params[i] -= lr * mh / (vh.sqrt() + c.eps);
                }
                Algorithm::RmsProp => {
                    self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
                    params[i] -= lr * g / (self.v[i].sqrt() + c.eps);
                }
                Algorithm::Momentum => {
                    self.m[i] = c.beta1 * self.m[i] + g;
                    params[i] -= lr * self.m[i];
                }
            }
        }
    }
}

/// Mean squared output error over time and output channels.
fn traj_mse<T: Real>(pred: &[Vec<T>], target: &[Vec<f64>]) -> Result<T> {
    check_dim("prediction length", target.len(), pred.len())?;
    let mut acc = T::zero();
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(target) {
        check_dim("prediction width", t.len(), p.len())?;
        for (&pi, &ti) in p.iter().zip(t) {
            let e = pi - T::cst(ti);
            acc += e * e;
            count += 1;
        }
    }
    Ok(acc.scale(1.0 / count.max(1) as f64))
}

/// `E‖x − η(h(x))‖²` over `states`.
fn recons_term<T: Real>(
    model: &ProjectedModel,
    p: &ModelParams<T>,
    states: &[Vec<T>],
) -> Result<T> {
    let mut acc = T::zero();
    for x in states {
        let h = model.raw.h.eval(&p.h, x);
        let xr = model.reconstruct(p, &h)?;
        for (&a, &b) in x.iter().zip(&xr) {
            let e = a - b;
            acc += e * e;
        }
    }
    Ok(acc.scale(1.0 / states.len().max(1) as f64))
}

/// `‖f − f_d‖² + ‖g − g_d‖² + ‖h − h_d‖²` averaged over `xs`.
fn proj_term<T: Real>(model: &ProjectedModel, p: &ModelParams<T>, xs: &[Vec<f64>]) -> Result<T> {
    let mut acc = T::zero();
    for x in xs {
        let xt: Vec<T> = x.iter().map(|&v| T::cst(v)).collect();
        let raw = model.raw_at(p, &xt);
        let proj = model.eval_at(p, &xt)?;
        for (a, b) in [(&raw.f, &proj.f), (&raw.g, &proj.g), (&raw.h, &proj.h)] {
            for (&ai, &bi) in a.iter().zip(b) {
                let e = ai - bi;
                acc += e * e;
            }
        }
    }
    Ok(acc.scale(1.0 / xs.len().max(1) as f64))
}

/// Standard-normal states for the projection-distance term.
pub fn proj_samples(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Seed of the projection samples for `epoch`.
pub fn epoch_seed(rng_seed: u64, epoch: usize) -> u64 {
    rng_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(epoch as u64)
}

/// Value and parameter gradient of a scalar loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn x0_for(model: &ProjectedModel) -> Vec<f64> {
    vec![0.0; model.dims().0]
}

/// Output MSE of one rollout with its gradient; `None` when the rollout diverges.
fn traj_loss_grad(
    model: &ProjectedModel,
    traj: &Trajectory,
    lambda2: f64,
) -> Result<Option<(f64, f64, Vec<f64>)>> {
    let tape = Tape::new();
    let p = model.params_on(&tape);
    let (states, outputs) = match rollout(model, &p, &x0_for(model), &traj.inputs, traj.dt) {
        Ok(r) => r,
        Err(Error::NonFiniteState { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mse = traj_mse(&outputs, &traj.outputs)?;
    if !mse.value().is_finite() {
        return Ok(None);
    }
    let mut total = mse;
    let mut recons_val = 0.0;
    if lambda2 > 0.0 && model.eta.is_some() {
        let r = recons_term(model, &p, &states)?;
        recons_val = r.value();
        total += r.scale(lambda2);
    }
    let grad = gradient_of(&tape, &p, total);
    Ok(Some((mse.value(), recons_val, grad)))
}

fn gradient_of(tape: &Tape, p: &ModelParams<Var<'_>>, out: Var<'_>) -> Vec<f64> {
    let adj = tape.gradient(out);
    adj.wrt_all(&p.flatten())
}

/// Batch-mean output MSE along rollouts from rest, with its gradient.
/// Diverging rollouts contribute `CAPPED_LOSS` and no gradient.
pub fn loss_mse(model: &ProjectedModel, batch: &[&Trajectory]) -> Result<LossGrad> {
    let parts = batch_parts(model, batch, 0.0)?;
    Ok(parts.mse)
}

/// Mean reconstruction error `‖x − η(h(x))‖²` over `states`.
pub fn loss_recons(model: &ProjectedModel, states: &[Vec<f64>]) -> Result<LossGrad> {
    if model.eta.is_none() {
        return Err(Error::MissingEta);
    }
    let tape = Tape::new();
    let p = model.params_on(&tape);
    let xs: Vec<Vec<Var<'_>>> = states
        .iter()
        .map(|x| x.iter().map(|&v| Var::cst(v)).collect())
        .collect();
    let r = recons_term(model, &p, &xs)?;
    Ok(LossGrad {
        value: r.value(),
        grad: gradient_of(&tape, &p, r),
    })
}

/// Projection distance at `cfg.n_proj_samples` standard-normal states drawn from `seed`.
pub fn loss_proj(model: &ProjectedModel, cfg: &LossConfig, seed: u64) -> Result<LossGrad> {
    let xs = proj_samples(model.dims().0, cfg.n_proj_samples, seed);
    loss_proj_at(model, &xs)
}

pub fn loss_proj_at(model: &ProjectedModel, xs: &[Vec<f64>]) -> Result<LossGrad> {
    let tape = Tape::new();
    let p = model.params_on(&tape);
    let r = proj_term(model, &p, xs)?;
    Ok(LossGrad {
        value: r.value(),
        grad: gradient_of(&tape, &p, r),
    })
}

struct BatchParts {
    mse: LossGrad,
    recons: LossGrad,
    capped: usize,
}

fn batch_parts(model: &ProjectedModel, batch: &[&Trajectory], lambda2: f64) -> Result<BatchParts> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let n_params = model.param_count();
    let per: Vec<Option<(f64, f64, Vec<f64>)>> = batch
        .par_iter()
        .map(|t| traj_loss_grad(model, t, lambda2))
        .collect::<Result<Vec<_>>>()?;
    let b = batch.len() as f64;
    let mut mse = 0.0;
    let mut recons = 0.0;
    let mut grad = vec![0.0; n_params];
    let mut capped = 0;
    for item in per {
        match item {
            Some((v, r, g)) => {
                mse += v / b;
                recons += r / b;
                for (a, gi) in grad.iter_mut().zip(g) {
                    *a += gi / b;
                }
            }
            None => {
                mse += CAPPED_LOSS / b;
                capped += 1;
            }
        }
    }
    Ok(BatchParts {
        mse: LossGrad { value: mse, grad },
        recons: LossGrad {
            value: recons,
            grad: Vec::new(),
        },
        capped,
    })
}

/// Value and gradient of `MSE + λ₁·L_proj + λ₂·L_recons` on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub mse: f64,
    pub l_proj: f64,
    pub l_recons: f64,
    pub total: f64,
    pub grad: Vec<f64>,
    pub capped: usize,
}

pub fn total_loss(
    model: &ProjectedModel,
    batch: &[&Trajectory],
    cfg: &LossConfig,
    proj_xs: &[Vec<f64>],
) -> Result<TotalLoss> {
    let parts = batch_parts(model, batch, cfg.lambda2)?;
    let mut grad = parts.mse.grad;
    let mut l_proj = 0.0;
    if cfg.lambda1 > 0.0 && !proj_xs.is_empty() {
        let lp = loss_proj_at(model, proj_xs)?;
        l_proj = lp.value;
        for (a, g) in grad.iter_mut().zip(lp.grad) {
            *a += cfg.lambda1 * g;
        }
    }
    let l_recons = parts.recons.value;
    Ok(TotalLoss {
        mse: parts.mse.value,
        l_proj,
        l_recons,
        total: parts.mse.value + cfg.lambda1 * l_proj + cfg.lambda2 * l_recons,
        grad,
        capped: parts.capped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub l_proj: f64,
    pub l_recons: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_mse: Option<f64>,
    pub capped: usize,
    /// Not covered by the reproducibility guarantee.
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub capped_events: usize,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ProjectedModel,
    pub optimizer: Optimizer,
    pub loss: LossConfig,
    pub epochs_done: usize,
}

impl Checkpoint {
    pub fn fresh(model: ProjectedModel, opt: OptimizerConfig, loss: LossConfig) -> Self {
        let n = model.param_count();
        Self {
            model,
            optimizer: Optimizer::new(opt, n),
            loss,
            epochs_done: 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            row: e.line(),
            msg: e.to_string(),
        })
    }
}

/// Batch-mean output MSE without gradients; diverging rollouts count as `CAPPED_LOSS`.
pub fn eval_mse(model: &ProjectedModel, trajs: &[&Trajectory]) -> Result<f64> {
    if trajs.is_empty() {
        return Ok(0.0);
    }
    let p = model.params();
    let x0 = x0_for(model);
    let vals = trajs
        .par_iter()
        .map(|t| match rollout(model, &p, &x0, &t.inputs, t.dt) {
            Ok((_, y)) => traj_mse(&y, &t.outputs),
            Err(Error::NonFiniteState { .. }) => Ok(CAPPED_LOSS),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Runs `epochs` further epochs on `ckpt` (until `opt.epochs` in total).
pub fn train(
    ckpt: &mut Checkpoint,
    train_set: &[&Trajectory],
    val_set: &[&Trajectory],
) -> Result<TrainReport> {
    train_with(ckpt, train_set, val_set, |_| {})
}

pub fn train_with(
    ckpt: &mut Checkpoint,
    train_set: &[&Trajectory],
    val_set: &[&Trajectory],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    ckpt.optimizer.config.validate()?;
    let (_, m, l) = ckpt.model.dims();
    for t in train_set.iter().chain(val_set) {
        check_dim("trajectory input dim", m, t.input_dim())?;
        check_dim("trajectory output dim", l, t.output_dim())?;
    }
    let n = ckpt.model.dims().0;
    let cfg = ckpt.loss.clone();
    let total_epochs = ckpt.optimizer.config.epochs;
    let batch_size = ckpt.optimizer.config.batch_size;
    let mut report = TrainReport {
        epochs: Vec::new(),
        capped_events: 0,
    };
    let mut flat = ckpt.model.flat_params();
    while ckpt.epochs_done < total_epochs {
        let epoch = ckpt.epochs_done;
        let start = Instant::now();
        let seed = epoch_seed(cfg.rng_seed, epoch);
        let proj_xs = if cfg.lambda1 > 0.0 {
            proj_samples(n, cfg.n_proj_samples, seed)
        } else {
            Vec::new()
        };
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xBA7C_4E5));
        let mut sums = [0.0f64; 4];
        let mut capped = 0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Trajectory> = chunk.iter().map(|&i| train_set[i]).collect();
            let loss = total_loss(&ckpt.model, &batch, &cfg, &proj_xs)?;
            ckpt.optimizer.apply(&mut flat, &loss.grad);
            ckpt.model.set_flat_params(&flat)?;
            sums[0] += loss.mse;
            sums[1] += loss.l_proj;
            sums[2] += loss.l_recons;
            sums[3] += loss.total;
            capped += loss.capped;
            batches += 1;
        }
        let nb = batches as f64;
        let val_mse = if val_set.is_empty() {
            None
        } else {
            Some(eval_mse(&ckpt.model, val_set)?)
        };
        ckpt.epochs_done += 1;
        let rec = EpochRecord {
            epoch,
            mse: sums[0] / nb,
            l_proj: sums[1] / nb,
            l_recons: sums[2] / nb,
            total: sums[3] / nb,
            val_mse,
            capped,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        report.capped_events += capped;
        on_epoch(&rec);
        report.epochs.push(rec);
    }
    Ok(report)
}

/// `RMSE(t)_k = sqrt(mean over trajectories and channels of (pred − target)²)` at step `k`.
pub fn rmse_t(pred: &[Vec<Vec<f64>>], target: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    check_dim("rmse trajectory count", target.len(), pred.len())?;
    let steps = target.first().map_or(0, Vec::len);
    let mut sums = vec![0.0; steps];
    let mut counts = vec![0usize; steps];
    for (p, t) in pred.iter().zip(target) {
        check_dim("rmse steps", steps, t.len())?;
        check_dim("rmse steps", steps, p.len())?;
        for k in 0..steps {
            check_dim("rmse channels", t[k].len(), p[k].len())?;
            for (a, b) in p[k].iter().zip(&t[k]) {
                sums[k] += (a - b) * (a - b);
            }
            counts[k] += t[k].len();
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (s / c.max(1) as f64).sqrt())
        .collect())
}

/// Time mean of [`rmse_t`].
pub fn rmse(pred: &[Vec<Vec<f64>>], target: &[Vec<Vec<f64>>]) -> Result<f64> {
    let series = rmse_t(pred, target)?;
    Ok(series.iter().sum::<f64>() / series.len().max(1) as f64)
}

/// Outputs of rollouts from rest on the inputs of each trajectory. A diverging
/// rollout yields `+∞` rows so that its RMSE is infinite rather than an error.
pub fn predict_outputs(
    model: &ProjectedModel,
    trajs: &[&Trajectory],
) -> Result<Vec<Vec<Vec<f64>>>> {
    trajs
        .par_iter()
        .map(|t| {
            let cfg = SimConfig::new(t.dt, t.horizon());
            match simulate(model, &t.inputs, &cfg) {
                Ok(p) => Ok(p.outputs),
                Err(Error::NonFiniteState { .. }) => {
                    Ok(vec![vec![f64::INFINITY; model.dims().2]; t.horizon() + 1])
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}
