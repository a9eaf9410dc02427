use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use dissipnet_core::benchmarks::{
    gen_signal, load_external, make_dataset, upsample, Dataset, ManifestEntry, SignalKind, Split,
    SystemSpec,
};
use dissipnet_core::dynamics::{simulate, time_grid, SimConfig, Trajectory};
use dissipnet_core::training::{
    predict_outputs, proj_samples, rmse, rmse_t, train_with, Checkpoint, EpochRecord,
};
use dissipnet_core::verify::{
    dissipativity_check, gain_check, hj_check, idempotence_audit, kyp_audit, lyapunov_audit,
    DissipationMode, DissipationOptions, Quadrature, VerifyReport,
};
use dissipnet_core::{Error, ExperimentConfig, ProjectedModel, ProjectionKind};
use sha2::{Digest, Sha256};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_VERIFY: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Verify(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Verify(_) => EXIT_VERIFY,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Verify(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidPreset(_) | Error::DimensionMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub struct Context {
    pub cfg: ExperimentConfig,
}

impl Context {
    pub fn load(config: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg = match config {
            Some(p) => ExperimentConfig::load(&p).map_err(|e| match e {
                Error::Io { .. } => CliError::Config(e.to_string()),
                e => e.into(),
            })?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(Self { cfg })
    }

    fn dataset_dir(&self, given: Option<PathBuf>) -> PathBuf {
        given.unwrap_or_else(|| self.cfg.out_dir.join("data"))
    }

    fn checkpoint_path(&self, given: Option<PathBuf>) -> PathBuf {
        given.unwrap_or_else(|| self.cfg.out_dir.join("train").join(CHECKPOINT_FILE))
    }

    /// SHA-256 of the canonical TOML form, after command-line overrides.
    pub fn config_hash(&self) -> Result<String, CliError> {
        let digest = Sha256::digest(self.cfg.to_toml()?.as_bytes());
        Ok(digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "train_report.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const RMSE_T_FILE: &str = "rmse_t.csv";
pub const VERIFY_FILE: &str = "verify_report.txt";

pub fn generate(
    ctx: &Context,
    out: Option<PathBuf>,
    signal: Option<SignalKind>,
    horizon: Option<usize>,
) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let dir = ctx.dataset_dir(out);
    let mut ds = match &cfg.system {
        SystemSpec::External { path } => {
            let mut ds = load_external(std::slice::from_ref(path), cfg.seed)?;
            // entries point at the source files; the copy gets local names
            let width = ds.trajectories.len().to_string().len().max(3);
            for (i, e) in ds.manifest.files.iter_mut().enumerate() {
                *e = ManifestEntry {
                    file: format!("traj_{i:0width$}.csv"),
                    ..e.clone()
                };
            }
            ds
        }
        system => {
            let sim = cfg.sim_config();
            let spec = cfg.signal_spec(
                signal.unwrap_or(cfg.data.signal),
                horizon.unwrap_or(sim.horizon),
            );
            make_dataset(system, &spec, cfg.data.count, cfg.seed, None)?
        }
    };
    ds.manifest.config_hash = Some(ctx.config_hash()?);
    ds.save(&dir)?;
    let n_test = ds.split(Split::Test).len();
    println!(
        "wrote {} trajectories ({} train, {} test) to {}",
        ds.trajectories.len(),
        ds.trajectories.len() - n_test,
        n_test,
        dir.display()
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    Dataset::load(dir).map_err(|e| match e {
        Error::Io { .. } => CliError::Config(format!("cannot read dataset: {e}")),
        e => e.into(),
    })
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| match e {
        Error::Io { .. } => CliError::Config(format!("cannot read checkpoint: {e}")),
        e => e.into(),
    })
}

fn report_row(r: &EpochRecord) -> String {
    format!(
        "{},{:e},{:e},{:e},{:e},{},{},{}\n",
        r.epoch,
        r.mse,
        r.l_proj,
        r.l_recons,
        r.total,
        r.val_mse.map_or(String::new(), |v| format!("{v:e}")),
        r.capped,
        r.wall_ms
    )
}

/// Test-split metrics shared by `train` and `eval`.
struct Metrics {
    rmse: f64,
    series: Vec<f64>,
    diverged: usize,
}

fn metrics(model: &ProjectedModel, set: &[&Trajectory]) -> Result<Metrics, CliError> {
    if set.is_empty() {
        return Err(CliError::Config("evaluation set is empty".into()));
    }
    let pred = predict_outputs(model, set)?;
    let target: Vec<Vec<Vec<f64>>> = set.iter().map(|t| t.outputs.clone()).collect();
    let diverged = pred
        .iter()
        .filter(|p| p.iter().flatten().any(|v| !v.is_finite()))
        .count();
    Ok(Metrics {
        rmse: rmse(&pred, &target)?,
        series: rmse_t(&pred, &target)?,
        diverged,
    })
}

fn write_metrics(
    dir: &Path,
    m: &Metrics,
    dt: f64,
    extra: &[(&str, String)],
) -> Result<(), CliError> {
    let mut text = String::new();
    for (k, v) in extra {
        let _ = writeln!(text, "{k} = {v}");
    }
    let _ = writeln!(text, "rmse = {:e}", m.rmse);
    let _ = writeln!(text, "diverged = {}", m.diverged);
    write_file(&dir.join(METRICS_FILE), &text)?;
    let mut series = String::from("t,rmse\n");
    for (t, r) in time_grid(dt, m.series.len().saturating_sub(1))
        .iter()
        .zip(&m.series)
    {
        let _ = writeln!(series, "{t},{r:e}");
    }
    write_file(&dir.join(RMSE_T_FILE), &series)
}

pub fn train(
    ctx: &Context,
    dataset: Option<PathBuf>,
    resume: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let ds = load_dataset(&ctx.dataset_dir(dataset))?;
    let out = out.unwrap_or_else(|| cfg.out_dir.join("train"));
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let (m, l) = ds.io_dims();
    let resuming = resume.is_some();
    let mut ckpt = match resume {
        Some(p) => {
            let mut c = load_checkpoint(&p)?;
            c.optimizer.config.epochs = cfg.optimizer.epochs;
            c
        }
        None => Checkpoint::fresh(
            cfg.build_model(m, l)?,
            cfg.optimizer.clone(),
            cfg.loss.clone(),
        ),
    };
    let report_path = out.join(REPORT_FILE);
    let append = resuming && report_path.exists();
    let mut report = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&report_path)
        .map_err(|e| io_err(&report_path, e))?;
    if !append {
        report
            .write_all(b"epoch,mse,l_proj,l_recons,total,val_mse,capped,wall_ms\n")
            .map_err(|e| io_err(&report_path, e))?;
    }
    let (fit, val) = ds.train_val(cfg.training.val_fraction);
    let mut write_err = None;
    let summary = train_with(&mut ckpt, &fit, &val, |r| {
        eprintln!(
            "epoch {:>4}  mse {:.4e}  proj {:.3e}  recons {:.3e}  val {}",
            r.epoch,
            r.mse,
            r.l_proj,
            r.l_recons,
            r.val_mse.map_or("-".into(), |v| format!("{v:.4e}"))
        );
        if let Err(e) = report.write_all(report_row(r).as_bytes()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(&report_path, e));
    }
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    let test = ds.split(Split::Test);
    let mt = metrics(&ckpt.model, &test)?;
    write_metrics(
        &out,
        &mt,
        ds.dt(),
        &[
            ("epochs", ckpt.epochs_done.to_string()),
            ("capped_events", summary.capped_events.to_string()),
            ("test_trajectories", test.len().to_string()),
        ],
    )?;
    println!(
        "test rmse {:.6e} after {} epochs",
        mt.rmse, ckpt.epochs_done
    );
    Ok(())
}

pub fn eval(
    ctx: &Context,
    dataset: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
    signal: Option<SignalKind>,
    horizon: Option<usize>,
) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let ds = load_dataset(&ctx.dataset_dir(dataset))?;
    let ckpt = load_checkpoint(&ctx.checkpoint_path(checkpoint))?;
    let out = out.unwrap_or_else(|| cfg.out_dir.join("eval"));
    let test = ds.split(Split::Test);
    let fresh = if signal.is_some() || horizon.is_some() {
        Some(fresh_set(&ds, test.len().max(1), signal, horizon)?)
    } else {
        None
    };
    let set: Vec<&Trajectory> = match &fresh {
        Some(f) => f.iter().collect(),
        None => test,
    };
    let mt = metrics(&ckpt.model, &set)?;
    let source = match (&fresh, signal) {
        (None, _) => "test_split".to_string(),
        (Some(_), Some(k)) => format!("{k:?}").to_lowercase(),
        (Some(_), None) => "dataset_signal".to_string(),
    };
    write_metrics(
        &out,
        &mt,
        ds.dt(),
        &[
            ("inputs", source),
            ("horizon", set[0].horizon().to_string()),
            ("trajectories", set.len().to_string()),
        ],
    )?;
    let traj_dir = out.join("trajectories");
    fs::create_dir_all(&traj_dir).map_err(|e| io_err(&traj_dir, e))?;
    for (i, t) in set.iter().enumerate() {
        match simulate(&ckpt.model, &t.inputs, &SimConfig::new(t.dt, t.horizon())) {
            Ok(p) => p.save_csv(&traj_dir.join(format!("pred_{i:03}.csv")))?,
            Err(Error::NonFiniteState { step }) => {
                eprintln!("trajectory {i} diverged at step {step}")
            }
            Err(e) => return Err(e.into()),
        }
        t.save_csv(&traj_dir.join(format!("true_{i:03}.csv")))?;
    }
    println!(
        "rmse {:.6e} over {} trajectories of {} steps ({} diverged)",
        mt.rmse,
        set.len(),
        set[0].horizon(),
        mt.diverged
    );
    Ok(())
}

/// Ground truth on freshly drawn inputs, seeded away from the dataset's own seeds.
fn fresh_set(
    ds: &Dataset,
    count: usize,
    signal: Option<SignalKind>,
    horizon: Option<usize>,
) -> Result<Vec<Trajectory>, CliError> {
    let man = &ds.manifest;
    let Some(base) = &man.signal else {
        return Err(CliError::Config(
            "dataset has no signal description; fresh inputs need a generated dataset".into(),
        ));
    };
    let mut spec = base.clone();
    if let Some(k) = signal {
        spec.kind = k;
    }
    spec.horizon = horizon.unwrap_or(man.horizon);
    let sim = SimConfig::new(man.dt, spec.horizon);
    let first = man
        .seed
        .wrapping_add(man.count as u64)
        .wrapping_add(1 << 32);
    (0..count as u64)
        .map(|i| {
            let u = gen_signal(&spec.with_seed(first.wrapping_add(i)))?;
            Ok(man.system.simulate(&u, &sim)?)
        })
        .collect()
}

pub fn verify(
    ctx: &Context,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let vc = &cfg.verify;
    let model = load_checkpoint(&ctx.checkpoint_path(checkpoint))?.model;
    let (n, m, _) = model.dims();
    let kind = model.kind();
    let xs = proj_samples(n, vc.samples, cfg.seed ^ 0x7E51_F1ED);
    let mut reports = vec![
        if kind == ProjectionKind::Stable {
            lyapunov_audit(&model, &xs, vc.kyp_threshold)?
        } else {
            kyp_audit(&model, &xs, vc.kyp_threshold)?
        },
        idempotence_audit(&model, &xs, vc.idempotence_threshold)?,
    ];

    let sim = cfg.sim_config();
    // held inputs repeated on a grid `substeps` times finer; the tolerance
    // c_tol·dt·horizon is unchanged because it depends on the span only
    let fine = SimConfig::new(sim.dt / vc.substeps as f64, sim.horizon * vc.substeps);
    let mut spec = cfg.signal_spec(SignalKind::Rectangle, sim.horizon);
    spec.channels = m;
    let base = cfg.seed.wrapping_add(0xF0_0000);
    let mut rollouts = Vec::with_capacity(vc.rollouts);
    for i in 0..vc.rollouts as u64 {
        rollouts.push(if kind == ProjectionKind::Stable {
            // only unforced decay is certified
            let x0 = proj_samples(n, 1, base.wrapping_add(i)).remove(0);
            (vec![vec![0.0; m]; fine.horizon], Some(x0))
        } else {
            (
                upsample(
                    &gen_signal(&spec.with_seed(base.wrapping_add(i)))?,
                    vc.substeps,
                ),
                None,
            )
        });
    }
    let opts = DissipationOptions {
        c_tol: vc.c_tol,
        quadrature: Quadrature::LeftRiemann,
    };
    let mut modes = vec![DissipationMode::Inequality];
    if kind == ProjectionKind::Conservative {
        modes.push(DissipationMode::Equality);
    }
    let storage = model.spec.certificate_storage();
    let threshold = vc.c_tol * sim.dt * sim.horizon as f64;
    for mode in modes {
        let mut worst = Vec::with_capacity(rollouts.len());
        for (u, x0) in &rollouts {
            let sc = SimConfig {
                x0: x0.clone(),
                ..fine.clone()
            };
            match simulate(&model, u, &sc) {
                Ok(traj) => {
                    let r = dissipativity_check(&traj, &storage, &model.spec.supply, mode, opts)?;
                    worst.push(r.max_residual);
                }
                Err(Error::NonFiniteState { .. }) => worst.push(f64::INFINITY),
                Err(e) => return Err(e.into()),
            }
        }
        let name = match mode {
            DissipationMode::Inequality => "dissipation_inequality",
            DissipationMode::Equality => "dissipation_equality",
        };
        reports.push(VerifyReport::from_residuals(name, &worst, threshold));
    }
    if kind == ProjectionKind::IoStable {
        let gamma = model.spec.gamma();
        let inputs: Vec<Vec<Vec<f64>>> = rollouts.into_iter().map(|(u, _)| u).collect();
        reports.push(hj_check(&model, &xs, gamma, vc.hj_threshold)?);
        reports.push(gain_check(&model, &inputs, fine.dt, gamma, vc.gain_tol)?);
    }

    let mut table = format!(
        "kind: {}\n{:<28} {:>7} {:>12} {:>10}  {}\n",
        kind.name(),
        "check",
        "samples",
        "max_resid",
        "threshold",
        "result"
    );
    for r in &reports {
        let _ = writeln!(table, "{}", r.table_row());
    }
    print!("{table}");
    if let Some(dir) = out {
        write_file(&dir.join(VERIFY_FILE), &table)?;
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.check.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}
