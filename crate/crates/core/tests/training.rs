mod common;

use common::*;
use dissipnet_core::benchmarks::{gen_signal, MsdParams, SignalKind, SignalSpec};
use dissipnet_core::dynamics::simulate;
use dissipnet_core::projection::NetArch;
use dissipnet_core::supply::{StorageFunction, SupplyPreset};
use dissipnet_core::training::*;
use dissipnet_core::{
    Activation, Error, Mlp, ProjectedModel, ProjectionKind, ProjectionSpec, RawDynamics, SimConfig,
    Trajectory,
};
use proptest::prelude::*;

fn constant_traj(steps: usize, m: usize, l: usize, y: f64) -> Trajectory {
    Trajectory {
        dt: 0.1,
        times: (0..=steps).map(|k| k as f64 * 0.1).collect(),
        inputs: vec![vec![0.0; m]; steps],
        outputs: vec![vec![y; l]; steps + 1],
        states: None,
    }
}

fn zero_model(n: usize, m: usize, l: usize) -> ProjectedModel {
    let raw = RawDynamics {
        f: Mlp::zeros(n, n, &[4], Activation::Relu, 1.0),
        g: Mlp::zeros(n, n * m, &[4], Activation::Relu, 1.0),
        h: Mlp::zeros(n, l, &[4], Activation::Relu, 1.0),
        j: None,
    };
    let spec = ProjectionSpec::new(
        ProjectionKind::Naive,
        SupplyPreset::Stable.build(l, m).unwrap(),
        StorageFunction::half_norm(n),
        None,
    )
    .unwrap();
    ProjectedModel::new(
        raw,
        spec,
        Some(Mlp::zeros(l, n, &[], Activation::Relu, 1.0)),
    )
    .unwrap()
}

#[test]
fn mse_zero_model_constant_target() {
    let model = zero_model(2, 1, 1);
    let ones = constant_traj(10, 1, 1, 1.0);
    assert_eq!(loss_mse(&model, &[&ones]).unwrap().value, 1.0);
    let zeros = constant_traj(10, 1, 1, 0.0);
    let lg = loss_mse(&model, &[&zeros]).unwrap();
    assert_eq!(lg.value, 0.0);
    assert!(lg.grad.iter().all(|&g| g == 0.0));
}

#[test]
fn mse_zero_on_own_rollouts() {
    let model = random_model(ProjectionKind::Dissipative, 1);
    let mut r = rng(1);
    let u: Vec<Vec<f64>> = (0..20).map(|_| normal_vec(&mut r, M)).collect();
    let traj = simulate(&model, &u, &SimConfig::new(0.1, 20)).unwrap();
    assert_eq!(loss_mse(&model, &[&traj]).unwrap().value, 0.0);
}

#[test]
fn mse_empty_batch_is_an_error() {
    let model = zero_model(2, 1, 1);
    assert!(loss_mse(&model, &[]).is_err());
}

#[test]
fn diverging_rollout_is_capped() {
    let mut model = zero_model(1, 1, 1);
    model.raw.f = Mlp::affine(&[vec![0.0]], &[1e8]).unwrap();
    let t = constant_traj(5, 1, 1, 0.0);
    let lg = loss_mse(&model, &[&t]).unwrap();
    assert_eq!(lg.value, CAPPED_LOSS);
    assert!(lg.grad.iter().all(|&g| g == 0.0));
}

#[test]
fn recons_zero_maps_give_mean_square_norm() {
    let model = zero_model(3, 1, 2);
    let states = vec![
        vec![1.0, 2.0, 2.0],
        vec![0.0, 0.0, 1.0],
        vec![3.0, 0.0, 0.0],
    ];
    let v = (9.0 + 1.0 + 9.0) / 3.0;
    assert!((loss_recons(&model, &states).unwrap().value - v).abs() < 1e-14);
}

#[test]
fn recons_identity_is_zero() {
    let mut model = zero_model(2, 1, 2);
    model.raw.h = Mlp::affine(&[vec![2.0, 0.0], vec![0.0, -1.0]], &[0.0, 0.0]).unwrap();
    model.eta = Some(Mlp::affine(&[vec![0.5, 0.0], vec![0.0, -1.0]], &[0.0, 0.0]).unwrap());
    let states = normal_samples(2, 2, 10);
    assert!(loss_recons(&model, &states).unwrap().value <= 1e-28);
}

#[test]
fn recons_requires_eta() {
    let mut model = zero_model(2, 1, 1);
    model.eta = None;
    assert!(matches!(
        loss_recons(&model, &[vec![0.0; 2]]),
        Err(Error::MissingEta)
    ));
}

#[test]
fn recons_descends_along_eta_gradient() {
    let mut decreased = 0;
    for seed in 0..20 {
        let mut model = random_model(ProjectionKind::Dissipative, seed);
        let states = normal_samples(seed + 100, N, 50);
        let before = loss_recons(&model, &states).unwrap();
        let mut flat = model.flat_params();
        let n_eta = model.eta.as_ref().unwrap().params.len();
        let start = flat.len() - n_eta;
        for i in start..flat.len() {
            flat[i] -= 1e-3 * before.grad[i];
        }
        model.set_flat_params(&flat).unwrap();
        if loss_recons(&model, &states).unwrap().value < before.value {
            decreased += 1;
        }
    }
    assert!(decreased >= 18, "{decreased}");
}

fn msd_conservative_model() -> ProjectedModel {
    let p = MsdParams {
        m: 2.0,
        k: 3.0,
        c: 0.5,
    };
    let raw = RawDynamics {
        f: Mlp::affine(&[vec![0.0, 1.0], vec![-p.k / p.m, -p.c / p.m]], &[0.0, 0.0]).unwrap(),
        g: Mlp::affine(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[0.0, 1.0 / p.m]).unwrap(),
        h: Mlp::affine(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap(),
        j: None,
    };
    let spec =
        ProjectionSpec::new(ProjectionKind::Conservative, p.supply(), p.storage(), None).unwrap();
    ProjectedModel::new(raw, spec, None).unwrap()
}

#[test]
fn proj_loss_vanishes_at_fixed_point() {
    let model = msd_conservative_model();
    let lg = loss_proj(&model, &LossConfig::default(), 3).unwrap();
    assert!(lg.value <= 1e-12, "{}", lg.value);
}

#[test]
fn proj_loss_vanishes_in_stable_dead_zone() {
    let raw = RawDynamics {
        f: Mlp::affine(&[vec![-1.0, 0.5], vec![-0.5, -2.0]], &[0.0, 0.0]).unwrap(),
        g: Mlp::new(2, 2, &[4], Activation::Sigmoid, 1.0, 3),
        h: Mlp::new(2, 1, &[4], Activation::Sigmoid, 1.0, 4),
        j: None,
    };
    let spec = ProjectionSpec::new(
        ProjectionKind::Stable,
        SupplyPreset::Stable.build(1, 1).unwrap(),
        StorageFunction::half_norm(2),
        None,
    )
    .unwrap();
    let model = ProjectedModel::new(raw, spec, None).unwrap();
    assert_eq!(
        loss_proj(&model, &LossConfig::default(), 5).unwrap().value,
        0.0
    );
}

#[test]
fn proj_loss_is_seed_deterministic() {
    let model = random_model(ProjectionKind::IoStable, 4);
    let cfg = LossConfig::default();
    assert_eq!(
        loss_proj(&model, &cfg, 9).unwrap(),
        loss_proj(&model, &cfg, 9).unwrap()
    );
    assert_ne!(
        loss_proj(&model, &cfg, 9).unwrap().value,
        loss_proj(&model, &cfg, 10).unwrap().value
    );
}

#[test]
fn rmse_examples() {
    let a = vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]]];
    assert_eq!(rmse_t(&a, &a).unwrap(), vec![0.0, 0.0]);

    let shifted: Vec<Vec<Vec<f64>>> = a
        .iter()
        .map(|t| {
            t.iter()
                .map(|r| r.iter().map(|v| v - 0.5).collect())
                .collect()
        })
        .collect();
    for v in rmse_t(&shifted, &a).unwrap() {
        assert!((v - 0.5).abs() < 1e-15);
    }

    let target = vec![vec![vec![0.0]], vec![vec![0.0]]];
    let pred = vec![vec![vec![0.0]], vec![vec![2.0]]];
    assert!((rmse_t(&pred, &target).unwrap()[0] - 2f64.sqrt()).abs() < 1e-15);
    assert!((rmse(&pred, &target).unwrap() - 2f64.sqrt()).abs() < 1e-15);

    assert!(matches!(
        rmse_t(&pred, &target[..1]),
        Err(Error::DimensionMismatch { .. })
    ));
}

fn small_dataset(model: &ProjectedModel, count: u64, horizon: usize) -> Vec<Trajectory> {
    (0..count)
        .map(|s| {
            let mut spec = SignalSpec::new(SignalKind::Rectangle, horizon, 0.1, s);
            spec.channels = model.dims().1;
            let u = gen_signal(&spec).unwrap();
            simulate(model, &u, &SimConfig::new(0.1, horizon)).unwrap()
        })
        .collect()
}

#[test]
fn zero_lambdas_give_mse() {
    let teacher = random_model(ProjectionKind::Dissipative, 20);
    let data = small_dataset(&teacher, 4, 10);
    let batch: Vec<&Trajectory> = data.iter().collect();
    let model = random_model(ProjectionKind::Dissipative, 21);
    let cfg = LossConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        ..Default::default()
    };
    let xs = proj_samples(N, 10, 0);
    let total = total_loss(&model, &batch, &cfg, &xs).unwrap();
    let mse = loss_mse(&model, &batch).unwrap();
    assert_eq!(total.total, mse.value);
    assert_eq!(total.grad, mse.grad);

    let mut ckpt = Checkpoint::fresh(
        model,
        OptimizerConfig {
            epochs: 3,
            batch_size: 4,
            ..Default::default()
        },
        cfg,
    );
    let report = train(&mut ckpt, &batch, &[]).unwrap();
    for e in report.epochs {
        assert_eq!(e.total, e.mse);
    }
}

#[test]
fn total_gradient_is_linear_in_lambdas() {
    let teacher = random_model(ProjectionKind::Dissipative, 22);
    let data = small_dataset(&teacher, 3, 8);
    let batch: Vec<&Trajectory> = data.iter().collect();
    let model = random_model(ProjectionKind::Dissipative, 23);
    let xs = proj_samples(N, 20, 1);
    let grad = |l1: f64, l2: f64| {
        let cfg = LossConfig {
            lambda1: l1,
            lambda2: l2,
            ..Default::default()
        };
        total_loss(&model, &batch, &cfg, &xs).unwrap()
    };
    let base = grad(0.0, 0.0);
    let proj = loss_proj_at(&model, &xs).unwrap();
    let recons_unit = grad(0.0, 1.0);
    let (l1, l2) = (0.3, 0.07);
    let mixed = grad(l1, l2);
    assert!((mixed.l_proj - proj.value).abs() <= 1e-12);
    for i in 0..base.grad.len() {
        let recons_i = recons_unit.grad[i] - base.grad[i];
        let expect = base.grad[i] + l1 * proj.grad[i] + l2 * recons_i;
        assert!(
            (mixed.grad[i] - expect).abs() <= 1e-10,
            "{i}: {} vs {expect}",
            mixed.grad[i]
        );
    }
}

fn teacher_dataset() -> Vec<Trajectory> {
    // ẋ = −x + u, y = x
    let teacher = ProjectedModel::new(
        RawDynamics {
            f: Mlp::affine(&[vec![-1.0]], &[0.0]).unwrap(),
            g: Mlp::affine(&[vec![0.0]], &[1.0]).unwrap(),
            h: Mlp::affine(&[vec![1.0]], &[0.0]).unwrap(),
            j: None,
        },
        ProjectionSpec::new(
            ProjectionKind::Naive,
            SupplyPreset::Stable.build(1, 1).unwrap(),
            StorageFunction::half_norm(1),
            None,
        )
        .unwrap(),
        None,
    )
    .unwrap();
    small_dataset(&teacher, 8, 50)
}

fn affine_naive(seed: u64) -> ProjectedModel {
    let a = NetArch::affine();
    let spec = ProjectionSpec::new(
        ProjectionKind::Naive,
        SupplyPreset::Stable.build(1, 1).unwrap(),
        StorageFunction::half_norm(1),
        None,
    )
    .unwrap();
    ProjectedModel::new(RawDynamics::new((1, 1, 1), &a, &a, &a, seed), spec, None).unwrap()
}

#[test]
fn learns_linear_teacher() {
    let data = teacher_dataset();
    let set: Vec<&Trajectory> = data.iter().collect();
    let model = affine_naive(3);
    let initial = eval_mse(&model, &set).unwrap();
    let mut ckpt = Checkpoint::fresh(
        model,
        OptimizerConfig {
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 8,
            ..Default::default()
        },
        LossConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..Default::default()
        },
    );
    train(&mut ckpt, &set, &[]).unwrap();
    let fin = eval_mse(&ckpt.model, &set).unwrap();
    assert!(fin <= 0.1 * initial, "{initial} -> {fin}");
}

fn short_run(epochs: usize) -> (Checkpoint, Vec<Trajectory>) {
    let teacher = random_model(ProjectionKind::Dissipative, 30);
    let data = small_dataset(&teacher, 6, 10);
    let ckpt = Checkpoint::fresh(
        random_model(ProjectionKind::Dissipative, 31),
        OptimizerConfig {
            learning_rate: 1e-2,
            epochs,
            batch_size: 4,
            ..Default::default()
        },
        LossConfig {
            rng_seed: 5,
            ..Default::default()
        },
    );
    (ckpt, data)
}

fn strip_time(r: &TrainReport) -> Vec<EpochRecord> {
    r.epochs
        .iter()
        .cloned()
        .map(|mut e| {
            e.wall_ms = 0;
            e
        })
        .collect()
}

#[test]
fn training_is_reproducible() {
    let (mut a, data) = short_run(4);
    let mut b = a.clone();
    let set: Vec<&Trajectory> = data.iter().collect();
    let ra = train(&mut a, &set[..5], &set[5..]).unwrap();
    let rb = train(&mut b, &set[..5], &set[5..]).unwrap();
    assert_eq!(strip_time(&ra), strip_time(&rb));
    assert_eq!(a, b);
    assert!(ra.epochs.iter().all(|e| e.val_mse.is_some()));
}

#[test]
fn resume_from_checkpoint_continues_the_trace() {
    let (mut full, data) = short_run(4);
    let set: Vec<&Trajectory> = data.iter().collect();
    let mut half = full.clone();
    let straight = train(&mut full, &set, &[]).unwrap();

    half.optimizer.config.epochs = 2;
    let first = train(&mut half, &set, &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    half.save(&path).unwrap();
    let mut resumed = Checkpoint::load(&path).unwrap();
    assert_eq!(resumed, half);
    resumed.optimizer.config.epochs = 4;
    let second = train(&mut resumed, &set, &[]).unwrap();

    let mut joined = strip_time(&first);
    joined.extend(strip_time(&second));
    assert_eq!(joined, strip_time(&straight));
    assert_eq!(resumed, full);
}

#[test]
fn l_net_enters_the_mse_gradient() {
    let teacher = random_model(ProjectionKind::Dissipative, 40);
    let data = small_dataset(&teacher, 1, 2);
    let model = random_model(ProjectionKind::Dissipative, 41);
    let batch = [&data[0]];
    let g = loss_mse(&model, &batch).unwrap().grad;
    let p = model.params();
    let l_start = p.f.len() + p.g.len() + p.h.len();
    let l_range = l_start..l_start + p.l.len();
    assert!(g[l_range.clone()].iter().any(|v| v.abs() > 1e-8));

    let mut other = model.clone();
    let mut flat = other.flat_params();
    for v in &mut flat[l_range] {
        *v += 0.1;
    }
    other.set_flat_params(&flat).unwrap();
    let g2 = loss_mse(&other, &batch).unwrap().grad;
    assert!(max_abs_diff(&g, &g2) > 1e-8);
}

#[test]
fn empty_training_split_is_an_error() {
    let (mut ckpt, _) = short_run(1);
    assert!(matches!(train(&mut ckpt, &[], &[]), Err(Error::Config(_))));
}

#[test]
fn optimizer_config_validation() {
    let bad = OptimizerConfig {
        learning_rate: 0.0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
    let bad = OptimizerConfig {
        batch_size: 0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prop_rmse_matches_brute_force(
        trajs in 1usize..5,
        steps in 1usize..8,
        width in 1usize..4,
        seed in 0u64..10_000,
    ) {
        let draw = |s: u64| -> Vec<Vec<Vec<f64>>> {
            (0..trajs).map(|t| normal_samples(s * 31 + t as u64, width, steps)).collect()
        };
        let pred = draw(seed);
        let target = draw(seed + 1);
        let series = rmse_t(&pred, &target).unwrap();
        for k in 0..steps {
            let mut s = 0.0;
            for t in 0..trajs {
                for c in 0..width {
                    s += (pred[t][k][c] - target[t][k][c]).powi(2);
                }
            }
            let brute = (s / (trajs * width) as f64).sqrt();
            prop_assert!((series[k] - brute).abs() <= 1e-12);
        }
    }
}
