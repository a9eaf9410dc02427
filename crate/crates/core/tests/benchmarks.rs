use dissipnet_core::benchmarks::*;
use dissipnet_core::verify::{dissipation_gaps, dissipativity_check, DissipationMode, Quadrature};
use dissipnet_core::{Error, SimConfig, Trajectory};
use proptest::prelude::*;
use std::path::PathBuf;

#[test]
fn step_signal_is_constant() {
    let u = gen_signal(&SignalSpec::new(SignalKind::Step, 5, 0.1, 0)).unwrap();
    assert_eq!(u, vec![vec![1.0]; 5]);
}

#[test]
fn random_walk_increment_variance() {
    let u = gen_signal(&SignalSpec::new(SignalKind::RandomWalk, 100_000, 0.1, 3)).unwrap();
    let inc: Vec<f64> = std::iter::once(u[0][0])
        .chain(u.windows(2).map(|w| w[1][0] - w[0][0]))
        .collect();
    let n = inc.len() as f64;
    let mean = inc.iter().sum::<f64>() / n;
    let var = inc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((0.0045..=0.0055).contains(&var), "{var}");
}

#[test]
fn signal_errors() {
    assert!(matches!(
        gen_signal(&SignalSpec::new(SignalKind::Step, 0, 0.1, 0)),
        Err(Error::Config(_))
    ));
    let mut spec = SignalSpec::new(SignalKind::Rectangle, 10, 0.1, 0);
    spec.min_segment = 8;
    spec.max_segment = 4;
    assert!(gen_signal(&spec).is_err());
    assert!("sawtooth".parse::<SignalKind>().is_err());
    assert_eq!(
        "random_walk".parse::<SignalKind>().unwrap(),
        SignalKind::RandomWalk
    );
}

#[test]
fn msd_at_rest_stays_at_rest() {
    let traj = simulate_msd(
        &MsdParams::default(),
        &vec![vec![0.0]; 100],
        &SimConfig::new(0.1, 100),
    )
    .unwrap();
    assert!(traj.outputs.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn msd_step_reaches_steady_state() {
    let traj = simulate_msd(
        &MsdParams::default(),
        &vec![vec![1.0]; 100],
        &SimConfig::new(0.1, 100),
    )
    .unwrap();
    assert!((traj.times[100] - 10.0).abs() < 1e-12);
    let q = traj.outputs[100][0];
    assert!((q - 1.0).abs() <= 0.05, "{q}");
}

#[test]
fn msd_output_is_state() {
    let u = gen_signal(&SignalSpec::new(SignalKind::Rectangle, 50, 0.1, 1)).unwrap();
    let traj = simulate_msd(&MsdParams::default(), &u, &SimConfig::new(0.1, 50)).unwrap();
    assert_eq!(traj.outputs, traj.states().unwrap());
}

/// `|ΔV − ∫w|` at the end, relative to `∫|w|`.
fn relative_energy_gap(
    traj: &Trajectory,
    v: &dissipnet_core::StorageFunction,
    w: &dissipnet_core::SupplyRate,
) -> f64 {
    let gaps = dissipation_gaps(traj, v, w, Quadrature::Trapezoid).unwrap();
    let scale: f64 = (0..traj.horizon())
        .map(|k| w.eval(&traj.inputs[k], &traj.outputs[k]).unwrap().abs() * traj.dt)
        .sum();
    gaps.iter().fold(0.0f64, |a, g| a.max(g.abs())) / scale
}

#[test]
fn msd_energy_identity() {
    let p = MsdParams::default();
    for seed in 0..5 {
        let u = gen_signal(&SignalSpec::new(SignalKind::Rectangle, 100, 0.1, seed)).unwrap();
        // sample the same trajectory on a 10× finer grid for the quadrature
        let traj =
            simulate_msd_with(&p, &upsample(&u, 10), &SimConfig::new(0.01, 1000), 10).unwrap();
        let rel = relative_energy_gap(&traj, &p.storage(), &p.supply());
        assert!(rel <= 1e-3, "seed {seed}: {rel}");
    }
}

#[test]
fn msd_satisfies_its_certificate() {
    let p = MsdParams::default();
    let u = gen_signal(&SignalSpec::new(SignalKind::Rectangle, 100, 0.1, 7)).unwrap();
    let traj = simulate_msd(&p, &u, &SimConfig::new(0.1, 100)).unwrap();
    let rep = dissipativity_check(
        &traj,
        &p.storage(),
        &p.supply(),
        DissipationMode::Equality,
        Default::default(),
    )
    .unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn pendulum_defaults() {
    let p = PendulumParams::standard(2);
    assert_eq!(p.lengths, vec![0.5, 0.5]);
    assert_eq!(p.masses, vec![3.0, 3.0]);
    assert_eq!(p.dampings, vec![1.0, 1.0]);
    assert_eq!(p.g_accel, 9.81);
    assert!(PendulumParams::standard(4).validate().is_err());
    let d = p.damping_matrix();
    assert_eq!(d[(0, 0)], 2.0);
    assert_eq!(d[(0, 1)], -1.0);
    assert_eq!(d[(1, 1)], 1.0);
}

#[test]
fn pendulum_rest_is_equilibrium() {
    for n in 1..=3 {
        let traj = simulate_pendulum(
            &PendulumParams::standard(n),
            &vec![vec![0.0]; 100],
            &SimConfig::new(0.01, 100),
        )
        .unwrap();
        assert!(traj.states().unwrap().iter().flatten().all(|&v| v == 0.0));
    }
}

#[test]
fn pendulum_small_angle_matches_linear_response() {
    let p = PendulumParams::standard(1);
    let (m, l, c, g) = (p.masses[0], p.lengths[0], p.dampings[0], p.g_accel);
    let tau = 0.5;
    let steps = 300;
    let traj =
        simulate_pendulum(&p, &vec![vec![tau]; steps], &SimConfig::new(0.01, steps)).unwrap();
    let w0 = (g / l).sqrt();
    let zeta = c / (2.0 * m * l * l * w0);
    let wd = w0 * (1.0 - zeta * zeta).sqrt();
    let q_inf = tau / (m * g * l);
    let mut worst: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for (k, y) in traj.outputs.iter().enumerate() {
        let t = k as f64 * 0.01;
        let decay = (-zeta * w0 * t).exp();
        let q = q_inf * (1.0 - decay * ((wd * t).cos() + zeta * w0 / wd * (wd * t).sin()));
        assert!(y[0].abs() <= 0.05);
        worst = worst.max((y[0] - q).abs());
        peak = peak.max(q.abs());
    }
    assert!(worst <= 0.02 * peak, "{worst} vs peak {peak}");
}

fn pendulum_energy_gap(n: usize, seed: u64) -> f64 {
    let p = PendulumParams::standard(n);
    let mut spec = SignalSpec::new(SignalKind::Rectangle, 100, 0.01, seed);
    spec.amplitude = 1.0;
    let u = gen_signal(&spec).unwrap();
    // 10× finer sampling of the same held input for the quadrature
    let traj =
        simulate_pendulum_with(&p, &upsample(&u, 10), &SimConfig::new(0.001, 1000), 10).unwrap();
    let d = p.damping_matrix();
    let states = traj.states().unwrap();
    let mut diss = 0.0;
    let mut work = 0.0;
    let mut scale = 0.0;
    for k in 0..traj.horizon() {
        let dt = traj.dt;
        let rate = |x: &[f64]| {
            let qd = &x[n..];
            let dq = d.matvec(qd).unwrap();
            qd.iter().zip(&dq).map(|(a, b)| a * b).sum::<f64>()
        };
        let tau = traj.inputs[k][0];
        diss += 0.5 * dt * (rate(&states[k]) + rate(&states[k + 1]));
        let w0 = tau * states[k][n];
        let w1 = tau * states[k + 1][n];
        work += 0.5 * dt * (w0 + w1);
        scale += 0.5 * dt * (w0.abs() + w1.abs());
    }
    let dv = p.energy(&states[traj.horizon()]) - p.energy(&states[0]);
    (dv + diss - work).abs() / scale
}

#[test]
fn pendulum_energy_relation() {
    for n in 1..=3 {
        for seed in 0..3 {
            let rel = pendulum_energy_gap(n, seed);
            assert!(rel <= 1e-2, "n={n} seed={seed}: {rel}");
        }
    }
}

#[test]
fn pendulum_satisfies_damper_inequality() {
    for n in 1..=2 {
        let p = PendulumParams::standard(n);
        for seed in 0..3 {
            let u = gen_signal(&SignalSpec::new(SignalKind::Rectangle, 100, 0.01, seed)).unwrap();
            let traj = simulate_pendulum(&p, &u, &SimConfig::new(0.01, 100)).unwrap();
            let storage_gaps: Vec<f64> = {
                let states = traj.states().unwrap();
                let w = p.supply();
                let e0 = p.energy(&states[0]);
                let mut integral = 0.0;
                let mut out = vec![0.0];
                for k in 1..states.len() {
                    let uk = &traj.inputs[k - 1];
                    integral += 0.5
                        * traj.dt
                        * (w.eval(uk, &traj.outputs[k - 1]).unwrap()
                            + w.eval(uk, &traj.outputs[k]).unwrap());
                    out.push(p.energy(&states[k]) - e0 - integral);
                }
                out
            };
            let tol = 1e-2 * traj.dt * traj.horizon() as f64;
            let worst = storage_gaps
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= tol, "n={n} seed={seed}: {worst}");
        }
    }
}

#[test]
fn generators_converge_under_substep_refinement() {
    let u = gen_signal(&SignalSpec::new(SignalKind::Rectangle, 100, 0.1, 2)).unwrap();
    let cfg = SimConfig::new(0.1, 100);
    let p = MsdParams::default();
    let a = simulate_msd_with(&p, &u, &cfg, SUBSTEPS).unwrap();
    let b = simulate_msd_with(&p, &u, &cfg, 4 * SUBSTEPS).unwrap();
    let diff = a
        .outputs
        .iter()
        .flatten()
        .zip(b.outputs.iter().flatten())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-3, "{diff}");

    let cfg = SimConfig::new(0.01, 100);
    let u = gen_signal(&SignalSpec::new(SignalKind::Rectangle, 100, 0.01, 2)).unwrap();
    for n in 1..=3 {
        let p = PendulumParams::standard(n);
        let a = simulate_pendulum_with(&p, &u, &cfg, SUBSTEPS).unwrap();
        let b = simulate_pendulum_with(&p, &u, &cfg, 4 * SUBSTEPS).unwrap();
        let diff = a
            .outputs
            .iter()
            .flatten()
            .zip(b.outputs.iter().flatten())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff <= 1e-3, "n={n}: {diff}");
    }
}

fn msd_spec() -> (SystemSpec, SignalSpec) {
    (
        SystemSpec::Msd(MsdParams::default()),
        SignalSpec::new(SignalKind::Rectangle, 100, 0.1, 0),
    )
}

fn dir_listing(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn dataset_split_files_and_round_trip() {
    let (system, signal) = msd_spec();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ds = make_dataset(&system, &signal, 100, 42, Some(a.path())).unwrap();
    assert_eq!(ds.split(Split::Train).len(), 90);
    assert_eq!(ds.split(Split::Test).len(), 10);
    let listing = dir_listing(a.path());
    assert_eq!(listing.len(), 101);
    assert!(listing.iter().any(|(n, _)| n == MANIFEST_FILE));

    make_dataset(&system, &signal, 100, 42, Some(b.path())).unwrap();
    assert!(listing == dir_listing(b.path()));

    let back = Dataset::load(a.path()).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn dataset_needs_two_samples() {
    let (system, signal) = msd_spec();
    assert!(matches!(
        make_dataset(&system, &signal, 1, 0, None),
        Err(Error::Config(_))
    ));
}

#[test]
fn pendulum_dataset_grid() {
    let system = SystemSpec::Pendulum(PendulumParams::standard(2));
    let (dt, horizon) = system.default_grid();
    let signal = SignalSpec::new(SignalKind::Rectangle, horizon, dt, 0);
    let ds = make_dataset(&system, &signal, 3, 0, None).unwrap();
    assert_eq!(dt, 0.01);
    for t in &ds.trajectories {
        assert_eq!(t.horizon(), 100);
        assert_eq!(t.output_dim(), 2);
    }
}

#[test]
fn load_error_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let good = "t,u_1,y_1\n0,1,2\n0.1,1,2\n0.2,1,2\n";
    let bad = "t,u_1,y_1\n0,1,2\n0.1,1,2,3\n0.2,1,2\n";
    std::fs::write(dir.path().join("a.csv"), good).unwrap();
    std::fs::write(dir.path().join("b.csv"), bad).unwrap();
    match load_external(&[dir.path().to_path_buf()], 0) {
        Err(Error::Format { row, path, .. }) => {
            assert_eq!(row, 3);
            assert!(path.ends_with("b.csv"));
        }
        other => panic!("{other:?}"),
    }
}

fn fluid_file(seed: u64) -> String {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut header = vec!["t".to_string()];
    header.extend((1..=16).map(|i| format!("u_{i}")));
    header.extend((1..=16).map(|i| format!("y_{i}")));
    let mut text = header.join(",") + "\n";
    for k in 0..=20 {
        let mut row = vec![format!("{:.16e}", k as f64 * 0.05)];
        row.extend((0..32).map(|_| format!("{:.16e}", rng.random::<f64>())));
        text += &(row.join(",") + "\n");
    }
    text
}

#[test]
fn external_sixteen_channel_files() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..5)
        .map(|i| {
            let p = dir.path().join(format!("run_{i}.csv"));
            std::fs::write(&p, fluid_file(i)).unwrap();
            p
        })
        .collect();
    let ds = load_external(&paths, 0).unwrap();
    assert_eq!(ds.io_dims(), (16, 16));
    assert_eq!(ds.trajectories.len(), 5);
    assert_eq!(ds.manifest.horizon, 20);
    let again = load_external(&[dir.path().to_path_buf()], 0).unwrap();
    assert_eq!(again.trajectories, ds.trajectories);
}

#[test]
fn external_reload_of_generated_dataset() {
    let (system, signal) = msd_spec();
    let dir = tempfile::tempdir().unwrap();
    let ds = make_dataset(&system, &signal, 10, 5, Some(dir.path())).unwrap();
    let ext = load_external(&[dir.path().to_path_buf()], 5).unwrap();
    assert_eq!(ext.trajectories, ds.trajectories);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_rectangle_is_plus_minus_one(seed in any::<u64>(), horizon in 1usize..300, channels in 1usize..4) {
        let mut spec = SignalSpec::new(SignalKind::Rectangle, horizon, 0.1, seed);
        spec.channels = channels;
        let u = gen_signal(&spec).unwrap();
        prop_assert_eq!(u.len(), horizon);
        prop_assert!(u.iter().flatten().all(|&v| v == 1.0 || v == -1.0));
        prop_assert_eq!(&u, &gen_signal(&spec).unwrap());
    }

    #[test]
    fn prop_split_is_ninety_ten(count in 2usize..300, seed in any::<u64>()) {
        let s = split_assignment(count, seed);
        let test = s.iter().filter(|&&x| x == Split::Test).count();
        prop_assert_eq!(test, ((count as f64) * 0.1).round().max(1.0) as usize);
    }
}
