use dissipnet_core::benchmarks::{PendulumParams, SystemSpec};
use dissipnet_core::supply::SupplyPreset;
use dissipnet_core::{Error, ExperimentConfig, ProjectionKind};

#[test]
fn defaults() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.loss.lambda1, 0.001);
    assert_eq!(cfg.loss.n_proj_samples, 100);
    assert_eq!(cfg.training.val_fraction, 0.2);
    let sim = cfg.sim_config();
    assert_eq!((sim.dt, sim.horizon), (0.1, 100));
    let io = ExperimentConfig {
        projection: dissipnet_core::config::ProjectionConfig {
            kind: ProjectionKind::IoStable,
            ..Default::default()
        },
        ..Default::default()
    };
    assert_eq!(
        io.supply_preset().unwrap(),
        SupplyPreset::IoStable { gamma2: 2.0 }
    );
}

#[test]
fn empty_file_is_the_default() {
    assert_eq!(
        ExperimentConfig::from_toml("").unwrap(),
        ExperimentConfig::default()
    );
}

#[test]
fn round_trip_is_identity() {
    let text = r#"
seed = 7
out_dir = "runs/a"

[system]
kind = "pendulum"
n_links = 2
g_accel = 9.81
lengths = [0.5, 0.5]
masses = [3.0, 3.0]
dampings = [1.0, 1.0]

[data]
count = 20
signal = "random_walk"

[projection]
kind = "dissipative"

[projection.supply]
kind = "custom"
q = [[-1.0, 0.0], [0.0, -1.0]]
s = [[0.0], [0.5]]
r = [[1.0]]

[optimizer]
learning_rate = 0.01
epochs = 5
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(cfg.seed, 7);
    assert!(matches!(cfg.system, SystemSpec::Pendulum(ref p) if *p == PendulumParams::standard(2)));
    assert_eq!(cfg.sim_config().dt, 0.01);
    let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(again, cfg);
    let model = cfg.build_model(1, 2).unwrap();
    assert_eq!(model.dims(), (4, 1, 2));
    assert_eq!(model.kind(), ProjectionKind::Dissipative);
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        "sed = 1\n",
        "[optimizer]\nlearning_rat = 0.1\n",
        "[projection.supply]\nkind = \"io_stable\"\ngama2 = 2.0\n",
        "[system]\nkind = \"msd\"\nm = 1.0\nk = 1.0\nc = 1.0\nd = 2.0\n",
    ] {
        assert!(
            matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))),
            "{text}"
        );
    }
}

#[test]
fn invalid_values_are_rejected() {
    assert!(ExperimentConfig::from_toml("[optimizer]\nlearning_rate = -1.0\n").is_err());
    assert!(ExperimentConfig::from_toml("[training]\nval_fraction = 1.5\n").is_err());
    assert!(
        ExperimentConfig::from_toml("[system]\nkind = \"msd\"\nm = 0.0\nk = 1.0\nc = 1.0\n")
            .is_err()
    );
}

#[test]
fn general_kind_needs_explicit_supply() {
    let cfg = ExperimentConfig::from_toml("[projection]\nkind = \"general\"\n").unwrap();
    assert!(cfg.build_model(1, 2).is_err());
}

#[test]
fn external_system_needs_state_dim() {
    let cfg =
        ExperimentConfig::from_toml("[system]\nkind = \"external\"\npath = \"data\"\n").unwrap();
    assert!(cfg.state_dim().is_err());
}
