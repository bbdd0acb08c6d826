use std::fs;
use std::path::Path;

use jdfilter::experiments::{ExperimentConfig, ExperimentKind, Precision};

fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_validate_and_round_trip() {
    let mut kinds = Vec::new();
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let raw = fs::read_to_string(&path).unwrap();
        let cfg = ExperimentConfig::from_toml(&raw).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = ExperimentConfig::from_toml(&cfg.canonical()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        assert_eq!(cfg.hash(), again.hash());
        kinds.push(cfg.experiment);
    }
    for k in ExperimentKind::ALL {
        assert!(kinds.contains(&k), "no shipped config for {}", k.name());
    }
}

#[test]
fn defaults_fill_optional_sections() {
    let cfg = ExperimentConfig::from_toml(
        "experiment = \"filter_run\"\nmodel = { name = \"ou\" }\ngrid = { horizon = 1.0, n_steps = 10 }\nseeds = { master = 1 }\n",
    )
    .unwrap();
    assert_eq!(cfg.seeds.n_replicas, 1);
    assert_eq!(cfg.options.precision, Precision::F64);
    assert_eq!(cfg.filter.n_particles, 1000);
    assert_eq!(cfg.output_dir, Path::new("results"));
}

#[test]
fn every_violation_is_reported_with_its_path() {
    let raw = r#"
experiment = "kalman_compare"
output_dir = "x"
model = { name = "ou_jumps", params = { up_rate = -1.0 } }
grid = { horizon = 0.0, n_steps = 0 }
filter = { n_particles = 1, resample_threshold = 2.0 }
seeds = { master = 1, n_replicas = 0 }
"#;
    let err = ExperimentConfig::from_toml(raw).unwrap_err();
    let paths = err.paths();
    for p in ["model.params.up_rate", "grid.horizon", "grid.n_steps", "filter.n_particles", "filter.resample_threshold", "seeds.n_replicas"]
    {
        assert!(paths.contains(&p), "missing {p} in {paths:?}");
    }
}

#[test]
fn nonlinear_model_is_rejected_for_kalman() {
    let raw = "experiment = \"kalman_compare\"\nmodel = { name = \"rotation\" }\ngrid = { horizon = 1.0, n_steps = 10 }\nseeds = { master = 1 }\n";
    let err = ExperimentConfig::from_toml(raw).unwrap_err();
    assert_eq!(err.paths(), vec!["model.name"]);
}

#[test]
fn unknown_experiment_names_the_field() {
    let raw = "experiment = \"fly\"\nmodel = { name = \"ou\" }\ngrid = { horizon = 1.0, n_steps = 10 }\nseeds = { master = 1 }\n";
    let err = ExperimentConfig::from_toml(raw).unwrap_err();
    assert_eq!(err.paths(), vec!["experiment"]);
}
