use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jdfilter(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jdfilter"));
    cmd.args(args).env_remove("JDFILTER_OUTPUT_ROOT");
    if let Some(r) = root {
        cmd.env("JDFILTER_OUTPUT_ROOT", r);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_FILTER: &str = r#"experiment = "filter_run"
output_dir = "run"
model = { name = "ou_jumps" }
grid = { horizon = 0.5, n_steps = 100 }
filter = { n_particles = 200, mode = "fkk", resampling = "systematic" }
seeds = { master = 3 }
"#;

#[test]
fn listings() {
    let out = jdfilter(&["list-models"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for m in ["ou_jumps", "rotation", "linear_gaussian", "bounded_obs"] {
        assert!(text.contains(m), "{m} missing");
    }
    let out = jdfilter(&["list-experiments"], None);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 9);
}

#[test]
fn validate_echoes_canonical_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", SMALL_FILTER);
    let out = jdfilter(&["validate", &cfg], None);
    assert!(out.status.success());
    let echo = String::from_utf8(out.stdout).unwrap();
    assert!(echo.contains("n_particles = 200"));
    assert!(echo.contains("[options]"), "defaults are echoed");
    let again = write(dir.path(), "b.toml", &echo);
    let out2 = jdfilter(&["validate", &again], None);
    assert_eq!(String::from_utf8(out2.stdout).unwrap(), echo);
}

#[test]
fn config_errors_exit_2_with_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "experiment = \"simulate\"\nmodel = {}\ngrid = { horizon = 1.0, n_steps = 0 }\nseeds = { master = 1 }\n",
    );
    let out = jdfilter(&["validate", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("model.name required"), "{err}");
    let out = jdfilter(&["run", &cfg], Some(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(jdfilter(&["run", missing.to_str().unwrap()], None).status.code(), Some(2));
}

#[test]
fn run_writes_manifest_under_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", SMALL_FILTER);
    let root = dir.path().join("out");
    let out = jdfilter(&["run", &cfg], Some(&root));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pass"], true);
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["experiment"], "filter_run");
    assert!(root.join("run/filter_0.jsonl").exists());
    assert!(root.join("run/config.toml").exists());
}

#[test]
fn failed_checks_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "q.toml",
        "experiment = \"assumption_check\"\noutput_dir = \"q\"\nmodel = { name = \"quadratic_drift\" }\ngrid = { horizon = 1.0, n_steps = 10 }\nseeds = { master = 1 }\noptions = { assumption_samples = 500 }\n",
    );
    let out = jdfilter(&["run", &cfg], Some(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL assumptions"));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", SMALL_FILTER);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = jdfilter(&["run", &cfg, "--output-root", blocker.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
}
