use std::fs;
use std::path::PathBuf;

use gaplab::config::ExperimentConfig;
use gaplab::runner::run_experiment;
use gaplab::Error;

const SPIN: &str = r#"
[lattice]
kind = "chain"
length = 1

[model]
kind = "ising"

[perturbation]
kind = "pauli"
region = [0]
terms = [{ sites = [0], axes = "x" }]

[observable]
terms = [{ sites = [0], axes = "x" }]

[gap]
g = 1.5

[run]
tasks = ["kubo", "neass_check"]
eps = [0.0625, 0.03125, 0.015625]
"#;

const CHAIN: &str = r#"
[lattice]
kind = "chain"
length = 4

[model]
kind = "ising"
coupling = [-0.2]

[perturbation]
kind = "block"
region = [0]
hz = -1.0
hx = 0.3

[observable]
terms = [{ sites = [2], axes = "x" }]

[gap]
region = [2, 3]
g = 1.5

[run]
tasks = ["kubo", "neass_check", "ldg_scan", "gdg_test", "lr_profile"]
eps = [0.0625, 0.03125, 0.015625]
seed = 3

[run.gdg]
trials = 20

[run.lr]
times = [0.0, 0.5, 1.0]
"#;

fn scratch(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("gaplab-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&p);
    p
}

#[test]
fn single_spin_kubo_is_minus_one() {
    let cfg = ExperimentConfig::from_toml_str(SPIN).unwrap();
    let out = scratch("spin");
    let m = run_experiment(&cfg, &out).unwrap();
    assert!(m.all_passed, "{:?}", m.tasks);
    let kubo = m.tasks.iter().find(|t| t.task == "kubo").unwrap();
    let s = kubo.summary["sigma1"].as_f64().unwrap();
    assert!((s + 1.0).abs() < 1e-8, "sigma1 = {s}");
    assert!(out.join("kubo.csv").exists());
    assert!(out.join("manifest.json").exists());
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn reruns_write_identical_tables() {
    let cfg = ExperimentConfig::from_toml_str(CHAIN).unwrap();
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    let ma = run_experiment(&cfg, &a).unwrap();
    run_experiment(&cfg, &b).unwrap();
    for t in &ma.tasks {
        assert!(t.error.is_none(), "{}: {:?}", t.task, t.error);
        for f in &t.files {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
        }
    }
    fs::remove_dir_all(&a).unwrap();
    fs::remove_dir_all(&b).unwrap();
}

#[test]
fn manifest_reloads_as_config() {
    let cfg = ExperimentConfig::from_toml_str(SPIN).unwrap();
    let out = scratch("manifest");
    run_experiment(&cfg, &out).unwrap();
    let back = ExperimentConfig::from_path(&out.join("manifest.json")).unwrap();
    assert_eq!(back, cfg);
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn unknown_fields_are_rejected() {
    for (from, to) in [("[run]", "[run]\nspeed = 2"), ("kind = \"ising\"", "kind = \"ising\"\nfield = 1.0"), ("[gap]", "[gapp]")] {
        let bad = SPIN.replacen(from, to, 1);
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config { .. })), "accepted {to}");
    }
}

#[test]
fn missing_observable_is_a_config_error() {
    let bad = SPIN.replace("[observable]\nterms = [{ sites = [0], axes = \"x\" }]\n", "");
    assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config { .. })));
}
