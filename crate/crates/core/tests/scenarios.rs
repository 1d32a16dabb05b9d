use std::fs;

use kinetic_core::scenario::{run_scenario, RunOptions, ScenarioConfig};
use kinetic_core::Error;

const SMALL: &str = r#"
kind = "homogeneous-relaxation"
seed = 7

[grid]
n_per_dim = 8
half_width = 5.0

[collision]
method = "direct"

[time]
stepper = "rk4"
dt = 0.1
t_end = 0.5

[initial]
type = "perturbed-maxwellian"
amplitude = 0.3

[output]
every = 1
"#;

fn config_field(err: Error) -> String {
    match err {
        Error::Config { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn odd_grid_size_names_the_field() {
    let text = SMALL.replace("n_per_dim = 8", "n_per_dim = 7");
    let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
    assert_eq!(config_field(err), "grid.n_per_dim");
}

#[test]
fn unknown_keys_are_rejected() {
    let text = SMALL.replace("half_width = 5.0", "half_width = 5.0\nhalf_widht = 4.0");
    let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
    assert_eq!(config_field(err), "half_widht");
}

#[test]
fn runs_are_reproducible() {
    let cfg = ScenarioConfig::from_toml_str(SMALL).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let report = run_scenario(&cfg, d.path(), RunOptions::default()).unwrap();
        assert!(report.passed());
    }
    for name in ["report.json", "series.csv", "final.csv", "final.kdst"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
    assert!(dirs[0].path().join("timings.json").exists());
}

#[test]
fn seed_changes_the_initial_state() {
    let a = ScenarioConfig::from_toml_str(SMALL).unwrap();
    let b = ScenarioConfig::from_toml_str(&SMALL.replace("seed = 7", "seed = 8")).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_scenario(&a, da.path(), RunOptions::default()).unwrap();
    run_scenario(&b, db.path(), RunOptions::default()).unwrap();
    let fa = fs::read(da.path().join("final.csv")).unwrap();
    let fb = fs::read(db.path().join("final.csv")).unwrap();
    assert!(fa != fb);
}

#[test]
fn shipped_configs_validate() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 6);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = ScenarioConfig::from_toml_str(&SMALL.replace(r#"method = "direct""#, r#"method = "fast""#)).unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_scenario(&cfg, dir.path(), RunOptions::default())).unwrap();
        outputs.push(fs::read(dir.path().join("final.kdst")).unwrap());
    }
    assert!(outputs[0] == outputs[1]);
}
