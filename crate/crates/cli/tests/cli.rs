use avglemma_cli::config::{CommandName, ScenarioConfig};
use avglemma_cli::report::canonical_json;
use proptest::prelude::*;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_avglemma"));
    c.env_remove("AVGLEMMA_THREADS");
    c
}

fn run(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("scenario.toml");
    std::fs::write(&cfg, config).unwrap();
    bin().args(args).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).output().unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("out/report.json")).unwrap()).unwrap()
}

const FIT: &str = r#"
command = "fit-alpha"
[field]
name = "polynomial-curve"
space_dim = 2
velocity_dim = 1
[sweep]
sphere_samples = 512
eps_min = 1e-5
[expect]
alpha = 0.5
"#;

#[test]
fn missing_dimension_exits_with_config_code_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fit-alpha"], "command = \"fit-alpha\"\n[field]\nname = \"identity\"\nvelocity_dim = 2\n", dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("field"), "{err}");
    assert!(err.contains("space_dim"), "{err}");
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn fit_alpha_on_a_planar_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fit-alpha"], FIT, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert_eq!(r["passed"], true);
    let alpha = r["result"]["alpha"].as_f64().unwrap();
    assert!((alpha - 0.5).abs() < 0.05, "{alpha}");
    for name in r["artifacts"].as_array().unwrap() {
        assert!(dir.path().join("out").join(name.as_str().unwrap()).exists());
    }
    assert!(dir.path().join("out/timing.json").exists());
}

#[test]
fn replay_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&["fit-alpha"], FIT, a.path());
    let cfg = b.path().join("scenario.toml");
    std::fs::write(&cfg, FIT).unwrap();
    let out = bin()
        .args(["fit-alpha", "--threads", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(b.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    for f in ["report.json", "sup_measure.csv", "sup_measure.dat"] {
        assert_eq!(std::fs::read(a.path().join("out").join(f)).unwrap(), std::fs::read(b.path().join("out").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failing_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fit-alpha"], &FIT.replace("alpha = 0.5", "alpha = 0.9"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(dir.path())["passed"], false);
}

#[test]
fn command_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gamma-opt"], FIT, dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn environment_thread_count_must_parse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(&cfg, FIT).unwrap();
    let out = bin().env("AVGLEMMA_THREADS", "many").args(["fit-alpha", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("out");
    std::fs::write(&blocker, b"x").unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(&cfg, "[field]\nname = \"polynomial-curve\"\nspace_dim = 3\nvelocity_dim = 1\n").unwrap();
    let out = bin().args(["compare-exponents", "--config"]).arg(&cfg).arg("--out").arg(&blocker).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn compare_exponents_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["compare-exponents"], "[field]\nname = \"polynomial-curve\"\nspace_dim = 2\nvelocity_dim = 1\n", dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["command"], "compare-exponents");
    assert!((r["result"]["inv_gamma_opt"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn schema_is_printed_as_json() {
    let out = bin().arg("schema").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["properties"]["field"].is_object());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ScenarioConfig::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap();
            let command = cfg.command.expect("shipped configs name their command");
            cfg.validate(command).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hash_ignores_threads_and_output(threads in 1usize..64, dir in "[a-z]{1,8}", plots: bool) {
        let base = ScenarioConfig::from_toml(FIT).unwrap();
        let mut other = base.clone();
        other.threads = Some(threads);
        other.output.dir = Some(dir);
        other.output.plots = plots;
        prop_assert_eq!(base.hash(CommandName::FitAlpha), other.hash(CommandName::FitAlpha));
    }

    #[test]
    fn hash_tracks_the_seed(a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        let mut x = ScenarioConfig::from_toml(FIT).unwrap();
        let mut y = x.clone();
        x.seed = Some(a);
        y.seed = Some(b);
        prop_assert_ne!(x.hash(CommandName::FitAlpha), y.hash(CommandName::FitAlpha));
    }

    #[test]
    fn canonical_json_ignores_insertion_order(keys in proptest::collection::btree_set("[a-z]{1,6}", 1..8)) {
        let forward: serde_json::Map<_, _> = keys.iter().enumerate().map(|(i, k)| (k.clone(), serde_json::json!(i))).collect();
        let backward: serde_json::Map<_, _> = keys.iter().enumerate().rev().map(|(i, k)| (k.clone(), serde_json::json!(i))).collect();
        prop_assert_eq!(canonical_json(&forward.into()), canonical_json(&backward.into()));
    }
}
