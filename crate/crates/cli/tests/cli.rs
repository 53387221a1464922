use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pbh_cli::config::{GraphSpec, HarnackExponent};
use pbh_cli::ExperimentConfig;

const KINDS: [&str; 8] = [
    "verify-approx",
    "caloric-basis",
    "solve",
    "harnack-exponent",
    "iterate",
    "counterexample",
    "scaling-check",
    "obstacle-demo",
];

fn pbh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbh")).args(args).output().unwrap()
}

fn run_with(kind: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = out.with_extension("toml");
    fs::write(&cfg, config).unwrap();
    let mut args = vec![kind, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    pbh(&args)
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn configs_round_trip_through_toml() {
    for kind in KINDS {
        let c = ExperimentConfig::default_for(kind).unwrap();
        assert!(c.validate().is_empty(), "{kind}: {:?}", c.validate());
        assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c, "{kind}");
    }
    let mut h = HarnackExponent::default();
    h.domain.graph = GraphSpec::None;
    h.radii = vec![0.3, 0.2, 0.1];
    let c = ExperimentConfig::HarnackExponent(h);
    assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c);
}

#[test]
fn partial_configs_take_defaults() {
    let c = ExperimentConfig::parse("kind = \"verify-approx\"\nk = 5\n").unwrap();
    let ExperimentConfig::VerifyApprox(v) = c else { panic!() };
    assert_eq!((v.n, v.k, v.instances), (2, 5, 100));
    assert!(ExperimentConfig::parse("kind = \"verify-approx\"\nkk = 5\n").is_err());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["verify-approx", "obstacle-demo", "iterate"] {
        let a = dir.path().join(format!("{kind}-a"));
        let b = dir.path().join(format!("{kind}-b"));
        let config = format!("kind = \"{kind}\"\n");
        assert!(run_with(kind, &config, &a, &[]).status.success());
        assert!(run_with(kind, &config, &b, &[]).status.success());
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{kind}: {name:?}");
        }
    }
}

#[test]
fn verify_approx_is_exact_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let config = "kind = \"verify-approx\"\nn = 2\nk = 3\ninstances = 100\n";
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_with("verify-approx", config, &a, &["--seed", "5"]).status.success());
    assert!(run_with("verify-approx", config, &b, &["--seed", "6"]).status.success());
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(ra["result"]["exact"], 100);
    assert_eq!(ra["seed"], 5);
    assert_ne!(ra["config_sha256"], rb["config_sha256"]);
    assert_ne!(ra["outputs"][0]["sha256"], rb["outputs"][0]["sha256"]);
    let csv = fs::read_to_string(a.join("instances.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn counterexample_exponent_in_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cx");
    let o = run_with("counterexample", "kind = \"counterexample\"\nalpha = 1.0\nbeta = 0.5\n", &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = report(&out)["result"]["fitted_exponent"].as_f64().unwrap();
    assert!((e + 0.5).abs() <= 0.08, "{e}");
    let csv = fs::read_to_string(out.join("ratios.csv")).unwrap();
    assert!(csv.starts_with("t,ratio,oracle_lo,oracle_hi\n"));
}

#[test]
fn malformed_config_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let o = run_with("solve", "kind = \"solve\"\n[grid\nh = 0.1", &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = run_with("solve", "kind = \"solve\"\n[grid]\nh = -0.1\ntau = 0.1\n", &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.h"));
    assert!(!out.exists());

    let o = run_with("solve", "kind = \"iterate\"\n", &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = pbh(&["solve", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("num");
    // probe times below two time steps cannot be resolved
    let config = "kind = \"counterexample\"\nj_min = 3\nj_max = 20\n";
    let o = run_with("counterexample", config, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn print_config_emits_defaults() {
    let o = pbh(&["obstacle-demo", "--print-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::default_for("obstacle-demo").unwrap());
}
