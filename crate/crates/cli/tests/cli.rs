use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hlcompete(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlcompete"))
        .args(args)
        .current_dir(dir)
        .env("HLCOMPETE_OUT", dir.join("runs"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_starts_at_one_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["simulate", "--profile", "hl0", "--c", "1e-3", "--t-max", "1", "--seed", "7"];
    let a = hlcompete(tmp.path(), &[&args[..], &["--out", "a"]].concat());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = hlcompete(tmp.path(), &[&args[..], &["--out", "b"]].concat());
    assert_eq!(code(&b), 0);
    let csv = fs::read_to_string(tmp.path().join("a/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("0,1"));
    assert_eq!(csv, fs::read_to_string(tmp.path().join("b/trajectory.csv")).unwrap());
    let m = json(&tmp.path().join("a/manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 7);
}

#[test]
fn replay_reproduces_outputs_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hlcompete(tmp.path(), &["cluster", "--profile", "section4", "--c", "1e-2", "--n-particles", "40", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = tmp.path().join("runs/cluster-coexistence-c1e-2-seed3");
    let r = hlcompete(tmp.path(), &["replay", run.join("manifest.json").to_str().unwrap(), "--out", "again"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["cluster.json", "cluster.svg", "cluster.csv"] {
        assert_eq!(fs::read(run.join(f)).unwrap(), fs::read(tmp.path().join("again").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn render_of_a_stored_cluster_matches_the_original_svg() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&hlcompete(tmp.path(), &["cluster", "--profile", "hl0", "--c", "1e-2", "--t-max", "0.05", "--out", "c"])), 0);
    assert_eq!(code(&hlcompete(tmp.path(), &["render", "c/cluster.json", "--out", "r"])), 0);
    assert_eq!(fs::read(tmp.path().join("c/cluster.svg")).unwrap(), fs::read(tmp.path().join("r/cluster.svg")).unwrap());
}

#[test]
fn empty_cluster_renders_only_the_unit_circle() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&hlcompete(tmp.path(), &["cluster", "--profile", "hl0", "--c", "1e-2", "--n-particles", "0", "--out", "e"])), 0);
    let svg = fs::read_to_string(tmp.path().join("e/cluster.svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), 1);
    let csv = fs::read_to_string(tmp.path().join("e/cluster.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("-1,base,")));
}

#[test]
fn analyze_reports_classifications() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hlcompete(tmp.path(), &["analyze", "--profile", "section4", "--out", "s4"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["scale_speed"]["classification"], "both-infinite-recurrent");
    assert!((v["scale_speed"]["M"]["finite"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(json(&tmp.path().join("s4/report.json")), v);
    assert!(tmp.path().join("s4/manifest.json").exists());

    let o = hlcompete(tmp.path(), &["analyze", "--profile", "hl0"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["scale_speed"]["classification"], "both-finite");
    assert!((v["scale_speed"]["hitting_prob_0"].as_f64().unwrap() - 0.5).abs() < 1e-10);

    let o = hlcompete(tmp.path(), &["analyze", "--drift", "2*(1-x)", "--variance", "2*x*(2-x)"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["scale_speed"]["classification"], "both-infinite-recurrent");
}

#[test]
fn experiment_dry_run_and_hard_checks() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("eq.toml"), "kind = \"equivalence\"\nprofile = \"section4\"\nc = [1e-2]\nensemble = 4\nhorizon = 0.3\n").unwrap();
    let dry = hlcompete(tmp.path(), &["experiment", "--config", "eq.toml", "--dry-run", "--seed", "9"]);
    assert_eq!(code(&dry), 0);
    assert!(String::from_utf8_lossy(&dry.stdout).contains("seed = 9"));
    assert!(!tmp.path().join("runs").exists());

    let o = hlcompete(tmp.path(), &["experiment", "--config", "eq.toml", "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&tmp.path().join("runs/equivalence/report.json"));
    assert_eq!(report["kind"], "equivalence");

    // No discrepancy can meet a negative tolerance, so the hard check fails.
    fs::write(tmp.path().join("bad.toml"), "kind = \"equivalence\"\nprofile = \"section4\"\nc = [1e-2]\nensemble = 2\nhorizon = 0.3\ntolerance = -1.0\n").unwrap();
    let o = hlcompete(tmp.path(), &["experiment", "--config", "bad.toml", "--out", "bad"]);
    assert_eq!(code(&o), 1);
    assert!(tmp.path().join("bad/manifest.json").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("h.toml"), "kind = \"hl0\"\nprofile = \"hl0\"\nc = [1e-2]\nensemble = 16\nhorizon = 1.0\nseed = 4\n").unwrap();
    assert_eq!(code(&hlcompete(tmp.path(), &["experiment", "--config", "h.toml", "--threads", "1", "--out", "one"])), 0);
    assert_eq!(code(&hlcompete(tmp.path(), &["experiment", "--config", "h.toml", "--threads", "3", "--out", "three"])), 0);
    for f in ["report.json", "traces.csv"] {
        assert_eq!(fs::read(tmp.path().join("one").join(f)).unwrap(), fs::read(tmp.path().join("three").join(f)).unwrap());
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 7] = [
        &["simulate", "--profile", "hl0", "--c", "0", "--t-max", "1"],
        &["simulate", "--profile", "nonsense", "--c", "1e-2", "--t-max", "1"],
        &["cluster", "--profile", "hl0", "--c", "1e-2"],
        &["analyze", "--drift", "2*(1-x", "--variance", "x"],
        &["analyze", "--profile", "hl0", "--drift", "x", "--variance", "x"],
        &["experiment", "--config", "missing.toml"],
        &["render", "missing.json"],
    ];
    for args in cases {
        assert_eq!(code(&hlcompete(tmp.path(), args)), 2, "{args:?}");
    }
}
