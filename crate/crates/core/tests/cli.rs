use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const LINEAR: &str = r#"{
    "graph": {"agents": 3, "topology": "chain"},
    "agents": [
        {"kind": "linear", "a": [[-1.0, 0.5], [0.0, -2.0]], "b": [1.0, 0.0]},
        {"kind": "linear", "a": [[-2.0, 0.0], [0.3, -1.0]], "b": [0.0, 1.0]},
        {"kind": "linear", "a": [[-1.5, 0.2], [-0.2, -1.5]]}
    ],
    "coupling": {"matrices": [{"rank_one": [1.0, 1.0]}, [[2.0, 0.0], [0.0, 1.0]], {"rank_one": [1.0, 1.0]}]},
    "simulation": {"t_span": [0.0, 3.0], "seed": 4}
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blendsync"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn decompose_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lin.json", LINEAR);
    let o = run(&["decompose", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("report_decompose.csv")).unwrap();
    assert!(report.starts_with("check,residual,tolerance,passed\n"));
    assert!(!report.contains(",false"));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("p_o = 1"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lin.json", LINEAR);
    let mut outputs = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out), "--k", "20", "--transformed"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(out.join("trajectory_network_20.csv")).unwrap());
        assert!(out.join("trajectory_transformed_20.csv").exists());
        assert!(out.join("report_simulate.csv").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn simulate_refuses_gain_lists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lin.json", LINEAR);
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path()), "--k-list", "1,2"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep"));
}

#[test]
fn sweep_rows_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lin.json", LINEAR);
    let o = run(&[
        "sweep", "--config", s(&cfg), "--out", s(dir.path()), "--k-list", "10,100,1000", "--plot",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report_sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let errs: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    let svg = std::fs::read_to_string(dir.path().join("plot_error.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn blend_certifies_linear_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lin.json", LINEAR);
    let o = run(&["blend", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("report_blend.csv")).unwrap();
    assert!(report.contains("certificate_kind,certificate"));
    assert!(report.contains("certificate_valid,true"));
    assert!(dir.path().join("trajectory_limiting.csv").exists());
}

#[test]
fn unstable_blend_exits_with_numerical_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{
            "graph": {"agents": 2, "topology": "chain"},
            "agents": [{"kind": "linear", "a": [[0.5]]}, {"kind": "linear", "a": [[0.5]]}],
            "coupling": {"identical": {"identity": 1}},
            "simulation": {"t_span": [0.0, 1.0], "x0": [1.0, 1.0]}
        }"#,
    );
    let o = run(&["blend", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    // Artifacts are still written before the refusal is reported.
    assert!(dir.path().join("report_blend.csv").exists());
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "neg.json",
        r#"{
            "graph": {"agents": 2, "topology": "chain"},
            "agents": [{"kind": "linear", "a": [[-1.0]]}, {"kind": "linear", "a": [[-1.0]]}],
            "coupling": {"matrices": [[[1.0]], [[-2.0]]]}
        }"#,
    );
    let o = run(&["decompose", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("-2"));

    let o = run(&["decompose", "--config", s(&dir.path().join("missing.json"))]);
    assert_eq!(code(&o), 1);
    let o = run(&["simulate", "--config", s(&cfg), "--method", "euler"]);
    assert_eq!(code(&o), 1);
    let o = run(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn counting_app_with_join() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "count.json",
        r#"{
            "graph": {"agents": 3, "topology": "chain"},
            "app": {"type": "counting", "n_max": 5, "events": [{"time": 100.0, "action": "join", "id": 4}]},
            "simulation": {"t_span": [0.0, 190.0], "k": 200, "seed": 9}
        }"#,
    );
    let o = run(&["app", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory_counting_200.csv")).unwrap();
    let mut seen_four = false;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let t: f64 = f[1].parse().unwrap();
        let rounded: i64 = f[4].parse().unwrap();
        if (82.0..100.0).contains(&t) {
            assert_eq!(rounded, 3, "{line}");
        }
        if t >= 182.0 {
            assert_eq!(rounded, 4, "{line}");
            seen_four = true;
        }
    }
    assert!(seen_four);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("correct rounded count: true"));
}

#[test]
fn dispatch_app_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dispatch.json",
        r#"{
            "graph": {"agents": 2, "topology": "chain"},
            "app": {"type": "dispatch", "nodes": [
                {"a": 1.0, "b": 1.0, "lower": -100.0, "upper": 100.0, "demand": 2.0},
                {"a": 1.0, "b": 3.0, "lower": -100.0, "upper": 100.0, "demand": 3.0}
            ]},
            "simulation": {"t_span": [0.0, 40.0], "x0": [0.0, 0.0]}
        }"#,
    );
    let o = run(&["app", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report_app.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((f[1] - f[3]).abs() < 1e-2 && (f[2] - f[4]).abs() < 1e-2, "{line}");
    }
}

#[test]
fn shipped_scenarios_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for entry in std::fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        blendsync::cli::scenario::Scenario::from_path(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}
