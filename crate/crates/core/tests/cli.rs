use hierctrl::cli::{dispatch, parse_problem_str, Command, RunOptions, RunStatus, MANIFEST, SCHEMA};
use std::path::{Path, PathBuf};
use std::process::Command as Process;

const BENCHMARK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/problems/benchmark_1d.json");
const SMALL: &str = r#"{"grid": {"n_x": 15, "n_t": 20}, "seed": 3}"#;

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_hierctrl"))
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST)).unwrap()).unwrap()
}

fn run_small(command: Command, text: &str, out: PathBuf, opts: RunOptions) -> hierctrl::cli::RunManifest {
    let pf = parse_problem_str(text).unwrap();
    dispatch(command, &pf, text.as_bytes(), None, &RunOptions { out, ..opts })
}

#[test]
fn validate_writes_only_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let status = bin()
        .args(["validate", "--problem", BENCHMARK, "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(files(&out), [MANIFEST]);
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["details"]["sign_certificate"]["a0"], 1.0);
    let bytes = std::fs::read(BENCHMARK).unwrap();
    assert_eq!(m["config_hash"], hierctrl::cli::config_hash(&bytes));
}

#[test]
fn invalid_problems_fail_with_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"regions": {"omega1": [0.25, 0.35]}}"#).unwrap();
    let out = tmp.path().join("bad");
    let o = bin()
        .args(["validate", "--problem"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["status"], "error");
    assert!(m["error"].as_str().unwrap().contains("omega1 intersects omega"));

    std::fs::write(&bad, "{\n  \"grid\": {\"n_x\": 11,}\n}").unwrap();
    let o = bin()
        .args(["simulate", "--problem"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(manifest(&out)["error"].as_str().unwrap().contains("line 2"));

    let o = bin().args(["explode", "--problem"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!("explode".parse::<Command>().is_err());
}

#[test]
fn control_ladder_writes_three_results_and_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let status = bin()
        .args([
            "control",
            "--problem",
            BENCHMARK,
            "--epsilon-ladder",
            "1e-1,1e-3,1e-5",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let m = manifest(&out);
    let listed: Vec<String> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let mut on_disk = files(&out);
    on_disk.retain(|f| f != MANIFEST);
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, on_disk, "every output is listed");
    for tag in ["1e-1", "1e-3", "1e-5"] {
        assert!(listed.contains(&format!("hum_eps_{tag}.json")));
    }
    let decay = std::fs::read_to_string(out.join("decay.csv")).unwrap();
    let rows: Vec<Vec<f64>> = decay
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1][1] < rows[0][1] && rows[2][1] < rows[1][1]);
    assert_eq!(m["details"]["strictly_decreasing"], true);

    // every CSV column is documented
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join(SCHEMA)).unwrap()).unwrap();
    for f in on_disk.iter().filter(|f| f.ends_with(".csv")) {
        let header = std::fs::read_to_string(out.join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        let documented: Vec<&str> = schema[f.as_str()]["columns"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["name"].as_str().unwrap())
            .collect();
        assert_eq!(header.split(',').collect::<Vec<_>>(), documented, "{f}");
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ladder = Some(vec![1e-2, 1e-4]);
    run_small(
        Command::Control,
        SMALL,
        a.clone(),
        RunOptions {
            epsilon_ladder: ladder.clone(),
            jobs: Some(1),
            ..Default::default()
        },
    );
    run_small(
        Command::Control,
        SMALL,
        b.clone(),
        RunOptions {
            epsilon_ladder: ladder,
            jobs: Some(3),
            ..Default::default()
        },
    );
    let names = files(&a);
    assert_eq!(names, files(&b));
    for n in names.iter().filter(|n| *n != MANIFEST) {
        assert_eq!(
            std::fs::read(a.join(n)).unwrap(),
            std::fs::read(b.join(n)).unwrap(),
            "{n}"
        );
    }
}

#[test]
fn nash_with_zero_data_gives_zero_controls() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("n");
    let text = r#"{"grid": {"n_x": 15, "n_t": 20}, "targets": {"y_d1": "zero", "y_d2": "zero"}, "initial": "zero"}"#;
    let m = run_small(Command::Nash, text, out.clone(), RunOptions::default());
    assert_eq!(m.status, RunStatus::Ok, "{:?}", m.error);
    for f in ["nash_operator.csv", "nash_optimality.csv"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        for line in text.lines().skip(1) {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!((v[2], v[3]), (0.0, 0.0), "{f}: {line}");
        }
    }
}

#[test]
fn nash_routes_agree_on_the_small_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run_small(
        Command::Nash,
        SMALL,
        tmp.path().join("n"),
        RunOptions {
            samples: Some(5),
            ..Default::default()
        },
    );
    assert_eq!(m.status, RunStatus::Ok, "{:?}", m.error);
    assert!(m.details["route_agreement"].as_f64().unwrap() < 1e-6);
    assert_eq!(m.details["coercivity_holds"], true);
}

#[test]
fn simulate_observability_and_carleman_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{"grid": {"n_x": 15, "n_t": 20}, "controls": {"g": "sin(pi*x)*t"},
                   "analysis": {"carleman_lambda": [1.5, 2.0], "carleman_s": ["auto", 0.001]}}"#;
    let opts = RunOptions {
        samples: Some(4),
        ..Default::default()
    };
    let s = run_small(Command::Simulate, text, tmp.path().join("s"), opts.clone());
    assert_eq!(s.status, RunStatus::Ok);
    assert!(s.outputs.contains(&"trajectory.bin".to_string()));
    let o = run_small(Command::Observability, text, tmp.path().join("o"), opts.clone());
    assert_eq!(o.status, RunStatus::Ok, "{:?}", o.error);
    assert_eq!(o.details["all_finite"], true);
    let c = run_small(Command::Carleman, text, tmp.path().join("k"), opts);
    assert_eq!(c.status, RunStatus::Ok, "{:?}", c.error);
    let summary = std::fs::read_to_string(tmp.path().join("k/carleman.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn sweep_runs_one_manifest_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sw");
    let text = r#"{"grid": {"n_x": 15, "n_t": 20},
                   "sweep": {"command": "validate", "parameters": {"lambda": [1.5, 2.0, 2.5], "alpha1": [0.5, 1.0]}}}"#;
    let m = run_small(
        Command::Sweep,
        text,
        out.clone(),
        RunOptions {
            jobs: Some(2),
            ..Default::default()
        },
    );
    assert_eq!(m.status, RunStatus::Ok, "{:?}", m.error);
    let index = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(index.lines().count(), 7);
    for i in 0..6 {
        let cell = out.join(format!("cell_{i:03}"));
        let cm = manifest(&cell);
        assert_eq!(cm["status"], "ok");
        let bytes = std::fs::read(cell.join("problem.json")).unwrap();
        assert_eq!(cm["config_hash"], hierctrl::cli::config_hash(&bytes));
    }

    let bad = r#"{"sweep": {"command": "control", "parameters": {"mu1": [-1.0]}}}"#;
    let m = run_small(Command::Sweep, bad, tmp.path().join("bad"), RunOptions::default());
    assert_eq!(m.status, RunStatus::Error);
}

#[test]
fn observation_region_must_meet_control_region() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{"grid": {"n_x": 15, "n_t": 20}, "regions": {"Od": [0.75, 0.78]}}"#;
    let m = run_small(Command::Control, text, tmp.path().join("c"), RunOptions::default());
    assert_eq!(m.status, RunStatus::Error);
    assert!(m.error.unwrap().contains("Od does not intersect omega"));
    let v = run_small(Command::Validate, text, tmp.path().join("v"), RunOptions::default());
    assert_eq!(v.status, RunStatus::Ok);
    assert!(!v.warnings.is_empty());
}
