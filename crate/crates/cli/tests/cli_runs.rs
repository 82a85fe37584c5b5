//! End-to-end runs of the `nlsgraph` binary: emitted files, JSON schema,
//! determinism and exit codes.

use std::fs;
use std::path::Path;
use std::process::Output;

use serde_json::Value;

fn nlsgraph(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_nlsgraph"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary launches")
}

fn write_interval(dir: &Path) -> String {
    let spec = r#"{
        "vertices": ["a", "b"],
        "edges": [{"id": "e1", "from": "a", "to": "b", "length": 4.0}]
    }"#;
    fs::write(dir.join("interval.json"), spec).unwrap();
    "interval.json".into()
}

fn write_star3(dir: &Path) -> String {
    let spec = r#"{
        "vertices": ["c", "l1", "l2", "l3"],
        "edges": [
            {"id": "e1", "from": "c", "to": "l1", "length": 30.0},
            {"id": "e2", "from": "c", "to": "l2", "length": 30.0},
            {"id": "e3", "from": "c", "to": "l3", "length": 30.0}
        ]
    }"#;
    fs::write(dir.join("star3.json"), spec).unwrap();
    "star3.json".into()
}

fn load_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn keys(v: &Value) -> Vec<String> {
    let mut out: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    out.sort();
    out
}

fn golden_keys(golden: &Value, name: &str) -> Vec<String> {
    golden[name]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

#[test]
fn solve_run_matches_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_interval(dir.path());
    let out = nlsgraph(
        dir.path(),
        &["solve", "--graph", &graph, "--lambda", "100", "--out", "run"],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let golden = load_json(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/record_fields.json").as_path());
    let run = dir.path().join("run");

    let records = load_json(&run.join("records.json"));
    let record = &records.as_array().unwrap()[0];
    assert_eq!(keys(record), golden_keys(&golden, "record"));
    assert_eq!(keys(&record["params"]), golden_keys(&golden, "params"));
    assert_eq!(keys(&record["mesh"]), golden_keys(&golden, "mesh"));
    assert_eq!(keys(&record["report"]), golden_keys(&golden, "report"));
    let peak = &record["peaks"].as_array().unwrap()[0];
    assert_eq!(keys(peak), golden_keys(&golden, "peak"));
    assert_eq!(keys(&peak["location"]), golden_keys(&golden, "location"));
    assert!(record["u"].as_array().unwrap().len() > 100);

    let manifest = load_json(&run.join("manifest.json"));
    assert_eq!(keys(&manifest), golden_keys(&golden, "manifest"));
    assert_eq!(keys(&manifest["graph"]), golden_keys(&golden, "manifest_graph"));
    assert_eq!(manifest["seed"], 0);

    let csv = fs::read_to_string(run.join("solution_100.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "edge,x,value");
    let first = lines.next().unwrap();
    assert!(first.starts_with("e1,0,"), "got: {first}");
}

#[test]
fn sweep_csv_lists_every_lambda_with_observables() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_interval(dir.path());
    let out = nlsgraph(
        dir.path(),
        &["sweep", "--graph", &graph, "--lambda", "50,100,200", "--out", "run"],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("run/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "lambda,action_j,mass_sq,peak_vertex,profile_error,decay_c2,correction_norm,residual_r"
    );
    assert_eq!(lines.len(), 4);
    for (line, lambda) in lines[1..].iter().zip(["50", "100", "200"]) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], lambda);
        assert_eq!(fields[3], "b");
        // Least-action rows have values in every column except the peaked ones.
        for f in &fields[1..6] {
            assert!(!f.is_empty());
        }
        assert!(fields[6].is_empty() && fields[7].is_empty());
    }
    for name in ["action_j.dat", "mass_sq.dat", "profile_error.dat", "decay_c2.dat"] {
        let dat = fs::read_to_string(dir.path().join("run").join(name)).unwrap();
        assert_eq!(dat.lines().count(), 4, "{name} has a header plus one line per lambda");
    }
    for lambda in ["50", "100", "200"] {
        assert!(dir.path().join(format!("run/solution_{lambda}.csv")).exists());
    }
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_interval(dir.path());
    for out in ["run1", "run2"] {
        let o = nlsgraph(
            dir.path(),
            &[
                "sweep", "--graph", &graph, "--lambda", "50,100,200", "--seed", "7", "--out", out,
            ],
        );
        assert!(o.status.success());
    }
    for name in [
        "sweep.csv",
        "solution_50.csv",
        "solution_100.csv",
        "solution_200.csv",
        "records.json",
        "action_j.dat",
    ] {
        let a = fs::read(dir.path().join("run1").join(name)).unwrap();
        let b = fs::read(dir.path().join("run2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn peaked_run_reports_the_correction() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_interval(dir.path());
    let out = nlsgraph(
        dir.path(),
        &[
            "peaked", "--graph", &graph, "--lambda", "100", "--peaks", "a", "--out", "run",
        ],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let golden = load_json(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/record_fields.json").as_path());
    let records = load_json(&dir.path().join("run/records.json"));
    let peaked = &records.as_array().unwrap()[0];
    assert_eq!(keys(peaked), golden_keys(&golden, "peaked_record"));
    assert_eq!(peaked["record"]["peaks"][0]["vertex_id"], "a");
    assert!(peaked["correction_norm"].as_f64().unwrap() < 0.1);
}

#[test]
fn spectrum_of_the_central_state_counts_the_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_star3(dir.path());
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"center": "c", "k": 4}"#,
    )
    .unwrap();
    let out = nlsgraph(
        dir.path(),
        &[
            "spectrum", "-c", "cfg.json", "--graph", &graph, "--lambda", "1", "--h-target",
            "0.025", "--out", "run",
        ],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let golden = load_json(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/record_fields.json").as_path());
    let spectrum = load_json(&dir.path().join("run/spectrum.json"));
    assert_eq!(keys(&spectrum), golden_keys(&golden, "spectrum"));
    // A soliton centered on a 3-star carries a two-dimensional near-kernel.
    assert_eq!(spectrum["kernel_count"], 2);
    let eigs = spectrum["eigenvalues"].as_array().unwrap();
    assert_eq!(eigs.len(), 4);
    assert!(eigs[2].as_f64().unwrap() > 0.5);
}

#[test]
fn config_errors_exit_two_with_machine_readable_json() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_interval(dir.path());
    let golden = load_json(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/record_fields.json").as_path());

    let check = |out: Output, needle: &str| {
        assert_eq!(out.status.code(), Some(2));
        let json: Value = serde_json::from_slice(&out.stdout).expect("error JSON on stdout");
        assert_eq!(keys(&json["error"]), golden_keys(&golden, "error"));
        assert_eq!(json["error"]["kind"], "config");
        let msg = json["error"]["message"].as_str().unwrap();
        assert!(msg.contains(needle), "missing '{needle}' in: {msg}");
    };

    // Unknown config key, with serde's line/column diagnostics.
    fs::write(dir.path().join("bad.json"), "{\n  \"lambdaa\": [4]\n}").unwrap();
    check(
        nlsgraph(dir.path(), &["solve", "-c", "bad.json", "--graph", &graph]),
        "lambdaa",
    );
    // Negative λ names the offending entry.
    check(
        nlsgraph(
            dir.path(),
            &["solve", "--graph", &graph, "--lambda", "10,-5", "--out", "run"],
        ),
        "lambda[1]",
    );
    // Peaked mode without a peak set.
    check(
        nlsgraph(
            dir.path(),
            &["peaked", "--graph", &graph, "--lambda", "100", "--out", "run"],
        ),
        "peak set",
    );
    // Missing graph file.
    check(
        nlsgraph(
            dir.path(),
            &["solve", "--graph", "missing.json", "--lambda", "5", "--out", "run"],
        ),
        "missing.json",
    );
}

#[test]
fn solver_failures_exit_one_and_name_the_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_interval(dir.path());
    // Below the bifurcation frequency only the constant branch exists.
    let out = nlsgraph(
        dir.path(),
        &["solve", "--graph", &graph, "--lambda", "0.2", "--out", "run"],
    );
    assert_eq!(out.status.code(), Some(1));
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["error"]["kind"], "solver");
    assert_eq!(json["error"]["lambda"], 0.2);
}
