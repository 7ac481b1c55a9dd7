use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dynfl::instance::{write_instance, Instance};
use dynfl::synth::perturbed_pair;
use serde_json::{json, Value};
use tempfile::TempDir;

fn dynfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynfl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn gen(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let p = path(dir, name);
    let mut args = vec![
        "gen",
        "--nf",
        "3",
        "--nc",
        "4",
        "--T",
        "2",
        "--seed",
        "5",
        "--out",
        s(&p),
    ];
    args.extend_from_slice(extra);
    let out = dynfl(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    p
}

#[test]
fn staged_pipeline_runs() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &["--drift", "0.3", "--g", "0.4"]);
    let frac = path(&dir, "frac.json");
    let prep = path(&dir, "prep.json");
    let sol = path(&dir, "sol.json");
    let exp = path(&dir, "exp.json");
    let exact = path(&dir, "exact.json");

    assert_eq!(
        code(&dynfl(&[
            "validate",
            "--in",
            s(&inst),
            "--out",
            s(&path(&dir, "v.json"))
        ])),
        0
    );
    assert_eq!(
        code(&dynfl(&[
            "solve",
            "--in",
            s(&inst),
            "--out",
            s(&frac),
            "--tol",
            "1e-9"
        ])),
        0
    );
    let f = read_json(&frac);
    assert_eq!(f["x"].as_array().unwrap().len(), 2);
    assert_eq!(f["x"][0].as_array().unwrap().len(), 3);
    assert_eq!(f["x"][0][0].as_array().unwrap().len(), 4);
    assert_eq!(f["z"].as_array().unwrap().len(), 1);
    let objective = f["objective"].as_f64().unwrap();
    let parts = ["opening", "connection", "switching"].map(|k| f[k].as_f64().unwrap());
    assert!((parts.iter().sum::<f64>() - objective).abs() < 1e-9);

    assert_eq!(
        code(&dynfl(&["preprocess", "--in", s(&frac), "--out", s(&prep)])),
        0
    );
    assert!(read_json(&prep)["preprocessed"]["o"].is_array());

    assert_eq!(
        code(&dynfl(&[
            "round",
            "--in",
            s(&prep),
            "--seed",
            "9",
            "--out",
            s(&sol)
        ])),
        0
    );
    let r = read_json(&sol);
    assert_eq!(r["report"]["solution"]["open"].as_array().unwrap().len(), 2);
    assert!(r["report"]["cost"]["total"].as_f64().unwrap() >= objective - 1e-9);

    let out = dynfl(&[
        "experiment",
        "--in",
        s(&prep),
        "--trials",
        "4000",
        "--seed",
        "2",
        "--out",
        s(&exp),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_json(&exp)["report"]["bounds"]["passed"], json!(true));

    assert_eq!(
        code(&dynfl(&[
            "oracle",
            "--in",
            s(&inst),
            "--limit",
            "1000000",
            "--out",
            s(&exact)
        ])),
        0
    );
    let opt = read_json(&exact)["report"]["cost"].as_f64().unwrap();
    assert!(objective <= opt + 1e-9);
}

#[test]
fn experiment_from_instance_reports_ratios() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &["--drift", "0.3"]);
    let rep = path(&dir, "rep.json");
    let out = dynfl(&[
        "experiment",
        "--in",
        s(&inst),
        "--trials",
        "2000",
        "--out",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&rep);
    assert!(v["report"]["ratio"]["mean"].as_f64().unwrap() <= 14.0);
    assert!(v["report"]["oracle"].is_null());
    assert!(v["timestamp"].is_u64());
    for c in v["report"]["bounds"]["checks"].as_array().unwrap() {
        for key in ["empirical", "bound", "sigma", "passed"] {
            assert!(!c[key].is_null(), "{c}");
        }
    }
}

#[test]
fn pipeline_reports_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &["--drift", "0.2"]);
    let a = path(&dir, "a.json");
    let b = path(&dir, "b.json");
    for p in [&a, &b] {
        let out = dynfl(&[
            "pipeline",
            "--in",
            s(&inst),
            "--trials",
            "3000",
            "--seed",
            "11",
            "--no-timestamp",
            "--out",
            s(p),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let v = read_json(&a);
    assert!(v.get("timestamp").is_none());
    assert_eq!(v["report"]["passed"], json!(true));
    let opt_ratio = v["report"]["oracle"]["ratio"]["mean"].as_f64().unwrap();
    assert!(opt_ratio <= v["report"]["ratio"]["mean"].as_f64().unwrap() + 1e-12);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&dynfl(&["frobnicate"])), 1);
    assert_eq!(code(&dynfl(&[])), 1);
    assert_eq!(code(&dynfl(&["solve"])), 1);
    assert_eq!(
        code(&dynfl(&["pipeline", "--in", "x.json", "--trials", "many"])),
        1
    );
    assert_eq!(code(&dynfl(&["--help"])), 0);
    assert_eq!(code(&dynfl(&["--version"])), 0);
}

#[test]
fn malformed_json_names_location() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "bad.json");
    fs::write(
        &p,
        "{\n  \"facilities\": [\n    {\"id\": \"a\", \"open_cost\": 1}\n  ,\n",
    )
    .unwrap();
    let out = dynfl(&["pipeline", "--in", s(&p)]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("read instance"), "{err}");
    assert!(err.contains("line"), "{err}");
}

#[test]
fn missing_file_is_a_data_error() {
    let out = dynfl(&["solve", "--in", "/nonexistent/instance.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn triangle_violation_fails_validation() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "bad.json");
    // d(1,1) = 10 exceeds d(1,0) + d(0,0) + d(0,1) = 3
    let inst =
        Instance::from_arrays(2, 2, 1, 1.0, vec![1.0, 1.0], vec![1.0, 1.0, 1.0, 10.0]).unwrap();
    write_instance(&inst, &p).unwrap();
    let rep = path(&dir, "v.json");
    let out = dynfl(&["validate", "--in", s(&p), "--out", s(&rep)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("validate"));
    let v = read_json(&rep);
    assert_eq!(v["report"]["passed"], json!(false));
    assert_eq!(v["report"]["violations"][0]["kind"], json!("triangle"));
    assert_eq!(code(&dynfl(&["pipeline", "--in", s(&p)])), 2);
}

#[test]
fn oracle_limit_is_enforced() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &[]);
    let out = dynfl(&["oracle", "--in", s(&inst), "--limit", "10"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("oracle"));
}

fn write_prep(
    dir: &TempDir,
    name: &str,
    prep: &dynfl::preprocess::PreprocessedSolution,
) -> PathBuf {
    let p = path(dir, name);
    fs::write(&p, serde_json::to_string(prep).unwrap()).unwrap();
    p
}

#[test]
fn perturb_reads_bare_solutions() {
    let dir = TempDir::new().unwrap();
    let (a, b, _) = perturbed_pair(3, 6, 1, 4, 3).unwrap();
    let pa = write_prep(&dir, "a.json", &a);
    let pb = write_prep(&dir, "b.json", &b);
    let rep = path(&dir, "p.json");
    let out = dynfl(&[
        "perturb",
        "--inA",
        s(&pa),
        "--inB",
        s(&pb),
        "--trials",
        "3000",
        "--seed",
        "4",
        "--out",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&rep);
    assert_eq!(v["report"]["changed"][0].as_array().unwrap().len(), 1);
    assert!(v["report"]["differing_paths"][0]["mean"].as_f64().unwrap() <= 7.0);

    let (c, _, _) = perturbed_pair(3, 7, 1, 4, 3).unwrap();
    let pc = write_prep(&dir, "c.json", &c);
    assert_eq!(
        code(&dynfl(&["perturb", "--inA", s(&pa), "--inB", s(&pc)])),
        2
    );
}

#[test]
fn inconsistent_fractions_fail_bounds() {
    // One client split over two copies whose fractions do not sum to one:
    // each opens half the time, not with probability 0.2.
    let dir = TempDir::new().unwrap();
    let inst = Instance::from_arrays(2, 1, 1, 0.0, vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
    let prep = json!({
        "instance": inst,
        "lp": {"opening": 0.4, "connection": 0.4, "switching": 0.0},
        "stabilized": {"opening": 0.4, "connection": 0.4, "switching": 0.0},
        "preprocessed": {
            "num_facilities": 2, "num_clients": 1, "horizon": 1,
            "back_map": [0, 1], "o": [0.2, 0.2], "threshold": [0.2, 0.2],
            "active": [[0, 1]], "connections": [[[0, 1]]], "z": []
        }
    });
    let p = path(&dir, "prep.json");
    fs::write(&p, prep.to_string()).unwrap();
    let out = dynfl(&[
        "experiment",
        "--in",
        s(&p),
        "--trials",
        "5000",
        "--out",
        s(&path(&dir, "e.json")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
