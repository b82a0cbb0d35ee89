//! End-to-end tests of the `mec` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::{json, Value};

struct Scratch(PathBuf);

impl Scratch {
    fn new(name: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("mec-cli-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn file(&self, name: &str, contents: &str) -> String {
        let path = self.0.join(name);
        std::fs::write(&path, contents).unwrap();
        path.to_str().unwrap().to_string()
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        std::fs::remove_dir_all(&self.0).ok();
    }
}

fn mec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mec")).args(args).output().unwrap()
}

fn json_ok(args: &[&str]) -> Value {
    let out = mec(args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

const WORKED: &str = r#"{"marginals": [[0.6, 0.4], [0.5, 0.5]]}"#;

#[test]
fn couple_worked_instance() {
    let dir = Scratch::new("couple");
    let input = dir.file("w.json", WORKED);
    let out = json_ok(&["couple", &input, "--alg", "1"]);
    assert_eq!(out["entries"].as_array().unwrap().len(), 3);
    assert!((f(&out["entropy_bits"]) - 1.360964).abs() < 1e-6);
    assert_eq!(out["steps"], 3);
    assert_eq!(out["entries"][0], json!({"indices": [1, 1], "mass": 0.5}));
    assert!(out.get("trace").is_none());
    assert!(out.get("phase_boundary").is_none());

    let two = json_ok(&["couple", &input, "--alg", "2"]);
    assert_eq!(two["phase_boundary"], 2);
}

#[test]
fn couple_point_mass_and_csv() {
    let dir = Scratch::new("point");
    let input = dir.file("p.csv", "# one state each\n1.0\n1.0\n");
    let out = json_ok(&["couple", &input]);
    assert_eq!(out["entries"], json!([{"indices": [1, 1], "mass": 1.0}]));
    assert_eq!(f(&out["entropy_bits"]), 0.0);
}

#[test]
fn couple_round_trip_reproduces_marginals() {
    let dir = Scratch::new("roundtrip");
    let marginals = [[0.5, 0.3, 0.2], [0.25, 0.25, 0.5], [0.1, 0.6, 0.3]];
    let input = dir.file("m.json", &json!({ "marginals": marginals }).to_string());
    for alg in ["1", "2"] {
        let out = json_ok(&["couple", &input, "--alg", alg]);
        let mut sums = vec![vec![0.0; 3]; 3];
        for e in out["entries"].as_array().unwrap() {
            for (axis, idx) in e["indices"].as_array().unwrap().iter().enumerate() {
                sums[axis][idx.as_u64().unwrap() as usize - 1] += f(&e["mass"]);
            }
        }
        for (got, want) in sums.iter().zip(&marginals) {
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() <= 1e-9, "alg {alg}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn ragged_input_is_a_dimension_error() {
    let dir = Scratch::new("ragged");
    let input = dir.file("r.csv", "0.5,0.5\n0.2,0.3,0.5\n");
    let out = mec(&["couple", &input]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn bad_probabilities_are_input_errors() {
    let dir = Scratch::new("badprob");
    for (name, text) in [("neg.csv", "1.2,-0.2\n0.5,0.5\n"), ("sum.csv", "0.6,0.6\n0.5,0.5\n"), ("nan.json", "{\"marginals\": [[0.5]]")] {
        let input = dir.file(name, text);
        assert_eq!(mec(&["couple", &input]).status.code(), Some(2), "{name}");
    }
    assert_eq!(mec(&["couple", "/nonexistent/mec-input.json"]).status.code(), Some(2));
}

#[test]
fn certify_worked_and_uniform() {
    let dir = Scratch::new("certify");
    let out = json_ok(&["certify", &dir.file("w.json", WORKED)]);
    assert_eq!(out["local_optimum_certified"], true);
    assert!(f(&out["max_reconstruction_error"]) < 1e-8);
    assert!(f(&out["residual_norm"]) < 1e-8);

    let out = json_ok(&["certify", &dir.file("u.json", r#"{"marginals": [[0.5, 0.5], [0.5, 0.5]]}"#)]);
    assert_eq!(out["local_optimum_certified"], true);
    for row in out["u"].as_array().unwrap() {
        assert!(row.as_array().unwrap().iter().all(|x| f(x) == 0.0));
    }
}

#[test]
fn certify_rejects_tampered_trace() {
    let dir = Scratch::new("tamper");
    let input = dir.file("w.json", WORKED);
    let good = mec(&["couple", &input, "--trace"]);
    let trace_file = dir.file("good.json", std::str::from_utf8(&good.stdout).unwrap());
    let ok = json_ok(&["certify", &input, "--trace-in", &trace_file]);
    assert_eq!(ok["local_optimum_certified"], true);

    // move the last assignment to a different cell
    let mut trace: Value = serde_json::from_slice(&good.stdout).unwrap();
    trace["trace"]["steps"][2]["indices"] = json!([2, 1]);
    let bad = dir.file("bad.json", &trace.to_string());
    let out = mec(&["certify", &input, "--trace-in", &bad]);
    assert_eq!(out.status.code(), Some(3));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["local_optimum_certified"], false);
    assert!(report["reason"].as_str().is_some_and(|r| !r.is_empty()));
}

#[test]
fn bound_with_oracle() {
    let dir = Scratch::new("bound");
    let out = json_ok(&["bound", &dir.file("w.json", WORKED), "--oracle"]);
    assert!(f(&out["tightness"]).abs() < 1e-9);
    assert!((f(&out["optimum"]) - 1.360964).abs() < 1e-6);
    assert_eq!(out["T"], 0.1);
    assert_eq!(out["slack"], 1.0);

    let six = dir.file("big.json", &json!({"marginals": [vec![1.0 / 6.0; 6], vec![1.0 / 6.0; 6]]}).to_string());
    let out = mec(&["bound", &six, "--oracle"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bound_on_generated_family() {
    let dir = Scratch::new("family");
    let generated = mec(&["generate", "family", "--n", "4", "--alpha", "1.5"]);
    assert!(generated.status.success());
    let input = dir.file("family.json", std::str::from_utf8(&generated.stdout).unwrap());
    let out = json_ok(&["bound", &input]);
    assert_eq!(out["achieved"], 2.5);
    assert_eq!(out["T"], 0.25);
    assert_eq!(out["residual_entropies"], json!([0.75, 0.75]));
    assert_eq!(out["slack"], 1.25);
}

#[test]
fn bound_on_identical_marginals() {
    let dir = Scratch::new("identical");
    let out = json_ok(&["bound", &dir.file("i.csv", "0.7,0.2,0.1\n0.1,0.2,0.7\n0.2,0.7,0.1\n")]);
    assert_eq!(out["T"], 0.0);
    assert_eq!(out["slack"], 1.0);
}

#[test]
fn infer_joint_matrices() {
    let dir = Scratch::new("infer");
    let out = json_ok(&["infer", &dir.file("d.csv", "0.5,0\n0,0.5\n")]);
    assert_eq!(out["verdict"], "undecided");

    let out = json_ok(&["infer", &dir.file("j.csv", "0.3,0.1\n0.2,0.4\n")]);
    assert!(f(&out["score_XtoY"]) < f(&out["score_YtoX"]));
    assert_eq!(out["verdict"], "x_to_y");
    let out = json_ok(&["infer", &dir.file("j2.csv", "0.3,0.1\n0.2,0.4\n"), "--margin", "0.5"]);
    assert_eq!(out["verdict"], "undecided");

    let out = mec(&["infer", &dir.file("bad.csv", "0.3,abc\n0.2,0.4\n")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infer_from_samples() {
    let dir = Scratch::new("samples");
    let mut text = String::from("# x,y\n");
    for (x, y, count) in [("a", "u", 3), ("a", "v", 1), ("b", "u", 2), ("b", "v", 4)] {
        for _ in 0..count {
            text.push_str(&format!("{x},{y}\n"));
        }
    }
    let from_samples = json_ok(&["infer", &dir.file("s.csv", &text), "--samples"]);
    let from_joint = json_ok(&["infer", &dir.file("j.csv", "0.3,0.1\n0.2,0.4\n")]);
    assert_eq!(from_samples, from_joint);
}

#[test]
fn generate_random_is_seeded() {
    let a = json_ok(&["generate", "random", "--m", "3", "--n", "4", "--seed", "7"]);
    let b = json_ok(&["generate", "random", "--m", "3", "--n", "4", "--seed", "7"]);
    assert_eq!(a, b);
    let rows = a["marginals"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let sum: f64 = row.as_array().unwrap().iter().map(f).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn stdin_input() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_mec"))
        .args(["couple", "-"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(WORKED.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["steps"], 3);
}
