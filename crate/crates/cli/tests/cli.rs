use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tempfile::TempDir;

use nifeq_core::fixtures::{random_eligible_plant, random_spec};

const EXAMPLE: &str = r#"{
  "name": "worked example",
  "A": [[-1, 1, 0], [1, -1, 1], [0, 1, -1]],
  "B": [[0], [0], [1]],
  "C": [[0, 1, 0]],
  "gamma": 1,
  "options": { "y1b": 1, "hb": "zero", "k3": -1, "y2": 0.5 }
}"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn nifeq(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_nifeq"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn rows(v: &Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(num).collect())
        .collect()
}

/// Structural schema for a synthesis report.
fn check_synthesis_schema(r: &Value) {
    for k in [
        "Kx",
        "Kv",
        "law_normal",
        "certificate_y",
        "hb_used",
        "dc_gain",
    ] {
        rows(&r[k]);
    }
    for k in ["A", "B", "C", "D"] {
        rows(&r["closed_loop"][k]);
        rows(&r["modal"]["closed_loop"][k]);
    }
    assert!(r["relative_degree"].is_u64());
    assert!(r["kind"].is_string());
    assert!(r["verification"]["passed"].is_boolean());
    for c in r["verification"]["original"]["checks"].as_array().unwrap() {
        assert!(c["name"].is_string() && c["passed"].is_boolean(), "{c}");
    }
}

#[test]
fn analyze_example_system() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "sys.json", EXAMPLE);
    let r = nifeq(&["analyze", s(&f)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["gate"]["eligible"], json!(true));
    assert_eq!(v["gate"]["relative_degree"], json!(2));
    let z = &v["gate"]["zero_dynamics_eigenvalues"][0];
    assert!((num(&z[0]) + 1.0).abs() < 1e-12 && num(&z[1]).abs() < 1e-12);
}

#[test]
fn analyze_rejects_unstable_zero_dynamics() {
    // (s − 1) / ((s + 1)(s + 2))
    let d = TempDir::new().unwrap();
    let f = write(
        &d,
        "rhp.json",
        r#"{"A": [[0, 1], [-2, -3]], "B": [[0], [1]], "C": [[-1, 1]]}"#,
    );
    let r = nifeq(&["analyze", s(&f)]);
    assert_eq!(r.code, 1);
    assert_eq!(
        r.json()["gate"]["reason"],
        json!("not-weakly-minimum-phase")
    );
}

#[test]
fn malformed_input_exits_2() {
    let d = TempDir::new().unwrap();
    let f = write(
        &d,
        "bad.json",
        r#"{"A": [[-1, 1], [0]], "B": [[1], [0]], "C": [[1, 0]]}"#,
    );
    let r = nifeq(&["analyze", s(&f)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("A: row 1"), "{}", r.stderr);
    let f = write(&d, "nojson.json", "{ not json");
    assert_eq!(nifeq(&["analyze", s(&f)]).code, 2);
    assert_eq!(nifeq(&["analyze", "/nonexistent/file.json"]).code, 2);
    let f = write(&d, "ok.json", EXAMPLE);
    assert_eq!(nifeq(&["synthesize", s(&f), "--y2", "[[1, 2"]).code, 2);
    // Y2 not positive definite
    assert_eq!(nifeq(&["synthesize", s(&f), "--y2", "-1"]).code, 2);
}

#[test]
fn synthesize_example_gains_and_polynomial() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "sys.json", EXAMPLE);
    let out = d.path().join("out.json");
    let r = nifeq(&["synthesize", s(&f), "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v, r.json());
    check_synthesis_schema(&v);
    let g = &v["gains"];
    for (k, want) in [("K1", 1.0), ("K2", -3.0), ("K3", -1.0)] {
        assert!((rows(&g[k])[0][0] - want).abs() < 1e-12, "{k} = {}", g[k]);
    }
    let den: Vec<f64> = v["denominator"]
        .as_array()
        .unwrap()
        .iter()
        .map(num)
        .collect();
    for (a, b) in den.iter().zip([1.0, 2.0, 4.0, 2.0]) {
        assert!((a - b).abs() < 1e-9, "{den:?}");
    }
    assert!((rows(&v["dc_gain"])[0][0] - 0.5).abs() < 1e-12);
}

#[test]
fn synthesize_defaults_all_pass() {
    let d = TempDir::new().unwrap();
    let f = write(
        &d,
        "sys.json",
        r#"{"A": [[-1, 1, 0], [1, -1, 1], [0, 1, -1]], "B": [[0], [0], [1]], "C": [[0, 1, 0]]}"#,
    );
    let r = nifeq(&["synthesize", s(&f)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["verification"]["passed"], json!(true));
    for c in v["verification"]["modal"]["checks"].as_array().unwrap() {
        assert_eq!(c["passed"], json!(true), "{c}");
    }
}

#[test]
fn ssni_on_relative_degree_two_is_refused() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "sys.json", EXAMPLE);
    let r = nifeq(&["synthesize", s(&f), "--ssni"]);
    assert_eq!(r.code, 1);
    assert_eq!(r.json()["refusal"]["relative_degree"], json!(2));
}

#[test]
fn ssni_relative_degree_one() {
    // (s + 3) / ((s + 2)(s − 1)): open-loop unstable, minimum phase
    let d = TempDir::new().unwrap();
    let f = write(
        &d,
        "rd1.json",
        r#"{"A": [[-2, 1], [0, 1]], "B": [[0], [1]], "C": [[1, 1]]}"#,
    );
    let out = d.path().join("out.json");
    let r = nifeq(&["synthesize", s(&f), "--ssni", "--y2", "2", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["kind"], json!("ssni"));
    assert!(num(&v["strict_margin"]) > 0.0);
    assert!((rows(&v["dc_gain"])[0][0] - 2.0).abs() < 1e-9);
    let r = nifeq(&[
        "verify",
        s(&out),
        "--certificate",
        s(&out),
        "--strict",
        "--freq-lo",
        "1e-3",
        "--freq-hi",
        "1e3",
    ]);
    assert_eq!(r.code, 0, "{}", r.stdout);
}

#[test]
fn synthesize_verify_round_trip_random_plants() {
    let d = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..12 {
        let spec = random_spec(&mut rng, 8, 2);
        let sys = random_eligible_plant(&mut rng, &spec);
        let rows = |m: &nifeq_core::Mat| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        let body = json!({ "A": rows(sys.a()), "B": rows(sys.b()), "C": rows(sys.c()) });
        let f = write(&d, &format!("p{k}.json"), &body.to_string());
        let out = d.path().join(format!("o{k}.json"));
        let r = nifeq(&["synthesize", s(&f), "--seed", "3", "--out", s(&out)]);
        assert_eq!(r.code, 0, "plant {k} {spec:?}: {}", r.stderr);
        check_synthesis_schema(&r.json());
        let r = nifeq(&[
            "verify",
            s(&out),
            "--certificate",
            s(&out),
            "--points",
            "300",
        ]);
        assert_eq!(r.code, 0, "plant {k} {spec:?}: {}", r.stdout);
        assert_eq!(r.json()["certificate"]["passed"], json!(true));
    }
}

#[test]
fn verify_flags_positive_real_example_and_skips_missing_certificate() {
    // s/(s + 1)
    let d = TempDir::new().unwrap();
    let f = write(
        &d,
        "pr.json",
        r#"{"A": [[-1]], "B": [[1]], "C": [[-1]], "D": [[1]]}"#,
    );
    let r = nifeq(&["verify", s(&f), "--points", "50"]);
    assert_eq!(r.code, 1);
    let v = r.json();
    assert_eq!(v["passed"], json!(false));
    assert!(v["certificate"].is_null());
    assert_eq!(v["grid"]["points"], json!(50));
}

#[test]
fn robust_example_interconnection() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "sys.json", EXAMPLE);
    let delta = write(
        &d,
        "delta.json",
        r#"{"A": [[-1]], "B": [[1]], "C": [[0.9]]}"#,
    );
    let traj = d.path().join("traj.csv");
    let r = nifeq(&[
        "robust",
        s(&f),
        "--gamma",
        "1",
        "--delta",
        s(&delta),
        "--simulate",
        "--trajectory",
        s(&traj),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    let ic = &v["interconnection"];
    assert!((num(&ic["loop_dc_gain"]) - 0.45).abs() < 1e-12);
    assert_eq!(ic["hurwitz"], json!(true));
    assert_eq!(ic["dc_gain_test"]["passed"], json!(true));
    assert!((num(&v["bound"]["margin"]) - 0.5).abs() < 1e-12);
    let sim = &ic["simulation"];
    assert!(num(&sim["final_norm"]) < num(&sim["initial_norm"]));
    let csv = fs::read_to_string(&traj).unwrap();
    assert!(csv.starts_with("t,x1,x2,x3,x4\n"));
    let last: f64 = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((last - 20.0).abs() < 1e-9);
}

#[test]
fn robust_rejects_nonpositive_gamma() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "sys.json", EXAMPLE);
    assert_eq!(nifeq(&["robust", s(&f), "--gamma", "0"]).code, 2);
    assert_eq!(nifeq(&["robust", s(&f), "--gamma", "-1"]).code, 2);
    // Y2 = 0.5 violates λ_max(Y2) < 1/γ = 0.4
    assert_eq!(nifeq(&["robust", s(&f), "--gamma", "2.5"]).code, 2);
}

#[test]
fn robust_sampled_delta_is_deterministic() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "sys.json", EXAMPLE);
    let a = nifeq(&["robust", s(&f), "--delta", "sample:42"]);
    let b = nifeq(&["robust", s(&f), "--delta", "sample:42"]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    let v = a.json();
    assert_eq!(v["interconnection"]["delta"]["seed"], json!(42));
    assert!(num(&v["interconnection"]["loop_dc_gain"]) < 1.0);
    let c = nifeq(&["robust", s(&f), "--delta", "sample:43"]);
    assert_ne!(a.stdout, c.stdout);
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, body)
}

#[test]
fn bode_phase_band_on_closed_loop() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "sys.json", EXAMPLE);
    let out = d.path().join("out.json");
    assert_eq!(nifeq(&["synthesize", s(&f), "--out", s(&out)]).code, 0);
    let csv = d.path().join("bode.csv");
    let r = nifeq(&[
        "bode",
        s(&out),
        "--freq-lo",
        "1e-2",
        "--freq-hi",
        "1e2",
        "--points",
        "500",
        "--out",
        s(&csv),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, body) = parse_csv(&fs::read_to_string(&csv).unwrap());
    assert_eq!(header, ["omega_rad_s", "magnitude_db", "phase_deg"]);
    assert_eq!(body.len(), 500);
    assert!(body.iter().all(|r| (-180.0..=0.0).contains(&r[2])));
}

#[test]
fn bode_static_gain_and_single_point() {
    let d = TempDir::new().unwrap();
    let f = write(&d, "d2.json", r#"{"A": [], "B": [], "C": [], "D": [[2]]}"#);
    let r = nifeq(&["bode", s(&f), "--points", "7"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (_, body) = parse_csv(&r.stdout);
    assert_eq!(body.len(), 7);
    assert!(body
        .iter()
        .all(|r| (r[1] - 6.0206).abs() < 1e-4 && r[2] == 0.0));
    let r = nifeq(&["bode", s(&f), "--points", "1"]);
    assert_eq!(parse_csv(&r.stdout).1.len(), 1);
}

#[test]
fn bode_mimo_columns() {
    let d = TempDir::new().unwrap();
    let f = write(
        &d,
        "m.json",
        r#"{"A": [[-1, 0], [0, -2]], "B": [[1, 0], [0, 1]], "C": [[1, 0], [0, 1]]}"#,
    );
    let r = nifeq(&["bode", s(&f), "--points", "3"]);
    let (header, body) = parse_csv(&r.stdout);
    assert_eq!(header.len(), 9);
    assert_eq!(header[3], "magnitude_db_1_2");
    // off-diagonal channels are identically zero
    assert!(body.iter().all(|r| r[3] == f64::NEG_INFINITY));
}
