use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const ABS: &str = r#"{"kind":"maxout_layer","n_in":2,"p":2,"m_out":2,
  "W":[[[1,0],[-1,0]],[[0,1],[0,-1]]],"b":[[0,0],[0,0]]}"#;
const BOX: &str = r#"{"kind":"domain_box","a":-1,"b":1,"n":1,"T":2}"#;
const LINE: &str = r#"{"base":[[0.0,0.5]],"dirs":[[[1.0,0.0]]],"extent":[[-1,1]],"resolution":64}"#;

fn maxformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxformer"))
        .args(args)
        .env_remove("MAXFORMER_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace { dir: TempDir::new().unwrap() };
        ws.file("abs.json", ABS);
        ws.file("box.json", BOX);
        ws.file("slice.json", LINE);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn file(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }

    fn run(&self, args: &[&str]) -> Output {
        let args: Vec<String> = args
            .iter()
            .map(|a| if a.ends_with(".json") || a.ends_with(".csv") { self.arg(a) } else { a.to_string() })
            .collect();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        maxformer(&refs)
    }

    fn compile(&self) {
        let out = self.run(&["compile", "--spec", "abs.json", "--domain", "box.json", "--out", "net.json", "--report", "report.json"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
}

#[test]
fn compile_abs_passes_audit() {
    let ws = Workspace::new();
    ws.compile();
    let report = json(&ws.path("report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["audit"]["within_budget"], true);
    assert_eq!(report["audit"]["actual"]["d"], 10);
    for key in ["m1", "m2", "alphas", "delta_schedule", "layer_bounds"] {
        assert!(!report[key].is_null(), "report lacks {key}");
    }
    assert_eq!(report["m1"], 1.0);
    assert!(json(&ws.path("net.json"))["blocks"].as_array().unwrap().len() == 3);
}

#[test]
fn high_rank_defaults_to_tournament_width_t() {
    let ws = Workspace::new();
    ws.file(
        "rank3.json",
        r#"{"kind":"maxout_layer","n_in":2,"p":3,"m_out":2,
           "W":[[[1,0],[-1,0],[0,1]],[[0,1],[0,-1],[1,0]]]}"#,
    );
    let out = ws.run(&["compile", "--spec", "rank3.json", "--domain", "box.json", "--out", "net.json", "--report", "report.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&ws.path("report.json"));
    assert_eq!(report["s"], 2);
    assert_eq!(report["audit"]["dims"]["s"], 2);
    let out = ws.run(&["verify", "--net", "net.json", "--spec", "rank3.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn verify_compiled_abs() {
    let ws = Workspace::new();
    ws.compile();
    let out = ws.run(&["verify", "--net", "net.json", "--spec", "abs.json", "--samples", "1000", "--tol", "1e-9", "--out", "verify.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&ws.path("verify.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["samples"], 1000);
    assert_eq!(report["seed"], 42);
    assert!(report["max_abs_error"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn verify_detects_perturbed_readout() {
    let ws = Workspace::new();
    ws.compile();
    let mut net = json(&ws.path("net.json"));
    let c = &mut net["readout_C"][0][0];
    *c = Value::from(c.as_f64().unwrap() + 0.1);
    ws.file("bad.json", &net.to_string());
    let out = ws.run(&["verify", "--net", "bad.json", "--spec", "abs.json", "--out", "verify.json"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert_eq!(json(&ws.path("verify.json"))["passed"], false);
}

#[test]
fn missing_file_exits_2_naming_the_path() {
    let ws = Workspace::new();
    let out = ws.run(&["compile", "--spec", "absent.json", "--domain", "box.json", "--out", "net.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(&ws.arg("absent.json")), "{}", stderr(&out));
}

#[test]
fn domain_file_of_wrong_kind_is_a_parse_error() {
    let ws = Workspace::new();
    let out = ws.run(&["compile", "--spec", "abs.json", "--domain", "abs.json", "--out", "net.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("DomainBox"), "{}", stderr(&out));
}

#[test]
fn zero_tolerance_is_rejected() {
    let ws = Workspace::new();
    ws.compile();
    let out = ws.run(&["verify", "--net", "net.json", "--spec", "abs.json", "--tol", "0"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("tolerance"), "{}", stderr(&out));
}

#[test]
fn shape_mismatch_exits_3() {
    let ws = Workspace::new();
    ws.compile();
    ws.file(
        "wide.json",
        r#"{"kind":"maxout_layer","n_in":3,"p":1,"m_out":3,"W":[[[1,0,0]],[[0,1,0]],[[0,0,1]]]}"#,
    );
    let out = ws.run(&["verify", "--net", "net.json", "--spec", "wide.json"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn sweep_reports_first_order_rate() {
    let ws = Workspace::new();
    ws.compile();
    let out = ws.run(&["sweep", "--net", "net.json", "--spec", "abs.json", "--lambdas", "1e2,1e3,1e4,1e5", "--out", "sweep.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sweep = json(&ws.path("sweep.json"));
    assert_eq!(sweep["lambdas"].as_array().unwrap().len(), 4);
    assert!(sweep["fitted_slope"].as_f64().unwrap() <= -0.9, "{sweep}");
}

#[test]
fn regions_on_a_line() {
    let ws = Workspace::new();
    ws.compile();
    let out = ws.run(&["regions", "--net", "net.json", "--slice", "slice.json", "--out", "regions.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let count = json(&ws.path("regions.json"));
    assert_eq!(count["count"], 2);
    assert_eq!(count["method"], "exact1d");
    let kink = count["breakpoints"][0].as_f64().unwrap();
    assert!(kink.abs() < 1e-9, "{kink}");
}

#[test]
fn regions_on_a_plane_with_csv() {
    let ws = Workspace::new();
    ws.file(
        "plane.json",
        r#"{"base":[[0.0,0.0]],"dirs":[[[1.0,0.0]],[[0.0,1.0]]],"extent":[[-1,1],[-1,1]],"resolution":32}"#,
    );
    let out = ws.run(&["regions", "--spec", "abs.json", "--slice", "plane.json", "--csv", "cells.csv", "--out", "regions.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&ws.path("regions.json"))["count"], 4);
    let csv = fs::read_to_string(ws.path("cells.csv")).unwrap();
    assert_eq!(csv.lines().count(), 32 * 32 + 1);
}

#[test]
fn transformer_bound_value() {
    let out = maxformer(&["bounds", "--kind", "transformer", "--n", "1", "--m", "1", "--T", "2", "--D", "6", "--q", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["value"], "9");
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn maxout_bound_value() {
    let out = maxformer(&["bounds", "--kind", "maxout", "--n0", "2", "--widths", "4,4", "--k", "2", "--n", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    // (4/2 + 1)^2 * (C(4,0) + 4 + 6) = 9 * 11
    assert_eq!(report["value"], "99");
}

#[test]
fn odd_token_ratio_exits_4() {
    let out = maxformer(&["bounds", "--kind", "transformer", "--n", "1", "--m", "3", "--T", "1", "--D", "3", "--q", "1"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("mT/q"), "{}", stderr(&out));
}

#[test]
fn selftest_single_criterion() {
    let ws = Workspace::new();
    let out = ws.run(&["selftest", "--only", "11", "--out", "selftest.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).starts_with("[PASS] 11"), "{}", stderr(&out));
    let report = json(&ws.path("selftest.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["results"].as_array().unwrap().len(), 1);
    assert_eq!(code(&ws.run(&["selftest", "--only", "13"])), 4);
}

#[test]
fn reports_are_byte_identical() {
    let ws = Workspace::new();
    let run = |tag: &str| {
        let net = format!("net{tag}.json");
        let report = format!("report{tag}.json");
        let verify = format!("verify{tag}.json");
        assert_eq!(code(&ws.run(&["compile", "--spec", "abs.json", "--domain", "box.json", "--out", &net, "--report", &report])), 0);
        assert_eq!(code(&ws.run(&["verify", "--net", &net, "--spec", "abs.json", "--seed", "7", "--out", &verify])), 0);
        [net, report, verify].map(|f| fs::read(ws.path(&f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
    let threaded = ws.run(&["--threads", "1", "verify", "--net", "neta.json", "--spec", "abs.json", "--seed", "7", "--out", "verify1.json"]);
    assert_eq!(code(&threaded), 0);
    assert_eq!(fs::read(ws.path("verify1.json")).unwrap(), fs::read(ws.path("verifya.json")).unwrap());
}
