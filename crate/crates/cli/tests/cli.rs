use std::path::PathBuf;
use std::process::Command;

use rulequest_core::demo;
use serde_json::Value;

struct Workdir(PathBuf);

impl Workdir {
    fn new(name: &str) -> Workdir {
        let dir = std::env::temp_dir().join(format!("rq-cli-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("catalog.json"), demo::D2_D6_CATALOG).unwrap();
        std::fs::write(dir.join("d2d6.rq"), demo::D2_D6_RULES).unwrap();
        let d2: String = demo::D2_D6_RULES.split("rule D6").next().unwrap().to_string();
        std::fs::write(dir.join("d2.rq"), d2).unwrap();
        Workdir(dir)
    }

    fn path(&self, name: &str) -> String {
        self.0.join(name).display().to_string()
    }
}

impl Drop for Workdir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn rq(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rulequest")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn compile_prints_display_rules() {
    let w = Workdir::new("compile");
    let (code, out, _) = rq(&["compile", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2.rq")]);
    assert_eq!(code, 0);
    assert!(out.contains("P(constipation) = ¬fibre"), "{out}");
    assert!(out.contains("P(diverticulosis) = constipation ∧ ¬fibre"), "{out}");

    let (code, out, _) = rq(&["compile", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2d6.rq"), "--format", "data"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["rules"].as_array().unwrap().len(), 6);
}

#[test]
fn exit_codes() {
    let w = Workdir::new("exit");
    assert_eq!(rq(&["compile"]).0, 1);
    assert_eq!(rq(&["frobnicate"]).0, 1);
    assert_eq!(rq(&["--help"]).0, 0);
    let (code, _, err) = rq(&["compile", "--catalog", &w.path("catalog.json"), "--rules", &w.path("missing.rq")]);
    assert_eq!(code, 2, "{err}");
    std::fs::write(w.0.join("bad.rq"), "rule X { present clinical gout action start fibre }").unwrap();
    let (code, _, err) = rq(&["lint", "--catalog", &w.path("catalog.json"), "--rules", &w.path("bad.rq")]);
    assert_eq!(code, 2);
    assert!(err.contains("1:27") && err.contains("gout"), "{err}");
    let (code, _, _) = rq(&["compile", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2.rq"), "--order", "file"]);
    assert_eq!(code, 1);
}

#[test]
fn lint_reports_unused() {
    let w = Workdir::new("lint");
    let (code, out, _) = rq(&["lint", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2.rq")]);
    assert_eq!(code, 0);
    assert!(out.contains("parkinsonism"), "{out}");
}

#[test]
fn order_reports_every_solver() {
    let w = Workdir::new("order");
    let (code, out, _) = rq(&["order", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2.rq"), "--format", "data"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let solvers: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["solver"].as_str().unwrap()).collect();
    assert_eq!(solvers, ["frequency", "optimize", "brute-force"]);
    assert!(v.as_array().unwrap().iter().all(|r| r["objective"] == 1));

    let (code, out, _) = rq(&["order", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2d6.rq"), "--drugs", "antipsychotic", "--mode", "brute"]);
    assert_eq!(code, 0);
    assert!(out.contains("brute-force"), "{out}");
}

#[test]
fn order_bench_small() {
    let (code, out, _) = rq(&["order-bench", "--instances", "10", "--seed", "3", "--format", "data"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["neverWorse"], 10);
}

#[test]
fn run_cases_worked_examples() {
    let w = Workdir::new("cases");
    std::fs::write(
        w.0.join("cases.json"),
        r#"[{"id":"fibre","drugs":["fibre"],"groundTruth":[]},{"id":"ap","drugs":["antipsychotic"],"groundTruth":["parkinsonism"]}]"#,
    )
    .unwrap();
    let (code, out, _) = rq(&["run-cases", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2d6.rq"), "--cases", &w.path("cases.json"), "--format", "data"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["cases"][0]["conditionsDisplayed"], 0);
    assert_eq!(v["cases"][1]["rulesTriggered"], 1);
    assert!(v["mean"].is_object());

    let (code, out, _) = rq(&["run-cases", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2d6.rq"), "--cases", &w.path("cases.json")]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l.starts_with("mean")), "{out}");

    std::fs::write(w.0.join("empty.json"), "[]").unwrap();
    let (code, out, _) = rq(&["run-cases", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2d6.rq"), "--cases", &w.path("empty.json"), "--format", "data"]);
    assert_eq!(code, 0);
    assert!(serde_json::from_str::<Value>(&out).unwrap()["mean"].is_null());
}

#[test]
fn generate_is_deterministic_and_dumpable() {
    let w = Workdir::new("gen");
    let a = w.path("a");
    let b = w.path("b");
    assert_eq!(rq(&["generate", "--seed", "1", "--cases", "5", "--out", &a]).0, 0);
    assert_eq!(rq(&["generate", "--seed", "1", "--cases", "5", "--out", &b]).0, 0);
    for f in ["catalog.json", "rules.rq", "cases.json"] {
        let x = std::fs::read(w.0.join("a").join(f)).unwrap();
        let y = std::fs::read(w.0.join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let (code, out, _) = rq(&["dump-full", "--catalog", &format!("{a}/catalog.json"), "--rules", &format!("{a}/rules.rq")]);
    assert_eq!(code, 0);
    assert!(out.ends_with("73 conditions\n"), "{out}");
    assert_eq!(rq(&["generate", "--rule-count", "0", "--out", &a]).0, 1);
}

#[test]
fn dump_full_d2_d6() {
    let w = Workdir::new("dump");
    let (code, out, _) = rq(&["dump-full", "--catalog", &w.path("catalog.json"), "--rules", &w.path("d2d6.rq"), "--format", "data"]);
    assert_eq!(code, 0);
    assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["count"], 4);
}

#[test]
fn bench_reports_percentiles() {
    let (code, out, _) = rq(&["bench", "--repetitions", "20", "--format", "data"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["repetitions"], 20);
    assert!(v["p95Ms"].as_f64().unwrap() >= v["medianMs"].as_f64().unwrap());
    assert_eq!(rq(&["bench", "--repetitions", "0"]).0, 1);
}
