use std::path::Path;
use std::process::{Command, Output};

use celab::report::{CONFIG_SCHEMA, REPORT_SCHEMA};
use serde_json::Value;

fn celab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_celab"))
        .args(args)
        .output()
        .expect("celab runs")
}

fn compile(schema: &str) -> jsonschema::JSONSchema {
    let v: Value = serde_json::from_str(schema).unwrap();
    jsonschema::JSONSchema::compile(&v).expect("schema compiles")
}

fn assert_valid(schema: &jsonschema::JSONSchema, doc: &Value, what: &str) {
    if let Err(errors) = schema.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{what} violates its schema:\n{}", msgs.join("\n"));
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn reports_validate_for_every_benchmark() {
    let report_schema = compile(REPORT_SCHEMA);
    let config_schema = compile(CONFIG_SCHEMA);
    let dir = tempfile::tempdir().unwrap();
    for name in ["chebyshev", "misiurewicz_i", "power2", "basilica", "multicrit"] {
        let out = dir.path().join(name);
        let o = celab(&["--map", name, "--out", out.to_str().unwrap(), "equiv"]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let doc = read_json(&out.join("report.json"));
        assert_valid(&report_schema, &doc, name);
        assert_valid(&config_schema, &doc["config"], name);
        assert_eq!(doc["seed"], 0);
        let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
        assert!(csv.starts_with("n,a_n,ce2_min_log,expshrink_max_log_diam,sr_dist\r\n"));
        let svg = std::fs::read_to_string(out.join("plots.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    let vacuous = read_json(&dir.path().join("basilica/report.json"));
    assert_eq!(vacuous["report"]["verdict"]["summary"], "hyperbolic: vacuous");
    let csv = std::fs::read_to_string(dir.path().join("basilica/series.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"numerator": [[-2,0],[0,0],[1,0]], "denominator": [[1,0]], "seed": 11,
                "horizons": {{"forward": 20, "backward": 6, "cover": 6}},
                "output": {{"dir": {:?}}}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = celab(&["--config", cfg.to_str().unwrap(), "equiv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = read_json(&out.join("report.json"));
    assert_eq!(doc["seed"], 11);
    assert_eq!(doc["config"]["horizons"]["backward"], 6);
    let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
    // rows n = 1..=20, the longest series
    assert_eq!(csv.lines().count(), 21);
    let row1: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(row1[1].starts_with("1.38629436111989"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"numerator": [[0,0],[1,0]]}"#).unwrap();
    let o = celab(&["--config", bad.to_str().unwrap(), "ce"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degree ≥ 2"));

    std::fs::write(&bad, r#"{"numerator": [[0,0],[0,0],[1,0]], "extra": 1}"#).unwrap();
    assert_eq!(celab(&["--config", bad.to_str().unwrap(), "ce"]).status.code(), Some(1));
    assert_eq!(celab(&["ce"]).status.code(), Some(1));
    assert_eq!(celab(&["--map", "nope", "ce"]).status.code(), Some(1));
    assert_eq!(celab(&["--bogus-flag"]).status.code(), Some(1));

    // z = 5 is nowhere near the unit circle
    let o = celab(&["--map", "power2", "tce", "--point", "5"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let missing = dir.path().join("missing.json");
    assert_eq!(celab(&["--config", missing.to_str().unwrap(), "ce"]).status.code(), Some(3));
    let file = dir.path().join("a-file");
    std::fs::write(&file, "").unwrap();
    let o = celab(&["--map", "chebyshev", "--out", file.join("sub").to_str().unwrap(), "equiv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn subcommands_answer_in_json() {
    for args in [
        vec!["--map", "chebyshev", "orbit", "-n", "5"],
        vec!["--map", "chebyshev", "ce"],
        vec!["--map", "misiurewicz_i", "ce2", "-n", "4"],
        vec!["--map", "multicrit", "sr"],
        vec!["--map", "power2", "--seed", "3", "--threads", "0", "expshrink", "--depth", "4"],
        vec!["--map", "power2", "tce", "--horizon", "4"],
        vec!["registry"],
        vec!["registry", "basilica"],
    ] {
        let o = celab(&args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(!v.is_null(), "{args:?}");
    }
    let o = celab(&["--map", "power2", "ce"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["vacuous"], true);
    let o = celab(&["--map", "chebyshev", "orbit", "-n", "3"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    // orbit of the critical value −2 → 2 → 2 → 2
    assert_eq!(v["result"]["points"][0], serde_json::json!([-2.0, 0.0]));
    assert_eq!(v["result"]["points"][3], serde_json::json!([2.0, 0.0]));
}

#[test]
fn subcommand_output_is_written_with_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = celab(&["--map", "chebyshev", "--out", dir.path().to_str().unwrap(), "ce", "-n", "10"]);
    assert!(o.status.success());
    let doc = read_json(&dir.path().join("ce.json"));
    assert_eq!(doc["command"], "ce");
    assert_eq!(doc["seed"], 0);
    assert_eq!(doc, serde_json::from_slice::<Value>(&o.stdout).unwrap());
}
