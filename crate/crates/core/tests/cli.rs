use clap::Parser;
use defiers::cli::{execute, main_with_args, Cli};
use serde_json::Value;

fn run(args: &[&str]) -> defiers::Result<String> {
    let mut full = vec!["defiers"];
    full.extend_from_slice(args);
    execute(&Cli::try_parse_from(full).expect("valid flags").command)
}

fn without_runtime(mut v: Value) -> Value {
    match &mut v {
        Value::Object(m) => {
            m.remove("runtime_ms");
        }
        Value::Array(xs) => xs.iter_mut().for_each(|x| {
            if let Value::Object(m) = x {
                m.remove("runtime_ms");
            }
        }),
        _ => {}
    }
    v
}

#[test]
fn report_reingested_as_job_reproduces_numbers() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["test", "--g", "4,2,1,3", "--h0", "killed == 0"],
        vec!["test", "--g", "4,2,1,3", "--spec", "urn:m=6", "--h0", "fisher_null", "--exact"],
        vec!["limited", "--g", "4,2,1,3", "--h0", "killed == 0"],
        vec!["asymptotic", "--g", "4,2,1,3"],
    ] {
        let first: Value = serde_json::from_str(&run(&args).unwrap()).unwrap();
        let path = dir.path().join("job.json");
        std::fs::write(&path, serde_json::to_string(&first).unwrap()).unwrap();
        let again: Value = serde_json::from_str(&run(&[args[0], "--job", path.to_str().unwrap()]).unwrap()).unwrap();
        assert_eq!(without_runtime(first), without_runtime(again), "{args:?}");
    }
}

#[test]
fn report_has_the_documented_fields() {
    let v: Value = serde_json::from_str(&run(&["test", "--g", "4,2,1,3", "--h0", "killed == 0"]).unwrap()).unwrap();
    for key in ["lambda", "p_value", "argmax_null", "argmax_global", "runtime_ms", "cache"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let v: Value = serde_json::from_str(&run(&["ci", "--g", "4,2,1,3", "--quantity", "killed"]).unwrap()).unwrap();
    assert!(v["ci"].is_array());
    let v: Value = serde_json::from_str(&run(&["asymptotic", "--g", "4,2,1,3"]).unwrap()).unwrap();
    assert_eq!(v["approximate"], Value::Bool(true));
}

#[test]
fn csv_and_text_layouts() {
    let csv = run(&["test", "--g", "4,2,1,3", "--h0", "killed == 0", "--h0", "fisher_null", "--format", "csv"]).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].split(',').any(|c| c == "p_value"));
    let text = run(&["test", "--g", "4,2,1,3", "--h0", "killed == 0", "--format", "text"]).unwrap();
    assert!(text.lines().next().unwrap().contains("lambda"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("t.rxlt");
    let cache = cache.to_str().unwrap();
    assert_eq!(main_with_args(["defiers", "table", "--s", "6", "--cache", cache]), 0);
    assert_eq!(main_with_args(["defiers", "table", "--s", "6", "--cache", cache]), 0);
    assert_eq!(main_with_args(["defiers", "table", "--s", "6", "--spec", "urn:m=2", "--cache", cache]), 3);
    assert_eq!(main_with_args(["defiers", "table", "--s", "6", "--spec", "urn:m=2", "--cache", cache, "--rebuild"]), 0);
    assert_eq!(main_with_args(["defiers", "test", "--g", "1,2", "--h0", "killed == 0"]), 2);
    assert_eq!(main_with_args(["defiers", "test", "--g", "1,2,0,0", "--h0", "killed ==="]), 2);
    assert_eq!(main_with_args(["defiers", "test", "--g", "1,2,0,0", "--h0", "killed > 9"]), 2);
    assert_eq!(main_with_args(["defiers", "bounds", "--g", "0,0,2,2"]), 2);
    assert_eq!(main_with_args(["defiers", "frobnicate"]), 2);

    std::fs::write(cache, b"RXLT garbage").unwrap();
    assert_eq!(main_with_args(["defiers", "table", "--s", "6", "--cache", cache]), 3);
}

#[test]
fn cache_status_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("t.rxlt");
    let c = cache.to_str().unwrap();
    let first: Value = serde_json::from_str(&run(&["test", "--g", "3,1,1,3", "--h0", "killed == 0", "--cache", c]).unwrap()).unwrap();
    let second: Value = serde_json::from_str(&run(&["test", "--g", "3,1,1,3", "--h0", "killed == 0", "--cache", c]).unwrap()).unwrap();
    assert_eq!(first["cache"], "built");
    assert_eq!(second["cache"], "hit");
    assert_eq!(first["p_value"], second["p_value"]);
}

#[test]
fn small_tables_and_oracle_check() {
    let v: Value = serde_json::from_str(&run(&["table", "--s", "2", "--spec", "urn:m=1"]).unwrap()).unwrap();
    assert_eq!(v["records"], 10);
    let v: Value = serde_json::from_str(&run(&["oracle-check", "--max-s", "3"]).unwrap()).unwrap();
    assert!(v.as_array().unwrap().iter().all(|r| r["mismatches"] == 0));
    let v: Value = serde_json::from_str(&run(&["mle-count", "--s", "5"]).unwrap()).unwrap();
    assert!(v["multi_valued"].as_u64().unwrap() > 0);
}
