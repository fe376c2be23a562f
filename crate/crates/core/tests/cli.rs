//! End-to-end smoke tests of the `tsvalid` binary.

use std::process::Command;

fn tsvalid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tsvalid"))
}

#[test]
fn gen_discover_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let meta = dir.path().join("meta.csv");
    let truth = dir.path().join("truth.csv");

    let status = tsvalid()
        .args(["gen", "--kind", "var", "--seed", "11", "--samples", "3000"])
        .args(["--sensors", "4", "--noise", "0.2", "--rho", "0.2"])
        .args(["--edges", "0>1:1:0.6,1>2:2:0.5"])
        .arg("--out-data")
        .arg(&data)
        .arg("--out-meta")
        .arg(&meta)
        .arg("--out-truth")
        .arg(&truth)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(data.exists() && meta.exists() && truth.exists());

    let graph_csv = dir.path().join("graph.csv");
    let status = tsvalid()
        .args(["discover", "--max-lag", "3", "--alpha", "0.01"])
        .arg("--data")
        .arg(&data)
        .arg("--meta")
        .arg(&meta)
        .arg("--out-csv")
        .arg(&graph_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&graph_csv).unwrap();
    assert!(text.starts_with("source,target,delay,strength,p_value"));
    assert!(text.contains("0,1,1,"), "planted 0->1 edge missing:\n{text}");

    let config = dir.path().join("pipeline.toml");
    std::fs::write(
        &config,
        format!(
            "version = 1\n\n[data]\nmeta = \"{}\"\nevaluation = \"{}\"\n\n[levels]\nenabled = [2, 3]\n",
            meta.display(),
            data.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = tsvalid()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    // Clean synthetic data within generous generated bounds: no verdicts.
    assert_eq!(status.code(), Some(0));
    assert!(out.join("verdicts.jsonl").exists());
    assert!(out.join("summary.json").exists());
}

#[test]
fn missing_config_exits_with_error_code() {
    let status = tsvalid()
        .args(["run", "--config", "/nonexistent/pipeline.toml"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
