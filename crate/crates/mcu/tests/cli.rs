use std::process::Command;

fn mcu(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mcu"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn inspect_empty_and_truncated_recordings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.mcur");
    std::fs::write(&path, b"MCUR\x01\x00").unwrap();
    let out = mcu(&["inspect", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["chunks"], 0);
    assert_eq!(v["streams"], serde_json::json!([]));

    std::fs::write(&path, b"MCUR\x01\x00\x00\x00").unwrap();
    let out = mcu(&["inspect", path.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.get("truncated_tail").is_some(), "{v}");
}

#[test]
fn errors_exit_two() {
    let out = mcu(&["inspect", "/nonexistent/x.mcur"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(mcu(&["sim", "--clients", "0"]).status.code(), Some(2));
    assert_eq!(mcu(&["sim", "--mode", "loud"]).status.code(), Some(2));
}

#[test]
fn sim_prints_report_to_stdout() {
    let out = mcu(&["sim", "--clients", "2", "--duration", "0.5"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["clients"], 2);
    assert_eq!(v["violations"], serde_json::json!([]));
}
