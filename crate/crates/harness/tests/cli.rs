use std::path::Path;
use std::process::Command;

fn exclusion(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_exclusion")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn passing_run_exits_zero_and_writes_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/stationary.json");
    let out = dir.path().join("run");
    let o = exclusion(&["stationary", "--config", cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("PASS")));
    for f in ["stationary.json", "stationary.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn failed_assertion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"sizes": [16, 32], "replicas": 3, "t_final": 0.05, "max_final_gap": 0.0}"#);
    let out = dir.path().join("run");
    let o = exclusion(&["hydro-compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("FAIL")));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn bad_config_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write(dir.path(), "c.json", "{\"t_final\": 0.1,\n \"sizes\": [16,, 32]}");
    let o = exclusion(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let unknown = write(dir.path(), "u.json", r#"{"t_final": 0.1, "sizes": [16], "replica": 3}"#);
    assert_eq!(exclusion(&["simulate", "--config", &unknown, "--out", out.to_str().unwrap()]).status.code(), Some(1));
    assert!(!out.exists());
    let leftovers = std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with('.')).count();
    assert_eq!(leftovers, 0);
}
