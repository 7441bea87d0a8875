use std::process::Command;

use capaboost_cli::OUT_DIR_ENV;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_capaboost"));
    c.env_remove(OUT_DIR_ENV);
    c
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bin()
        .arg("--out-dir")
        .arg(dir.path())
        .args(["theorem1", "--d-dim", "16", "--r", "4", "--trials", "10"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("10/10 additive"));

    let usage = bin().args(["theorem1", "--bogus"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));

    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn env_var_sets_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env(OUT_DIR_ENV, dir.path())
        .args(["theorem1", "--d-dim", "8", "--r", "2", "--trials", "3"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("theorem1.jsonl").exists());
    assert!(dir.path().join("manifest.json").exists());
}
