use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn distb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distb")).args(args).env_remove("DISTB_SEED").output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_config_exits_2() {
    let out = distb(&["run", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not/here.toml"));
}

#[test]
fn unknown_flag_exits_2() {
    assert_eq!(distb(&["run", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(distb(&["figures", "p3"]).status.code(), Some(2));
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "schema = 1\nduration_s = 0.0\n").unwrap();
    let out = distb(&["run", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duration_s"));
    fs::write(&cfg, "schema = 2\n").unwrap();
    assert_eq!(distb(&["run", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn run_then_validate_chains() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let run = distb(&["run", p(&configs().join("p1.toml")), "--seed", "3", "--out", p(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["summary.txt", "trace.csv", "control_chain.bin", "data_chain.bin"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("seed=3"));
    assert_eq!(distb(&["validate", p(&out.join("control_chain.bin"))]).status.code(), Some(0));
    assert_eq!(distb(&["validate", p(&out.join("data_chain.bin"))]).status.code(), Some(0));

    let bytes = fs::read(out.join("data_chain.bin")).unwrap();
    let cut = dir.path().join("cut.bin");
    fs::write(&cut, &bytes[..bytes.len() - 7]).unwrap();
    let v = distb(&["validate", p(&cut)]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stderr).contains("truncated"));

    assert_eq!(distb(&["validate", p(&dir.path().join("absent.bin"))]).status.code(), Some(2));
}

#[test]
fn flipped_byte_reports_the_block() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert!(distb(&["run", p(&configs().join("p1.toml")), "--out", p(&out)]).status.success());
    let mut bytes = fs::read(out.join("control_chain.bin")).unwrap();
    let at = bytes.len() - 3;
    bytes[at] ^= 0x40;
    let bad = dir.path().join("bad.bin");
    fs::write(&bad, bytes).unwrap();
    let v = distb(&["validate", p(&bad)]);
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn mode_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let run = distb(&["run", p(&configs().join("p1.toml")), "--mode", "openflow-only", "--out", p(&out)]);
    assert!(run.status.success());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("mode=openflow-only"));
}

#[test]
fn figures_p1_writes_six_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = distb(&["figures", "p1", "--out", p(dir.path()), "--seed", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6, "{names:?}");
    assert!(names.iter().all(|n| n.ends_with(".csv")));
    let fig7 = fs::read_to_string(dir.path().join("fig7_throughput_vs_nodes.csv")).unwrap();
    assert_eq!(fig7.lines().count(), 11);
}
