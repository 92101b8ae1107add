use std::fs;
use std::path::Path;

use distb_core::engine::config::{ConfigError, Mode, ScenarioConfig};
use distb_core::engine::world::{World, RUN_FILES};
use distb_core::engine::{run_scenario, EngineError};
use distb_core::metrics::REPORT_FILES;

fn short(seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::p1();
    c.seed = seed;
    c.duration_s = 15.0;
    c
}

fn write(c: ScenarioConfig, dir: &Path) {
    World::build(c).unwrap().run().unwrap().write_outputs(dir).unwrap();
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn outputs_are_complete_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    fs::create_dir_all(&c).unwrap();
    write(short(7), &a);
    write(short(7), &b);
    write(short(8), &c);
    let ta = tree(&a);
    for name in REPORT_FILES.iter().chain(RUN_FILES.iter()) {
        assert!(ta.iter().any(|(n, bytes)| n == name && !bytes.is_empty()), "{name}");
    }
    assert_eq!(ta, tree(&b));
    assert_ne!(ta, tree(&c));
}

#[test]
fn zero_duration_is_rejected_with_field() {
    let mut c = short(1);
    c.duration_s = 0.0;
    match run_scenario(&c) {
        Err(EngineError::Config(e @ ConfigError::Invalid { .. })) => assert_eq!(e.field(), Some("duration_s")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn openflow_only_writes_genesis_only_chains() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = short(2);
    c.mode = Mode::OpenflowOnly;
    write(c, tmp.path());
    for name in ["control_chain.bin", "data_chain.bin"] {
        let chain = distb_core::ledger::read_chain(&mut fs::File::open(tmp.path().join(name)).unwrap()).unwrap();
        assert_eq!(chain.len(), 1, "{name}");
        chain.validate().unwrap();
    }
}

#[test]
fn distb_chains_validate_after_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    write(short(3), tmp.path());
    let data = distb_core::ledger::read_chain(&mut fs::File::open(tmp.path().join("data_chain.bin")).unwrap()).unwrap();
    assert!(data.len() > 1);
    data.validate().unwrap();
}
