use schedspace::formats::{
    hash_hex, load_space, read_records, read_trace, write_records, write_trace, RecordLine, TraceFileError,
};
use schedspace_core::ir::{structural_equal, structural_hash, TensorProgram};
use schedspace_core::machine::MachineSpec;
use schedspace_core::modules::{generate, ModuleSpec, SpaceConfig};
use schedspace_core::schedule::Decider;
use schedspace_core::search::{tune, SearchConfig, SimulatedMachine};
use schedspace_core::trace::{replay, ReplayMode};
use schedspace_core::workloads;

#[test]
fn trace_file_round_trip() {
    let g = SpaceConfig::default_space().build().unwrap();
    for (i, e0) in [workloads::dense_relu(16, 16, 16), workloads::conv1d(16, 2, 4, 3, 1, 1), workloads::gmm(8, 8, 8)]
        .iter()
        .enumerate()
    {
        let h = structural_hash(e0);
        for seed in 0..40 {
            let (p, t, _) = generate(e0, &g, Decider::random(seed * 3 + i as u64)).unwrap();
            let text = write_trace(h, &t);
            assert!(text.starts_with(&format!("{{\"workload_hash\":\"{}\"}}\n", hash_hex(h))));
            let back = read_trace(&text, Some(h)).unwrap();
            assert!(back.same_instructions(&t));
            let (q, _) = replay(e0, &back, ReplayMode::Follow).unwrap();
            assert!(structural_equal(&p, &q));
        }
    }
}

#[test]
fn trace_file_errors_name_the_line() {
    let e0 = workloads::relu1d(64);
    let h = structural_hash(&e0);
    let g = SpaceConfig::default_space().build().unwrap();
    let (_, t, _) = generate(&e0, &g, Decider::random(0)).unwrap();
    let mut lines: Vec<String> = write_trace(h, &t).lines().map(String::from).collect();
    lines[2] = "{\"op\":\"no_such_op\"}".into();
    match read_trace(&lines.join("\n"), Some(h)) {
        Err(TraceFileError::Line { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    match read_trace(&write_trace(h, &t), Some(h ^ 1)) {
        Err(TraceFileError::HashMismatch { .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(matches!(read_trace("", None), Err(TraceFileError::Empty)));
    assert!(matches!(read_trace("[1,2]\n", None), Err(TraceFileError::Line { line: 1, .. })));
}

#[test]
fn program_json_round_trip() {
    let g = SpaceConfig {
        modules: vec![ModuleSpec::mlt("SSRSR"), ModuleSpec::AutoInline {}, ModuleSpec::pvu(), ModuleSpec::TensorUnit {}],
    }
    .build()
    .unwrap();
    let mut count = 0;
    for e0 in [workloads::dense_bias_relu(16, 16, 8), workloads::conv1d(16, 2, 4, 3, 2, 1), workloads::gmm(16, 16, 16)] {
        for seed in 0..60 {
            let (p, _, _) = generate(&e0, &g, Decider::random(seed)).unwrap();
            let text = serde_json::to_string(&p).unwrap();
            let back: TensorProgram = serde_json::from_str(&text).unwrap();
            assert!(structural_equal(&p, &back));
            assert_eq!(structural_hash(&p), structural_hash(&back));
            count += 1;
        }
    }
    assert_eq!(count, 180);
    let v: serde_json::Value = serde_json::to_value(workloads::relu1d(4)).unwrap();
    assert!(v["buffers"][0]["name"].is_string());
    assert!(v["root"][0]["loop"].is_object());
}

#[test]
fn config_files_parse_and_reject_unknowns() {
    let cfg: SpaceConfig = serde_json::from_str(
        r#"{"modules":[{"mlt":{"structure":"SSRSR"}},{"auto_inline":{}},{"pvu":{"widths":[4,8]}},{"tensor_unit":{}}]}"#,
    )
    .unwrap();
    assert_eq!(cfg.modules.len(), 4);
    assert!(cfg.build().is_ok());
    let m: MachineSpec = serde_json::from_str(r#"{"cores": 8}"#).unwrap();
    assert_eq!((m.cores, m.vector_lanes), (8, 8));
    assert!(serde_json::from_str::<MachineSpec>(r#"{"cors": 8}"#).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("space.json");
    std::fs::write(&path, r#"{"modules":[{"mlt":{"structure":"SS"}}]}"#).unwrap();
    assert!(load_space(Some(&path)).is_err());
}

#[test]
fn records_round_trip_and_revalidate() {
    let e0 = workloads::gmm(12, 12, 12);
    let g = SpaceConfig { modules: vec![ModuleSpec::mlt("SR")] }.build().unwrap();
    let r = tune(&e0, &g, &SearchConfig { trials: 20, ..SearchConfig::default() }, &SimulatedMachine::default());
    let text = write_records(&r.log);
    assert_eq!(text.lines().count(), 20);
    let back = read_records(&text, &e0).unwrap();
    for (a, b) in r.log.iter().zip(&back) {
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.latency, b.latency);
        assert_eq!(a.features, b.features);
        assert!(a.trace.same_instructions(&b.trace));
    }
    let line: RecordLine = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(line.latency, r.log[0].latency);
    // The same records do not replay on a different workload.
    assert!(read_records(&text, &workloads::gmm(8, 8, 8)).is_err());
}
