use std::fs;
use std::path::Path;
use std::process::Command as Process;

use schedspace::commands::{
    enumerate, replay, show_space, tune, EnumerateArgs, EnumerationFile, ReplayArgs, ShowSpaceArgs, TuneArgs,
    WorkloadArgs,
};
use schedspace::formats::{read_json, write_trace, ReportFile};
use schedspace_core::ir::structural_hash;
use schedspace_core::machine::{simulate_latency, MachineSpec};
use schedspace_core::trace::Trace;
use schedspace_core::workloads;

fn wl(name: &str, shape: &str) -> WorkloadArgs {
    WorkloadArgs { workload: name.into(), shape: Some(shape.into()) }
}

fn tune_args(w: WorkloadArgs, space: Option<&Path>, trials: usize, out: &Path) -> TuneArgs {
    TuneArgs {
        workload: w,
        space: space.map(Path::to_path_buf),
        machine: None,
        trials,
        batch: 16,
        population: 64,
        generations: 4,
        epsilon: 0.05,
        seed: 0,
        out: Some(out.to_path_buf()),
        records: None,
        warm_start: None,
        best_trace: None,
        jobs: Some(2),
    }
}

fn sr_space(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("sr.json");
    fs::write(&p, r#"{"modules":[{"mlt":{"structure":"SR"}}]}"#).unwrap();
    p
}

#[test]
fn replay_of_empty_trace_is_e0() {
    let dir = tempfile::tempdir().unwrap();
    let e0 = workloads::gmm(8, 8, 8);
    let path = dir.path().join("t.jsonl");
    fs::write(&path, write_trace(structural_hash(&e0), &Trace::default())).unwrap();
    let out = replay(&ReplayArgs {
        workload: wl("gmm", "8,8,8"),
        trace: path,
        machine: None,
        check_semantics: true,
        seeds: 2,
    })
    .unwrap();
    let want = simulate_latency(&e0, &MachineSpec::default());
    assert!(out.contains(&format!("latency: {want}\n")), "{out}");
    assert!(out.contains("semantics: outputs equal on 2 input seeds"));
}

#[test]
fn tune_reaches_enumerated_optimum_on_small_matmul() {
    let dir = tempfile::tempdir().unwrap();
    let space = sr_space(dir.path());
    let en_path = dir.path().join("space.json");
    enumerate(&EnumerateArgs {
        workload: wl("gmm", "16,16,16"),
        space: Some(space.clone()),
        machine: None,
        cap: 100_000,
        out: Some(en_path.clone()),
        jobs: None,
    })
    .unwrap();
    let en: EnumerationFile = read_json(&en_path).unwrap();
    assert!(!en.capped);
    let report_path = dir.path().join("r.json");
    tune(&tune_args(wl("gmm", "16,16,16"), Some(&space), 256, &report_path)).unwrap();
    let r: ReportFile = read_json(&report_path).unwrap();
    assert!(r.best.unwrap().latency <= en.optimum.unwrap() * 1.05);
}

#[test]
fn tune_reports_are_identical_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    tune(&tune_args(wl("dense_relu", "16,16,16"), None, 48, &a)).unwrap();
    let mut args = tune_args(wl("dense_relu", "16,16,16"), None, 48, &b);
    args.jobs = Some(1);
    tune(&args).unwrap();
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timestamp");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip(&a), strip(&b));
    // Reports read back into the same structure.
    let r: ReportFile = read_json(&a).unwrap();
    assert_eq!(fs::read_to_string(&a).unwrap().trim_end(), serde_json::to_string_pretty(&r).unwrap());
}

#[test]
fn files_written_by_tune_are_readable() {
    let dir = tempfile::tempdir().unwrap();
    let (out, rec, best) = (dir.path().join("r.json"), dir.path().join("rec.jsonl"), dir.path().join("best.jsonl"));
    let mut args = tune_args(wl("gmm", "16,16,16"), None, 32, &out);
    args.records = Some(rec.clone());
    args.best_trace = Some(best.clone());
    tune(&args).unwrap();
    let r: ReportFile = read_json(&out).unwrap();
    let replayed = replay(&ReplayArgs {
        workload: wl("gmm", "16,16,16"),
        trace: best,
        machine: None,
        check_semantics: true,
        seeds: 1,
    })
    .unwrap();
    assert!(replayed.contains(&format!("latency: {}\n", r.best.as_ref().unwrap().latency)));
    let mut warm = tune_args(wl("gmm", "16,16,16"), None, 16, &out);
    warm.warm_start = Some(rec);
    assert!(tune(&warm).is_ok());
}

#[test]
fn show_space_writes_a_replayable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let shown = show_space(&ShowSpaceArgs {
        workload: wl("conv1d", "16,2,4,3,1,1"),
        space: None,
        machine: None,
        seed: 4,
        trace_out: Some(t.clone()),
    })
    .unwrap();
    let replayed = replay(&ReplayArgs {
        workload: wl("conv1d", "16,2,4,3,1,1"),
        trace: t,
        machine: None,
        check_semantics: true,
        seeds: 3,
    })
    .unwrap();
    let latency = |s: &str| s.lines().find(|l| l.starts_with("latency:")).unwrap().split_whitespace().nth(1).unwrap().to_string();
    assert_eq!(latency(&shown), latency(&replayed));
}

#[test]
fn binary_exit_codes_and_seed_fallback() {
    let exe = env!("CARGO_BIN_EXE_schedspace");
    let dir = tempfile::tempdir().unwrap();
    let ok = Process::new(exe).arg("list-workloads").output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("conv1d"));

    let bad = Process::new(exe).args(["tune", "--workload", "conv1d", "--shape", "8,1,1,4,3,0"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("positive integer"));

    // A trace recorded for one shape is refused for another.
    let t = dir.path().join("t.jsonl");
    let e0 = workloads::gmm(8, 8, 8);
    fs::write(&t, write_trace(structural_hash(&e0), &Trace::default())).unwrap();
    let wrong = Process::new(exe)
        .args(["replay", "--workload", "gmm", "--shape", "4,4,4", "--trace"])
        .arg(&t)
        .output()
        .unwrap();
    assert!(!wrong.status.success());
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("workload hash"));

    let show = |env: Option<&str>, flag: Option<&str>| {
        let mut c = Process::new(exe);
        c.args(["show-space", "--workload", "gmm", "--shape", "16,16,16"]).env_remove("METASCHED_SEED");
        if let Some(s) = env {
            c.env("METASCHED_SEED", s);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        let o = c.output().unwrap();
        assert!(o.status.success());
        String::from_utf8(o.stdout).unwrap()
    };
    let by_env: Vec<String> = (0..6).map(|s| show(Some(&s.to_string()), None)).collect();
    for (s, text) in by_env.iter().enumerate() {
        assert_eq!(*text, show(None, Some(&s.to_string())));
    }
    assert!(by_env.iter().any(|t| *t != by_env[0]));
}
