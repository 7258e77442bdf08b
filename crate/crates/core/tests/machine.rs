use schedspace_core::ir::{normalize_vars, Buffer, BufferRole, Compute, Expr, LoopKind, NodePath, Stmt, TensorProgram};
use schedspace_core::machine::{footprint, simulate_latency, MachineSpec};
use schedspace_core::modules::{generate, SpaceConfig};
use schedspace_core::schedule::{Decider, Factor, LoopRef, Schedule};
use schedspace_core::workloads;

fn spec() -> MachineSpec {
    MachineSpec::default()
}

#[test]
fn defaults_are_valid() {
    let s = spec();
    assert!(s.validate().is_ok());
    assert_eq!((s.cores, s.vector_lanes, s.cache_capacity), (4, 8, 4096));
    let bad = MachineSpec { unroll_discount: 1.5, ..spec() };
    assert!(bad.validate().is_err());
    let bad = MachineSpec { cores: 0, ..spec() };
    assert!(bad.validate().is_err());
}

#[test]
fn scalar_statement_base_case() {
    let p = TensorProgram::new(
        vec![Buffer::new("a", vec![1], BufferRole::Input), Buffer::new("b", vec![1], BufferRole::Output)],
        vec![Stmt::Compute(Compute {
            block: "S".into(),
            buffer: "b".into(),
            indices: vec![Expr::Int(0)],
            value: Expr::add(Expr::load("a", vec![Expr::Int(0)]), Expr::Int(1)),
            init: None,
            epilogue: None,
        })],
    );
    assert_eq!(simulate_latency(&p, &spec()), 3.0);
    let fp = footprint(&p, &NodePath(vec![0]));
    assert_eq!(fp.len(), 1);
    assert_eq!(fp[0].values().copied().collect::<Vec<_>>(), vec![1, 1]);
}

fn fig2(parallel: bool, vectorize: bool) -> TensorProgram {
    let mut s = Schedule::seeded(workloads::relu1d(1024), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let t = s.split(l[0], &[Factor::Int(32), Factor::Int(8), Factor::Int(4)]).unwrap();
    if parallel {
        s.parallel(t[0]).unwrap();
    }
    if vectorize {
        s.vectorize(t[2]).unwrap();
    }
    s.program().clone()
}

#[test]
fn fig2_hand_evaluated() {
    // Both buffers (2048 elements) fit, so every access hits: 1 op + 2 hits.
    let e0 = workloads::relu1d(1024);
    assert_eq!(simulate_latency(&e0, &spec()), 1024.0 * 3.0);
    assert_eq!(simulate_latency(&fig2(false, false), &spec()), 1024.0 * 3.0);
    // ceil(32/4) * 8 * ceil(4/8) iterations.
    assert_eq!(simulate_latency(&fig2(true, true), &spec()), 8.0 * 8.0 * 1.0 * 3.0);
    assert_eq!(simulate_latency(&fig2(true, false), &spec()), 8.0 * 8.0 * 4.0 * 3.0);
}

#[test]
fn naive_matmul_hand_evaluated() {
    // The k-suffix footprint is 64 + 64 + 1; adding j gives 64 + 4096 + 64,
    // too big. Every access depends on i or j, so all four miss.
    let e0 = workloads::gmm(64, 64, 64);
    assert_eq!(simulate_latency(&e0, &spec()), 64.0 * 64.0 * 64.0 * (2.0 + 4.0 * 8.0));
    // Small matmul fits entirely: all hits.
    let e16 = workloads::gmm(16, 16, 16);
    assert_eq!(simulate_latency(&e16, &spec()), 4096.0 * (2.0 + 4.0));
}

#[test]
fn matmul_footprints() {
    let p = workloads::gmm(16, 16, 16);
    let path = p.block_path("Dense").unwrap();
    let fp = footprint(&p, &path);
    assert_eq!(fp.len(), 4);
    let at = |k: usize, b: &str| fp[k][b];
    assert_eq!((at(0, "A"), at(0, "B"), at(0, "C")), (256, 256, 256));
    assert_eq!((at(2, "A"), at(2, "B"), at(2, "C")), (16, 16, 1));
    assert_eq!((at(3, "A"), at(3, "B"), at(3, "C")), (1, 1, 1));
}

fn tile64(tensorize: bool) -> TensorProgram {
    let mut s = Schedule::seeded(workloads::gmm(64, 64, 64), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let mut parts: Vec<Vec<LoopRef>> = Vec::new();
    for &x in &l {
        parts.push(s.split(x, &[Factor::Int(16), Factor::Int(4)]).unwrap());
    }
    s.reorder(&[parts[0][0], parts[1][0], parts[2][0], parts[0][1], parts[1][1], parts[2][1]]).unwrap();
    if tensorize {
        s.tensorize(parts[0][1], "tu.mma4").unwrap();
    }
    s.program().clone()
}

#[test]
fn tensorized_tile_is_cheaper() {
    let scalar = simulate_latency(&tile64(false), &spec());
    let tensor = simulate_latency(&tile64(true), &spec());
    // Per tile: 8 + 48 hits, over 16^3 tiles.
    assert_eq!(tensor, 4096.0 * 56.0);
    assert!(tensor < scalar);
    assert!(scalar >= 4096.0 * 64.0 * 2.0);
}

#[test]
fn vectorization_needs_unit_stride() {
    // Vectorizing i of a transposed copy gives no discount.
    let p = TensorProgram::new(
        vec![Buffer::new("A", vec![8, 8], BufferRole::Input), Buffer::new("B", vec![8, 8], BufferRole::Output)],
        vec![Stmt::Loop(schedspace_core::ir::Loop {
            var: "j".into(),
            extent: 8,
            kind: LoopKind::Serial,
            body: vec![Stmt::Loop(schedspace_core::ir::Loop {
                var: "i".into(),
                extent: 8,
                kind: LoopKind::Vectorized,
                body: vec![Stmt::Compute(Compute {
                    block: "T".into(),
                    buffer: "B".into(),
                    indices: vec![Expr::var("i"), Expr::var("j")],
                    value: Expr::load("A", vec![Expr::var("j"), Expr::var("i")]),
                    init: None,
                    epilogue: None,
                })],
            })],
        })],
    );
    assert_eq!(simulate_latency(&p, &spec()), 64.0 * 2.0);
}

fn serial_loops(p: &TensorProgram) -> Vec<String> {
    let mut out = Vec::new();
    p.walk(&mut |_, s, _| {
        if let Stmt::Loop(l) = s {
            if l.kind == LoopKind::Serial {
                out.push(l.var.clone());
            }
        }
    });
    out
}

fn contains_parallel(l: &schedspace_core::ir::Loop) -> bool {
    l.body.iter().any(|s| match s {
        Stmt::Loop(x) => x.kind == LoopKind::Parallel || contains_parallel(x),
        _ => false,
    })
}

#[test]
fn annotations_never_increase_cost() {
    let g = SpaceConfig::default_space().build().unwrap();
    for (i, e0) in [workloads::gmm(16, 16, 16), workloads::dense_relu(16, 32, 8), workloads::conv1d(32, 2, 4, 3, 1, 1)]
        .into_iter()
        .enumerate()
    {
        for seed in 0..30 {
            let (p, _, _) = generate(&e0, &g, Decider::random(seed * 7 + i as u64)).unwrap();
            let base = simulate_latency(&p, &spec());
            for var in serial_loops(&p) {
                let mut s = Schedule::seeded(p.clone(), 0);
                let blocks = s.get_blocks();
                let Some(b) = blocks.iter().find(|&&b| {
                    s.enclosing_loops(b).unwrap().iter().any(|l| l.var == var)
                }) else {
                    continue;
                };
                let loops = s.get_loops(*b).unwrap();
                let l = *loops.iter().find(|&&l| s.loop_var(l).unwrap() == var).unwrap();
                let mut v = s.clone();
                if v.vectorize(l).is_ok() {
                    assert!(simulate_latency(v.program(), &spec()) <= base);
                }
                let nested_parallel = contains_parallel(s.loop_of(l).unwrap());
                if !nested_parallel && s.parallel(l).is_ok() {
                    assert!(simulate_latency(s.program(), &spec()) <= base);
                }
            }
        }
    }
}

#[test]
fn cost_is_alpha_invariant_and_deterministic() {
    let g = SpaceConfig::default_space().build().unwrap();
    let e0 = workloads::dense_relu(16, 16, 16);
    for seed in 0..50 {
        let (p, _, _) = generate(&e0, &g, Decider::random(seed)).unwrap();
        let c = simulate_latency(&p, &spec());
        assert_eq!(c.to_bits(), simulate_latency(&normalize_vars(&p), &spec()).to_bits());
        assert_eq!(c.to_bits(), simulate_latency(&p, &spec()).to_bits());
        assert!(c > 0.0);
    }
}

#[test]
fn best_matmul_schedule_beats_naive() {
    let e0 = workloads::gmm(64, 64, 64);
    let naive = simulate_latency(&e0, &spec());
    let mut s = Schedule::seeded(e0, 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let j = s.split(l[1], &[Factor::Int(8), Factor::Int(8)]).unwrap();
    s.reorder(&[l[2], j[1]]).unwrap();
    s.parallel(l[0]).unwrap();
    s.vectorize(j[1]).unwrap();
    assert!(simulate_latency(s.program(), &spec()) * 20.0 < naive);
}
