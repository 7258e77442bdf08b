use schedspace_core::interp::{random_inputs, run};
use schedspace_core::ir::{structural_equal, validate_ir, LoopKind, Stmt, TensorProgram};
use schedspace_core::schedule::{Decider, Factor, LoopRef, Schedule, ScheduleError, Target};
use schedspace_core::trace::{perfect_tiles, replay, Decision, Location, ReplayMode};
use schedspace_core::workloads;

fn assert_equiv(e0: &TensorProgram, p: &TensorProgram) {
    assert!(validate_ir(p).is_ok());
    for seed in 0..2 {
        let x = random_inputs(e0, seed);
        assert_eq!(run(e0, &x).unwrap(), run(p, &x).unwrap(), "seed {seed}");
    }
}

fn assert_replays(s: &Schedule, e0: &TensorProgram) {
    let (p, t) = replay(e0, &s.trace(), ReplayMode::Follow).unwrap();
    assert!(structural_equal(&p, s.program()));
    assert!(t.same_instructions(&s.trace()));
}

fn ints(v: &[i64]) -> Vec<Factor> {
    v.iter().map(|&x| Factor::Int(x)).collect()
}

fn extents(p: &TensorProgram) -> Vec<(i64, LoopKind)> {
    let mut out = Vec::new();
    p.walk(&mut |_, s, _| {
        if let Stmt::Loop(l) = s {
            out.push((l.extent, l.kind));
        }
    });
    out
}

fn tiled_dense(s: &mut Schedule) -> Vec<LoopRef> {
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let i = s.split(l[0], &ints(&[4, 32])).unwrap();
    let j = s.split(l[1], &ints(&[8, 16])).unwrap();
    s.reorder(&[i[0], j[0], i[1], j[1], l[2]]).unwrap();
    vec![i[0], j[0], i[1], j[1], l[2]]
}

#[test]
fn blocks_and_loops() {
    let mut s = Schedule::seeded(workloads::dense_relu(8, 8, 8), 0);
    let b = s.get_blocks();
    assert_eq!(b.len(), 2);
    assert_eq!(s.block_name(b[0]).unwrap(), "Dense");
    assert_eq!(s.block_name(b[1]).unwrap(), "ReLU");
    let l = s.get_loops(b[0]).unwrap();
    let vars: Vec<_> = l.iter().map(|&l| s.loop_var(l).unwrap().to_string()).collect();
    assert_eq!(vars, ["i", "j", "k"]);
}

#[test]
fn fig2_relu_split_parallel_vectorize() {
    let e0 = workloads::relu1d(1024);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let t = s.split(l[0], &ints(&[32, 8, 4])).unwrap();
    s.parallel(t[0]).unwrap();
    s.vectorize(t[2]).unwrap();
    assert_eq!(
        extents(s.program()),
        vec![(32, LoopKind::Parallel), (8, LoopKind::Serial), (4, LoopKind::Vectorized)]
    );
    assert_equiv(&e0, s.program());
    assert_replays(&s, &e0);
}

#[test]
fn split_rules() {
    let e0 = workloads::relu1d(12);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    assert!(matches!(s.split(l[0], &ints(&[5, 2])), Err(ScheduleError::ProductMismatch { .. })));
    let t = s.split(l[0], &ints(&[3, 4])).unwrap();
    assert_equiv(&e0, s.program());
    assert!(matches!(s.split(l[0], &ints(&[3, 4])), Err(ScheduleError::DeadHandle(_))));
    let f = s.fuse(&t).unwrap();
    assert_eq!(s.loop_of(f).unwrap().extent, 12);
    assert_equiv(&e0, s.program());
    assert_replays(&s, &e0);

    let e7 = workloads::relu1d(7);
    let mut s = Schedule::seeded(e7.clone(), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    s.split(l[0], &ints(&[7])).unwrap();
    assert!(structural_equal(s.program(), &e7));
}

#[test]
fn split_with_inferred_factor() {
    let e0 = workloads::relu1d(24);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let t = s.split(l[0], &[Factor::Infer, Factor::Int(4)]).unwrap();
    assert_eq!(s.loop_of(t[0]).unwrap().extent, 6);
    assert_equiv(&e0, s.program());
}

#[test]
fn fuse_relu2d_and_single_loop() {
    let e0 = workloads::relu2d(4, 5);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let f = s.fuse(&l).unwrap();
    assert_eq!(s.loop_of(f).unwrap().extent, 20);
    assert_equiv(&e0, s.program());
    let g = s.fuse(&[f]).unwrap();
    assert_eq!(s.loop_of(g).unwrap().extent, 20);
    assert_equiv(&e0, s.program());
}

#[test]
fn fuse_rejects_mixed_spatial_and_reduction() {
    let mut s = Schedule::seeded(workloads::gmm(4, 4, 4), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    assert!(s.fuse(&[l[1], l[2]]).is_err());
    assert!(s.fuse(&[l[0], l[2]]).is_err());
}

#[test]
fn reorder_matmul() {
    let e0 = workloads::gmm(8, 8, 8);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    s.reorder(&l).unwrap();
    assert!(structural_equal(s.program(), &e0));
    s.reorder(&[l[2], l[0], l[1]]).unwrap();
    let vars: Vec<_> = s.get_loops(b[0]).unwrap().iter().map(|&x| s.loop_var(x).unwrap().to_string()).collect();
    assert_eq!(vars, ["k", "i", "j"]);
    assert_equiv(&e0, s.program());
    assert_replays(&s, &e0);
}

#[test]
fn two_level_tiling_and_relu_locations() {
    let e0 = workloads::dense_relu(128, 128, 128);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let tiles = tiled_dense(&mut s);
    assert_eq!(
        extents(s.program()).iter().take(5).map(|e| e.0).collect::<Vec<_>>(),
        vec![4, 8, 32, 16, 128]
    );
    let b = s.get_blocks();
    let rv = s.sample_compute_location(b[1]).unwrap();
    let Some(Decision::Location { domain, .. }) = s.trace().instructions.last().unwrap().decision.clone() else {
        panic!()
    };
    assert_eq!(
        domain,
        vec![Location::Root, Location::Inline, Location::Loop(0), Location::Loop(1), Location::Loop(2), Location::Loop(3)]
    );
    let _ = rv;
    s.compute_at(b[1], Target::Loop(tiles[3])).unwrap();
    assert_equiv(&workloads::dense_relu(128, 128, 128), s.program());
    assert_replays(&s, &e0);
}

#[test]
fn compute_at_every_legal_location_is_sound() {
    let e0 = workloads::dense_bias_relu(8, 8, 4);
    for seed in 0..100u64 {
        let mut s = Schedule::new(e0.clone(), Decider::random(seed));
        let b = s.get_blocks();
        let l = s.get_loops(b[0]).unwrap();
        let ti = s.sample_perfect_tile(l[0], 2).unwrap();
        let tj = s.sample_perfect_tile(l[1], 2).unwrap();
        let i = s.split(l[0], &[Factor::Rv(ti[0]), Factor::Rv(ti[1])]).unwrap();
        let j = s.split(l[1], &[Factor::Rv(tj[0]), Factor::Rv(tj[1])]).unwrap();
        s.reorder(&[i[0], j[0], i[1], j[1]]).unwrap();
        let which = b[1 + (seed as usize % 2)];
        let loc = s.sample_compute_location(which).unwrap();
        s.compute_at(which, Target::Location(loc)).unwrap();
        assert_equiv(&e0, s.program());
        assert_replays(&s, &e0);
    }
}

#[test]
fn compute_at_root_is_noop() {
    let e0 = workloads::dense_relu(8, 8, 8);
    let mut s = Schedule::new(e0.clone(), Decider::Forced(Some(Decision::Location {
        chosen: Location::Root,
        domain: vec![],
    })));
    let b = s.get_blocks();
    let loc = s.sample_compute_location(b[1]).unwrap();
    s.compute_at(b[1], Target::Location(loc)).unwrap();
    assert!(structural_equal(s.program(), &e0));
}

#[test]
fn inline_relu_into_dense() {
    let e0 = workloads::dense_relu(8, 8, 8);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    s.inline(b[1]).unwrap();
    assert_eq!(s.program().blocks().len(), 1);
    assert_equiv(&e0, s.program());
    assert!(s.inline(b[1]).is_err());
}

#[test]
fn inline_chain() {
    let e0 = workloads::dense_bias_relu(8, 8, 8);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    s.inline(b[1]).unwrap();
    s.inline(b[2]).unwrap();
    assert_eq!(s.program().blocks().len(), 1);
    assert_equiv(&e0, s.program());
    assert_replays(&s, &e0);
    // Same chain, ReLU first: the Bias block is then folded into Dense.
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    s.inline(b[2]).unwrap();
    s.inline(b[1]).unwrap();
    assert_eq!(s.program().blocks().len(), 1);
    assert_equiv(&e0, s.program());
}

#[test]
fn inline_rejects_reduction() {
    let mut s = Schedule::seeded(workloads::dense_relu(4, 4, 4), 0);
    let b = s.get_blocks();
    assert!(s.inline(b[0]).is_err());
}

#[test]
fn annotation_rules() {
    let e0 = workloads::gmm(8, 8, 8);
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let err = s.vectorize(l[2]).unwrap_err();
    assert!(err.to_string().contains("reduction-carried dependence"), "{err}");
    assert!(s.parallel(l[2]).is_err());
    assert!(s.vectorize(l[1]).is_err(), "not innermost");
    s.parallel(l[0]).unwrap();
    let one = s.split(l[1], &ints(&[8, 1])).unwrap();
    s.unroll(one[1], None).unwrap();
    assert_equiv(&e0, s.program());
    let big = workloads::relu1d(128);
    let mut s = Schedule::seeded(big, 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    assert!(s.unroll(l[0], None).is_err());
}

fn tiled_for_mma(e0: &TensorProgram, kt: i64) -> (Schedule, Vec<LoopRef>) {
    let mut s = Schedule::seeded(e0.clone(), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let n = s.loop_of(l[0]).unwrap().extent;
    let k = s.loop_of(l[2]).unwrap().extent;
    let i = s.split(l[0], &ints(&[n / 4, 4])).unwrap();
    let j = s.split(l[1], &ints(&[n / 4, 4])).unwrap();
    let kk = s.split(l[2], &ints(&[k / kt, kt])).unwrap();
    s.reorder(&[i[0], j[0], kk[0], i[1], j[1], kk[1]]).unwrap();
    (s, vec![i[0], j[0], kk[0], i[1], j[1], kk[1]])
}

#[test]
fn tensorize_mma4() {
    let e0 = workloads::gmm(64, 64, 64);
    let (mut s, l) = tiled_for_mma(&e0, 4);
    s.tensorize(l[3], "tu.mma4").unwrap();
    let mut n = 0;
    s.program().walk(&mut |_, st, _| n += matches!(st, Stmt::Intrinsic(_)) as usize);
    assert_eq!(n, 1);
    assert_equiv(&e0, s.program());
    assert_replays(&s, &e0);

    let e12 = workloads::gmm(8, 8, 12);
    let (mut s, l) = tiled_for_mma(&e12, 3);
    assert!(matches!(s.tensorize(l[3], "tu.mma4"), Err(ScheduleError::PatternMismatch(_))));
}

#[test]
fn perfect_tile_domains() {
    let d = perfect_tiles(12, 2);
    assert_eq!(d, vec![vec![1, 12], vec![2, 6], vec![3, 4], vec![4, 3], vec![6, 2], vec![12, 1]]);
    assert_eq!(perfect_tiles(13, 2), vec![vec![1, 13], vec![13, 1]]);
    // Independent count: ordered factorizations of 2^a into n parts is C(a+n-1, n-1).
    assert_eq!(perfect_tiles(64, 3).len(), 28);
    assert_eq!(perfect_tiles(16, 4).len(), 35);
    let mut s = Schedule::seeded(workloads::relu1d(12), 5);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let rv = s.sample_perfect_tile(l[0], 2).unwrap();
    let f: Vec<_> = rv.iter().map(|&r| s.int_value(r).unwrap()).collect();
    assert!(d.contains(&f));
    assert!((s.log_prior() + (6f64).ln()).abs() < 1e-12);
}

#[test]
fn categorical_is_uniform() {
    let mut counts = [0u32; 4];
    let mut s = Schedule::seeded(workloads::relu1d(4), 11);
    for _ in 0..10_000 {
        let rv = s.sample_categorical(&[1, 2, 4, 8], &[1.0; 4]).unwrap();
        counts[s.int_value(rv).unwrap().trailing_zeros() as usize] += 1;
    }
    // Chi-square with 3 degrees of freedom; 11.34 is the 0.01 critical value.
    let chi: f64 = counts.iter().map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0).sum();
    assert!(chi < 11.34, "{counts:?}");
    let rv = s.sample_categorical(&[9], &[0.3]).unwrap();
    assert_eq!(s.int_value(rv).unwrap(), 9);
    assert!(s.sample_categorical(&[1, 2], &[0.0, 0.0]).is_err());
    assert!(s.sample_categorical(&[1, 2], &[1.0]).is_err());
}

#[test]
fn location_domain_depends_on_tiling() {
    let e0 = workloads::dense_relu(8, 8, 8);
    let sizes: std::collections::BTreeSet<usize> = (0..20)
        .map(|seed| {
            let mut s = Schedule::seeded(e0.clone(), seed);
            let b = s.get_blocks();
            let l = s.get_loops(b[0]).unwrap();
            let t = s.sample_perfect_tile(l[0], 2).unwrap();
            s.split(l[0], &[Factor::Rv(t[0]), Factor::Rv(t[1])]).unwrap();
            s.sample_compute_location(b[1]).unwrap();
            match s.trace().instructions.last().unwrap().decision.clone() {
                Some(Decision::Location { domain, .. }) => domain.len(),
                _ => unreachable!(),
            }
        })
        .collect();
    assert!(sizes.len() > 1, "{sizes:?}");
}
