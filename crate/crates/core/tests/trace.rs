use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schedspace_core::ir::structural_equal;
use schedspace_core::modules::{generate, ModuleSpec, SpaceConfig};
use schedspace_core::schedule::{Decider, Factor, Schedule};
use schedspace_core::trace::{
    decision_domain, decision_log_prior, mutate, replay, trace_prior, validate_trace, Decision, Input, Op,
    ReplayMode, Trace, Validation,
};
use schedspace_core::workloads;

fn fig2_trace() -> Trace {
    let mut s = Schedule::seeded(workloads::relu1d(1024), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let t = s.split(l[0], &[Factor::Int(32), Factor::Int(8), Factor::Int(4)]).unwrap();
    s.parallel(t[0]).unwrap();
    s.vectorize(t[2]).unwrap();
    s.trace()
}

#[test]
fn fig2_trace_validates_and_corruption_is_rejected() {
    let e0 = workloads::relu1d(1024);
    let t = fig2_trace();
    assert!(validate_trace(&e0, &t).is_accepted());
    let mut bad = t.clone();
    let split = bad.instructions.iter().position(|i| i.op == Op::Split).unwrap();
    *bad.instructions[split].inputs.last_mut().unwrap() = Input::Int(5);
    match validate_trace(&e0, &bad) {
        Validation::Rejected { index, reason } => {
            assert_eq!(index, split);
            assert!(reason.contains("product mismatch"), "{reason}");
        }
        Validation::Accepted { .. } => panic!("accepted a corrupted trace"),
    }
}

#[test]
fn empty_trace_replays_to_e0() {
    let e0 = workloads::gmm(4, 4, 4);
    let (p, t) = replay(&e0, &Trace::default(), ReplayMode::Follow).unwrap();
    assert!(structural_equal(&p, &e0));
    assert_eq!(trace_prior(&t).unwrap(), 0.0);
    assert!(trace_prior(&Trace::default()).is_err());
}

#[test]
fn resampling_changes_decisions() {
    let e0 = workloads::dense_relu(128, 128, 128);
    let g = SpaceConfig { modules: vec![ModuleSpec::mlt("SR"), ModuleSpec::AutoInline {}] }.build().unwrap();
    let (_, t, _) = generate(&e0, &g, Decider::random(0)).unwrap();
    let differs = (0..20u64).any(|k| {
        let (_, a) = replay(&e0, &t, ReplayMode::Resample(2 * k)).unwrap();
        let (_, b) = replay(&e0, &t, ReplayMode::Resample(2 * k + 1)).unwrap();
        a.decisions() != b.decisions()
    });
    assert!(differs);
}

#[test]
fn mutation_of_a_single_tile() {
    let mut s = Schedule::seeded(workloads::relu1d(12), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    s.sample_perfect_tile(l[0], 2).unwrap();
    let t = s.trace();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        let m = mutate(&t, &mut rng);
        assert!(m.mutated);
        let old = t.instructions[2].decision.clone().unwrap();
        let new = m.trace.instructions[2].decision.clone().unwrap();
        assert_ne!(old, new);
        assert_eq!(decision_domain(&t.instructions[2]).len(), 6);
        assert!(decision_domain(&t.instructions[2]).contains(&new));
    }
}

#[test]
fn singleton_domains_do_not_mutate() {
    let mut s = Schedule::seeded(workloads::relu1d(13), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    s.sample_perfect_tile(l[0], 1).unwrap();
    s.sample_categorical(&[3], &[1.0]).unwrap();
    let t = s.trace();
    let m = mutate(&t, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(!m.mutated);
    assert_eq!(m.trace, t);
}

#[test]
fn prior_is_sum_of_log_uniforms() {
    let mut s = Schedule::seeded(workloads::relu2d(12, 8), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    s.sample_perfect_tile(l[0], 2).unwrap();
    s.sample_perfect_tile(l[1], 2).unwrap();
    let (_, t, _) = s.into_parts();
    let want = (1.0f64 / 24.0).ln();
    assert!((trace_prior(&t).unwrap() - want).abs() < 1e-12);
    assert!((decision_log_prior(&t) - want).abs() < 1e-12);
}

#[test]
fn random_mutations_classify_consistently() {
    let e0 = workloads::dense_relu(16, 16, 16);
    let g = SpaceConfig::default_space().build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut accepted, mut rejected) = (0, 0);
    for seed in 0..200u64 {
        let (_, t, _) = generate(&e0, &g, Decider::random(seed)).unwrap();
        for _ in 0..5 {
            let m = mutate(&t, &mut rng);
            match validate_trace(&e0, &m.trace) {
                Validation::Accepted { program, trace } => {
                    accepted += 1;
                    let (p, _) = replay(&e0, &m.trace, ReplayMode::Follow).unwrap();
                    assert!(structural_equal(&p, &program));
                    assert!((trace.prior.unwrap() - decision_log_prior(&trace)).abs() < 1e-9);
                }
                Validation::Rejected { index, reason } => {
                    rejected += 1;
                    assert!(!reason.is_empty());
                    let err = replay(&e0, &m.trace, ReplayMode::Follow).unwrap_err();
                    assert_eq!(err.index, index);
                }
            }
        }
    }
    assert!(accepted > 0, "mutation closure");
    assert!(rejected > 0, "state-dependent domains make some mutations invalid");
}

#[test]
fn tile_mutation_can_invalidate_location() {
    let e0 = workloads::dense_relu(8, 8, 8);
    let mut rejected = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..100 {
        let mut s = Schedule::seeded(e0.clone(), seed);
        let b = s.get_blocks();
        let l = s.get_loops(b[0]).unwrap();
        let t = s.sample_perfect_tile(l[0], 2).unwrap();
        s.split(l[0], &[Factor::Rv(t[0]), Factor::Rv(t[1])]).unwrap();
        s.sample_compute_location(b[1]).unwrap();
        let trace = s.trace();
        let mut m = mutate(&trace, &mut rng);
        while m.index != Some(2) {
            m = mutate(&trace, &mut rng);
        }
        if !validate_trace(&e0, &m.trace).is_accepted() {
            rejected += 1;
        }
        let Some(Decision::Tile { .. }) = &m.trace.instructions[2].decision else { panic!() };
    }
    assert!(rejected > 0);
}
