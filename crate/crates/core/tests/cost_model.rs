use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schedspace_core::cost_model::{featurize, spearman, CostModel, FeatureVector, ProxyModel, NUM_FEATURES};
use schedspace_core::ir::{normalize_vars, Buffer, BufferRole, Compute, Expr, Stmt, TensorProgram};
use schedspace_core::machine::MachineSpec;
use schedspace_core::modules::{generate, SpaceConfig};
use schedspace_core::schedule::{Decider, Factor, Schedule};
use schedspace_core::workloads;

#[test]
fn zero_loop_features() {
    let p = TensorProgram::new(
        vec![Buffer::new("a", vec![1], BufferRole::Input), Buffer::new("b", vec![1], BufferRole::Output)],
        vec![Stmt::Compute(Compute {
            block: "S".into(),
            buffer: "b".into(),
            indices: vec![Expr::Int(0)],
            value: Expr::load("a", vec![Expr::Int(0)]),
            init: None,
            epilogue: None,
        })],
    );
    let f = featurize(&p, &MachineSpec::default());
    assert_eq!(f.len(), NUM_FEATURES);
    assert!((f[0] - 2f64.ln()).abs() < 1e-15);
    assert_eq!(f[8], 0.0);
}

#[test]
fn vectorized_fraction_of_fig2() {
    let mut s = Schedule::seeded(workloads::relu1d(1024), 0);
    let b = s.get_blocks();
    let l = s.get_loops(b[0]).unwrap();
    let t = s.split(l[0], &[Factor::Int(32), Factor::Int(8), Factor::Int(4)]).unwrap();
    s.parallel(t[0]).unwrap();
    s.vectorize(t[2]).unwrap();
    let f = featurize(s.program(), &MachineSpec::default());
    assert_eq!(f[2], 1.0);
    assert_eq!(f[3], 1.0);
    assert_eq!(f[6], 0.0);
    assert_eq!(f[8], 3.0);
}

#[test]
fn features_are_alpha_invariant() {
    let g = SpaceConfig::default_space().build().unwrap();
    let e0 = workloads::dense_relu(16, 16, 16);
    for seed in 0..100 {
        let (p, _, _) = generate(&e0, &g, Decider::random(seed)).unwrap();
        let spec = MachineSpec::default();
        assert_eq!(featurize(&p, &spec), featurize(&normalize_vars(&p), &spec));
        assert!(featurize(&p, &spec).iter().all(|x| x.is_finite()));
    }
}

#[test]
fn unfit_and_single_record() {
    let m = ProxyModel::default();
    assert_eq!(m.predict(&[0.3; NUM_FEATURES]), 1.0);
    let w = ProxyModel::warm(1e-6, &[2.0, 8.0]);
    assert!((w.predict(&[0.0; NUM_FEATURES]) - 4.0).abs() < 1e-12);
    let mut m = ProxyModel::default();
    let f: FeatureVector = [1.0, 2.0, 0.5, 0.0, 3.0, 4.0, 0.0, 0.0, 3.0];
    m.fit(&[(f, 1234.5)]);
    assert!((m.predict(&f) - 1234.5).abs() < 1e-9);
}

#[test]
fn recovers_exact_linear_ground_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w: Vec<f64> = (0..NUM_FEATURES).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let truth = |f: &FeatureVector| (3.0 + f.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).exp();
    let draw = |rng: &mut ChaCha8Rng| {
        let mut f = [0.0; NUM_FEATURES];
        f.iter_mut().for_each(|x| *x = rng.gen_range(0.0..4.0));
        f
    };
    let train: Vec<(FeatureVector, f64)> = (0..200).map(|_| draw(&mut rng)).map(|f| (f, truth(&f))).collect();
    let mut m = ProxyModel::default();
    m.fit(&train);
    assert!(!m.degenerate);
    for _ in 0..50 {
        let f = draw(&mut rng);
        let rel = (m.predict(&f) - truth(&f)).abs() / truth(&f);
        assert!(rel < 1e-6, "{rel}");
    }
}

#[test]
fn fit_is_order_insensitive() {
    let g = SpaceConfig::default_space().build().unwrap();
    let e0 = workloads::gmm(16, 16, 16);
    let spec = MachineSpec::default();
    let mut recs: Vec<(FeatureVector, f64)> = (0..40)
        .map(|seed| {
            let (p, _, _) = generate(&e0, &g, Decider::random(seed)).unwrap();
            (featurize(&p, &spec), schedspace_core::machine::simulate_latency(&p, &spec))
        })
        .collect();
    let mut a = ProxyModel::default();
    a.fit(&recs);
    recs.reverse();
    let mut b = ProxyModel::default();
    b.fit(&recs);
    for (f, _) in &recs {
        let (x, y) = (a.predict(f), b.predict(f));
        assert!((x - y).abs() <= 1e-9 * x.abs());
    }
}

/// Textbook formula, valid without ties.
fn spearman_no_ties(a: &[f64], b: &[f64]) -> f64 {
    let rank = |xs: &[f64], i: usize| xs.iter().filter(|&&x| x < xs[i]).count() as f64;
    let n = a.len() as f64;
    let d2: f64 = (0..a.len()).map(|i| (rank(a, i) - rank(b, i)).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn spearman_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        let a: Vec<f64> = (0..30).map(|_| rng.gen()).collect();
        let b: Vec<f64> = a.iter().map(|x| x * x + rng.gen::<f64>() * 0.3).collect();
        assert!((spearman(&a, &b) - spearman_no_ties(&a, &b)).abs() < 1e-12);
    }
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), 0.0);
    // Ties take their average rank: ranks (1.5, 1.5, 3) vs (1, 2, 3).
    let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
    assert!((r - 0.8660254037844387).abs() < 1e-12);
}
