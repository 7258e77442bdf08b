use schedspace_core::interp::{random_inputs, run, Executable, InterpError, TensorValue, Tensors};
use schedspace_core::ir::LoopKind;
use schedspace_core::workloads;

fn naive_matmul(a: &TensorValue, b: &TensorValue) -> Vec<i64> {
    let (n, k, m) = (a.shape[0] as usize, a.shape[1] as usize, b.shape[1] as usize);
    let mut c = vec![0i64; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0;
            for r in 0..k {
                s += a.data[i * k + r] * b.data[r * m + j];
            }
            c[i * m + j] = s;
        }
    }
    c
}

fn naive_conv1d(x: &TensorValue, w: &TensorValue, stride: usize, pad: i64) -> Vec<i64> {
    let (ci, len) = (x.shape[0] as usize, x.shape[1]);
    let (co, kw) = (w.shape[0] as usize, w.shape[2] as usize);
    let out = ((len + 2 * pad - kw as i64) / stride as i64 + 1) as usize;
    let mut y = vec![0i64; co * out];
    for o in 0..co {
        for xo in 0..out {
            let mut s = 0;
            for c in 0..ci {
                for r in 0..kw {
                    let pos = (xo * stride + r) as i64 - pad;
                    if pos >= 0 && pos < len {
                        s += w.data[(o * ci + c) * kw + r] * x.data[c * len as usize + pos as usize];
                    }
                }
            }
            y[o * out + xo] = s;
        }
    }
    y
}

#[test]
fn relu_is_elementwise_max() {
    let p = workloads::relu1d(8);
    let a = TensorValue { shape: vec![8], data: vec![-1, 2, -3, 4, -5, 6, -7, 8] };
    let out = run(&p, &Tensors::from([("A".to_string(), a)])).unwrap();
    assert_eq!(out["B"].data, vec![0, 2, 0, 4, 0, 6, 0, 8]);
}

#[test]
fn identity_matmul_copies_b() {
    for n in [4, 16] {
        let p = workloads::gmm(n, n, n);
        let mut inputs = random_inputs(&p, 3);
        inputs.insert("A".into(), TensorValue::from_fn(&[n, n], |ix| (ix[0] == ix[1]) as i64));
        let out = run(&p, &inputs).unwrap();
        assert_eq!(out["C"], inputs["B"]);
    }
}

#[test]
fn matmul_matches_naive_oracle() {
    let p = workloads::gmm(16, 16, 16);
    let inputs = random_inputs(&p, 0);
    let out = run(&p, &inputs).unwrap();
    assert_eq!(out["C"].data, naive_matmul(&inputs["A"], &inputs["B"]));
    let p = workloads::gmm(5, 7, 3);
    let inputs = random_inputs(&p, 1);
    assert_eq!(run(&p, &inputs).unwrap()["C"].data, naive_matmul(&inputs["A"], &inputs["B"]));
}

#[test]
fn conv1d_matches_direct_convolution() {
    for (len, ci, co, k, s, pad) in [(8, 1, 1, 3, 1, 1), (64, 4, 8, 3, 1, 1), (10, 2, 3, 3, 2, 0)] {
        let p = workloads::conv1d(len, ci, co, k, s, pad);
        let inputs = random_inputs(&p, 7);
        let out = run(&p, &inputs).unwrap();
        assert_eq!(out["Y"].data, naive_conv1d(&inputs["X"], &inputs["W"], s as usize, pad), "{len} {ci} {co}");
    }
}

#[test]
fn random_inputs_are_deterministic_and_bounded() {
    let p = workloads::dense_relu(128, 128, 128);
    let a = random_inputs(&p, 0);
    assert_eq!(a, random_inputs(&p, 0));
    assert_ne!(a, random_inputs(&p, 1));
    assert_eq!(a["A"].shape, vec![128, 128]);
    assert!(a.values().all(|t| t.data.iter().all(|v| (-8..=8).contains(v))));
    assert!(!a.contains_key("D") && !a.contains_key("Out"));
}

#[test]
fn only_outputs_are_returned() {
    let p = workloads::dense_relu(4, 4, 4);
    let out = run(&p, &random_inputs(&p, 0)).unwrap();
    assert_eq!(out.keys().collect::<Vec<_>>(), vec!["Out"]);
}

#[test]
fn missing_or_misshaped_input_is_an_error() {
    let p = workloads::gmm(4, 4, 4);
    let mut inputs = random_inputs(&p, 0);
    inputs.remove("B");
    assert!(matches!(run(&p, &inputs), Err(InterpError::MissingInput(_))));
    let mut inputs = random_inputs(&p, 0);
    inputs.insert("B".into(), TensorValue::zeros(&[4, 5]));
    assert!(matches!(run(&p, &inputs), Err(InterpError::ShapeMismatch { .. })));
}

#[test]
fn out_of_bounds_reports_index() {
    let mut p = workloads::relu1d(4);
    let schedspace_core::ir::Stmt::Loop(l) = &mut p.root[0] else { panic!() };
    l.extent = 5;
    let err = run(&p, &random_inputs(&p, 0)).unwrap_err();
    match err {
        InterpError::OutOfBounds { index, .. } => assert_eq!(index, vec![4]),
        e => panic!("{e}"),
    }
}

#[test]
fn loop_kinds_do_not_change_results() {
    let mut p = workloads::gmm(6, 6, 6);
    let inputs = random_inputs(&p, 2);
    let before = run(&p, &inputs).unwrap();
    let schedspace_core::ir::Stmt::Loop(l) = &mut p.root[0] else { panic!() };
    l.kind = LoopKind::Parallel;
    assert_eq!(run(&p, &inputs).unwrap(), before);
}

fn gather(n: i64) -> schedspace_core::ir::TensorProgram {
    use schedspace_core::ir::{Expr, Stmt};
    // B[i] = A[A[i] mod n]: a load feeds an index.
    let mut p = workloads::relu1d(n);
    let Stmt::Loop(l) = &mut p.root[0] else { panic!() };
    let Stmt::Compute(c) = &mut l.body[0] else { panic!() };
    let inner = Expr::Load { buffer: "A".into(), indices: vec![Expr::Var(l.var.clone())] };
    c.value = Expr::Load { buffer: "A".into(), indices: vec![Expr::Mod(Box::new(inner), Box::new(Expr::Int(n)))] };
    p
}

#[test]
fn batched_runs_equal_single_runs() {
    let programs =
        [workloads::dense_relu(8, 12, 4), workloads::conv1d(16, 2, 3, 3, 2, 1), workloads::dense_bias_relu(4, 8, 4), gather(8)];
    for p in &programs {
        let ex = Executable::new(p).unwrap();
        for n in [1, 2, 3, 4, 5, 9] {
            let inputs: Vec<Tensors> = (0..n).map(|s| random_inputs(p, 40 + s)).collect();
            let want: Vec<Tensors> = inputs.iter().map(|i| ex.run(i).unwrap()).collect();
            assert_eq!(ex.run_batch(&inputs).unwrap(), want);
        }
    }
    let a = TensorValue { shape: vec![8], data: vec![3, 0, 9, -1, 2, 5, 6, 7] };
    let out = run(&gather(8), &Tensors::from([("A".to_string(), a)])).unwrap();
    assert_eq!(out["B"].data, vec![-1, 3, 0, 7, 9, 5, 6, 7]);
}

#[test]
fn batched_out_of_bounds_is_reported() {
    let mut p = workloads::relu1d(4);
    let schedspace_core::ir::Stmt::Loop(l) = &mut p.root[0] else { panic!() };
    l.extent = 5;
    let inputs: Vec<Tensors> = (0..3).map(|s| random_inputs(&p, s)).collect();
    assert!(matches!(
        Executable::new(&p).unwrap().run_batch(&inputs),
        Err(InterpError::OutOfBounds { .. })
    ));
}
