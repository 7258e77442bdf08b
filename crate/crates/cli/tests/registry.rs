use schedspace::registry::{lookup, parse_shape, WorkloadError, WorkloadSpec, WORKLOADS};
use schedspace_core::interp::{run, TensorValue, Tensors};
use schedspace_core::ir::structural_equal;
use schedspace_core::workloads;

#[test]
fn defaults_build_and_validate() {
    for w in WORKLOADS {
        let spec = WorkloadSpec::new(w.name, None).unwrap();
        assert_eq!(spec.shape, w.default_shape);
        spec.build().unwrap();
    }
    assert_eq!(lookup("gmm").unwrap().default_shape, &[64, 64, 64]);
    assert_eq!(lookup("dense_relu").unwrap().default_shape, &[128, 128, 128]);
    assert_eq!(lookup("conv1d").unwrap().default_shape, &[64, 4, 8, 3, 1, 1]);
    assert!(structural_equal(
        &WorkloadSpec::new("relu1d", None).unwrap().build().unwrap(),
        &workloads::relu1d(1024)
    ));
}

#[test]
fn shape_errors() {
    assert!(matches!(WorkloadSpec::new("nope", None), Err(WorkloadError::Unknown(_))));
    assert!(matches!(parse_shape("4,x"), Err(WorkloadError::Parse(_))));
    let bad = |name: &str, s: &str| WorkloadSpec::new(name, Some(parse_shape(s).unwrap())).unwrap().build();
    assert!(matches!(bad("gmm", "4,4"), Err(WorkloadError::Arity { .. })));
    assert!(matches!(bad("gmm", "4,0,4"), Err(WorkloadError::NonPositive(_))));
    assert!(matches!(bad("conv1d", "8,1,1,4,3,0"), Err(WorkloadError::ConvShape)));
    assert!(matches!(bad("conv1d", "2,1,1,4,1,0"), Err(WorkloadError::ConvShape)));
    assert!(bad("conv1d", "8,1,1,3,1,1").is_ok());
}

fn tensor(shape: &[i64], data: Vec<i64>) -> TensorValue {
    TensorValue { shape: shape.to_vec(), data }
}

#[test]
fn identity_matmul_returns_b() {
    let p = WorkloadSpec::new("gmm", Some(vec![16, 16, 16])).unwrap().build().unwrap();
    let a: Vec<i64> = (0..256).map(|x| i64::from(x / 16 == x % 16)).collect();
    let b: Vec<i64> = (0..256).map(|x| (x * 7 % 17) - 8).collect();
    let inputs: Tensors = [("A".to_string(), tensor(&[16, 16], a)), ("B".to_string(), tensor(&[16, 16], b.clone()))].into();
    let out = run(&p, &inputs).unwrap();
    assert_eq!(out["C"].data, b);
}

#[test]
fn conv1d_matches_direct_convolution() {
    let (length, kernel, padding) = (8i64, 3i64, 1i64);
    let p = WorkloadSpec::new("conv1d", Some(vec![length, 1, 1, kernel, 1, padding])).unwrap().build().unwrap();
    let x: Vec<i64> = vec![3, -1, 4, 1, -5, 9, 2, -6];
    let w: Vec<i64> = vec![2, -7, 1];
    let inputs: Tensors =
        [("X".to_string(), tensor(&[1, length], x.clone())), ("W".to_string(), tensor(&[1, 1, kernel], w.clone()))].into();
    let out = run(&p, &inputs).unwrap();
    let want: Vec<i64> = (0..length)
        .map(|o| {
            (0..kernel)
                .map(|r| {
                    let at = o + r - padding;
                    if (0..length).contains(&at) {
                        w[r as usize] * x[at as usize]
                    } else {
                        0
                    }
                })
                .sum()
        })
        .collect();
    assert_eq!(out["Y"].data, want);
}
