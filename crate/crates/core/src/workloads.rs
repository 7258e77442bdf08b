//! Builders for the built-in workloads. Loop variable names are unique per
//! program and contain no underscore, so fresh names derived from them never
//! collide.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::ir::{Buffer, BufferRole, Compute, Expr, Loop, LoopKind, Stmt, TensorProgram};

fn nest(vars: &[(&str, i64)], leaf: Stmt) -> Stmt {
    vars.iter().rev().fold(leaf, |body, (v, n)| {
        Stmt::Loop(Loop { var: (*v).into(), extent: *n, kind: LoopKind::Serial, body: vec![body] })
    })
}

fn v(name: &str) -> Expr {
    Expr::var(name)
}

fn store(block: &str, buffer: &str, indices: Vec<Expr>, value: Expr) -> Compute {
    Compute { block: block.into(), buffer: buffer.into(), indices, value, init: None, epilogue: None }
}

/// `buffer[indices] += update`, starting from zero.
fn accumulate(block: &str, buffer: &str, indices: Vec<Expr>, update: Expr) -> Compute {
    let acc = Expr::load(buffer, indices.clone());
    Compute {
        block: block.into(),
        buffer: buffer.into(),
        indices,
        value: Expr::add(acc, update),
        init: Some(Expr::Int(0)),
        epilogue: None,
    }
}

/// `B[i] = max(A[i], 0)`.
pub fn relu1d(n: i64) -> TensorProgram {
    let leaf = store("ReLU", "B", vec![v("i")], Expr::max(Expr::load("A", vec![v("i")]), Expr::Int(0)));
    TensorProgram::new(
        vec![Buffer::new("A", vec![n], BufferRole::Input), Buffer::new("B", vec![n], BufferRole::Output)],
        vec![nest(&[("i", n)], Stmt::Compute(leaf))],
    )
}

/// Two-dimensional ReLU, `B[i, j] = max(A[i, j], 0)`.
pub fn relu2d(n: i64, m: i64) -> TensorProgram {
    let ij = vec![v("i"), v("j")];
    let leaf = store("ReLU", "B", ij.clone(), Expr::max(Expr::load("A", ij), Expr::Int(0)));
    TensorProgram::new(
        vec![Buffer::new("A", vec![n, m], BufferRole::Input), Buffer::new("B", vec![n, m], BufferRole::Output)],
        vec![nest(&[("i", n), ("j", m)], Stmt::Compute(leaf))],
    )
}

fn matmul(block: &str, out: &str) -> Compute {
    let update = Expr::mul(Expr::load("A", vec![v("i"), v("k")]), Expr::load("B", vec![v("k"), v("j")]));
    accumulate(block, out, vec![v("i"), v("j")], update)
}

/// `C[i, j] = sum_k A[i, k] * B[k, j]` with C of shape n x m.
pub fn gmm(n: i64, m: i64, k: i64) -> TensorProgram {
    TensorProgram::new(
        vec![
            Buffer::new("A", vec![n, k], BufferRole::Input),
            Buffer::new("B", vec![k, m], BufferRole::Input),
            Buffer::new("C", vec![n, m], BufferRole::Output),
        ],
        vec![nest(&[("i", n), ("j", m), ("k", k)], Stmt::Compute(matmul("Dense", "C")))],
    )
}

/// Matrix multiply into an intermediate, followed by ReLU.
pub fn dense_relu(n: i64, m: i64, k: i64) -> TensorProgram {
    let relu = store(
        "ReLU",
        "Out",
        vec![v("x"), v("y")],
        Expr::max(Expr::load("D", vec![v("x"), v("y")]), Expr::Int(0)),
    );
    TensorProgram::new(
        vec![
            Buffer::new("A", vec![n, k], BufferRole::Input),
            Buffer::new("B", vec![k, m], BufferRole::Input),
            Buffer::new("D", vec![n, m], BufferRole::Intermediate),
            Buffer::new("Out", vec![n, m], BufferRole::Output),
        ],
        vec![
            nest(&[("i", n), ("j", m), ("k", k)], Stmt::Compute(matmul("Dense", "D"))),
            nest(&[("x", n), ("y", m)], Stmt::Compute(relu)),
        ],
    )
}

/// Matrix multiply, bias add along columns, then ReLU.
pub fn dense_bias_relu(n: i64, m: i64, k: i64) -> TensorProgram {
    let bias = store(
        "Bias",
        "E",
        vec![v("x"), v("y")],
        Expr::add(Expr::load("D", vec![v("x"), v("y")]), Expr::load("bias", vec![v("y")])),
    );
    let relu = store(
        "ReLU",
        "Out",
        vec![v("u"), v("w")],
        Expr::max(Expr::load("E", vec![v("u"), v("w")]), Expr::Int(0)),
    );
    TensorProgram::new(
        vec![
            Buffer::new("A", vec![n, k], BufferRole::Input),
            Buffer::new("B", vec![k, m], BufferRole::Input),
            Buffer::new("bias", vec![m], BufferRole::Input),
            Buffer::new("D", vec![n, m], BufferRole::Intermediate),
            Buffer::new("E", vec![n, m], BufferRole::Intermediate),
            Buffer::new("Out", vec![n, m], BufferRole::Output),
        ],
        vec![
            nest(&[("i", n), ("j", m), ("k", k)], Stmt::Compute(matmul("Dense", "D"))),
            nest(&[("x", n), ("y", m)], Stmt::Compute(bias)),
            nest(&[("u", n), ("w", m)], Stmt::Compute(relu)),
        ],
    )
}

/// Output length of a 1-d convolution.
pub fn conv1d_out_len(length: i64, kernel: i64, stride: i64, padding: i64) -> i64 {
    (length + 2 * padding - kernel) / stride + 1
}

/// 1-d convolution `Y[o, x] = sum_{c, r} W[o, c, r] * X[c, x*stride + r - padding]`
/// with zero padding. Padding is materialized by a separate `Pad` block.
pub fn conv1d(length: i64, in_ch: i64, out_ch: i64, kernel: i64, stride: i64, padding: i64) -> TensorProgram {
    let out_len = conv1d_out_len(length, kernel, stride, padding);
    let mut buffers = vec![
        Buffer::new("X", vec![in_ch, length], BufferRole::Input),
        Buffer::new("W", vec![out_ch, in_ch, kernel], BufferRole::Input),
    ];
    let mut root = Vec::new();
    let src: String = if padding > 0 {
        let padded = length + 2 * padding;
        let shifted = Expr::sub(v("p"), Expr::Int(padding));
        let inside = Expr::and(
            Expr::lt(v("p"), Expr::Int(padding + length)),
            Expr::lt(Expr::Int(padding - 1), v("p")),
        );
        let pad = store(
            "Pad",
            "Xp",
            vec![v("q"), v("p")],
            Expr::select(inside, Expr::load("X", vec![v("q"), shifted]), Expr::Int(0)),
        );
        buffers.push(Buffer::new("Xp", vec![in_ch, padded], BufferRole::Intermediate));
        root.push(nest(&[("q", in_ch), ("p", padded)], Stmt::Compute(pad)));
        "Xp".into()
    } else {
        "X".into()
    };
    buffers.push(Buffer::new("Y", vec![out_ch, out_len], BufferRole::Output));
    let pos = Expr::add(Expr::mul(v("x"), Expr::Int(stride)), v("r"));
    let update = Expr::mul(Expr::load("W", vec![v("o"), v("c"), v("r")]), Expr::load(src, vec![v("c"), pos]));
    let conv = accumulate("Conv", "Y", vec![v("o"), v("x")], update);
    root.push(nest(&[("o", out_ch), ("x", out_len), ("c", in_ch), ("r", kernel)], Stmt::Compute(conv)));
    TensorProgram::new(buffers, root)
}
