//! Learned latency proxy: program features and a ridge regression on
//! log-latency, refit from scratch on every update.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ir::{LoopKind, Stmt, TensorProgram, MMA4_TILE};
use crate::machine::{classify_accesses, MachineSpec};

/// Number of features.
pub const NUM_FEATURES: usize = 9;

pub type FeatureVector = [f64; NUM_FEATURES];

/// Names of the features, in order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "log_trip_count",
    "log_flops",
    "vectorized_fraction",
    "parallel_fraction",
    "log_hits",
    "log_misses",
    "unrolled_fraction",
    "log_tensor_unit_calls",
    "depth",
];

fn ln1p(x: f64) -> f64 {
    libm::log1p(x)
}

/// Aggregates over innermost statements. Iteration counts ignore loop kinds
/// (they are what a serial execution would run).
pub fn featurize(p: &TensorProgram, spec: &MachineSpec) -> FeatureVector {
    let (mut trips, mut flops, mut vec_trips, mut par_trips, mut unroll_trips) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut hits, mut misses, mut calls, mut depth) = (0.0, 0.0, 0.0, 0usize);
    p.walk(&mut |_, s, loops| {
        if matches!(s, Stmt::Loop(_)) {
            return;
        }
        let n: f64 = loops.iter().map(|l| l.extent as f64).product();
        let has = |k: LoopKind| loops.iter().any(|l| l.kind == k);
        trips += n;
        vec_trips += if has(LoopKind::Vectorized) { n } else { 0.0 };
        par_trips += if has(LoopKind::Parallel) { n } else { 0.0 };
        unroll_trips += if has(LoopKind::Unrolled) { n } else { 0.0 };
        depth = depth.max(loops.len());
        let (h, m) = classify_accesses(p, s, loops, spec);
        hits += n * h as f64;
        misses += n * m as f64;
        match s {
            Stmt::Compute(c) => flops += n * c.value.op_count() as f64,
            Stmt::Intrinsic(_) => {
                calls += n;
                flops += n * 2.0 * (MMA4_TILE * MMA4_TILE * MMA4_TILE) as f64;
            }
            Stmt::Loop(_) => {}
        }
    });
    let frac = |x: f64| if trips > 0.0 { x / trips } else { 0.0 };
    [
        ln1p(trips),
        ln1p(flops),
        frac(vec_trips),
        frac(par_trips),
        ln1p(hits),
        ln1p(misses),
        frac(unroll_trips),
        ln1p(calls),
        depth as f64,
    ]
}

/// Pluggable proxy interface.
pub trait CostModel {
    /// Refits on the full record set (features, measured latency).
    fn fit(&mut self, records: &[(FeatureVector, f64)]);
    /// Predicted latency.
    fn predict(&self, f: &FeatureVector) -> f64;
}

/// Ridge regression on standardized features predicting `ln(latency)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyModel {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub intercept: f64,
    /// True once fitted on at least one record.
    pub fitted: bool,
    /// True when the last fit fell back to the mean predictor.
    pub degenerate: bool,
}

impl Default for ProxyModel {
    fn default() -> Self {
        ProxyModel::new(1e-6)
    }
}

impl ProxyModel {
    pub fn new(lambda: f64) -> Self {
        ProxyModel {
            lambda,
            weights: vec![0.0; NUM_FEATURES],
            mean: vec![0.0; NUM_FEATURES],
            scale: vec![1.0; NUM_FEATURES],
            intercept: 0.0,
            fitted: false,
            degenerate: false,
        }
    }

    /// Unfit model predicting the geometric mean of the given latencies.
    pub fn warm(lambda: f64, latencies: &[f64]) -> Self {
        let mut m = ProxyModel::new(lambda);
        if !latencies.is_empty() {
            m.intercept = latencies.iter().map(|&y| libm::log(y)).sum::<f64>() / latencies.len() as f64;
        }
        m
    }

    fn mean_only(&mut self, ys: &[f64]) {
        self.weights = vec![0.0; NUM_FEATURES];
        self.intercept = ys.iter().sum::<f64>() / ys.len() as f64;
    }
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
fn cholesky_solve(mut a: Vec<Vec<f64>>, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = libm::sqrt(d);
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| a[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / a[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

impl CostModel for ProxyModel {
    fn fit(&mut self, records: &[(FeatureVector, f64)]) {
        if records.is_empty() {
            return;
        }
        self.fitted = true;
        self.degenerate = false;
        let m = records.len() as f64;
        let ys: Vec<f64> = records.iter().map(|(_, y)| libm::log(*y)).collect();
        for j in 0..NUM_FEATURES {
            let mu = records.iter().map(|(f, _)| f[j]).sum::<f64>() / m;
            let var = records.iter().map(|(f, _)| (f[j] - mu) * (f[j] - mu)).sum::<f64>() / m;
            self.mean[j] = mu;
            // Constant columns carry no signal; a zero scale switches them off.
            self.scale[j] = if var > 1e-18 { libm::sqrt(var) } else { 0.0 };
        }
        let z = |f: &FeatureVector, j: usize| {
            if self.scale[j] > 0.0 {
                (f[j] - self.mean[j]) / self.scale[j]
            } else {
                0.0
            }
        };
        let ybar = ys.iter().sum::<f64>() / m;
        let mut a = vec![vec![0.0; NUM_FEATURES]; NUM_FEATURES];
        let mut b = vec![0.0; NUM_FEATURES];
        for ((f, _), y) in records.iter().zip(&ys) {
            let row: Vec<f64> = (0..NUM_FEATURES).map(|j| z(f, j)).collect();
            for i in 0..NUM_FEATURES {
                b[i] += row[i] * (y - ybar);
                for j in 0..NUM_FEATURES {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += self.lambda.max(1e-12);
        }
        match cholesky_solve(a, &b) {
            Some(w) => {
                self.weights = w;
                self.intercept = ybar;
            }
            None => {
                self.degenerate = true;
                self.mean_only(&ys);
            }
        }
    }

    fn predict(&self, f: &FeatureVector) -> f64 {
        let mut r = self.intercept;
        for j in 0..NUM_FEATURES {
            if self.scale[j] > 0.0 {
                r += self.weights[j] * (f[j] - self.mean[j]) / self.scale[j];
            }
        }
        libm::exp(r)
    }
}

/// Fractional ranks (ties share their average rank).
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.len() < 2 {
        return 0.0;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / libm::sqrt(va * vb)
    }
}
