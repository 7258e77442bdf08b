//! Built-in workloads by name, with shape parsing and checking.

use std::fmt;

use schedspace_core::ir::{validate_ir, TensorProgram};
use schedspace_core::workloads;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("unknown workload `{0}` (see `list-workloads`)")]
    Unknown(String),
    #[error("workload `{name}` takes {want} shape parameters ({params}), got {got}")]
    Arity { name: &'static str, params: &'static str, want: usize, got: usize },
    #[error("workload `{0}`: shape parameters must be positive")]
    NonPositive(&'static str),
    #[error("conv1d: (length + 2*padding - kernel) / stride + 1 must be a positive integer")]
    ConvShape,
    #[error("bad shape `{0}`: expected comma-separated integers")]
    Parse(String),
    #[error("workload `{0}` built an invalid program")]
    Invalid(String),
}

/// One registry entry.
pub struct WorkloadInfo {
    pub name: &'static str,
    pub params: &'static str,
    pub default_shape: &'static [i64],
    build: fn(&[i64]) -> TensorProgram,
}

pub const WORKLOADS: &[WorkloadInfo] = &[
    WorkloadInfo { name: "gmm", params: "n,m,k", default_shape: &[64, 64, 64], build: |s| workloads::gmm(s[0], s[1], s[2]) },
    WorkloadInfo { name: "relu1d", params: "n", default_shape: &[1024], build: |s| workloads::relu1d(s[0]) },
    WorkloadInfo { name: "relu2d", params: "n,m", default_shape: &[64, 64], build: |s| workloads::relu2d(s[0], s[1]) },
    WorkloadInfo {
        name: "dense_relu",
        params: "n,m,k",
        default_shape: &[128, 128, 128],
        build: |s| workloads::dense_relu(s[0], s[1], s[2]),
    },
    WorkloadInfo {
        name: "dense_bias_relu",
        params: "n,m,k",
        default_shape: &[64, 64, 64],
        build: |s| workloads::dense_bias_relu(s[0], s[1], s[2]),
    },
    WorkloadInfo {
        name: "conv1d",
        params: "length,in_ch,out_ch,kernel,stride,padding",
        default_shape: &[64, 4, 8, 3, 1, 1],
        build: |s| workloads::conv1d(s[0], s[1], s[2], s[3], s[4], s[5]),
    },
];

pub fn lookup(name: &str) -> Result<&'static WorkloadInfo, WorkloadError> {
    WORKLOADS.iter().find(|w| w.name == name).ok_or_else(|| WorkloadError::Unknown(name.to_string()))
}

pub fn parse_shape(text: &str) -> Result<Vec<i64>, WorkloadError> {
    text.split(',').map(|t| t.trim().parse().map_err(|_| WorkloadError::Parse(text.to_string()))).collect()
}

/// A workload name with a concrete shape.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WorkloadSpec {
    pub name: String,
    pub shape: Vec<i64>,
}

impl fmt::Display for WorkloadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.shape.iter().map(i64::to_string).collect();
        write!(f, "{}({})", self.name, dims.join(","))
    }
}

impl WorkloadSpec {
    /// Uses the registry's default shape when `shape` is `None`.
    pub fn new(name: &str, shape: Option<Vec<i64>>) -> Result<Self, WorkloadError> {
        let info = lookup(name)?;
        let shape = shape.unwrap_or_else(|| info.default_shape.to_vec());
        Ok(WorkloadSpec { name: info.name.to_string(), shape })
    }

    pub fn build(&self) -> Result<TensorProgram, WorkloadError> {
        let info = lookup(&self.name)?;
        let s = &self.shape;
        if s.len() != info.default_shape.len() {
            return Err(WorkloadError::Arity {
                name: info.name,
                params: info.params,
                want: info.default_shape.len(),
                got: s.len(),
            });
        }
        if info.name == "conv1d" {
            let (length, in_ch, out_ch, kernel, stride, padding) = (s[0], s[1], s[2], s[3], s[4], s[5]);
            if [length, in_ch, out_ch, kernel, stride].iter().any(|&x| x <= 0) || padding < 0 {
                return Err(WorkloadError::NonPositive(info.name));
            }
            let span = length + 2 * padding - kernel;
            if span < 0 || span % stride != 0 {
                return Err(WorkloadError::ConvShape);
            }
        } else if s.iter().any(|&x| x <= 0) {
            return Err(WorkloadError::NonPositive(info.name));
        }
        let p = (info.build)(s);
        validate_ir(&p).map_err(|_| WorkloadError::Invalid(self.to_string()))?;
        Ok(p)
    }
}
