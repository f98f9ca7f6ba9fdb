//! Dense `f64` tensors and a tape-based reverse-mode gradient graph.
//!
//! [`Tensor`] is a plain value (shape plus row-major data). Differentiable
//! computation happens on a [`Graph`]: values are registered as leaves, every
//! operation appends a node holding its output and whatever the backward rule
//! needs, and [`Graph::backward`] walks the tape in reverse.

mod graph;
mod kernels;

pub use graph::{BinaryOp, Graph, Var};
pub use kernels::gemm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    #[error("conv2d: kernel size {0} is even, only odd kernels are supported")]
    EvenKernel(usize),
    #[error("{op}: channel mismatch, expected {expected} got {got}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward: root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("batchnorm2d: empty batch")]
    EmptyBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::DataLength { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Rank-0 tensor.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        if self.data.len() == 1 {
            Some(self.data[0])
        } else {
            None
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self, TensorError> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Concatenates tensors along the leading axis; trailing dims must agree.
    pub fn concat0(parts: &[&Tensor]) -> Result<Self, TensorError> {
        let first = match parts.first() {
            Some(t) => t,
            None => return Ok(Self::zeros(&[0])),
        };
        if first.rank() == 0 {
            return Err(TensorError::Rank {
                op: "concat0",
                expected: ">=1",
                shape: first.shape.clone(),
            });
        }
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.numel()).sum());
        for t in parts {
            if t.rank() == 0 || &t.shape[1..] != tail {
                return Err(TensorError::ShapeMismatch {
                    op: "concat0",
                    left: first.shape.clone(),
                    right: t.shape.clone(),
                });
            }
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(tail);
        Ok(Self { shape, data })
    }

    /// Transposes a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Self, TensorError> {
        if self.rank() != 2 {
            return Err(TensorError::Rank {
                op: "transpose2",
                expected: "2",
                shape: self.shape.clone(),
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
        })
    }
}

/// Forward behaviour of layers that differ between training and inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel running statistics of a batch normalization layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormStats {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    /// Zero mean, unit variance.
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}
