use super::kernels::{
    col2im, col2im_window, fold_taps, gemm, im2col, im2col_window, unfold_taps, upsample2, upsample2_adjoint, UpPhase,
};
use super::{BatchNormStats, Mode, Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }

    /// Partial derivatives (d/da, d/db) at (a, b).
    fn partials(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            BinaryOp::Add => (1.0, 1.0),
            BinaryOp::Sub => (1.0, -1.0),
            BinaryOp::Mul => (b, a),
            BinaryOp::Div => (1.0 / b, -a / (b * b)),
        }
    }
}

struct ConvGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
}

struct NormGeom {
    batch: usize,
    channels: usize,
    plane: usize,
}

enum Op {
    Leaf,
    Binary {
        op: BinaryOp,
        a: Var,
        b: Var,
        b_scalar: bool,
    },
    Scalar {
        op: BinaryOp,
        a: Var,
        s: f64,
    },
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
        rows: usize,
        d_in: usize,
        d_out: usize,
    },
    Relu(Var),
    Tanh(Var),
    Reshape(Var),
    Upsample2 {
        x: Var,
        planes: usize,
        h: usize,
        w: usize,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    UpConv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        geom: NormGeom,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Sum(Var),
    Mean(Var),
    Mse {
        pred: Var,
        target: Var,
    },
    Mae {
        pred: Var,
        target: Var,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Tape of operations. Nodes are appended in evaluation order, which is a
/// topological order of the computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn grad_data(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient of the last backward root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0].as_ref().map(|g| {
            Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("gradient buffer matches value shape")
        })
    }

    /// Elementwise `a op b`, where `b` has the same shape as `a` or is rank 0.
    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let b_scalar = bv.rank() == 0;
        if !b_scalar && av.shape() != bv.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "elementwise",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let data: Vec<f64> = if b_scalar {
            let s = bv.data()[0];
            av.data().iter().map(|&x| op.apply(x, s)).collect()
        } else {
            av.data().iter().zip(bv.data()).map(|(&x, &y)| op.apply(x, y)).collect()
        };
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::Binary { op, a, b, b_scalar }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    /// Elementwise `a op s` with a plain constant.
    pub fn scalar(&mut self, op: BinaryOp, a: Var, s: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| op.apply(x, s)).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(value, rg, Op::Scalar { op, a, s })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, false);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::MatMul { a, b, m, k, n }))
    }

    /// Affine map `x·w + b` of a `rows×d_in` matrix; `b` is added to every row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.rank() != 2 || wv.rank() != 2 || xv.shape()[1] != wv.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                left: xv.shape().to_vec(),
                right: wv.shape().to_vec(),
            });
        }
        let (rows, d_in, d_out) = (xv.shape()[0], xv.shape()[1], wv.shape()[1]);
        if bv.shape() != [d_out] {
            return Err(TensorError::ShapeMismatch {
                op: "linear bias",
                left: vec![d_out],
                right: bv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; rows * d_out];
        for row in out.chunks_exact_mut(d_out) {
            row.copy_from_slice(bv.data());
        }
        gemm(rows, d_in, d_out, xv.data(), false, wv.data(), false, &mut out, true);
        let value = Tensor::new(vec![rows, d_out], out)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(
            value,
            rg,
            Op::Linear {
                x,
                w,
                b,
                rows,
                d_in,
                d_out,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, rg, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v.tanh()).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, rg, Op::Tanh(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, rg, Op::Reshape(x)))
    }

    /// Nearest-neighbour ×2 upsampling over the last two axes.
    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let r = xv.rank();
        if r < 2 {
            return Err(TensorError::Rank {
                op: "upsample_nearest2",
                expected: ">=2",
                shape: xv.shape().to_vec(),
            });
        }
        let (h, w) = (xv.shape()[r - 2], xv.shape()[r - 1]);
        let planes = xv.shape()[..r - 2].iter().product();
        let data = upsample2(xv.data(), planes, h, w);
        let mut shape = xv.shape().to_vec();
        shape[r - 2] = 2 * h;
        shape[r - 1] = 2 * w;
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, rg, Op::Upsample2 { x, planes, h, w }))
    }

    /// Stride-1 convolution with zero padding `(k-1)/2`, so spatial size is
    /// preserved. `x` is `C_in×H×W` or `N×C_in×H×W`, `w` is `C_out×C_in×k×k`.
    pub fn conv2d_same(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (geom, batched) = self.conv_geom(x, w, b, "conv2d")?;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let ConvGeom {
            batch,
            c_in,
            c_out,
            h,
            w: wd,
            k,
        } = geom;
        let hw = h * wd;
        let kk = c_in * k * k;
        let mut cols = vec![0.0; batch * kk * hw];
        let mut out = vec![0.0; batch * c_out * hw];
        for n in 0..batch {
            let col = &mut cols[n * kk * hw..(n + 1) * kk * hw];
            im2col(&xv.data()[n * c_in * hw..(n + 1) * c_in * hw], c_in, h, wd, k, col);
            let o = &mut out[n * c_out * hw..(n + 1) * c_out * hw];
            for (co, plane) in o.chunks_exact_mut(hw).enumerate() {
                plane.iter_mut().for_each(|v| *v = bv.data()[co]);
            }
            gemm(c_out, kk, hw, wv.data(), false, col, false, o, true);
        }
        let shape = if batched {
            vec![batch, c_out, h, wd]
        } else {
            vec![c_out, h, wd]
        };
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(value, rg, Op::Conv2d { x, w, b, geom, cols }))
    }

    /// `conv2d_same(upsample_nearest2(x), w, b)` without building the
    /// upsampled input. Each of the four output phases is a convolution of
    /// `x` itself with the taps that hit the same source pixel summed.
    pub fn upsample2_conv2d_same(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (geom, batched) = self.conv_geom(x, w, b, "upsample2_conv2d")?;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let ConvGeom {
            batch,
            c_in,
            c_out,
            h,
            w: wd,
            k,
        } = geom;
        let hw = h * wd;
        let (oh, ow) = (2 * h, 2 * wd);
        let phases = [UpPhase::new(0, k), UpPhase::new(1, k)];
        let mut out = vec![0.0; batch * c_out * oh * ow];
        let mut col = Vec::new();
        let mut tmp = vec![0.0; c_out * hw];
        for (py, ph_y) in phases.iter().enumerate() {
            for (px, ph_x) in phases.iter().enumerate() {
                let weff = fold_taps(wv.data(), c_out, c_in, k, ph_y, ph_x);
                let kk = weff.len() / c_out;
                col.resize(kk * hw, 0.0);
                for n in 0..batch {
                    let xn = &xv.data()[n * c_in * hw..(n + 1) * c_in * hw];
                    im2col_window(xn, c_in, h, wd, ph_y.window, ph_x.window, &mut col);
                    for (co, plane) in tmp.chunks_exact_mut(hw).enumerate() {
                        plane.iter_mut().for_each(|v| *v = bv.data()[co]);
                    }
                    gemm(c_out, kk, hw, &weff, false, &col, false, &mut tmp, true);
                    for co in 0..c_out {
                        let dst = &mut out[(n * c_out + co) * oh * ow..(n * c_out + co + 1) * oh * ow];
                        let src = &tmp[co * hw..(co + 1) * hw];
                        for i in 0..h {
                            let row = &mut dst[(2 * i + py) * ow..(2 * i + py + 1) * ow];
                            for j in 0..wd {
                                row[2 * j + px] = src[i * wd + j];
                            }
                        }
                    }
                }
            }
        }
        let shape = if batched {
            vec![batch, c_out, oh, ow]
        } else {
            vec![c_out, oh, ow]
        };
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(value, rg, Op::UpConv2d { x, w, b, geom }))
    }

    fn conv_geom(&self, x: Var, w: Var, b: Var, op: &'static str) -> Result<(ConvGeom, bool)> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if wv.rank() != 4 {
            return Err(TensorError::Rank {
                op,
                expected: "4 (weights)",
                shape: wv.shape().to_vec(),
            });
        }
        let (c_out, c_in, k, k2) = (wv.shape()[0], wv.shape()[1], wv.shape()[2], wv.shape()[3]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op,
                left: vec![k],
                right: vec![k2],
            });
        }
        if k % 2 == 0 {
            return Err(TensorError::EvenKernel(k));
        }
        let (batch, xc, h, wd, batched) = match *xv.shape() {
            [c, h, w] => (1, c, h, w, false),
            [n, c, h, w] => (n, c, h, w, true),
            _ => {
                return Err(TensorError::Rank {
                    op,
                    expected: "3 or 4 (input)",
                    shape: xv.shape().to_vec(),
                })
            }
        };
        if xc != c_in {
            return Err(TensorError::ChannelMismatch {
                op,
                expected: c_in,
                got: xc,
            });
        }
        if bv.shape() != [c_out] {
            return Err(TensorError::ChannelMismatch {
                op,
                expected: c_out,
                got: bv.numel(),
            });
        }
        Ok((
            ConvGeom {
                batch,
                c_in,
                c_out,
                h,
                w: wd,
                k,
            },
            batched,
        ))
    }

    /// Per-channel batch normalization of an `N×C×H×W` tensor.
    ///
    /// In [`Mode::Train`] the batch statistics normalize the input and the
    /// running statistics are updated in place (unbiased variance); in
    /// [`Mode::Eval`] the running statistics are used unchanged.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BatchNormStats,
        mode: Mode,
    ) -> Result<Var> {
        let xv = self.value(x);
        let [batch, channels, h, w] = *xv.shape() else {
            return Err(TensorError::Rank {
                op: "batchnorm2d",
                expected: "4",
                shape: xv.shape().to_vec(),
            });
        };
        for (name, v) in [("batchnorm2d gamma", gamma), ("batchnorm2d beta", beta)] {
            if self.value(v).shape() != [channels] {
                return Err(TensorError::ChannelMismatch {
                    op: name,
                    expected: channels,
                    got: self.value(v).numel(),
                });
            }
        }
        if stats.channels() != channels {
            return Err(TensorError::ChannelMismatch {
                op: "batchnorm2d running stats",
                expected: channels,
                got: stats.channels(),
            });
        }
        let plane = h * w;
        let count = batch * plane;
        if count == 0 {
            return Err(TensorError::EmptyBatch);
        }
        let xd = xv.data();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut inv_std = vec![0.0; channels];
        let mut mean = vec![0.0; channels];
        match mode {
            Mode::Train => {
                for c in 0..channels {
                    let mut s = 0.0;
                    for n in 0..batch {
                        let off = (n * channels + c) * plane;
                        s += xd[off..off + plane].iter().sum::<f64>();
                    }
                    let mu = s / count as f64;
                    let mut ss = 0.0;
                    for n in 0..batch {
                        let off = (n * channels + c) * plane;
                        ss += xd[off..off + plane].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
                    }
                    let var = ss / count as f64;
                    mean[c] = mu;
                    inv_std[c] = 1.0 / (var + stats.eps).sqrt();
                    let unbiased = if count > 1 { ss / (count - 1) as f64 } else { var };
                    let m = stats.momentum;
                    stats.mean[c] = (1.0 - m) * stats.mean[c] + m * mu;
                    stats.var[c] = (1.0 - m) * stats.var[c] + m * unbiased;
                }
            }
            Mode::Eval => {
                for c in 0..channels {
                    mean[c] = stats.mean[c];
                    inv_std[c] = 1.0 / (stats.var[c] + stats.eps).sqrt();
                }
            }
        }
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for n in 0..batch {
            for c in 0..channels {
                let off = (n * channels + c) * plane;
                for i in off..off + plane {
                    let z = (xd[i] - mean[c]) * inv_std[c];
                    xhat[i] = z;
                    out[i] = gd[c] * z + bd[c];
                }
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            value,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                geom: NormGeom { batch, channels, plane },
                xhat,
                inv_std,
                train: mode == Mode::Train,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), rg, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = xv.data().iter().sum::<f64>() / xv.numel().max(1) as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), rg, Op::Mean(x))
    }

    fn check_pair(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_pair("mse", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.numel().max(1) as f64;
        let s = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(s), rg, Op::Mse { pred, target }))
    }

    /// Mean absolute error over all elements.
    pub fn mae(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_pair("mae", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.numel().max(1) as f64;
        let s = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(s), rg, Op::Mae { pred, target }))
    }

    /// Reverse-mode sweep from a one-element `root`. Gradients of earlier
    /// sweeps are discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rv = self.value(root);
        if rv.numel() != 1 {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.rg(root) {
            return Ok(());
        }
        self.grads[root.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            propagate(nodes, grads, &nodes[i], &g);
            grads[i] = Some(g);
        }
        Ok(())
    }
}

/// Zero-initialized gradient buffer for `v`, or `None` if `v` needs no grad.
fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let n = node.value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    match &node.op {
        Op::Leaf => {}
        Op::Binary { op, a, b, b_scalar } => {
            let ad = nodes[a.0].value.data();
            let bd = nodes[b.0].value.data();
            let bval = |i: usize| if *b_scalar { bd[0] } else { bd[i] };
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    ga[i] += g[i] * op.partials(ad[i], bval(i)).0;
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                if *b_scalar {
                    gb[0] += (0..g.len()).map(|i| g[i] * op.partials(ad[i], bd[0]).1).sum::<f64>();
                } else {
                    for i in 0..g.len() {
                        gb[i] += g[i] * op.partials(ad[i], bd[i]).1;
                    }
                }
            }
        }
        Op::Scalar { op, a, s } => {
            let ad = nodes[a.0].value.data();
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    ga[i] += g[i] * op.partials(ad[i], *s).0;
                }
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            let bd = nodes[b.0].value.data();
            if let Some(ga) = slot(nodes, grads, *a) {
                // dA = dC·Bᵀ
                gemm(m, n, k, g, false, bd, true, ga, true);
            }
            let ad = nodes[a.0].value.data();
            if let Some(gb) = slot(nodes, grads, *b) {
                // dB = Aᵀ·dC
                gemm(k, m, n, ad, true, g, false, gb, true);
            }
        }
        Op::Linear {
            x,
            w,
            b,
            rows,
            d_in,
            d_out,
        } => {
            let (rows, d_in, d_out) = (*rows, *d_in, *d_out);
            let wd = nodes[w.0].value.data();
            if let Some(gx) = slot(nodes, grads, *x) {
                gemm(rows, d_out, d_in, g, false, wd, true, gx, true);
            }
            let xd = nodes[x.0].value.data();
            if let Some(gw) = slot(nodes, grads, *w) {
                gemm(d_in, rows, d_out, xd, true, g, false, gw, true);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for row in g.chunks_exact(d_out) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
            }
        }
        Op::Relu(x) => {
            let xd = nodes[x.0].value.data();
            if let Some(gx) = slot(nodes, grads, *x) {
                for i in 0..g.len() {
                    if xd[i] > 0.0 {
                        gx[i] += g[i];
                    }
                }
            }
        }
        Op::Tanh(x) => {
            let y = node.value.data();
            if let Some(gx) = slot(nodes, grads, *x) {
                for i in 0..g.len() {
                    gx[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }
        }
        Op::Reshape(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for (a, v) in gx.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        Op::Upsample2 { x, planes, h, w } => {
            if let Some(gx) = slot(nodes, grads, *x) {
                upsample2_adjoint(g, *planes, *h, *w, gx);
            }
        }
        Op::Conv2d { x, w, b, geom, cols } => {
            let ConvGeom {
                batch,
                c_in,
                c_out,
                h,
                w: wd,
                k,
            } = *geom;
            let hw = h * wd;
            let kk = c_in * k * k;
            if let Some(gb) = slot(nodes, grads, *b) {
                for (i, plane) in g.chunks_exact(hw).enumerate() {
                    gb[i % c_out] += plane.iter().sum::<f64>();
                }
            }
            if let Some(gw) = slot(nodes, grads, *w) {
                for n in 0..batch {
                    let go = &g[n * c_out * hw..(n + 1) * c_out * hw];
                    let col = &cols[n * kk * hw..(n + 1) * kk * hw];
                    // dW += dOut·colᵀ
                    gemm(c_out, hw, kk, go, false, col, true, gw, true);
                }
            }
            let weights = nodes[w.0].value.data();
            if let Some(gx) = slot(nodes, grads, *x) {
                let mut dcol = vec![0.0; kk * hw];
                for n in 0..batch {
                    let go = &g[n * c_out * hw..(n + 1) * c_out * hw];
                    // dcol = Wᵀ·dOut
                    gemm(kk, c_out, hw, weights, true, go, false, &mut dcol, false);
                    col2im(&dcol, c_in, h, wd, k, &mut gx[n * c_in * hw..(n + 1) * c_in * hw]);
                }
            }
        }
        Op::UpConv2d { x, w, b, geom } => {
            let ConvGeom {
                batch,
                c_in,
                c_out,
                h,
                w: wd,
                k,
            } = *geom;
            let hw = h * wd;
            let (oh, ow) = (2 * h, 2 * wd);
            if let Some(gb) = slot(nodes, grads, *b) {
                for (i, plane) in g.chunks_exact(oh * ow).enumerate() {
                    gb[i % c_out] += plane.iter().sum::<f64>();
                }
            }
            let phases = [UpPhase::new(0, k), UpPhase::new(1, k)];
            let xd = nodes[x.0].value.data();
            let weights = nodes[w.0].value.data();
            let mut gphase = vec![0.0; batch * c_out * hw];
            let mut col = Vec::new();
            for (py, ph_y) in phases.iter().enumerate() {
                for (px, ph_x) in phases.iter().enumerate() {
                    for (plane, src) in gphase.chunks_exact_mut(hw).zip(g.chunks_exact(oh * ow)) {
                        for i in 0..h {
                            let row = &src[(2 * i + py) * ow..(2 * i + py + 1) * ow];
                            for j in 0..wd {
                                plane[i * wd + j] = row[2 * j + px];
                            }
                        }
                    }
                    let kk = c_in * ph_y.window.len * ph_x.window.len;
                    col.resize(kk * hw, 0.0);
                    if let Some(gw) = slot(nodes, grads, *w) {
                        let mut geff = vec![0.0; c_out * kk];
                        for n in 0..batch {
                            let xn = &xd[n * c_in * hw..(n + 1) * c_in * hw];
                            im2col_window(xn, c_in, h, wd, ph_y.window, ph_x.window, &mut col);
                            let go = &gphase[n * c_out * hw..(n + 1) * c_out * hw];
                            gemm(c_out, hw, kk, go, false, &col, true, &mut geff, true);
                        }
                        unfold_taps(&geff, c_out, c_in, k, ph_y, ph_x, gw);
                    }
                    if let Some(gx) = slot(nodes, grads, *x) {
                        let weff = fold_taps(weights, c_out, c_in, k, ph_y, ph_x);
                        for n in 0..batch {
                            let go = &gphase[n * c_out * hw..(n + 1) * c_out * hw];
                            gemm(kk, c_out, hw, &weff, true, go, false, &mut col, false);
                            let gxn = &mut gx[n * c_in * hw..(n + 1) * c_in * hw];
                            col2im_window(&col, c_in, h, wd, ph_y.window, ph_x.window, gxn);
                        }
                    }
                }
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            geom,
            xhat,
            inv_std,
            train,
        } => {
            let NormGeom { batch, channels, plane } = *geom;
            let count = (batch * plane) as f64;
            let gd = nodes[gamma.0].value.data();
            let mut sum_g = vec![0.0; channels];
            let mut sum_gx = vec![0.0; channels];
            for n in 0..batch {
                for c in 0..channels {
                    let off = (n * channels + c) * plane;
                    for i in off..off + plane {
                        sum_g[c] += g[i];
                        sum_gx[c] += g[i] * xhat[i];
                    }
                }
            }
            if let Some(gg) = slot(nodes, grads, *gamma) {
                for c in 0..channels {
                    gg[c] += sum_gx[c];
                }
            }
            if let Some(gbeta) = slot(nodes, grads, *beta) {
                for c in 0..channels {
                    gbeta[c] += sum_g[c];
                }
            }
            if let Some(gx) = slot(nodes, grads, *x) {
                for n in 0..batch {
                    for c in 0..channels {
                        let off = (n * channels + c) * plane;
                        let scale = gd[c] * inv_std[c];
                        for i in off..off + plane {
                            gx[i] += if *train {
                                scale * (g[i] - sum_g[c] / count - xhat[i] * sum_gx[c] / count)
                            } else {
                                scale * g[i]
                            };
                        }
                    }
                }
            }
        }
        Op::Sum(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                gx.iter_mut().for_each(|v| *v += g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                let s = g[0] / gx.len().max(1) as f64;
                gx.iter_mut().for_each(|v| *v += s);
            }
        }
        Op::Mse { pred, target } => {
            let (p, t) = (nodes[pred.0].value.data(), nodes[target.0].value.data());
            let scale = 2.0 * g[0] / p.len().max(1) as f64;
            if let Some(gp) = slot(nodes, grads, *pred) {
                for i in 0..p.len() {
                    gp[i] += scale * (p[i] - t[i]);
                }
            }
            if let Some(gt) = slot(nodes, grads, *target) {
                for i in 0..p.len() {
                    gt[i] -= scale * (p[i] - t[i]);
                }
            }
        }
        Op::Mae { pred, target } => {
            let (p, t) = (nodes[pred.0].value.data(), nodes[target.0].value.data());
            let scale = g[0] / p.len().max(1) as f64;
            let sign = |d: f64| {
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            };
            if let Some(gp) = slot(nodes, grads, *pred) {
                for i in 0..p.len() {
                    gp[i] += scale * sign(p[i] - t[i]);
                }
            }
            if let Some(gt) = slot(nodes, grads, *target) {
                for i in 0..p.len() {
                    gt[i] -= scale * sign(p[i] - t[i]);
                }
            }
        }
    }
}
