//! The three trainable networks: per-pixel coefficient matching, scattering
//! inversion, and per-pixel spectral refinement.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scattering::{Path, ScatterError, ScatteringCoeffs};
use crate::stack::BandStack;
use crate::tensor::{BatchNormStats, Graph, Mode, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, NetError>;

/// Hyperparameters that fully determine a network's parameter shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Matching {
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
    },
    Inverse {
        c_in: usize,
        widths: [usize; 2],
        c_out: usize,
        kernel: usize,
    },
    Misr {
        bands: usize,
        d_hidden: usize,
    },
}

/// Output of a forward pass recorded on a graph.
pub struct Forward {
    pub output: Var,
    /// Parameter leaves in declaration order.
    pub params: Vec<Var>,
}

/// A trainable network whose forward pass is recorded on a [`Graph`].
pub trait Network {
    fn architecture(&self) -> Architecture;
    /// Trainable tensors in declaration order.
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;
    /// Runs the network on `input`. Train mode updates batch-norm running
    /// statistics.
    fn forward(&mut self, g: &mut Graph, input: Var, mode: Mode) -> Result<Forward>;
    /// Every persistent tensor (parameters, then running statistics) by name.
    fn state(&self) -> Vec<(String, Tensor)>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.numel()).sum()
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

fn leaf(g: &mut Graph, t: &Tensor, trainable: bool) -> Var {
    if trainable {
        g.param(t.clone())
    } else {
        g.constant(t.clone())
    }
}

fn take(state: &mut Vec<(String, Tensor)>, name: &str, shape: &[usize]) -> Result<Tensor> {
    let pos = state
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| NetError::Checkpoint(format!("missing tensor {name}")))?;
    let (_, t) = state.remove(pos);
    if t.shape() != shape {
        return Err(NetError::Checkpoint(format!(
            "tensor {name} has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(t)
}

/// Two affine layers, `tanh(relu(x·W₁ + b₁)·W₂ + b₂)`, applied row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingNet {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl MatchingNet {
    /// Weights uniform in `±1/√fan_in`, biases zero; deterministic in `seed`.
    pub fn new(d_in: usize, d_hidden: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w1: uniform(&mut rng, &[d_in, d_hidden], d_in),
            b1: Tensor::zeros(&[d_hidden]),
            w2: uniform(&mut rng, &[d_hidden, d_out], d_hidden),
            b2: Tensor::zeros(&[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn d_hidden(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        self.w2.shape()[1]
    }

    fn run(&self, g: &mut Graph, x: Var, trainable: bool) -> Result<Forward> {
        let cols = g.shape(x).get(1).copied().unwrap_or(0);
        if g.shape(x).len() != 2 || cols != self.d_in() {
            return Err(NetError::Dimension {
                what: "matching input width",
                expected: self.d_in(),
                got: cols,
            });
        }
        let params: Vec<Var> = [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .map(|t| leaf(g, t, trainable))
            .collect();
        let h = g.linear(x, params[0], params[1])?;
        let h = g.relu(h);
        let y = g.linear(h, params[2], params[3])?;
        let output = g.tanh(y);
        Ok(Forward { output, params })
    }

    /// Eval-mode forward on a `rows × d_in` matrix.
    pub fn predict(&self, rows: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(rows.clone());
        let f = self.run(&mut g, x, false)?;
        Ok(g.value(f.output).clone())
    }

    pub fn from_state(arch: &Architecture, mut state: Vec<(String, Tensor)>) -> Result<Self> {
        let Architecture::Matching { d_in, d_hidden, d_out } = *arch else {
            return Err(NetError::Checkpoint(format!("not a matching network: {arch:?}")));
        };
        Ok(Self {
            w1: take(&mut state, "linear1.weight", &[d_in, d_hidden])?,
            b1: take(&mut state, "linear1.bias", &[d_hidden])?,
            w2: take(&mut state, "linear2.weight", &[d_hidden, d_out])?,
            b2: take(&mut state, "linear2.bias", &[d_out])?,
        })
    }
}

impl Network for MatchingNet {
    fn architecture(&self) -> Architecture {
        Architecture::Matching {
            d_in: self.d_in(),
            d_hidden: self.d_hidden(),
            d_out: self.d_out(),
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn forward(&mut self, g: &mut Graph, input: Var, _mode: Mode) -> Result<Forward> {
        self.run(g, input, true)
    }

    fn state(&self) -> Vec<(String, Tensor)> {
        vec![
            ("linear1.weight".into(), self.w1.clone()),
            ("linear1.bias".into(), self.b1.clone()),
            ("linear2.weight".into(), self.w2.clone()),
            ("linear2.bias".into(), self.b2.clone()),
        ]
    }
}

/// Per-pixel spectral refinement network; same layout as [`MatchingNet`]
/// with equal input and output widths.
#[derive(Clone, Debug, PartialEq)]
pub struct MisrNet {
    inner: MatchingNet,
}

impl MisrNet {
    pub fn new(bands: usize, d_hidden: usize, seed: u64) -> Self {
        Self {
            inner: MatchingNet::new(bands, d_hidden, bands, seed),
        }
    }

    pub fn bands(&self) -> usize {
        self.inner.d_in()
    }

    pub fn predict(&self, spectra: &Tensor) -> Result<Tensor> {
        self.inner.predict(spectra)
    }

    pub fn from_state(arch: &Architecture, state: Vec<(String, Tensor)>) -> Result<Self> {
        let Architecture::Misr { bands, d_hidden } = *arch else {
            return Err(NetError::Checkpoint(format!("not a MISR network: {arch:?}")));
        };
        let inner = MatchingNet::from_state(
            &Architecture::Matching {
                d_in: bands,
                d_hidden,
                d_out: bands,
            },
            state,
        )?;
        Ok(Self { inner })
    }
}

impl Network for MisrNet {
    fn architecture(&self) -> Architecture {
        Architecture::Misr {
            bands: self.inner.d_in(),
            d_hidden: self.inner.d_hidden(),
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        self.inner.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.inner.parameters_mut()
    }

    fn forward(&mut self, g: &mut Graph, input: Var, mode: Mode) -> Result<Forward> {
        self.inner.forward(g, input, mode)
    }

    fn state(&self) -> Vec<(String, Tensor)> {
        self.inner.state()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ConvBn {
    weight: Tensor,
    bias: Tensor,
    gamma: Tensor,
    beta: Tensor,
}

impl ConvBn {
    fn new(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize, k: usize) -> Self {
        Self {
            weight: uniform(rng, &[c_out, c_in, k, k], c_in * k * k),
            bias: Tensor::zeros(&[c_out]),
            gamma: Tensor::full(&[c_out], 1.0),
            beta: Tensor::zeros(&[c_out]),
        }
    }
}

const INVERSE_LAYERS: [&str; 3] = ["block1", "block2", "head"];

/// Two (upsample ×2, conv, batch norm, ReLU) blocks followed by a
/// (conv, batch norm, tanh) head.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseNet {
    layers: [ConvBn; 3],
    stats: [BatchNormStats; 3],
    /// Reduced-resolution input size seen during training, if any.
    trained_input: Option<(usize, usize)>,
}

impl InverseNet {
    pub fn new(c_in: usize, widths: [usize; 2], c_out: usize, kernel: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = [
            ConvBn::new(&mut rng, c_in, widths[0], kernel),
            ConvBn::new(&mut rng, widths[0], widths[1], kernel),
            ConvBn::new(&mut rng, widths[1], c_out, kernel),
        ];
        Self {
            layers,
            stats: [
                BatchNormStats::identity(widths[0]),
                BatchNormStats::identity(widths[1]),
                BatchNormStats::identity(c_out),
            ],
            trained_input: None,
        }
    }

    pub fn c_in(&self) -> usize {
        self.layers[0].weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.layers[2].weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.layers[0].weight.shape()[2]
    }

    pub fn running_stats(&self) -> &[BatchNormStats; 3] {
        &self.stats
    }

    pub fn running_stats_mut(&mut self) -> &mut [BatchNormStats; 3] {
        &mut self.stats
    }

    pub fn trained_input(&self) -> Option<(usize, usize)> {
        self.trained_input
    }

    fn run(
        layers: &[ConvBn; 3],
        stats: &mut [BatchNormStats; 3],
        g: &mut Graph,
        input: Var,
        mode: Mode,
        trainable: bool,
    ) -> Result<Forward> {
        let shape = g.shape(input).to_vec();
        let c_in = layers[0].weight.shape()[1];
        if shape.len() != 4 || shape[1] != c_in {
            return Err(NetError::Dimension {
                what: "inverse input channels",
                expected: c_in,
                got: shape.get(1).copied().unwrap_or(0),
            });
        }
        let mut params = Vec::with_capacity(12);
        let mut x = input;
        for (i, (layer, st)) in layers.iter().zip(stats.iter_mut()).enumerate() {
            let w = leaf(g, &layer.weight, trainable);
            let b = leaf(g, &layer.bias, trainable);
            let gamma = leaf(g, &layer.gamma, trainable);
            let beta = leaf(g, &layer.beta, trainable);
            params.extend([w, b, gamma, beta]);
            x = if i < 2 {
                g.upsample2_conv2d_same(x, w, b)?
            } else {
                g.conv2d_same(x, w, b)?
            };
            x = g.batchnorm2d(x, gamma, beta, st, mode)?;
            x = if i < 2 { g.relu(x) } else { g.tanh(x) };
        }
        Ok(Forward { output: x, params })
    }

    /// Eval-mode forward on an `N × c_in × h × w` batch.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        if let (Some((h, w)), [_, _, ih, iw]) = (self.trained_input, input.shape()) {
            if (h, w) != (*ih, *iw) {
                log::warn!("inverse network trained on {h}x{w} inputs, applied to {ih}x{iw}");
            }
        }
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let mut stats = self.stats.clone();
        let f = Self::run(&self.layers, &mut stats, &mut g, x, Mode::Eval, false)?;
        Ok(g.value(f.output).clone())
    }

    pub fn from_state(arch: &Architecture, mut state: Vec<(String, Tensor)>) -> Result<Self> {
        let Architecture::Inverse {
            c_in,
            widths,
            c_out,
            kernel,
        } = *arch
        else {
            return Err(NetError::Checkpoint(format!("not an inverse network: {arch:?}")));
        };
        let dims = [(c_in, widths[0]), (widths[0], widths[1]), (widths[1], c_out)];
        let mut layers = Vec::with_capacity(3);
        let mut stats = Vec::with_capacity(3);
        for (name, (ci, co)) in INVERSE_LAYERS.iter().zip(dims) {
            layers.push(ConvBn {
                weight: take(&mut state, &format!("{name}.conv.weight"), &[co, ci, kernel, kernel])?,
                bias: take(&mut state, &format!("{name}.conv.bias"), &[co])?,
                gamma: take(&mut state, &format!("{name}.bn.weight"), &[co])?,
                beta: take(&mut state, &format!("{name}.bn.bias"), &[co])?,
            });
            let mut st = BatchNormStats::identity(co);
            st.mean = take(&mut state, &format!("{name}.bn.running_mean"), &[co])?.into_data();
            st.var = take(&mut state, &format!("{name}.bn.running_var"), &[co])?.into_data();
            stats.push(st);
        }
        let trained_input = match state.iter().position(|(n, _)| n == "trained_input") {
            Some(i) => {
                let t = state.remove(i).1;
                match t.data() {
                    [h, w] => Some((*h as usize, *w as usize)),
                    _ => None,
                }
            }
            None => None,
        };
        Ok(Self {
            layers: layers.try_into().expect("three layers"),
            stats: stats.try_into().expect("three layers"),
            trained_input,
        })
    }
}

impl Network for InverseNet {
    fn architecture(&self) -> Architecture {
        Architecture::Inverse {
            c_in: self.c_in(),
            widths: [self.layers[0].weight.shape()[0], self.layers[1].weight.shape()[0]],
            c_out: self.c_out(),
            kernel: self.kernel(),
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias, &l.gamma, &l.beta])
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias, &mut l.gamma, &mut l.beta])
            .collect()
    }

    fn forward(&mut self, g: &mut Graph, input: Var, mode: Mode) -> Result<Forward> {
        if mode == Mode::Train {
            if let [_, _, h, w] = *g.shape(input) {
                self.trained_input = Some((h, w));
            }
        }
        Self::run(&self.layers, &mut self.stats, g, input, mode, true)
    }

    fn state(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (name, l) in INVERSE_LAYERS.iter().zip(&self.layers) {
            out.push((format!("{name}.conv.weight"), l.weight.clone()));
            out.push((format!("{name}.conv.bias"), l.bias.clone()));
            out.push((format!("{name}.bn.weight"), l.gamma.clone()));
            out.push((format!("{name}.bn.bias"), l.beta.clone()));
        }
        for (name, s) in INVERSE_LAYERS.iter().zip(&self.stats) {
            out.push((format!("{name}.bn.running_mean"), Tensor::from_vec(s.mean.clone())));
            out.push((format!("{name}.bn.running_var"), Tensor::from_vec(s.var.clone())));
        }
        if let Some((h, w)) = self.trained_input {
            out.push(("trained_input".into(), Tensor::from_vec(vec![h as f64, w as f64])));
        }
        out
    }
}

/// Applies a matching network independently at every reduced-resolution
/// pixel: each pixel's `d_in` coefficients map to `d_out` coefficients,
/// reassembled as maps over the same path list.
pub fn matching_forward(net: &MatchingNet, coeffs: &ScatteringCoeffs) -> Result<ScatteringCoeffs> {
    if coeffs.map_count() != net.d_in() {
        return Err(NetError::Dimension {
            what: "matching input coefficient count",
            expected: net.d_in(),
            got: coeffs.map_count(),
        });
    }
    let paths: Vec<Path> = coeffs.paths().to_vec();
    if !net.d_out().is_multiple_of(paths.len()) {
        return Err(NetError::Dimension {
            what: "matching output width (multiple of path count)",
            expected: paths.len(),
            got: net.d_out(),
        });
    }
    let rows = coeffs_to_rows(coeffs);
    let out = net.predict(&rows)?;
    rows_to_coeffs(&out, paths, coeffs.height(), coeffs.width())
}

/// `pixels × maps` matrix of a coefficient stack.
pub fn coeffs_to_rows(coeffs: &ScatteringCoeffs) -> Tensor {
    let maps = coeffs.map_count();
    let n = coeffs.height() * coeffs.width();
    let t = Tensor::new(vec![maps, n], coeffs.maps().to_vec()).expect("map layout");
    t.transpose2().expect("rank 2")
}

/// Inverse of [`coeffs_to_rows`].
pub fn rows_to_coeffs(rows: &Tensor, paths: Vec<Path>, height: usize, width: usize) -> Result<ScatteringCoeffs> {
    let maps = rows.shape().get(1).copied().unwrap_or(0);
    if rows.rank() != 2 || rows.shape()[0] != height * width || maps % paths.len() != 0 {
        return Err(NetError::Dimension {
            what: "coefficient rows",
            expected: height * width,
            got: rows.shape()[0],
        });
    }
    let channels = maps / paths.len();
    let t = rows.transpose2()?;
    Ok(ScatteringCoeffs::new(paths, channels, height, width, t.into_data())?)
}

/// Eval-mode inversion of one coefficient stack to a band stack at `2^2`
/// times the coefficient resolution.
pub fn inverse_forward(net: &InverseNet, coeffs: &ScatteringCoeffs) -> Result<BandStack> {
    if coeffs.map_count() != net.c_in() {
        return Err(NetError::Dimension {
            what: "inverse input channels",
            expected: net.c_in(),
            got: coeffs.map_count(),
        });
    }
    let (h, w) = (coeffs.height(), coeffs.width());
    let x = Tensor::new(vec![1, coeffs.map_count(), h, w], coeffs.maps().to_vec())?;
    let y = net.predict(&x)?;
    let (oh, ow) = (y.shape()[2], y.shape()[3]);
    BandStack::new(net.c_out(), oh, ow, y.into_data()).map_err(|e| NetError::Dimension {
        what: "inverse output",
        expected: e.expected,
        got: e.got,
    })
}

/// Row-wise spectral refinement of an `N × bands` matrix. `N = 0` is allowed.
pub fn misr_forward(net: &MisrNet, spectra: &Tensor) -> Result<Tensor> {
    let cols = spectra.shape().get(1).copied().unwrap_or(0);
    if spectra.rank() != 2 || cols != net.bands() {
        return Err(NetError::Dimension {
            what: "MISR spectrum length",
            expected: net.bands(),
            got: cols,
        });
    }
    if spectra.shape()[0] == 0 {
        return Ok(Tensor::zeros(&[0, net.bands()]));
    }
    net.predict(spectra)
}
