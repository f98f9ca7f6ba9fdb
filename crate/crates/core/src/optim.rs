//! Adam, the L1/L2 training losses, and the epoch-driven training loop.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::networks::{NetError, Network};
use crate::tensor::{Graph, Mode, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("parameter {0} has no gradient")]
    MissingGradient(usize),
    #[error("parameter {index}: gradient length {got}, expected {expected}")]
    GradientShape { index: usize, expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("dataset has {inputs} inputs but {targets} targets")]
    Unpaired { inputs: usize, targets: usize },
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments mirroring `params`, with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(params: &[&Tensor], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every parameter. All gradients must be present.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Option<&[f64]>]) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::ParameterCount {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.ok_or(OptimError::MissingGradient(i))?;
            if g.len() != p.numel() || self.m[i].len() != p.numel() {
                return Err(OptimError::GradientShape {
                    index: i,
                    expected: p.numel(),
                    got: g.len(),
                });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.into_iter().enumerate() {
            let g = grads[i].expect("checked above");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, theta) in p.data_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    L1,
    L2,
}

impl Loss {
    pub fn apply(self, g: &mut Graph, pred: Var, target: Var) -> Result<Var, TensorError> {
        match self {
            Loss::L1 => g.mae(pred, target),
            Loss::L2 => g.mse(pred, target),
        }
    }

    pub fn eval(self, pred: &Tensor, target: &Tensor) -> Result<f64, TensorError> {
        match self {
            Loss::L1 => loss_l1(pred, target),
            Loss::L2 => loss_l2(pred, target),
        }
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean squared error.
pub fn loss_l2(pred: &Tensor, target: &Tensor) -> Result<f64, TensorError> {
    check_same("loss_l2", pred, target)?;
    let n = pred.numel().max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Mean absolute error.
pub fn loss_l1(pred: &Tensor, target: &Tensor) -> Result<f64, TensorError> {
    check_same("loss_l1", pred, target)?;
    let n = pred.numel().max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Matching,
    Inverse,
    Misr,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Matching => "matching",
            Stage::Inverse => "inverse",
            Stage::Misr => "misr",
        })
    }
}

/// Which half of the spectral channel labels a network serves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    None,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::None => "none",
        })
    }
}

impl FromStr for Parity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "even" => Ok(Parity::Even),
            "odd" => Ok(Parity::Odd),
            "none" => Ok(Parity::None),
            _ => Err(format!("unknown parity {s:?}")),
        }
    }
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_BATCH_SIZE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub parity: Parity,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    pub learning_rate: f64,
}

impl TrainConfig {
    /// 100 epochs, L2.
    pub fn matching(parity: Parity) -> Self {
        Self {
            stage: Stage::Matching,
            parity,
            epochs: 100,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            loss: Loss::L2,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }

    /// 150 epochs, L1.
    pub fn inverse(parity: Parity) -> Self {
        Self {
            stage: Stage::Inverse,
            epochs: 150,
            loss: Loss::L1,
            ..Self::matching(parity)
        }
    }

    /// L2 for `epochs` (30 or 60 in the reference recipe).
    pub fn misr(epochs: usize) -> Self {
        Self {
            stage: Stage::Misr,
            epochs,
            ..Self::matching(Parity::None)
        }
    }
}

/// Paired samples; a batch concatenates samples along their leading axis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
}

impl Dataset {
    pub fn new(inputs: Vec<Tensor>, targets: Vec<Tensor>) -> Self {
        Self { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor, Tensor), TensorError> {
        let x: Vec<&Tensor> = idx.iter().map(|&i| &self.inputs[i]).collect();
        let y: Vec<&Tensor> = idx.iter().map(|&i| &self.targets[i]).collect();
        Ok((Tensor::concat0(&x)?, Tensor::concat0(&y)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Trains `net` in place with Adam, reshuffling the samples every epoch from
/// a generator seeded by `config.seed`. Returns the per-epoch mean loss
/// (weighted by batch size).
pub fn train<N: Network + ?Sized>(
    net: &mut N,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<EpochLoss>, TrainError> {
    if data.inputs.len() != data.targets.len() {
        return Err(TrainError::Unpaired {
            inputs: data.inputs.len(),
            targets: data.targets.len(),
        });
    }
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&net.parameters(), config.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch_size = config.batch_size.max(1);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(batch_size).enumerate() {
            let (x, y) = data.batch(idx)?;
            let mut g = Graph::new();
            let xv = g.constant(x);
            let f = net.forward(&mut g, xv, Mode::Train)?;
            let t = g.constant(y);
            let loss = config.loss.apply(&mut g, f.output, t)?;
            let value = g.value(loss).item().unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b, value });
            }
            g.backward(loss)?;
            let grads: Vec<Option<&[f64]>> = f.params.iter().map(|v| g.grad_data(*v)).collect();
            adam.step(net.parameters_mut(), &grads)?;
            total += value * idx.len() as f64;
        }
        let mean_loss = total / data.len() as f64;
        log::debug!(
            "{} {} epoch {epoch}/{}: loss {mean_loss:.6}",
            config.stage,
            config.parity,
            config.epochs
        );
        log.push(EpochLoss { epoch, mean_loss });
    }
    Ok(log)
}

/// `epoch,mean_loss` CSV.
pub fn write_loss_csv(path: &Path, log: &[EpochLoss]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,mean_loss")?;
    for e in log {
        writeln!(f, "{},{}", e.epoch, e.mean_loss)?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{Architecture, Forward, MatchingNet};
    use rand::Rng;

    #[test]
    fn first_step_closed_form() {
        let mut p = Tensor::scalar(0.0);
        let mut adam = AdamState::new(&[&p], 0.001);
        adam.step(vec![&mut p], &[Some(&[1.0][..])]).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = -lr / (1 + ε)
        let want = -0.001 / (1.0 + 1e-8);
        assert!((p.data()[0] - want).abs() < 1e-18);
        assert!((p.data()[0] + 0.000999999990).abs() < 1e-15);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = Tensor::from_vec(vec![0.3, -2.0]);
        let mut adam = AdamState::new(&[&p], 0.001);
        for _ in 0..50 {
            adam.step(vec![&mut p], &[Some(&[0.0, 0.0][..])]).unwrap();
        }
        assert_eq!(p.data(), &[0.3, -2.0]);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = Tensor::scalar(0.0);
        let mut adam = AdamState::new(&[&p], 0.001);
        assert!(matches!(
            adam.step(vec![&mut p], &[None]),
            Err(OptimError::MissingGradient(0))
        ));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn quadratic_trajectory_matches_scalar_reference() {
        // independent scalar recomputation on f(θ) = θ², ∇ = 2θ
        let reference = |steps: usize, lr: f64| {
            let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
            let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
            let mut out = Vec::new();
            for t in 1..=steps {
                let g = 2.0 * th;
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                let mh = m / (1.0 - b1.powi(t as i32));
                let vh = v / (1.0 - b2.powi(t as i32));
                th -= lr * mh / (vh.sqrt() + eps);
                out.push(th);
            }
            out
        };
        for lr in [0.001, 0.1] {
            let want = reference(10, lr);
            let mut p = Tensor::scalar(1.0);
            let mut adam = AdamState::new(&[&p], lr);
            for w in want {
                let mut g = Graph::new();
                let th = g.param(p.clone());
                let sq = g.mul(th, th).unwrap();
                g.backward(sq).unwrap();
                adam.step(vec![&mut p], &[g.grad_data(th)]).unwrap();
                assert!((p.data()[0] - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_values() {
        let z = Tensor::zeros(&[2]);
        assert_eq!(loss_l2(&Tensor::from_vec(vec![1.0, 2.0]), &z).unwrap(), 2.5);
        assert_eq!(loss_l1(&Tensor::from_vec(vec![1.0, -2.0]), &z).unwrap(), 1.5);
        assert!(loss_l1(&z, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn stage_defaults() {
        let m = TrainConfig::matching(Parity::Even);
        assert_eq!((m.epochs, m.loss, m.learning_rate), (100, Loss::L2, 0.001));
        let i = TrainConfig::inverse(Parity::Odd);
        assert_eq!((i.epochs, i.loss, i.learning_rate), (150, Loss::L1, 0.001));
        for e in [30, 60] {
            let s = TrainConfig::misr(e);
            assert_eq!((s.epochs, s.loss, s.parity), (e, Loss::L2, Parity::None));
        }
    }

    /// Single affine layer, no activation.
    struct LinearToy {
        w: Tensor,
        b: Tensor,
    }

    impl Network for LinearToy {
        fn architecture(&self) -> Architecture {
            Architecture::Matching {
                d_in: 1,
                d_hidden: 0,
                d_out: 1,
            }
        }
        fn parameters(&self) -> Vec<&Tensor> {
            vec![&self.w, &self.b]
        }
        fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.w, &mut self.b]
        }
        fn forward(&mut self, g: &mut Graph, input: Var, _: Mode) -> Result<Forward, NetError> {
            let w = g.param(self.w.clone());
            let b = g.param(self.b.clone());
            let output = g.linear(input, w, b)?;
            Ok(Forward {
                output,
                params: vec![w, b],
            })
        }
        fn state(&self) -> Vec<(String, Tensor)> {
            vec![]
        }
    }

    fn doubling_data() -> Dataset {
        let xs: Vec<f64> = (0..32).map(|i| i as f64 / 16.0 - 1.0).collect();
        let inputs = xs
            .chunks(4)
            .map(|c| Tensor::new(vec![4, 1], c.to_vec()).unwrap())
            .collect();
        let targets = xs
            .chunks(4)
            .map(|c| Tensor::new(vec![4, 1], c.iter().map(|v| 2.0 * v).collect()).unwrap())
            .collect();
        Dataset::new(inputs, targets)
    }

    #[test]
    fn learns_linear_map() {
        let mut net = LinearToy {
            w: Tensor::new(vec![1, 1], vec![0.1]).unwrap(),
            b: Tensor::zeros(&[1]),
        };
        let mut cfg = TrainConfig::matching(Parity::None);
        cfg.epochs = 200;
        cfg.learning_rate = 0.05;
        let log = train(&mut net, &doubling_data(), &cfg).unwrap();
        assert_eq!(log.len(), 200);
        assert!(log.last().unwrap().mean_loss < 1e-3, "{:?}", log.last());
    }

    #[test]
    fn deterministic_and_zero_epochs() {
        let data = doubling_data();
        let run = |epochs| {
            let mut net = MatchingNet::new(1, 8, 1, 3);
            let mut cfg = TrainConfig::matching(Parity::None);
            cfg.epochs = epochs;
            cfg.seed = 9;
            let log = train(&mut net, &data, &cfg).unwrap();
            (net, log)
        };
        let (a, la) = run(5);
        let (b, lb) = run(5);
        assert_eq!(la, lb);
        assert_eq!(a, b);
        let (c, lc) = run(0);
        assert!(lc.is_empty());
        assert_eq!(c, MatchingNet::new(1, 8, 1, 3));
    }

    #[test]
    fn empty_and_nan_are_errors() {
        let mut net = MatchingNet::new(1, 2, 1, 0);
        let cfg = TrainConfig::matching(Parity::None);
        assert!(matches!(
            train(&mut net, &Dataset::default(), &cfg),
            Err(TrainError::EmptyDataset)
        ));
        let bad = Dataset::new(
            vec![Tensor::new(vec![1, 1], vec![1.0]).unwrap()],
            vec![Tensor::new(vec![1, 1], vec![f64::NAN]).unwrap()],
        );
        assert!(matches!(
            train(&mut net, &bad, &cfg),
            Err(TrainError::NonFinite { epoch: 1, .. })
        ));
    }

    #[test]
    fn matching_task_loss_decreases_across_seeds() {
        let mut improved = 0;
        let runs = 20;
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let teacher: Vec<f64> = (0..6 * 4).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let mut inputs = Vec::new();
            let mut targets = Vec::new();
            for _ in 0..8 {
                let x: Vec<f64> = (0..16 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut y = vec![0.0; 16 * 4];
                for r in 0..16 {
                    for o in 0..4 {
                        let s: f64 = (0..6).map(|i| x[r * 6 + i] * teacher[i * 4 + o]).sum();
                        y[r * 4 + o] = s.tanh();
                    }
                }
                inputs.push(Tensor::new(vec![16, 6], x).unwrap());
                targets.push(Tensor::new(vec![16, 4], y).unwrap());
            }
            let mut net = MatchingNet::new(6, 16, 4, seed);
            let mut cfg = TrainConfig::matching(Parity::Even);
            cfg.seed = seed;
            let log = train(&mut net, &Dataset::new(inputs, targets), &cfg).unwrap();
            if log[99].mean_loss < log[0].mean_loss {
                improved += 1;
            }
        }
        assert!(improved * 100 >= 95 * runs, "{improved}/{runs}");
    }

    #[test]
    fn csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        write_loss_csv(
            &p,
            &[
                EpochLoss {
                    epoch: 1,
                    mean_loss: 0.5,
                },
                EpochLoss {
                    epoch: 2,
                    mean_loss: 0.25,
                },
            ],
        )
        .unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "epoch,mean_loss\n1,0.5\n2,0.25\n");
    }
}
