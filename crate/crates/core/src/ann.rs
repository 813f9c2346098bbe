//! Two-hidden-layer feed-forward network trained full-batch with ADAM on an RMSE + L2 objective.

use std::io::Write as _;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const HIDDEN: [usize; 2] = [20, 10];
pub const DEFAULT_EPOCHS: usize = 10_000;
/// Guard under the square root of the RMSE.
pub const RMSE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation value.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

/// Parameters live in one flat vector: for each layer, the `out x in` weights row-major, then the biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, l2: f64, epochs: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            l2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.l2 >= 0.0 && self.epochs >= 1) {
            return Err(Error::InvalidParameter(format!(
                "network training needs learning rate > 0, L2 >= 0, epochs >= 1; got {}, {}, {}",
                self.learning_rate, self.l2, self.epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNet {
    pub net: FeedForwardNet,
    /// Objective value at the start of each epoch.
    pub loss_trace: Vec<f64>,
}

pub fn net_init(input_dim: usize, seed: u64) -> Result<FeedForwardNet> {
    FeedForwardNet::with_layout(input_dim, &HIDDEN, Activation::Sigmoid, seed)
}

impl FeedForwardNet {
    /// Glorot-uniform weights and zero biases; the output layer is always linear.
    pub fn with_layout(input_dim: usize, hidden: &[usize], hidden_act: Activation, seed: u64) -> Result<Self> {
        if input_dim < 1 || hidden.contains(&0) {
            return Err(Error::InvalidParameter("layer sizes must be positive".into()));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut activations = vec![hidden_act; hidden.len()];
        activations.push(Activation::Linear);
        let mut r = rng::seeded(seed);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| r.random_range(-bound..=bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            sizes,
            activations,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// (weight offset, bias offset) of each layer.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.sizes.len() - 1);
        let mut o = 0;
        for w in self.sizes.windows(2) {
            out.push((o, o + w[0] * w[1]));
            o += w[0] * w[1] + w[1];
        }
        out
    }

    /// Mask marking weight entries (true) versus biases (false).
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.params.len());
        for w in self.sizes.windows(2) {
            m.extend(std::iter::repeat_n(true, w[0] * w[1]));
            m.extend(std::iter::repeat_n(false, w[1]));
        }
        m
    }

    /// Activations of every layer, input included.
    fn activations_for(&self, x: &[f64], offsets: &[(usize, usize)]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for (l, &(wo, bo)) in offsets.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &acts[l];
            let next: Vec<f64> = (0..n_out)
                .map(|o| {
                    let w = &self.params[wo + o * n_in..wo + (o + 1) * n_in];
                    let z = self.params[bo + o] + w.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                    self.activations[l].apply(z)
                })
                .collect();
            acts.push(next);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.activations_for(x, &self.offsets()).last().unwrap()[0])
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_cols(x)?;
        let off = self.offsets();
        Ok(self.forward_batch(x, &off).pop().unwrap())
    }

    fn check_cols(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Layer activations for a whole batch, each flattened row-major (rows x width).
    fn forward_batch(&self, x: &Matrix, off: &[(usize, usize)]) -> Vec<Vec<f64>> {
        let n = x.rows();
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.as_slice().to_vec());
        for (l, &(wo, bo)) in off.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activations[l];
            let prev = &acts[l];
            let mut next = vec![0.0; n * n_out];
            for i in 0..n {
                let a = &prev[i * n_in..(i + 1) * n_in];
                for o in 0..n_out {
                    let w = &self.params[wo + o * n_in..wo + (o + 1) * n_in];
                    let z = self.params[bo + o] + w.iter().zip(a).map(|(p, q)| p * q).sum::<f64>();
                    next[i * n_out + o] = act.apply(z);
                }
            }
            acts.push(next);
        }
        acts
    }

    /// Objective `sqrt(mse + guard) + l2 * |w|^2` and its exact gradient.
    pub fn objective_and_gradient(&self, x: &Matrix, y: &[f64], l2: f64) -> Result<(f64, Vec<f64>)> {
        self.check_cols(x)?;
        if x.rows() != y.len() || y.is_empty() {
            return Err(Error::Dimension {
                expected: x.rows(),
                got: y.len(),
            });
        }
        let off = self.offsets();
        let n_layers = off.len();
        let n = y.len();
        let acts = self.forward_batch(x, &off);
        let out = &acts[n_layers];
        let err: Vec<f64> = out.iter().zip(y).map(|(p, t)| p - t).collect();
        let sse: f64 = err.iter().map(|e| e * e).sum();
        let rmse = (sse / n as f64 + RMSE_GUARD).sqrt();
        let scale = 1.0 / (n as f64 * rmse);

        let mut grad = vec![0.0; self.params.len()];
        // delta at the output pre-activation (linear)
        let mut delta: Vec<f64> = err.iter().map(|e| e * scale).collect();
        for l in (0..n_layers).rev() {
            let (wo, bo) = off[l];
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &acts[l];
            for i in 0..n {
                let a = &input[i * n_in..(i + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[i * n_out + o];
                    let row = &mut grad[wo + o * n_in..wo + (o + 1) * n_in];
                    for (g, v) in row.iter_mut().zip(a) {
                        *g += d * v;
                    }
                    grad[bo + o] += d;
                }
            }
            if l == 0 {
                break;
            }
            let act = self.activations[l - 1];
            let mut prev = vec![0.0; n * n_in];
            for i in 0..n {
                let p = &mut prev[i * n_in..(i + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[i * n_out + o];
                    let w = &self.params[wo + o * n_in..wo + (o + 1) * n_in];
                    for (pk, wk) in p.iter_mut().zip(w) {
                        *pk += d * wk;
                    }
                }
                for (pk, a) in p.iter_mut().zip(&input[i * n_in..(i + 1) * n_in]) {
                    *pk *= act.slope(*a);
                }
            }
            delta = prev;
        }

        let mut penalty = 0.0;
        for (k, is_w) in self.weight_mask().into_iter().enumerate() {
            if is_w {
                penalty += self.params[k] * self.params[k];
                grad[k] += 2.0 * l2 * self.params[k];
            }
        }
        Ok((rmse + l2 * penalty, grad))
    }
}

pub fn net_forward(net: &FeedForwardNet, x: &[f64]) -> Result<f64> {
    net.forward(x)
}

pub fn net_gradient(net: &FeedForwardNet, x: &Matrix, y: &[f64], l2: f64) -> Result<Vec<f64>> {
    Ok(net.objective_and_gradient(x, y, l2)?.1)
}

/// Full-batch ADAM for `cfg.epochs` epochs, no early stopping.
pub fn net_train(mut net: FeedForwardNet, x: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<TrainedNet> {
    cfg.validate()?;
    let p = net.n_params();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut trace = Vec::with_capacity(cfg.epochs);
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = net.objective_and_gradient(x, y, cfg.l2)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        trace.push(loss);
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        let lr = cfg.learning_rate * (1.0 - b2t).sqrt() / (1.0 - b1t);
        for k in 0..p {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            net.params[k] -= lr * m[k] / (v[k].sqrt() + cfg.adam_eps * (1.0 - b2t).sqrt());
        }
    }
    if net.params.iter().any(|w| !w.is_finite()) {
        return Err(Error::Divergence { epoch: cfg.epochs });
    }
    Ok(TrainedNet {
        net,
        loss_trace: trace,
    })
}

/// Initialises with `cfg.seed` and trains.
pub fn fit(x: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<TrainedNet> {
    net_train(net_init(x.cols(), cfg.seed)?, x, y, cfg)
}

pub fn write_loss_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,loss")?;
    for (e, l) in trace.iter().enumerate() {
        writeln!(f, "{e},{l}")?;
    }
    Ok(())
}
