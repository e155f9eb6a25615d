//! First-order reference trainers (SGD, Adam) on the sequential loss.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{rng_for, stream};
use crate::error::{Error, Result};
use crate::net::{mse, Dataset, NetworkSpec, Weights};

/// Training stops once the loss exceeds this.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgd,
    Adam,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Sgd => "sgd",
            Method::Adam => "adam",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Method::Sgd),
            "adam" => Ok(Method::Adam),
            other => Err(Error::Config(format!("unknown method {other:?}, expected sgd or adam"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirstOrderConfig {
    pub method: Method,
    /// `None` picks 0.01 for SGD and 0.001 for Adam.
    pub learning_rate: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seed of the per-epoch shuffling.
    pub seed: u64,
    pub timings: bool,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        Self {
            method: Method::Adam,
            learning_rate: None,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-7,
            batch_size: 10,
            epochs: 1000,
            seed: 0,
            timings: true,
        }
    }
}

impl FirstOrderConfig {
    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.method {
            Method::Sgd => 0.01,
            Method::Adam => 0.001,
        })
    }

    pub fn validate(&self, samples: usize) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if self.batch_size == 0 || self.batch_size > samples {
            return Err(Error::Config(format!(
                "batch size must lie in 1..={samples}, got {}",
                self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps_adam > 0.0) {
            return Err(Error::Config("Adam moments must lie in [0, 1) and eps_adam must be positive".into()));
        }
        Ok(())
    }
}

/// Loss `1/(2b) sum ||net(a) - y||^2 + mu_w/2 sum ||W_j||_F^2` over the `b`
/// columns of `inputs` and its exact gradient.
pub fn backprop_grad(
    spec: &NetworkSpec,
    weights: &Weights,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    weight_reg: f64,
) -> Result<(f64, Weights)> {
    weights.check_shapes(spec)?;
    let b = inputs.ncols();
    if b == 0 || targets.ncols() != b {
        return Err(Error::Config(format!("batch of {b} inputs and {} targets", targets.ncols())));
    }
    let layers = weights.layers.len();
    let mut acts = Vec::with_capacity(layers + 1);
    let mut derivs = Vec::with_capacity(layers);
    acts.push(inputs.clone());
    for (j, w) in weights.layers.iter().enumerate() {
        let u = w * acts.last().unwrap();
        let act = spec.activation(j + 1);
        let (v, d) = act.eval(u.as_slice());
        if v.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite { layer: j + 1 });
        }
        acts.push(DMatrix::from_vec(u.nrows(), b, v));
        derivs.push(DMatrix::from_vec(u.nrows(), b, d));
    }
    let err = acts.last().unwrap() - targets;
    let loss = 0.5 * err.norm_squared() / b as f64 + 0.5 * weight_reg * weights.frobenius_sq();

    let mut grads = vec![DMatrix::zeros(0, 0); layers];
    let mut delta = (err / b as f64).component_mul(&derivs[layers - 1]);
    for j in (0..layers).rev() {
        grads[j] = &delta * acts[j].transpose() + &weights.layers[j] * weight_reg;
        if j > 0 {
            delta = (weights.layers[j].transpose() * &delta).component_mul(&derivs[j - 1]);
        }
    }
    Ok((loss, Weights { layers: grads }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstOrderStatus {
    Completed,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct FirstOrderOutcome {
    pub weights: Weights,
    pub trace: Vec<EpochRow>,
    pub status: FirstOrderStatus,
}

/// One optimizer update on a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    method: Method,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Optimizer {
    pub fn new(cfg: &FirstOrderConfig, len: usize) -> Self {
        Self {
            method: cfg.method,
            lr: cfg.learning_rate(),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps_adam,
            step: 0,
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        match self.method {
            Method::Sgd => params.iter_mut().zip(grad).for_each(|(p, g)| *p -= self.lr * g),
            Method::Adam => {
                let c1 = 1.0 - self.beta1.powi(self.step);
                let c2 = 1.0 - self.beta2.powi(self.step);
                for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
                    self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
                    self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
                    let mhat = self.first[i] / c1;
                    let vhat = self.second[i] / c2;
                    *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
    }
}

fn flatten(w: &Weights) -> Vec<f64> {
    w.layers.iter().flat_map(|l| l.iter().copied()).collect()
}

fn unflatten(flat: &[f64], like: &mut Weights) {
    let mut off = 0;
    for l in &mut like.layers {
        let n = l.len();
        l.as_mut_slice().copy_from_slice(&flat[off..off + n]);
        off += n;
    }
}

/// Mini-batch training from `init`; the trace holds the full-data MSE after
/// every epoch (`test_mse` is NaN without a test set).
pub fn train_first_order(
    spec: &NetworkSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &FirstOrderConfig,
    init: &Weights,
) -> Result<FirstOrderOutcome> {
    cfg.validate(train.len())?;
    init.check_shapes(spec)?;
    let started = Instant::now();
    let mut weights = init.clone();
    let mut params = flatten(&weights);
    let mut opt = Optimizer::new(cfg, params.len());
    let mut rng = rng_for(cfg.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mu = spec.weight_reg();
    let diverged = |weights, trace| {
        Ok(FirstOrderOutcome {
            weights,
            trace,
            status: FirstOrderStatus::Diverged,
        })
    };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let part = train.select(batch);
            let (loss, grad) = match backprop_grad(spec, &weights, &part.inputs, &part.targets, mu) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return diverged(weights, trace),
                Err(e) => return Err(e),
            };
            if !(loss <= DIVERGENCE_LOSS) {
                return diverged(weights, trace);
            }
            opt.update(&mut params, &flatten(&grad));
            unflatten(&params, &mut weights);
        }
        let train_mse = match mse(spec, &weights, train) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return diverged(weights, trace),
            Err(e) => return Err(e),
        };
        let test_mse = match test {
            Some(t) => mse(spec, &weights, t).unwrap_or(f64::NAN),
            None => f64::NAN,
        };
        trace.push(EpochRow {
            epoch,
            train_mse,
            test_mse,
            wall_ms: if cfg.timings { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
        });
        if !(train_mse <= DIVERGENCE_LOSS) {
            return diverged(weights, trace);
        }
    }
    Ok(FirstOrderOutcome {
        weights,
        trace,
        status: FirstOrderStatus::Completed,
    })
}
