//! Synthetic teacher-student regression data and Kaiming initialization.
//!
//! All randomness comes from ChaCha20 seeded with a 64-bit seed; each use
//! draws from its own stream so that, e.g., changing the sample count leaves
//! the teacher weights untouched.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::net::{predict, Dataset, NetworkSpec, Weights};

/// Streams of the seeded generator.
pub mod stream {
    pub const INIT: u64 = 0;
    pub const TEACHER: u64 = 1;
    pub const INPUT_LAW: u64 = 2;
    pub const TRAIN_INPUTS: u64 = 3;
    pub const TEST_INPUTS: u64 = 4;
    pub const TRAIN_NOISE: u64 = 5;
    pub const TEST_NOISE: u64 = 6;
    pub const SHUFFLE: u64 = 7;
}

/// Standard deviation of the entries of the input mean and covariance factor.
pub const INPUT_LAW_STD: f64 = 0.2;

/// Generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    /// Standard deviation of the additive output noise.
    pub noise: f64,
    /// Samples in each of the train and test sets.
    pub samples: usize,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            input_dim: 5,
            hidden: vec![20, 5],
            output_dim: 1,
            hidden_activation: Activation::Softplus,
            noise: 0.0,
            samples: 250,
            seed: 0,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "teacher dimensions must be >= 1 with at least one hidden layer, got {} {:?} {}",
                self.input_dim, self.hidden, self.output_dim
            )));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Config(format!("noise level must be >= 0, got {}", self.noise)));
        }
        if self.samples == 0 {
            return Err(Error::Config("sample count must be >= 1".into()));
        }
        Ok(())
    }

    /// The teacher architecture, identity output.
    pub fn teacher_spec(&self, weight_reg: f64) -> Result<NetworkSpec> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        NetworkSpec::with_output_activation(dims, self.hidden_activation, Activation::Identity, self.samples, weight_reg)
    }
}

#[derive(Debug, Clone)]
pub struct TeacherStudent {
    pub train: Dataset,
    pub test: Dataset,
    pub teacher: Weights,
    pub teacher_spec: NetworkSpec,
    /// Input mean `mu`.
    pub mean: DVector<f64>,
    /// Covariance factor `Sigma_0`; inputs have covariance `Sigma_0^T Sigma_0`.
    pub cov_factor: DMatrix<f64>,
}

fn normal_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    // filled row by row so the draw order matches the printed layout
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let g: f64 = StandardNormal.sample(rng);
            m[(r, c)] = std * g;
        }
    }
    m
}

/// Entries `N(0, 2 / fan_in)`.
pub fn kaiming_init(spec: &NetworkSpec, seed: u64) -> Weights {
    kaiming_from_stream(spec, seed, stream::INIT)
}

fn kaiming_from_stream(spec: &NetworkSpec, seed: u64, stream: u64) -> Weights {
    let mut rng = rng_for(seed, stream);
    let layers = spec
        .dims()
        .windows(2)
        .map(|d| normal_matrix(&mut rng, d[1], d[0], (2.0 / d[0] as f64).sqrt()))
        .collect();
    Weights { layers }
}

/// `m` inputs `a = mu + Sigma_0^T g`, one per column.
fn sample_inputs(rng: &mut ChaCha20Rng, mean: &DVector<f64>, factor: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let d = mean.len();
    let ft = factor.transpose();
    let mut a = DMatrix::zeros(d, m);
    for l in 0..m {
        let g = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        a.set_column(l, &(mean + &ft * g));
    }
    a
}

fn noisy_targets(clean: DMatrix<f64>, noise: f64, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let mut b = clean;
    if noise > 0.0 {
        for l in 0..b.ncols() {
            for k in 0..b.nrows() {
                let g: f64 = StandardNormal.sample(rng);
                b[(k, l)] += noise * g;
            }
        }
    }
    b
}

/// Train and test sets of `samples` points each from a randomly drawn
/// teacher network.
pub fn gen_teacher_student(cfg: &TeacherConfig) -> Result<TeacherStudent> {
    cfg.validate()?;
    // the regularization weight is irrelevant for forward passes
    let teacher_spec = cfg.teacher_spec(1.0)?;
    let teacher = kaiming_from_stream(&teacher_spec, cfg.seed, stream::TEACHER);

    let mut law = rng_for(cfg.seed, stream::INPUT_LAW);
    let d = cfg.input_dim;
    let mean = DVector::from_fn(d, |_, _| {
        let g: f64 = StandardNormal.sample(&mut law);
        INPUT_LAW_STD * g
    });
    let cov_factor = normal_matrix(&mut law, d, d, INPUT_LAW_STD);

    let make = |input_stream, noise_stream| -> Result<Dataset> {
        let a = sample_inputs(&mut rng_for(cfg.seed, input_stream), &mean, &cov_factor, cfg.samples);
        let clean = predict(&teacher_spec, &teacher, &a)?;
        let b = noisy_targets(clean, cfg.noise, &mut rng_for(cfg.seed, noise_stream));
        Dataset::new(a, b)
    };
    let train = make(stream::TRAIN_INPUTS, stream::TRAIN_NOISE)?;
    let test = make(stream::TEST_INPUTS, stream::TEST_NOISE)?;
    Ok(TeacherStudent {
        train,
        test,
        teacher,
        teacher_spec,
        mean,
        cov_factor,
    })
}
