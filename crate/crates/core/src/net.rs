//! Feedforward network architecture, vectorization conventions and the
//! lifted network problem.
//!
//! Conventions for the condensed variable:
//! - `w_j` stacks the rows of `W_j` (`d_j x d_{j-1}`), so entry `(k, p)` sits
//!   at `k * d_{j-1} + p`;
//! - `x_j` stacks the columns of `X_j` (`d_j x m`), so sample `i`, unit `k`
//!   sits at `i * d_j + k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{check_len, Error, Result};
use crate::gn;
use crate::linalg::{norm_inf, Csr};
use crate::problem::{self, Layout, PrimalPoint, StagewiseProblem};

/// Layer widths `d_0..=d_{N+1}`, per-layer activations, sample count and
/// weight regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    sample_count: usize,
    weight_reg: f64,
}

impl NetworkSpec {
    /// `activations[j-1]` is the activation of layer `j`.
    pub fn new(
        dims: Vec<usize>,
        activations: Vec<Activation>,
        sample_count: usize,
        weight_reg: f64,
    ) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::Config(format!(
                "need at least one hidden layer, got dims {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("layer widths must be >= 1, got {dims:?}")));
        }
        if activations.len() + 1 != dims.len() {
            return Err(Error::Config(format!(
                "{} activations for {} layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        if sample_count == 0 {
            return Err(Error::Config("sample count must be >= 1".into()));
        }
        if !(weight_reg > 0.0) || !weight_reg.is_finite() {
            return Err(Error::Config(format!(
                "weight regularization must be positive, got {weight_reg}"
            )));
        }
        Ok(Self {
            dims,
            activations,
            sample_count,
            weight_reg,
        })
    }

    /// Same activation on every hidden layer, `output` on the last one.
    pub fn with_output_activation(
        dims: Vec<usize>,
        hidden: Activation,
        output: Activation,
        sample_count: usize,
        weight_reg: f64,
    ) -> Result<Self> {
        let layers = dims.len().saturating_sub(1);
        let mut activations = vec![hidden; layers];
        if let Some(last) = activations.last_mut() {
            *last = output;
        }
        Self::new(dims, activations, sample_count, weight_reg)
    }

    pub fn with_sample_count(&self, m: usize) -> Result<Self> {
        Self::new(self.dims.clone(), self.activations.clone(), m, self.weight_reg)
    }

    /// Number of hidden layers `N`.
    pub fn hidden_layers(&self) -> usize {
        self.dims.len() - 2
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, j: usize) -> usize {
        self.dims[j]
    }

    /// Activation of layer `j`, `1 <= j <= N+1`.
    pub fn activation(&self, j: usize) -> Activation {
        self.activations[j - 1]
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn weight_reg(&self) -> f64 {
        self.weight_reg
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layout(&self) -> Layout {
        let m = self.sample_count;
        let state = self.dims.iter().map(|d| m * d).collect();
        let weight = self.dims.windows(2).map(|w| w[0] * w[1]).collect();
        Layout::new(state, weight)
    }
}

/// Weight matrices `W_1..=W_{N+1}`; `layers[j-1]` is `W_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<DMatrix<f64>>,
}

impl Weights {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .dims()
                .windows(2)
                .map(|d| DMatrix::zeros(d[1], d[0]))
                .collect(),
        }
    }

    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        check_len("weight layer count", spec.dims().len() - 1, self.layers.len())?;
        for (j, w) in self.layers.iter().enumerate() {
            check_len("weight rows", spec.dim(j + 1), w.nrows())?;
            check_len("weight columns", spec.dim(j), w.ncols())?;
        }
        Ok(())
    }

    /// Rows of every layer stacked, layer by layer.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.layers {
            for k in 0..w.nrows() {
                out.extend(w.row(k).iter());
            }
        }
        out
    }

    pub fn from_vec(spec: &NetworkSpec, w: &[f64]) -> Result<Self> {
        let total: usize = spec.dims().windows(2).map(|d| d[0] * d[1]).sum();
        check_len("flat weights", total, w.len())?;
        let mut layers = Vec::new();
        let mut off = 0;
        for d in spec.dims().windows(2) {
            let len = d[0] * d[1];
            layers.push(DMatrix::from_row_slice(d[1], d[0], &w[off..off + len]));
            off += len;
        }
        Ok(Self { layers })
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.layers.iter().map(|w| w.norm_squared()).sum()
    }
}

/// Hidden states `X_1..=X_N` together with the fixed input `X_0 = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct States {
    pub input: DMatrix<f64>,
    /// `hidden[j-1]` is `X_j`.
    pub hidden: Vec<DMatrix<f64>>,
}

/// Inputs `A` (`d_0 x m`) and targets `Y` (`d_{N+1} x m`), one sample per
/// column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if inputs.ncols() != targets.ncols() {
            return Err(Error::Dataset(format!(
                "{} input columns but {} target columns",
                inputs.ncols(),
                targets.ncols()
            )));
        }
        if inputs.ncols() == 0 {
            return Err(Error::Dataset("empty dataset".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `vec(Y)`
    pub fn target_vec(&self) -> Vec<f64> {
        self.targets.as_slice().to_vec()
    }

    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        check_len("dataset input rows", spec.input_dim(), self.inputs.nrows())?;
        check_len("dataset target rows", spec.output_dim(), self.targets.nrows())?;
        check_len("dataset sample count", spec.sample_count(), self.len())
    }

    /// Columns `idx` as a new dataset.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_columns(idx),
            targets: self.targets.select_columns(idx),
        }
    }
}

/// `H_j(w_j, x_{j-1})`: `Phi_j(W_j x^{(i)})` for every sample, stacked.
pub fn stage_map(spec: &NetworkSpec, j: usize, w_j: &[f64], x_prev: &[f64]) -> Result<Vec<f64>> {
    let (d, dp) = stage_dims(spec, j)?;
    let m = spec.sample_count();
    check_len("stage weights", d * dp, w_j.len())?;
    check_len("stage input", m * dp, x_prev.len())?;
    let act = spec.activation(j);
    let mut out = Vec::with_capacity(m * d);
    for xi in x_prev.chunks_exact(dp) {
        for row in w_j.chunks_exact(dp) {
            let u: f64 = row.iter().zip(xi).map(|(a, b)| a * b).sum();
            out.push(act.value(u));
        }
    }
    Ok(out)
}

pub(crate) fn stage_dims(spec: &NetworkSpec, j: usize) -> Result<(usize, usize)> {
    if j == 0 || j > spec.hidden_layers() + 1 {
        return Err(Error::Config(format!(
            "stage index {j} outside 1..={}",
            spec.hidden_layers() + 1
        )));
    }
    Ok((spec.dim(j), spec.dim(j - 1)))
}

/// Runs the network forward: `X_j = Phi_j(W_j X_{j-1})`, `X_0 = A`.
pub fn unroll(spec: &NetworkSpec, weights: &Weights, inputs: &DMatrix<f64>) -> Result<States> {
    weights.check_shapes(spec)?;
    check_len("input rows", spec.input_dim(), inputs.nrows())?;
    check_len("input columns", spec.sample_count(), inputs.ncols())?;
    let mut hidden = Vec::with_capacity(spec.hidden_layers());
    for j in 1..=spec.hidden_layers() {
        let prev = if j == 1 { inputs } else { &hidden[j - 2] };
        let next = layer_forward(spec, j, &weights.layers[j - 1], prev)?;
        hidden.push(next);
    }
    Ok(States {
        input: inputs.clone(),
        hidden,
    })
}

fn layer_forward(
    spec: &NetworkSpec,
    j: usize,
    w: &DMatrix<f64>,
    prev: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    // Same arithmetic as `stage_map`, so unrolled states are exactly feasible.
    let wj: Vec<f64> = (0..w.nrows()).flat_map(|k| w.row(k).iter().copied().collect::<Vec<_>>()).collect();
    let spec_m = spec.with_sample_count(prev.ncols())?;
    let out = stage_map(&spec_m, j, &wj, prev.as_slice())?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { layer: j });
    }
    Ok(DMatrix::from_vec(w.nrows(), prev.ncols(), out))
}

/// Network output `Phi_{N+1}(W_{N+1} X_N)` for arbitrary inputs.
pub fn predict(spec: &NetworkSpec, weights: &Weights, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let spec_m = spec.with_sample_count(inputs.ncols())?;
    let states = unroll(&spec_m, weights, inputs)?;
    let last = states.hidden.last().unwrap_or(&states.input);
    let n1 = spec.hidden_layers() + 1;
    layer_forward(&spec_m, n1, &weights.layers[n1 - 1], last)
}

/// Mean squared error over samples and output coordinates.
pub fn mse(spec: &NetworkSpec, weights: &Weights, data: &Dataset) -> Result<f64> {
    let pred = predict(spec, weights, &data.inputs)?;
    let n = (pred.nrows() * pred.ncols()) as f64;
    Ok((pred - &data.targets).norm_squared() / n)
}

impl PrimalPoint {
    /// Condenses weights and hidden states into `z = (w, x)`.
    pub fn pack(spec: &NetworkSpec, weights: &Weights, states: &States) -> Result<Self> {
        weights.check_shapes(spec)?;
        check_len("hidden state count", spec.hidden_layers(), states.hidden.len())?;
        let mut x = Vec::new();
        for (j, xj) in states.hidden.iter().enumerate() {
            check_len("state rows", spec.dim(j + 1), xj.nrows())?;
            check_len("state columns", spec.sample_count(), xj.ncols())?;
            x.extend_from_slice(xj.as_slice());
        }
        PrimalPoint::from_parts(&spec.layout(), weights.to_vec(), x)
    }

    /// Inverse of [`PrimalPoint::pack`]; the input block is not part of `z`
    /// and must be supplied.
    pub fn unpack(&self, spec: &NetworkSpec, inputs: &DMatrix<f64>) -> Result<(Weights, States)> {
        let weights = Weights::from_vec(spec, &self.w)?;
        check_len("state vector", spec.layout().x_len(), self.x.len())?;
        let m = spec.sample_count();
        let hidden = (1..=spec.hidden_layers())
            .map(|j| DMatrix::from_column_slice(spec.dim(j), m, self.x_block(j)))
            .collect();
        Ok((
            weights,
            States {
                input: inputs.clone(),
                hidden,
            },
        ))
    }
}

/// The lifted training problem of a network on a dataset.
#[derive(Debug, Clone)]
pub struct NetworkProblem {
    spec: NetworkSpec,
    layout: Layout,
    input: Vec<f64>,
    target: Vec<f64>,
}

impl NetworkProblem {
    pub fn new(spec: &NetworkSpec, data: &Dataset) -> Result<Self> {
        data.check_against(spec)?;
        Ok(Self {
            spec: spec.clone(),
            layout: spec.layout(),
            input: data.inputs.as_slice().to_vec(),
            target: data.target_vec(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Feasible point obtained by unrolling the network at `weights`.
    pub fn feasible_point(&self, weights: &Weights) -> Result<PrimalPoint> {
        let inputs = DMatrix::from_column_slice(self.spec.input_dim(), self.spec.sample_count(), &self.input);
        let states = unroll(&self.spec, weights, &inputs)?;
        PrimalPoint::pack(&self.spec, weights, &states)
    }
}

impl StagewiseProblem for NetworkProblem {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn input(&self) -> &[f64] {
        &self.input
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn weight_reg(&self) -> f64 {
        self.spec.weight_reg()
    }

    fn output_weight(&self) -> f64 {
        1.0 / self.spec.sample_count() as f64
    }

    fn stage(&self, j: usize, w_j: &[f64], x_prev: &[f64]) -> Result<Vec<f64>> {
        let out = stage_map(&self.spec, j, w_j, x_prev)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: j });
        }
        Ok(out)
    }

    fn stage_jacobians(&self, j: usize, w_j: &[f64], x_prev: &[f64]) -> Result<(Csr, Csr)> {
        gn::linearize_stage(&self.spec, j, w_j, x_prev)
    }
}

/// `F(z)` for the network: block `j` is `x_j - H_j(w_j, x_{j-1})`, `j <= N`.
pub fn residual_f(spec: &NetworkSpec, z: &PrimalPoint, data: &Dataset) -> Result<Vec<f64>> {
    problem::residual(&NetworkProblem::new(spec, data)?, z)
}

/// `f(z) = 1/(2m) ||H_{N+1}(w_{N+1}, x_N) - y||^2 + mu_w/2 ||w||^2`
pub fn cost_f(spec: &NetworkSpec, z: &PrimalPoint, data: &Dataset) -> Result<f64> {
    problem::cost(&NetworkProblem::new(spec, data)?, z)
}

/// Max-norm of `F(z)`.
pub fn feasibility(spec: &NetworkSpec, z: &PrimalPoint, data: &Dataset) -> Result<f64> {
    Ok(norm_inf(&residual_f(spec, z, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::softplus;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_weights(rng: &mut ChaCha8Rng, spec: &NetworkSpec) -> Weights {
        Weights {
            layers: spec
                .dims()
                .windows(2)
                .map(|d| random_matrix(rng, d[1], d[0]))
                .collect(),
        }
    }

    fn spec(dims: &[usize], act: Activation, m: usize) -> NetworkSpec {
        NetworkSpec::with_output_activation(dims.to_vec(), act, Activation::Identity, m, 0.1).unwrap()
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(NetworkSpec::new(vec![2, 1], vec![Activation::Identity], 1, 0.1).is_err());
        assert!(NetworkSpec::new(vec![2, 0, 1], vec![Activation::Identity; 2], 1, 0.1).is_err());
        assert!(NetworkSpec::new(vec![2, 3, 1], vec![Activation::Identity; 2], 1, 0.0).is_err());
        assert!(NetworkSpec::new(vec![2, 3, 1], vec![Activation::Identity; 2], 0, 0.1).is_err());
    }

    #[test]
    fn stage_map_identity_weights_pass_through() {
        let s = NetworkSpec::new(vec![3, 3, 1], vec![Activation::Identity; 2], 2, 0.1).unwrap();
        let w = DMatrix::<f64>::identity(3, 3);
        let wv: Vec<f64> = (0..3).flat_map(|k| w.row(k).iter().copied().collect::<Vec<_>>()).collect();
        let x = vec![1.0, -2.0, 3.0, 0.5, 0.25, -0.125];
        assert_eq!(stage_map(&s, 1, &wv, &x).unwrap(), x);
    }

    #[test]
    fn stage_map_zero_weights_softplus() {
        let s = spec(&[2, 3, 1], Activation::Softplus, 4);
        let out = stage_map(&s, 1, &[0.0; 6], &[0.3; 8]).unwrap();
        assert_eq!(out.len(), 12);
        assert!(out.iter().all(|&v| v == std::f64::consts::LN_2));
    }

    #[test]
    fn stage_map_matches_per_sample_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = spec(&[2, 2, 1], Activation::Softplus, 2);
        let w = random_matrix(&mut rng, 2, 2);
        let xs = random_matrix(&mut rng, 2, 2);
        let wv = Weights { layers: vec![w.clone(), DMatrix::zeros(1, 2)] }.to_vec();
        let out = stage_map(&s, 1, &wv[..4], xs.as_slice()).unwrap();
        for i in 0..2 {
            let u = &w * xs.column(i);
            for k in 0..2 {
                assert!((out[i * 2 + k] - softplus(u[k])).abs() < 1e-15);
            }
        }
        assert!(matches!(stage_map(&s, 1, &wv[..3], xs.as_slice()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn unroll_identity_single_hidden_layer() {
        let s = NetworkSpec::new(vec![3, 3, 2], vec![Activation::Identity; 2], 4, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 3, 4);
        let w = Weights { layers: vec![DMatrix::identity(3, 3), random_matrix(&mut rng, 2, 3)] };
        let st = unroll(&s, &w, &a).unwrap();
        assert_eq!(st.hidden[0], a);
    }

    #[test]
    fn unroll_composes_stage_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = spec(&[3, 4, 2, 1], Activation::Tanh, 3);
        let w = random_weights(&mut rng, &s);
        let a = random_matrix(&mut rng, 3, 3);
        let st = unroll(&s, &w, &a).unwrap();
        let l = s.layout();
        let wv = w.to_vec();
        let x1 = stage_map(&s, 1, &wv[l.w_range(1)], a.as_slice()).unwrap();
        let x2 = stage_map(&s, 2, &wv[l.w_range(2)], &x1).unwrap();
        assert_eq!(st.hidden[1].as_slice(), &x2[..]);
    }

    #[test]
    fn unrolled_point_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for act in [Activation::Softplus, Activation::Tanh, Activation::Identity] {
            let s = spec(&[4, 6, 3, 2], act, 5);
            let w = random_weights(&mut rng, &s);
            let a = random_matrix(&mut rng, 4, 5);
            let y = random_matrix(&mut rng, 2, 5);
            let data = Dataset::new(a.clone(), y).unwrap();
            let st = unroll(&s, &w, &a).unwrap();
            let z = PrimalPoint::pack(&s, &w, &st).unwrap();
            let scale = 1.0 + z.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(feasibility(&s, &z, &data).unwrap() <= 1e-14 * scale);
        }
    }

    #[test]
    fn residual_is_affine_in_own_state_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = spec(&[2, 3, 2, 1], Activation::Softplus, 2);
        let w = random_weights(&mut rng, &s);
        let a = random_matrix(&mut rng, 2, 2);
        let data = Dataset::new(a.clone(), random_matrix(&mut rng, 1, 2)).unwrap();
        let z = PrimalPoint::pack(&s, &w, &unroll(&s, &w, &a).unwrap()).unwrap();
        let base = residual_f(&s, &z, &data).unwrap();
        let mut zp = z.clone();
        let l = s.layout();
        let target = l.x_range(2).start + 1;
        zp.x[target] += 0.25;
        let pert = residual_f(&s, &zp, &data).unwrap();
        let r2 = l.x_range(2);
        for i in r2 {
            let expected = if i == target { 0.25 } else { 0.0 };
            assert!((pert[i] - base[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_matches_per_sample_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = spec(&[3, 2, 2, 1], Activation::Softplus, 3);
        let l = s.layout();
        let z = PrimalPoint::from_parts(
            &l,
            (0..l.w_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..l.x_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let a = random_matrix(&mut rng, 3, 3);
        let data = Dataset::new(a.clone(), random_matrix(&mut rng, 1, 3)).unwrap();
        let f = residual_f(&s, &z, &data).unwrap();
        let (w, st) = z.unpack(&s, &a).unwrap();
        let mut expected = Vec::new();
        for j in 1..=2 {
            let prev = if j == 1 { &a } else { &st.hidden[0] };
            for i in 0..3 {
                let u = &w.layers[j - 1] * prev.column(i);
                for k in 0..2 {
                    expected.push(st.hidden[j - 1][(k, i)] - softplus(u[k]));
                }
            }
        }
        assert!(f.iter().zip(&expected).all(|(p, q)| (p - q).abs() < 1e-15));
    }

    #[test]
    fn cost_examples() {
        // zero weights, softplus output: every prediction is ln 2
        let s = NetworkSpec::new(vec![2, 3, 1], vec![Activation::Softplus; 2], 4, 0.1).unwrap();
        let w = Weights::zeros(&s);
        let a = DMatrix::from_element(2, 4, 0.7);
        let y = DMatrix::from_element(1, 4, std::f64::consts::LN_2);
        let data = Dataset::new(a.clone(), y).unwrap();
        let z = PrimalPoint::pack(&s, &w, &unroll(&s, &w, &a).unwrap()).unwrap();
        assert!(cost_f(&s, &z, &data).unwrap().abs() < 1e-15);

        // perfect fit with ||w||^2 = 2, mu = 0.1
        let s = NetworkSpec::new(vec![1, 1, 1], vec![Activation::Identity; 2], 3, 0.1).unwrap();
        let w = Weights { layers: vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)] };
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let data = Dataset::new(a.clone(), a.clone()).unwrap();
        let z = PrimalPoint::pack(&s, &w, &unroll(&s, &w, &a).unwrap()).unwrap();
        assert!((cost_f(&s, &z, &data).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cost_matches_per_sample_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = spec(&[2, 3, 2], Activation::Softplus, 4);
        let w = random_weights(&mut rng, &s);
        let a = random_matrix(&mut rng, 2, 4);
        let y = random_matrix(&mut rng, 2, 4);
        let data = Dataset::new(a.clone(), y.clone()).unwrap();
        let st = unroll(&s, &w, &a).unwrap();
        let mut z = PrimalPoint::pack(&s, &w, &st).unwrap();
        z.x.iter_mut().for_each(|v| *v += 0.1);
        let mut total = 0.0;
        for i in 0..4 {
            let xi = st.hidden[0].column(i).add_scalar(0.1);
            let out = &w.layers[1] * xi;
            total += (out - y.column(i)).norm_squared();
        }
        let expected = total / 8.0 + 0.05 * w.frobenius_sq();
        assert!((cost_f(&s, &z, &data).unwrap() - expected).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(
            dims in proptest::collection::vec(1usize..5, 3..6),
            m in 1usize..5,
            seed in any::<u64>(),
        ) {
            let s = spec(&dims, Activation::Softplus, m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_weights(&mut rng, &s);
            let a = random_matrix(&mut rng, dims[0], m);
            let st = States {
                input: a.clone(),
                hidden: (1..dims.len() - 1).map(|j| random_matrix(&mut rng, dims[j], m)).collect(),
            };
            let z = PrimalPoint::pack(&s, &w, &st).unwrap();
            let (w2, st2) = z.unpack(&s, &a).unwrap();
            prop_assert_eq!(&w2, &w);
            prop_assert_eq!(&st2, &st);
            let z2 = PrimalPoint::pack(&s, &w2, &st2).unwrap();
            prop_assert_eq!(z2, z);
        }

        #[test]
        fn cost_is_nonnegative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = spec(&[2, 3, 1], Activation::Softplus, 3);
            let l = s.layout();
            let z = PrimalPoint::from_parts(
                &l,
                (0..l.w_len()).map(|_| rng.random_range(-3.0..3.0)).collect(),
                (0..l.x_len()).map(|_| rng.random_range(-3.0..3.0)).collect(),
            ).unwrap();
            let data = Dataset::new(random_matrix(&mut rng, 2, 3), random_matrix(&mut rng, 1, 3)).unwrap();
            prop_assert!(cost_f(&s, &z, &data).unwrap() >= 0.0);
        }
    }
}
