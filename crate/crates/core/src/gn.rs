//! Gauss-Newton solver for the augmented Lagrangian subproblem.
//!
//! Each iteration linearizes the stage maps around the current iterate,
//! solves the resulting stagewise least-squares problem exactly with
//! [`crate::fdp`], and backtracks along the direction until the Armijo test
//! on the augmented Lagrangian holds.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::fdp;
use crate::linalg::{norm_inf, norm_sq, Csr, CsrBuilder};
use crate::net::{stage_dims, NetworkSpec};
use crate::problem::{self, state, Layout, PrimalPoint, StagewiseProblem};

/// One stage of the linearized problem:
/// `rho/2 ||delta x_j - A x_{j-1} - B w_j - c||^2 + mu/2 ||w_j||^2`.
#[derive(Debug, Clone)]
pub struct Stage {
    pub state_map: Csr,
    pub weight_map: Csr,
    weight_map_t: Csr,
    pub offset: Vec<f64>,
    pub rho: f64,
}

impl Stage {
    pub fn new(state_map: Csr, weight_map: Csr, offset: Vec<f64>, rho: f64) -> Self {
        let weight_map_t = weight_map.transpose();
        Self {
            state_map,
            weight_map,
            weight_map_t,
            offset,
            rho,
        }
    }

    /// `B_j^T`
    pub fn weight_map_t(&self) -> &Csr {
        &self.weight_map_t
    }
}

/// The linearized subproblem: stages `1..=N+1`, the fixed input `x_0` and
/// `mu_w`. Stages `1..=N` carry a state variable (`delta_j = 1`); the last
/// one does not.
#[derive(Debug, Clone)]
pub struct StageSystem {
    stages: Vec<Stage>,
    pub input: Vec<f64>,
    pub weight_reg: f64,
    layout: Layout,
}

impl StageSystem {
    /// `stages[0]` is stage 1.
    pub fn new(stages: Vec<Stage>, input: Vec<f64>, weight_reg: f64) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Config("stage system needs at least one stage".into()));
        }
        if !(weight_reg > 0.0) {
            return Err(Error::Config(format!("weight regularization must be positive, got {weight_reg}")));
        }
        let mut state = vec![input.len()];
        let mut weight = Vec::with_capacity(stages.len());
        for s in &stages {
            let r = s.state_map.nrows();
            check_len("stage state map columns", *state.last().unwrap(), s.state_map.ncols())?;
            check_len("stage weight map rows", r, s.weight_map.nrows())?;
            check_len("stage offset", r, s.offset.len())?;
            if !(s.rho > 0.0) {
                return Err(Error::Config(format!("stage weight must be positive, got {}", s.rho)));
            }
            state.push(r);
            weight.push(s.weight_map.ncols());
        }
        Ok(Self {
            stages,
            input,
            weight_reg,
            layout: Layout::new(state, weight),
        })
    }

    /// Stage `j`, `1 <= j <= N+1`.
    pub fn stage(&self, j: usize) -> &Stage {
        &self.stages[j - 1]
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn hidden(&self) -> usize {
        self.layout.hidden()
    }

    /// `delta_j x_j - A_j x_{j-1} - B_j w_j - c_j`, with `c` and `x_0` dropped
    /// when `homogeneous`.
    pub fn stage_residual(&self, j: usize, z: &PrimalPoint, homogeneous: bool) -> Vec<f64> {
        let st = self.stage(j);
        let n = self.hidden();
        let mut r = if j <= n {
            z.x_block(j).to_vec()
        } else {
            vec![0.0; st.offset.len()]
        };
        if j >= 2 {
            let ax = st.state_map.matvec(z.x_block(j - 1));
            r.iter_mut().zip(&ax).for_each(|(a, b)| *a -= b);
        } else if !homogeneous {
            let ax = st.state_map.matvec(&self.input);
            r.iter_mut().zip(&ax).for_each(|(a, b)| *a -= b);
        }
        let bw = st.weight_map.matvec(z.w_block(j));
        r.iter_mut().zip(&bw).for_each(|(a, b)| *a -= b);
        if !homogeneous {
            r.iter_mut().zip(&st.offset).for_each(|(a, b)| *a -= b);
        }
        r
    }
}

/// Diagonal of `D^j`: `Phi_j'(<w_{j,k}, x^{(i)}>)` at position `i*d_j + k`.
pub fn activation_diag(spec: &NetworkSpec, j: usize, w_j: &[f64], x_prev: &[f64]) -> Result<Vec<f64>> {
    let (d, dp) = stage_dims(spec, j)?;
    check_len("stage weights", d * dp, w_j.len())?;
    check_len("stage input", spec.sample_count() * dp, x_prev.len())?;
    let act = spec.activation(j);
    let mut out = Vec::with_capacity(spec.sample_count() * d);
    for xi in x_prev.chunks_exact(dp) {
        for row in w_j.chunks_exact(dp) {
            let u: f64 = row.iter().zip(xi).map(|(a, b)| a * b).sum();
            out.push(act.derivative(u));
        }
    }
    Ok(out)
}

/// Jacobians of `H_j` with respect to `x_{j-1}` and `w_j`.
///
/// Row `(i, k)` of `J_x` holds `D_{ik} W_j[k, :]` over the columns of sample
/// `i`; row `(i, k)` of `J_w` holds `D_{ik} x^{(i)}` over the columns of row
/// `k` of `W_j`.
pub fn linearize_stage(spec: &NetworkSpec, j: usize, w_j: &[f64], x_prev: &[f64]) -> Result<(Csr, Csr)> {
    let (d, dp) = stage_dims(spec, j)?;
    let m = spec.sample_count();
    let diag = activation_diag(spec, j, w_j, x_prev)?;
    let mut jx = CsrBuilder::with_capacity(m * dp, m * d, m * d * dp);
    let mut jw = CsrBuilder::with_capacity(d * dp, m * d, m * d * dp);
    for (i, xi) in x_prev.chunks_exact(dp).enumerate() {
        for (k, row) in w_j.chunks_exact(dp).enumerate() {
            let dk = diag[i * d + k];
            for (p, &wkp) in row.iter().enumerate() {
                jx.push(i * dp + p, dk * wkp);
            }
            jx.end_row();
            for (p, &xp) in xi.iter().enumerate() {
                jw.push(k * dp + p, dk * xp);
            }
            jw.end_row();
        }
    }
    Ok((jx.build(), jw.build()))
}

/// Linearizes the subproblem at `z` into a [`StageSystem`].
///
/// `A_1 = 0` (the input is fixed), `A_j = J_x H_j` for `j >= 2`,
/// `B_j = J_w H_j`, `c_j = H_j - A_j x_{j-1} - B_j w_j - lambda_j / beta` for
/// `j <= N` and `c_{N+1} = H_{N+1} - A x_N - B w_{N+1} - y`.
pub fn build_linearization<P: StagewiseProblem + ?Sized>(
    problem: &P,
    z: &PrimalPoint,
    multiplier: &[f64],
    beta: f64,
) -> Result<StageSystem> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!("penalty must be positive, got {beta}")));
    }
    let layout = problem.layout();
    check_len("multiplier", layout.residual_len(), multiplier.len())?;
    let n = layout.hidden();
    let mut stages = Vec::with_capacity(n + 1);
    for j in 1..=n + 1 {
        let x_prev = state(problem, z, j - 1);
        let h = problem.stage(j, z.w_block(j), x_prev)?;
        let (jx, jw) = problem.stage_jacobians(j, z.w_block(j), x_prev)?;
        let bw = jw.matvec(z.w_block(j));
        let mut c: Vec<f64> = h.iter().zip(&bw).map(|(h, b)| h - b).collect();
        let a = if j == 1 {
            Csr::zeros(layout.state_dim(1), layout.state_dim(0))
        } else {
            let ax = jx.matvec(x_prev);
            c.iter_mut().zip(&ax).for_each(|(c, a)| *c -= a);
            jx
        };
        let rho = if j <= n {
            let lam = &multiplier[layout.x_range(j)];
            c.iter_mut().zip(lam).for_each(|(c, l)| *c -= l / beta);
            beta
        } else {
            c.iter_mut().zip(problem.target()).for_each(|(c, y)| *c -= y);
            problem.output_weight()
        };
        stages.push(Stage::new(a, jw, c, rho));
    }
    StageSystem::new(stages, problem.input().to_vec(), problem.weight_reg())
}

/// Objective of the linearized subproblem at `z`.
pub fn gn_model_value(stages: &StageSystem, z: &PrimalPoint) -> f64 {
    model_value(stages, z, false)
}

/// The model with `c = 0` and `x_0 = 0`; the Armijo decrease measure for a
/// direction `p`. Equals `||J p||^2 / 2` for the dense Jacobian `J`.
pub fn homogeneous_model_value(stages: &StageSystem, p: &PrimalPoint) -> f64 {
    model_value(stages, p, true)
}

fn model_value(stages: &StageSystem, z: &PrimalPoint, homogeneous: bool) -> f64 {
    let mut total = 0.5 * stages.weight_reg * norm_sq(&z.w);
    for j in 1..=stages.hidden() + 1 {
        total += 0.5 * stages.stage(j).rho * norm_sq(&stages.stage_residual(j, z, homogeneous));
    }
    total
}

/// Gradient of [`gn_model_value`].
pub fn model_gradient(stages: &StageSystem, z: &PrimalPoint) -> PrimalPoint {
    let n = stages.hidden();
    let mut g = PrimalPoint::zeros(stages.layout());
    for j in 1..=n + 1 {
        let st = stages.stage(j);
        let r: Vec<f64> = stages
            .stage_residual(j, z, false)
            .into_iter()
            .map(|v| st.rho * v)
            .collect();
        let bt = st.weight_map.tr_matvec(&r);
        for ((o, b), w) in g.w_block_mut(j).iter_mut().zip(&bt).zip(z.w_block(j)) {
            *o = stages.weight_reg * w - b;
        }
        if j <= n {
            g.x_block_mut(j).iter_mut().zip(&r).for_each(|(o, v)| *o += v);
        }
        if j >= 2 {
            let at = st.state_map.tr_matvec(&r);
            g.x_block_mut(j - 1).iter_mut().zip(&at).for_each(|(o, v)| *o -= v);
        }
    }
    g
}

/// Exact gradient of the augmented Lagrangian `L_beta(., lambda)` at `z`.
pub fn grad_aug_lagrangian<P: StagewiseProblem + ?Sized>(
    problem: &P,
    z: &PrimalPoint,
    multiplier: &[f64],
    beta: f64,
) -> Result<PrimalPoint> {
    problem::lagrangian_gradient(problem, z, multiplier, beta)
}

/// Evaluation counters, reported per run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EvalCounts {
    pub lagrangian: usize,
    pub gradient: usize,
}

impl std::ops::AddAssign for EvalCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.lagrangian += rhs.lagrangian;
        self.gradient += rhs.gradient;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnOptions {
    /// Backtracking factor `eta_1`.
    pub eta1: f64,
    /// Armijo constant `eta_2`.
    pub eta2: f64,
    pub max_inner: usize,
    pub max_backtracks: usize,
    /// Keep every iterate in the outcome (for diagnostics and tests).
    pub keep_iterates: bool,
}

impl Default for GnOptions {
    fn default() -> Self {
        Self {
            eta1: 0.8,
            eta2: 0.1,
            max_inner: 200,
            max_backtracks: 100,
            keep_iterates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchStep {
    pub tau: f64,
    pub backtracks: usize,
    pub value_before: f64,
    pub value_after: f64,
    /// `G_{A,B,0}(p)`
    pub decrease: f64,
}

/// Failed Armijo search; carries what the last trial looked like.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchFailure {
    pub backtracks: usize,
    pub last_tau: f64,
    pub value_before: f64,
    pub last_value: f64,
    pub decrease: f64,
}

/// Largest `tau` in `{1, eta1, eta1^2, ...}` with
/// `L(z + tau p) <= L(z) - eta2 tau G_{A,B,0}(p)`.
#[allow(clippy::too_many_arguments)]
pub fn linesearch<P: StagewiseProblem + ?Sized>(
    problem: &P,
    stages: &StageSystem,
    z: &PrimalPoint,
    direction: &PrimalPoint,
    multiplier: &[f64],
    beta: f64,
    value_at_z: f64,
    opts: &GnOptions,
    counts: &mut EvalCounts,
) -> Result<std::result::Result<(PrimalPoint, LineSearchStep), LineSearchFailure>> {
    let decrease = homogeneous_model_value(stages, direction);
    let mut tau = 1.0;
    let mut last_value = f64::NAN;
    for backtracks in 0..=opts.max_backtracks {
        let trial = z.add_scaled(tau, direction);
        counts.lagrangian += 1;
        // a trial step may leave the region where the activations are finite
        let value = match problem::lagrangian_value(problem, &trial, multiplier, beta) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if value <= value_at_z - opts.eta2 * tau * decrease {
            return Ok(Ok((
                trial,
                LineSearchStep {
                    tau,
                    backtracks,
                    value_before: value_at_z,
                    value_after: value,
                    decrease,
                },
            )));
        }
        last_value = value;
        tau *= opts.eta1;
    }
    Ok(Err(LineSearchFailure {
        backtracks: opts.max_backtracks,
        last_tau: tau / opts.eta1,
        value_before: value_at_z,
        last_value,
        decrease,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GnStatus {
    Converged,
    MaxInnerReached,
    LinesearchFailure,
}

#[derive(Debug, Clone)]
pub struct GnOutcome {
    pub z: PrimalPoint,
    /// Number of direction solves performed.
    pub iterations: usize,
    pub status: GnStatus,
    /// `||grad L_beta(z, lambda)||_inf` at the returned point.
    pub grad_inf: f64,
    pub counts: EvalCounts,
    pub steps: Vec<LineSearchStep>,
    pub failure: Option<LineSearchFailure>,
    /// Starting point followed by every accepted iterate, if requested.
    pub iterates: Vec<PrimalPoint>,
}

/// Gauss-Newton iterations on `L_beta(., lambda)` from `start` until
/// `||grad||_inf <= tol`. Stationarity is tested before each direction
/// solve, so a stationary start returns without any.
pub fn gn_run<P: StagewiseProblem + ?Sized>(
    problem: &P,
    multiplier: &[f64],
    beta: f64,
    start: &PrimalPoint,
    tol: f64,
    opts: &GnOptions,
) -> Result<GnOutcome> {
    if !(beta > 0.0) || !(tol > 0.0) {
        return Err(Error::Config(format!(
            "Gauss-Newton needs beta > 0 and tolerance > 0, got {beta} and {tol}"
        )));
    }
    let mut counts = EvalCounts::default();
    let mut z = start.clone();
    let mut steps = Vec::new();
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push(z.clone());
    }
    counts.lagrangian += 1;
    let mut value = problem::lagrangian_value(problem, &z, multiplier, beta)?;
    let mut iterations = 0;
    let (status, failure, grad_inf) = loop {
        counts.gradient += 1;
        let grad_inf = norm_inf(&grad_aug_lagrangian(problem, &z, multiplier, beta)?.to_flat());
        if grad_inf <= tol {
            break (GnStatus::Converged, None, grad_inf);
        }
        if iterations >= opts.max_inner {
            break (GnStatus::MaxInnerReached, None, grad_inf);
        }
        let stages = build_linearization(problem, &z, multiplier, beta)?;
        let target = fdp::fdp_solve(&stages)?;
        let direction = target.sub(&z);
        iterations += 1;
        match linesearch(problem, &stages, &z, &direction, multiplier, beta, value, opts, &mut counts)? {
            Ok((next, step)) => {
                value = step.value_after;
                steps.push(step);
                z = next;
                if opts.keep_iterates {
                    iterates.push(z.clone());
                }
            }
            Err(fail) => break (GnStatus::LinesearchFailure, Some(fail), grad_inf),
        }
    };
    Ok(GnOutcome {
        z,
        iterations,
        status,
        grad_inf,
        counts,
        steps,
        failure,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::net::{unroll, Dataset, NetworkProblem, Weights};
    use crate::problem::lagrangian_value;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    fn random_instance(seed: u64, dims: &[usize], act: Activation, m: usize) -> (NetworkProblem, PrimalPoint, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = NetworkSpec::with_output_activation(dims.to_vec(), act, Activation::Identity, m, 0.1).unwrap();
        let a = DMatrix::from_fn(dims[0], m, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(*dims.last().unwrap(), m, |_, _| rng.random_range(-1.0..1.0));
        let p = NetworkProblem::new(&spec, &Dataset::new(a, y).unwrap()).unwrap();
        let l = spec.layout();
        let z = PrimalPoint::from_parts(&l, rand_vec(&mut rng, l.w_len(), 1.0), rand_vec(&mut rng, l.x_len(), 1.0)).unwrap();
        let lam = rand_vec(&mut rng, l.residual_len(), 0.5);
        (p, z, lam)
    }

    #[test]
    fn activation_diag_examples() {
        let s = NetworkSpec::new(vec![2, 3, 1], vec![Activation::Identity; 2], 2, 0.1).unwrap();
        assert_eq!(activation_diag(&s, 1, &[0.3; 6], &[1.0; 4]).unwrap(), vec![1.0; 6]);
        let s = NetworkSpec::new(vec![2, 3, 1], vec![Activation::Softplus; 2], 2, 0.1).unwrap();
        assert_eq!(activation_diag(&s, 1, &[0.0; 6], &[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.5; 6]);
    }

    #[test]
    fn activation_diag_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = NetworkSpec::new(vec![3, 2, 1], vec![Activation::Tanh; 2], 4, 0.1).unwrap();
        let w = rand_vec(&mut rng, 6, 1.0);
        let x = rand_vec(&mut rng, 12, 1.0);
        let d = activation_diag(&s, 1, &w, &x).unwrap();
        for i in 0..4 {
            for k in 0..2 {
                let mut u = 0.0;
                for p in 0..3 {
                    u += w[k * 3 + p] * x[i * 3 + p];
                }
                assert_eq!(d[i * 2 + k], 1.0 - u.tanh().powi(2));
            }
        }
    }

    #[test]
    fn identity_single_sample_jacobians() {
        let s = NetworkSpec::new(vec![3, 2, 1], vec![Activation::Identity; 2], 1, 0.1).unwrap();
        let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x = vec![0.5, -1.0, 2.0];
        let (jx, jw) = linearize_stage(&s, 1, &w, &x).unwrap();
        assert_eq!(jx.to_dense(), DMatrix::from_row_slice(2, 3, &w));
        let mut expected = DMatrix::zeros(2, 6);
        for k in 0..2 {
            for p in 0..3 {
                expected[(k, k * 3 + p)] = x[p];
            }
        }
        assert_eq!(jw.to_dense(), expected);
    }

    #[test]
    fn zero_weight_softplus_jacobians() {
        let s = NetworkSpec::new(vec![2, 2, 1], vec![Activation::Softplus; 2], 2, 0.1).unwrap();
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let (jx, jw) = linearize_stage(&s, 1, &[0.0; 4], &x).unwrap();
        assert!(jx.to_dense().iter().all(|&v| v == 0.0));
        let jw = jw.to_dense();
        assert_eq!(jw[(0, 0)], 0.5);
        assert_eq!(jw[(0, 1)], 1.0);
        assert_eq!(jw[(3, 2)], 1.5);
        assert_eq!(jw[(3, 3)], 2.0);
        assert_eq!(jw[(0, 2)], 0.0);
    }

    #[test]
    fn jacobians_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = NetworkSpec::new(vec![3, 4, 1], vec![Activation::Softplus; 2], 3, 0.1).unwrap();
        let w = rand_vec(&mut rng, 12, 1.0);
        let x = rand_vec(&mut rng, 9, 1.0);
        let (jx, jw) = linearize_stage(&s, 1, &w, &x).unwrap();
        let (jx, jw) = (jx.to_dense(), jw.to_dense());
        let h = 1e-6;
        let f = |w: &[f64], x: &[f64]| crate::net::stage_map(&s, 1, w, x).unwrap();
        for c in 0..9 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (f(&w, &xp), f(&w, &xm));
            for r in 0..12 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - jx[(r, c)]).abs() <= 1e-5 * (1.0 + jx[(r, c)].abs()));
            }
        }
        for c in 0..12 {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[c] += h;
            wm[c] -= h;
            let (fp, fm) = (f(&wp, &x), f(&wm, &x));
            for r in 0..12 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - jw[(r, c)]).abs() <= 1e-5 * (1.0 + jw[(r, c)].abs()));
            }
        }
    }

    #[test]
    fn model_matches_lagrangian_at_linearization_point() {
        for seed in 0..5 {
            let (p, z, lam) = random_instance(20 + seed, &[3, 4, 2, 1], Activation::Softplus, 3);
            let beta = 2.5;
            let stages = build_linearization(&p, &z, &lam, beta).unwrap();
            let g = gn_model_value(&stages, &z);
            let l = lagrangian_value(&p, &z, &lam, beta).unwrap() + norm_sq(&lam) / (2.0 * beta);
            assert!((g - l).abs() <= 1e-10 * l.abs().max(1.0), "seed {seed}: {g} vs {l}");
            // gradients agree as well
            let gm = model_gradient(&stages, &z).to_flat();
            let gl = grad_aug_lagrangian(&p, &z, &lam, beta).unwrap().to_flat();
            assert!(gm.iter().zip(&gl).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn feasible_point_has_zero_hidden_model_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let spec = NetworkSpec::with_output_activation(vec![2, 3, 2, 1], Activation::Softplus, Activation::Identity, 4, 0.1).unwrap();
        let a = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(1, 4, |_, _| rng.random_range(-1.0..1.0));
        let w = Weights { layers: spec.dims().windows(2).map(|d| DMatrix::from_fn(d[1], d[0], |_, _| rng.random_range(-1.0..1.0))).collect() };
        let z = PrimalPoint::pack(&spec, &w, &unroll(&spec, &w, &a).unwrap()).unwrap();
        let p = NetworkProblem::new(&spec, &Dataset::new(a, y).unwrap()).unwrap();
        let lam = vec![0.0; spec.layout().residual_len()];
        let stages = build_linearization(&p, &z, &lam, 1.0).unwrap();
        for j in 1..=2 {
            assert!(norm_inf(&stages.stage_residual(j, &z, false)) < 1e-14);
        }
    }

    #[test]
    fn gradient_vanishes_at_perfect_fit_with_zero_weights() {
        // zero weights, identity output: predictions are 0 and targets are 0
        let spec = NetworkSpec::new(vec![2, 3, 1], vec![Activation::Identity; 2], 3, 0.1).unwrap();
        let a = DMatrix::from_element(2, 3, 0.4);
        let y = DMatrix::zeros(1, 3);
        let p = NetworkProblem::new(&spec, &Dataset::new(a.clone(), y).unwrap()).unwrap();
        let z = p.feasible_point(&Weights::zeros(&spec)).unwrap();
        let lam = vec![0.0; spec.layout().residual_len()];
        let g = grad_aug_lagrangian(&p, &z, &lam, 3.0).unwrap();
        assert_eq!(norm_inf(&g.to_flat()), 0.0);
    }

    #[test]
    fn zero_direction_accepts_full_step() {
        let (p, z, lam) = random_instance(40, &[2, 3, 1], Activation::Softplus, 2);
        let stages = build_linearization(&p, &z, &lam, 1.0).unwrap();
        let zero = PrimalPoint::zeros(z.layout());
        let v = lagrangian_value(&p, &z, &lam, 1.0).unwrap();
        let mut counts = EvalCounts::default();
        let (next, step) = linesearch(&p, &stages, &z, &zero, &lam, 1.0, v, &GnOptions::default(), &mut counts)
            .unwrap()
            .unwrap();
        assert_eq!(step.tau, 1.0);
        assert_eq!(next, z);
        assert_eq!(step.value_after, v);
    }

    #[test]
    fn armijo_condition_holds_on_accepted_steps() {
        for seed in 0..4 {
            let (p, z, lam) = random_instance(50 + seed, &[3, 5, 2, 1], Activation::Softplus, 4);
            let opts = GnOptions { keep_iterates: true, ..GnOptions::default() };
            let beta = 3.0;
            let out = gn_run(&p, &lam, beta, &z, 1e-6, &opts).unwrap();
            assert_eq!(out.status, GnStatus::Converged);
            for (l, step) in out.steps.iter().enumerate() {
                let before = lagrangian_value(&p, &out.iterates[l], &lam, beta).unwrap();
                let after = lagrangian_value(&p, &out.iterates[l + 1], &lam, beta).unwrap();
                assert!(after <= before - opts.eta2 * step.tau * step.decrease);
                assert!(after <= before);
            }
        }
    }

    #[test]
    fn stationary_start_needs_no_direction() {
        let (p, z, lam) = random_instance(60, &[2, 3, 1], Activation::Tanh, 3);
        let first = gn_run(&p, &lam, 1.0, &z, 1e-9, &GnOptions::default()).unwrap();
        assert_eq!(first.status, GnStatus::Converged);
        let again = gn_run(&p, &lam, 1.0, &first.z, 1e-6, &GnOptions::default()).unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.z, first.z);
    }

    #[test]
    fn rejects_nonpositive_penalty() {
        let (p, z, lam) = random_instance(61, &[2, 3, 1], Activation::Tanh, 3);
        assert!(matches!(build_linearization(&p, &z, &lam, 0.0), Err(Error::Config(_))));
        assert!(gn_run(&p, &lam, 1.0, &z, 0.0, &GnOptions::default()).is_err());
    }
}
