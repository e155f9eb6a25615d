//! Randomized property suites comparing the structured solvers against the
//! dense oracles. Each instance has its own seed so a failure can be
//! reproduced alone.

use std::fmt;

use almdp::baseline::backprop_grad;
use almdp::fdp::{self, FdpWorkspace};
use almdp::gn::{self, build_linearization, gn_run, homogeneous_model_value, GnOptions, GnStatus};
use almdp::linalg::{dot, Csr};
use almdp::problem::{lagrangian_gradient, lagrangian_value};
use almdp::verify::{
    dense_solve, dense_system, fd_gradient, quadratic_completion_sides, random_stage_system, rel_err, s_dense,
    woodbury_dense, RandomSystemShape,
};
use almdp::{Activation, AffineProblem, Dataset, NetworkProblem, NetworkSpec, PrimalPoint, StageSystem, StagewiseProblem, Weights};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one property over a batch of random instances.
#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Seed of the first failing instance.
    pub failing_seed: Option<u64>,
    pub note: String,
}

impl PropertyReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            instances: 0,
            max_deviation: 0.0,
            tolerance,
            failing_seed: None,
            note: String::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failing_seed.is_none() && self.instances > 0
    }

    /// Records one instance's deviation; NaN counts as failure.
    fn record(&mut self, seed: u64, deviation: f64) {
        self.instances += 1;
        if !(deviation <= self.max_deviation) {
            self.max_deviation = if deviation.is_nan() { f64::NAN } else { deviation.max(self.max_deviation) };
        }
        if !(deviation <= self.tolerance) && self.failing_seed.is_none() {
            self.failing_seed = Some(seed);
        }
    }

    fn fail(&mut self, seed: u64, why: String) {
        self.instances += 1;
        if self.failing_seed.is_none() {
            self.failing_seed = Some(seed);
            self.note = why;
        }
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} instances, max deviation {:.3e} (tolerance {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.max_deviation,
            self.tolerance
        )?;
        if let Some(s) = self.failing_seed {
            write!(f, ", first failing instance seed {s}")?;
        }
        if !self.note.is_empty() {
            write!(f, " [{}]", self.note)?;
        }
        Ok(())
    }
}

/// Instance `i` of a suite started at `base`.
fn instance_seed(base: u64, i: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

/// Cycles through `N in {1,2,3}`, `beta in {0.5, 10}`, `mu_w in {0.1, 1}`
/// with `r_j <= 12`, `s_j <= 9`.
pub fn oracle_shape(i: usize) -> RandomSystemShape {
    RandomSystemShape {
        hidden: 1 + i % 3,
        max_state: 12,
        max_weight: 9,
        beta: if (i / 3).is_multiple_of(2) { 0.5 } else { 10.0 },
        weight_reg: if (i / 6).is_multiple_of(2) { 0.1 } else { 1.0 },
    }
}

fn system(seed: u64, i: usize) -> almdp::Result<StageSystem> {
    random_stage_system(&mut ChaCha8Rng::seed_from_u64(seed), &oracle_shape(i))
}

/// Test-only fault injected into the solver under check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    SSign,
}

fn workspace(stages: &StageSystem, fault: Fault) -> almdp::Result<FdpWorkspace<'_>> {
    match fault {
        Fault::None => fdp::forward_recursion(stages),
        Fault::SSign => fdp::forward_recursion_with_s_sign_fault(stages),
    }
}

/// `||fdp - dense|| / (1 + ||dense||)` on random linearized systems.
pub fn fdp_oracle_equivalence(base: u64, count: usize, fault: Fault) -> PropertyReport {
    let mut rep = PropertyReport::new("fdp matches dense solve", 1e-8);
    for i in 0..count {
        let seed = instance_seed(base, i);
        let result = (|| -> almdp::Result<f64> {
            let sys = system(seed, i)?;
            let ws = workspace(&sys, fault)?;
            let z = fdp::backward_recursion(&sys, &ws)?;
            let reference = dense_solve(&sys, &dense_system(&sys)?)?;
            Ok(rel_err(&z.to_flat(), &reference.to_flat()))
        })();
        match result {
            Ok(d) => rep.record(seed, d),
            Err(e) => rep.fail(seed, e.to_string()),
        }
    }
    rep
}

/// Dense matrix of a linear operator given by its action.
fn operator_matrix(n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(0, 0);
    let mut e = vec![0.0; n];
    for c in 0..n {
        e[c] = 1.0;
        let col = f(&e);
        if c == 0 {
            out = DMatrix::zeros(col.len(), n);
        }
        out.set_column(c, &DVector::from_vec(col));
        e[c] = 0.0;
    }
    out
}

fn matrix_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    rel_err(a.as_slice(), b.as_slice())
}

/// `rho_j G_j` applied through the factorization against
/// `((1/rho) I + (1/mu) B B^T)^{-1}`.
pub fn woodbury_identity(base: u64, count: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("rho G equals Woodbury inverse", 1e-9);
    for i in 0..count {
        let seed = instance_seed(base, i);
        let result = (|| -> almdp::Result<f64> {
            let sys = system(seed, i)?;
            let ws = fdp::forward_recursion(&sys)?;
            let mut worst: f64 = 0.0;
            for (idx, st) in sys.stages().iter().enumerate() {
                let j = idx + 1;
                let r = st.offset.len();
                let op = operator_matrix(r, |v| ws.apply_g(j, v).into_iter().map(|t| st.rho * t).collect());
                let reference = woodbury_dense(&st.weight_map.to_dense(), st.rho, sys.weight_reg);
                worst = worst.max(matrix_rel_err(&op, &reference));
            }
            Ok(worst)
        })();
        match result {
            Ok(d) => rep.record(seed, d),
            Err(e) => rep.fail(seed, e.to_string()),
        }
    }
    rep
}

/// Two-step `S_j` application against `(M_{j-1}^{-1} + rho_j A^T G A)^{-1}`.
pub fn s_identity(base: u64, count: usize, fault: Fault) -> PropertyReport {
    let mut rep = PropertyReport::new("S two-step equals dense inverse", 1e-8);
    for i in 0..count {
        let seed = instance_seed(base, i);
        let result = (|| -> almdp::Result<f64> {
            let sys = system(seed, i)?;
            let ws = workspace(&sys, fault)?;
            let mut worst: f64 = 0.0;
            for j in 2..=sys.hidden() + 1 {
                let st = sys.stage(j);
                let r_prev = st.state_map.ncols();
                let op = operator_matrix(r_prev, |v| ws.apply_s(j, v));
                let reference = s_dense(&ws.m_dense(j - 1), &st.state_map.to_dense(), &st.weight_map.to_dense(), st.rho, sys.weight_reg);
                worst = worst.max(matrix_rel_err(&op, &reference));
            }
            Ok(worst)
        })();
        match result {
            Ok(d) => rep.record(seed, d),
            Err(e) => rep.fail(seed, e.to_string()),
        }
    }
    rep
}

/// Smallest eigenvalue of every densified `M_j`; the deviation reported is
/// the negated minimum, so the property holds when it is below zero.
pub fn m_positive_definite(base: u64, count: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("M_j positive definite", 0.0);
    rep.max_deviation = f64::NEG_INFINITY;
    for i in 0..count {
        let seed = instance_seed(base, i);
        let result = (|| -> almdp::Result<f64> {
            let sys = system(seed, i)?;
            let ws = fdp::forward_recursion(&sys)?;
            let min = (1..=sys.hidden() + 1)
                .map(|j| ws.m_dense(j).symmetric_eigenvalues().min())
                .fold(f64::INFINITY, f64::min);
            Ok(min)
        })();
        match result {
            Ok(min) => {
                rep.instances += 1;
                rep.max_deviation = rep.max_deviation.max(-min);
                if !(min > 0.0) && rep.failing_seed.is_none() {
                    rep.failing_seed = Some(seed);
                }
            }
            Err(e) => rep.fail(seed, e.to_string()),
        }
    }
    rep.note = format!("smallest eigenvalue seen {:.3e}", -rep.max_deviation);
    rep
}

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &r * r.transpose() + DMatrix::identity(n, n)
}

/// Both sides of the quadratic completion identity on random SPD data.
pub fn quadratic_completion(base: u64, count: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("quadratic completion identity", 1e-9);
    for i in 0..count {
        let seed = instance_seed(base, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rng.random_range(1..=6);
        let terms = rng.random_range(1..=4);
        let mut h = Vec::new();
        let mut v = Vec::new();
        let mut nu = Vec::new();
        for t in 0..terms {
            // the first term has at least p rows so that U is SPD
            let r = if t == 0 { p + rng.random_range(0..3) } else { rng.random_range(1..=6) };
            h.push(spd(&mut rng, r));
            v.push(DMatrix::from_fn(r, p, |_, _| rng.random_range(-1.0..1.0)));
            nu.push(DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0)));
        }
        let x = DVector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
        match quadratic_completion_sides(&h, &v, &nu, &x) {
            Ok((l, r)) => rep.record(seed, (l - r).abs() / (1.0 + l.abs())),
            Err(e) => rep.fail(seed, e.to_string()),
        }
    }
    rep
}

/// A random network no larger than `[6, 8, 4, 1]` with `m <= 10`, random
/// data, a random (infeasible) point and multiplier.
pub struct RandomNet {
    pub spec: NetworkSpec,
    pub data: Dataset,
    pub problem: NetworkProblem,
    pub z: PrimalPoint,
    pub multiplier: Vec<f64>,
    pub weights: Weights,
}

pub fn random_net(seed: u64) -> almdp::Result<RandomNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let caps = [6, 8, 4];
    let hidden = rng.random_range(1..=2);
    let mut dims = vec![rng.random_range(1..=caps[0])];
    for cap in &caps[1..=hidden] {
        dims.push(rng.random_range(1..=*cap));
    }
    dims.push(1);
    let m = rng.random_range(1..=10);
    let act = if rng.random_bool(0.5) { Activation::Softplus } else { Activation::Tanh };
    let spec = NetworkSpec::with_output_activation(dims.clone(), act, Activation::Identity, m, rng.random_range(0.05..1.0))?;
    let a = DMatrix::from_fn(dims[0], m, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(1, m, |_, _| rng.random_range(-1.0..1.0));
    let data = Dataset::new(a, y)?;
    let problem = NetworkProblem::new(&spec, &data)?;
    let layout = spec.layout();
    let w: Vec<f64> = (0..layout.w_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..layout.x_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z = PrimalPoint::from_parts(&layout, w, x)?;
    let multiplier = (0..layout.residual_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights = Weights {
        layers: dims.windows(2).map(|d| DMatrix::from_fn(d[1], d[0], |_, _| rng.random_range(-1.0..1.0))).collect(),
    };
    Ok(RandomNet { spec, data, problem, z, multiplier, weights })
}

pub const FD_STEP: f64 = 1e-6;

/// Augmented Lagrangian gradient against central differences.
pub fn lagrangian_gradient_check(base: u64, count: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("augmented Lagrangian gradient vs finite differences", 1e-5);
    for i in 0..count {
        let seed = instance_seed(base, i);
        let result = (|| -> almdp::Result<f64> {
            let net = random_net(seed)?;
            let beta = [0.5, 2.0, 10.0][i % 3];
            let layout = net.spec.layout();
            let exact = lagrangian_gradient(&net.problem, &net.z, &net.multiplier, beta)?.to_flat();
            let fd = fd_gradient(
                |v| {
                    let z = PrimalPoint::from_flat(&layout, v).expect("layout");
                    lagrangian_value(&net.problem, &z, &net.multiplier, beta).unwrap_or(f64::NAN)
                },
                &net.z.to_flat(),
                FD_STEP,
            )?;
            Ok(rel_err(&exact, &fd))
        })();
        match result {
            Ok(d) => rep.record(seed, d),
            Err(e) => rep.fail(seed, e.to_string()),
        }
    }
    rep
}

/// Backpropagation gradient of the sequential loss against central
/// differences.
pub fn backprop_gradient_check(base: u64, count: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("backprop gradient vs finite differences", 1e-5);
    for i in 0..count {
        let seed = instance_seed(base, i);
        let result = (|| -> almdp::Result<f64> {
            let net = random_net(seed)?;
            let mu = net.spec.weight_reg();
            let (_, g) = backprop_grad(&net.spec, &net.weights, &net.data.inputs, &net.data.targets, mu)?;
            let exact: Vec<f64> = g.layers.iter().flat_map(|l| l.iter().copied()).collect();
            let flat: Vec<f64> = net.weights.layers.iter().flat_map(|l| l.iter().copied()).collect();
            let fd = fd_gradient(
                |v| {
                    let mut w = net.weights.clone();
                    let mut off = 0;
                    for l in &mut w.layers {
                        let n = l.len();
                        l.as_mut_slice().copy_from_slice(&v[off..off + n]);
                        off += n;
                    }
                    backprop_grad(&net.spec, &w, &net.data.inputs, &net.data.targets, mu).map_or(f64::NAN, |r| r.0)
                },
                &flat,
                FD_STEP,
            )?;
            Ok(rel_err(&exact, &fd))
        })();
        match result {
            Ok(d) => rep.record(seed, d),
            Err(e) => rep.fail(seed, e.to_string()),
        }
    }
    rep
}

/// Per-instance findings of the Gauss-Newton contract check.
#[derive(Debug, Clone, Default)]
pub struct GnContract {
    pub stationarity: Tally,
    pub armijo: Tally,
    pub monotone: Tally,
    pub descent: Tally,
}

/// Largest observed value and the seeds of failing instances.
#[derive(Debug, Clone)]
pub struct Tally {
    pub max: f64,
    pub failures: Vec<u64>,
}

impl Default for Tally {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, failures: Vec::new() }
    }
}

impl Tally {
    fn record(&mut self, seed: u64, value: f64, ok: bool) {
        if value.is_nan() || value > self.max {
            self.max = value;
        }
        if !ok && !self.failures.contains(&seed) {
            self.failures.push(seed);
        }
    }
}

/// Runs Gauss-Newton on random subproblems (`beta` alternating between 1
/// and 100) to `||grad||_inf <= tol`, checking the Armijo inequality and
/// monotonicity at every accepted step and the descent identity
/// `<grad, p> = -||J p||^2` against the dense Jacobian at every direction.
pub fn gn_contract(base: u64, count: usize, tol: f64) -> almdp::Result<GnContract> {
    let mut out = GnContract::default();
    let opts = GnOptions { keep_iterates: true, ..GnOptions::default() };
    for i in 0..count {
        let seed = instance_seed(base, i);
        let net = random_net(seed)?;
        let beta = if i % 2 == 0 { 1.0 } else { 100.0 };
        let run = gn_run(&net.problem, &net.multiplier, beta, &net.z, tol, &opts)?;
        out.stationarity.record(seed, run.grad_inf, run.status == GnStatus::Converged && run.grad_inf <= tol);
        for (l, step) in run.steps.iter().enumerate() {
            let before = lagrangian_value(&net.problem, &run.iterates[l], &net.multiplier, beta)?;
            let after = lagrangian_value(&net.problem, &run.iterates[l + 1], &net.multiplier, beta)?;
            let stages = build_linearization(&net.problem, &run.iterates[l], &net.multiplier, beta)?;
            // the direction is recomputed here and must reproduce the accepted step
            let p = fdp::fdp_solve(&stages)?.sub(&run.iterates[l]);
            let stepped = run.iterates[l].add_scaled(step.tau, &p);
            let decrease = homogeneous_model_value(&stages, &p);
            let slack = after - (before - opts.eta2 * step.tau * decrease);
            out.armijo.record(seed, slack, slack <= 0.0 && stepped == run.iterates[l + 1]);
            out.monotone.record(seed, after - before, after <= before);

            let sys = dense_system(&stages)?;
            let jp = &sys.jacobian * DVector::from_vec(p.to_flat());
            let g = gn::grad_aug_lagrangian(&net.problem, &run.iterates[l], &net.multiplier, beta)?;
            let lhs = dot(&g.to_flat(), &p.to_flat());
            let rhs = -jp.norm_squared();
            let dev = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
            out.descent.record(seed, dev, dev <= 1e-8);
        }
    }
    Ok(out)
}

/// A random problem with affine stage maps (a linear least-squares problem
/// in the lifted variables), its start point and multiplier.
pub struct RandomAffine {
    pub problem: AffineProblem,
    pub z: PrimalPoint,
    pub multiplier: Vec<f64>,
}

pub fn random_affine(seed: u64) -> almdp::Result<RandomAffine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let state: Vec<usize> = (0..=n + 1).map(|_| rng.random_range(1..=8)).collect();
    let weight: Vec<usize> = (0..=n).map(|_| rng.random_range(1..=6)).collect();
    let mut pm = Vec::new();
    let mut qm = Vec::new();
    let mut h = Vec::new();
    for j in 1..=n + 1 {
        pm.push(Csr::from_dense(&DMatrix::from_fn(state[j], state[j - 1], |_, _| rng.random_range(-1.0..1.0))));
        qm.push(Csr::from_dense(&DMatrix::from_fn(state[j], weight[j - 1], |_, _| rng.random_range(-1.0..1.0))));
        h.push((0..state[j]).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let input = (0..state[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target = (0..state[n + 1]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let problem = AffineProblem::new(pm, qm, h, input, target, rng.random_range(0.05..1.0), rng.random_range(0.05..1.0))?;
    let layout = problem.layout().clone();
    let w = (0..layout.w_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = (0..layout.x_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z = PrimalPoint::from_parts(&layout, w, x)?;
    let multiplier = (0..layout.residual_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(RandomAffine { problem, z, multiplier })
}

/// Minimizer of `L_beta(., lambda)` for an affine problem from its own
/// dense least-squares form (independent of the linearization code):
/// rows `sqrt(beta) (x_j - P_j x_{j-1} - Q_j w_j - h_j + lambda_j / beta)`,
/// `sqrt(rho) (P x_N + Q w + h - y)` and `sqrt(mu) w`.
pub fn affine_ridge_solve(p: &AffineProblem, multiplier: &[f64], beta: f64) -> almdp::Result<Vec<f64>> {
    let layout = p.layout();
    let n = layout.hidden();
    let (wl, xl) = (layout.w_len(), layout.x_len());
    let rows: usize = (1..=n + 1).map(|j| layout.state_dim(j)).sum::<usize>() + wl;
    let mut jac = DMatrix::zeros(rows, wl + xl);
    let mut rhs = DVector::zeros(rows);
    let mut row = 0;
    for j in 1..=n + 1 {
        let s = if j <= n { beta.sqrt() } else { p.output_weight().sqrt() };
        let pj = p.state_maps[j - 1].to_dense();
        let qj = p.weight_maps[j - 1].to_dense();
        let r = layout.state_dim(j);
        let wr = layout.w_range(j);
        for i in 0..r {
            // residual = (x_j) - P x_{j-1} - Q w - (h - lambda/beta)   for j <= N
            //          = P x_N + Q w - (y - h)                          for j = N+1
            let sign = if j <= n { -1.0 } else { 1.0 };
            for (c, col) in wr.clone().enumerate() {
                jac[(row + i, col)] = sign * s * qj[(i, c)];
            }
            let mut b = if j <= n {
                p.offsets[j - 1][i] - multiplier[layout.x_range(j).start + i] / beta
            } else {
                p.target[i] - p.offsets[j - 1][i]
            };
            if j == 1 {
                let px0: f64 = (0..pj.ncols()).map(|c| pj[(i, c)] * p.input[c]).sum();
                b += px0;
            } else {
                let xr = layout.x_range(j - 1);
                for (c, col) in xr.enumerate() {
                    jac[(row + i, wl + col)] = sign * s * pj[(i, c)];
                }
                if j == n + 1 {
                    // no x_j column for the output stage
                }
            }
            if j <= n {
                jac[(row + i, wl + layout.x_range(j).start + i)] = s;
            }
            rhs[row + i] = s * b;
        }
        row += r;
    }
    let smu = p.weight_reg.sqrt();
    for i in 0..wl {
        jac[(row + i, i)] = smu;
    }
    let normal = jac.transpose() * &jac;
    let sol = normal
        .cholesky()
        .ok_or_else(|| almdp::Error::Oracle("ridge normal matrix is not positive definite".into()))?
        .solve(&(jac.transpose() * rhs));
    Ok(sol.as_slice().to_vec())
}

/// Gauss-Newton on affine problems: one direction, unit step, minimizer
/// equal to the dense ridge solution. Returns (iterations, tau, deviation)
/// per instance.
pub fn linear_exactness(base: u64, count: usize, tol: f64) -> almdp::Result<Vec<(u64, usize, f64, f64)>> {
    let mut out = Vec::new();
    for i in 0..count {
        let seed = instance_seed(base, i);
        let inst = random_affine(seed)?;
        let beta = [1.0, 10.0, 100.0][i % 3];
        let run = gn_run(&inst.problem, &inst.multiplier, beta, &inst.z, tol, &GnOptions::default())?;
        let tau = run.steps.first().map_or(f64::NAN, |s| s.tau);
        let reference = affine_ridge_solve(&inst.problem, &inst.multiplier, beta)?;
        out.push((seed, run.iterations, tau, rel_err(&run.z.to_flat(), &reference)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_a_few_instances() {
        assert!(fdp_oracle_equivalence(1, 6, Fault::None).passed());
        assert!(woodbury_identity(1, 3).passed());
        assert!(s_identity(1, 3, Fault::None).passed());
        assert!(m_positive_definite(1, 3).passed());
        assert!(quadratic_completion(1, 3).passed());
        assert!(lagrangian_gradient_check(1, 3).passed());
        assert!(backprop_gradient_check(1, 3).passed());
    }

    #[test]
    fn sign_fault_is_detected() {
        assert!(!s_identity(1, 6, Fault::SSign).passed());
        assert!(!fdp_oracle_equivalence(1, 6, Fault::SSign).passed());
    }

    #[test]
    fn ridge_oracle_matches_model_minimizer() {
        let inst = random_affine(5).unwrap();
        let sys = build_linearization(&inst.problem, &inst.z, &inst.multiplier, 3.0).unwrap();
        let z = fdp::fdp_solve(&sys).unwrap();
        let r = affine_ridge_solve(&inst.problem, &inst.multiplier, 3.0).unwrap();
        assert!(rel_err(&z.to_flat(), &r) < 1e-9);
    }
}
