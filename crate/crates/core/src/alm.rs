//! Outer augmented Lagrangian loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gn::{self, EvalCounts, GnOptions, GnStatus};
use crate::linalg::{norm_inf, norm_sq};
use crate::net::{Dataset, NetworkProblem, NetworkSpec, Weights};
use crate::problem::{self, PrimalPoint, StagewiseProblem};

/// `beta_0 = BETA0_COST_FACTOR * f(z0)` unless a fixed value is configured.
pub const BETA0_COST_FACTOR: f64 = 1e-3;

/// Largest residual a starting point may have.
pub const FEASIBLE_START_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlmConfig {
    /// Required feasibility contraction factor, `0 < gamma < 1`.
    pub gamma: f64,
    /// Exponent of the penalty floor `beta_0 (k+1)^alpha`, `> 1`.
    pub alpha: f64,
    /// Penalty growth factor, `> 1`.
    pub xi: f64,
    /// Final feasibility tolerance.
    pub eps: f64,
    /// Stationarity tolerance at termination and floor of the inner schedule.
    pub eps_bar: f64,
    /// Inner tolerance of the first outer iteration.
    pub eps0: f64,
    /// Fixed initial penalty; `None` uses `0.001 f(z0)`.
    pub beta0: Option<f64>,
    pub max_outer: usize,
    pub eta1: f64,
    pub eta2: f64,
    pub max_inner: usize,
    pub max_backtracks: usize,
    /// Record wall-clock times in the trace; zeros otherwise.
    pub timings: bool,
    /// Keep per-iteration points in the outcome.
    #[serde(skip)]
    pub record_history: bool,
}

impl Default for AlmConfig {
    fn default() -> Self {
        let gn = GnOptions::default();
        Self {
            gamma: 0.5,
            alpha: 2.0,
            xi: 2.0,
            eps: 1e-3,
            eps_bar: 1e-2,
            eps0: 1e-1,
            beta0: None,
            max_outer: 50,
            eta1: gn.eta1,
            eta2: gn.eta2,
            max_inner: gn.max_inner,
            max_backtracks: gn.max_backtracks,
            timings: true,
            record_history: false,
        }
    }
}

impl AlmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.alpha > 1.0) || !(self.xi > 1.0) {
            return bad(format!("alpha and xi must exceed 1, got {} and {}", self.alpha, self.xi));
        }
        for (name, v) in [("eps", self.eps), ("eps_bar", self.eps_bar), ("eps0", self.eps0)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(b) = self.beta0 {
            if !(b > 0.0) || !b.is_finite() {
                return bad(format!("beta0 must be positive, got {b}"));
            }
        }
        if !(self.eta1 > 0.0 && self.eta1 < 1.0) || !(self.eta2 > 0.0 && self.eta2 < 1.0) {
            return bad(format!("eta1 and eta2 must lie in (0, 1), got {} and {}", self.eta1, self.eta2));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("max_outer and max_inner must be at least 1".into());
        }
        Ok(())
    }

    pub fn gn_options(&self) -> GnOptions {
        GnOptions {
            eta1: self.eta1,
            eta2: self.eta2,
            max_inner: self.max_inner,
            max_backtracks: self.max_backtracks,
            keep_iterates: false,
        }
    }
}

/// One outer iteration; `f`, `feas_inf` and `grad_inf` are measured at
/// `z^{k+1}` with the updated multiplier, `beta` and `eps_k` are the values
/// the iteration ran with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub inner_iters: usize,
    pub f: f64,
    pub feas_inf: f64,
    pub grad_inf: f64,
    pub beta: f64,
    pub eps_k: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlmStatus {
    Converged,
    MaxOuterReached,
    InnerFailure,
}

impl std::fmt::Display for AlmStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlmStatus::Converged => "converged",
            AlmStatus::MaxOuterReached => "max_outer_reached",
            AlmStatus::InnerFailure => "inner_failure",
        })
    }
}

/// Points of one outer iteration, kept when `record_history` is set.
#[derive(Debug, Clone)]
pub struct OuterRecord {
    /// Safeguarded start of the inner solve.
    pub start: PrimalPoint,
    /// Inner solver output `z^{k+1}`.
    pub z: PrimalPoint,
    /// `lambda^k`
    pub multiplier: Vec<f64>,
    pub beta: f64,
    pub eps_k: f64,
    pub inner_status: GnStatus,
}

#[derive(Debug, Clone)]
pub struct AlmOutcome {
    pub z: PrimalPoint,
    pub multiplier: Vec<f64>,
    pub status: AlmStatus,
    pub trace: Vec<TraceRow>,
    pub beta0: f64,
    pub f0: f64,
    /// Augmented Lagrangian and gradient evaluations, inner solves included.
    pub counts: EvalCounts,
    /// Total Gauss-Newton direction solves.
    pub gn_iters: usize,
    pub history: Vec<OuterRecord>,
}

impl AlmOutcome {
    pub fn outer_iters(&self) -> usize {
        self.trace.len()
    }
}

/// `f(z) + <lambda, F(z)> + beta/2 ||F(z)||^2` for a network.
pub fn aug_lagrangian(spec: &NetworkSpec, z: &PrimalPoint, multiplier: &[f64], beta: f64, data: &Dataset) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("penalty must be nonnegative, got {beta}")));
    }
    problem::lagrangian_value(&NetworkProblem::new(spec, data)?, z, multiplier, beta)
}

/// `z^k` if `L_beta(z^k, lambda^k) <= f(z^0)`, else `z^0`.
pub fn safeguard_select<'a>(z_k: &'a PrimalPoint, z_0: &'a PrimalPoint, value_at_z_k: f64, f_z0: f64) -> &'a PrimalPoint {
    if value_at_z_k <= f_z0 {
        z_k
    } else {
        z_0
    }
}

/// `lambda + beta F`
pub fn multiplier_update(multiplier: &[f64], beta: f64, residual: &[f64]) -> Vec<f64> {
    assert_eq!(multiplier.len(), residual.len(), "multiplier and residual lengths");
    multiplier.iter().zip(residual).map(|(l, f)| l + beta * f).collect()
}

/// Keeps `beta` when feasibility contracted by `gamma`, otherwise
/// `max(xi beta, beta_0 (k+1)^alpha)`.
#[allow(clippy::too_many_arguments)]
pub fn penalty_update(beta: f64, beta0: f64, k: usize, xi: f64, alpha: f64, gamma: f64, feas_now: f64, feas_prev: f64) -> f64 {
    if feas_now <= gamma * feas_prev {
        beta
    } else {
        (xi * beta).max(beta0 * ((k + 1) as f64).powf(alpha))
    }
}

/// `max(eps_bar, eps_prev / 2)`
pub fn epsilon_schedule(eps_prev: f64, eps_bar: f64) -> f64 {
    eps_bar.max(0.5 * eps_prev)
}

/// Trains a network from `init_weights`, starting at the unrolled point.
pub fn alm_run(spec: &NetworkSpec, data: &Dataset, config: &AlmConfig, init_weights: &Weights) -> Result<AlmOutcome> {
    let problem = NetworkProblem::new(spec, data)?;
    let z0 = problem.feasible_point(init_weights)?;
    alm_run_problem(&problem, z0, config)
}

/// The outer loop on any stagewise problem from a feasible `z0`.
pub fn alm_run_problem<P: StagewiseProblem + ?Sized>(problem: &P, z0: PrimalPoint, config: &AlmConfig) -> Result<AlmOutcome> {
    config.validate()?;
    let started = Instant::now();
    let elapsed_ms = || {
        if config.timings {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let e0 = problem::evaluate(problem, &z0)?;
    let feas0 = norm_inf(&e0.residual);
    if !(feas0 <= FEASIBLE_START_TOL) {
        return Err(Error::InfeasibleStart(feas0));
    }
    let f0 = 0.5 * problem.output_weight() * norm_sq(&e0.output_error) + 0.5 * problem.weight_reg() * norm_sq(&z0.w);
    let beta0 = config.beta0.unwrap_or(BETA0_COST_FACTOR * f0);
    if !(beta0 > 0.0) || !beta0.is_finite() {
        return Err(Error::Config(format!("initial penalty must be positive, got {beta0} (f(z0) = {f0})")));
    }

    let gn_opts = config.gn_options();
    let mut counts = EvalCounts::default();
    let mut gn_iters = 0;
    let mut trace = Vec::new();
    let mut history = Vec::new();
    let mut multiplier = vec![0.0; problem.layout().residual_len()];
    let mut beta = beta0;
    let mut eps_k = config.eps0;
    let mut feas_prev = feas0;
    let mut z = z0.clone();
    let ctx = |k: usize| move |e: Error| Error::Outer { iteration: k, source: Box::new(e) };

    for k in 0..config.max_outer {
        counts.lagrangian += 1;
        let value = problem::lagrangian_value(problem, &z, &multiplier, beta).map_err(ctx(k))?;
        let start = safeguard_select(&z, &z0, value, f0).clone();
        let inner = gn::gn_run(problem, &multiplier, beta, &start, eps_k, &gn_opts).map_err(ctx(k))?;
        counts += inner.counts;
        gn_iters += inner.iterations;
        if config.record_history {
            history.push(OuterRecord {
                start,
                z: inner.z.clone(),
                multiplier: multiplier.clone(),
                beta,
                eps_k,
                inner_status: inner.status,
            });
        }
        z = inner.z;
        let e = problem::evaluate(problem, &z).map_err(ctx(k))?;
        let feas = norm_inf(&e.residual);
        let f = 0.5 * problem.output_weight() * norm_sq(&e.output_error) + 0.5 * problem.weight_reg() * norm_sq(&z.w);

        if inner.status != GnStatus::Converged {
            trace.push(TraceRow {
                k,
                inner_iters: inner.iterations,
                f,
                feas_inf: feas,
                grad_inf: inner.grad_inf,
                beta,
                eps_k,
                wall_ms: elapsed_ms(),
            });
            return Ok(AlmOutcome {
                z,
                multiplier,
                status: AlmStatus::InnerFailure,
                trace,
                beta0,
                f0,
                counts,
                gn_iters,
                history,
            });
        }

        multiplier = multiplier_update(&multiplier, beta, &e.residual);
        counts.gradient += 1;
        let grad = norm_inf(&problem::lagrangian_gradient(problem, &z, &multiplier, 0.0).map_err(ctx(k))?.to_flat());
        trace.push(TraceRow {
            k,
            inner_iters: inner.iterations,
            f,
            feas_inf: feas,
            grad_inf: grad,
            beta,
            eps_k,
            wall_ms: elapsed_ms(),
        });
        if feas <= config.eps && grad <= config.eps_bar {
            return Ok(AlmOutcome {
                z,
                multiplier,
                status: AlmStatus::Converged,
                trace,
                beta0,
                f0,
                counts,
                gn_iters,
                history,
            });
        }
        beta = penalty_update(beta, beta0, k, config.xi, config.alpha, config.gamma, feas, feas_prev);
        feas_prev = feas;
        eps_k = epsilon_schedule(eps_k, config.eps_bar);
    }
    Ok(AlmOutcome {
        z,
        multiplier,
        status: AlmStatus::MaxOuterReached,
        trace,
        beta0,
        f0,
        counts,
        gn_iters,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::linalg::dot;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_instance(seed: u64) -> (NetworkSpec, Dataset, Weights) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = NetworkSpec::with_output_activation(vec![3, 4, 1], Activation::Softplus, Activation::Identity, 6, 0.1).unwrap();
        let a = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(1, 6, |_, _| rng.random_range(-1.0..1.0));
        let w = Weights {
            layers: spec.dims().windows(2).map(|d| DMatrix::from_fn(d[1], d[0], |_, _| rng.random_range(-0.5..0.5))).collect(),
        };
        (spec, Dataset::new(a, y).unwrap(), w)
    }

    #[test]
    fn aug_lagrangian_forms_agree() {
        let (spec, data, w) = small_instance(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = NetworkProblem::new(&spec, &data).unwrap();
        let mut z = p.feasible_point(&w).unwrap();
        let f_feasible = problem::cost(&p, &z).unwrap();
        let lam: Vec<f64> = (0..z.x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(aug_lagrangian(&spec, &z, &lam, 3.0, &data).unwrap(), f_feasible);
        z.x.iter_mut().for_each(|x| *x += rng.random_range(-0.3..0.3));
        let beta = 2.0;
        let f = problem::cost(&p, &z).unwrap();
        let r = problem::residual(&p, &z).unwrap();
        let zero = vec![0.0; lam.len()];
        let plain = aug_lagrangian(&spec, &z, &zero, beta, &data).unwrap();
        assert!((plain - (f + 0.5 * beta * norm_sq(&r))).abs() < 1e-12);
        let direct = aug_lagrangian(&spec, &z, &lam, beta, &data).unwrap();
        let shifted: Vec<f64> = r.iter().zip(&lam).map(|(f, l)| f + l / beta).collect();
        let completed = f + 0.5 * beta * norm_sq(&shifted) - norm_sq(&lam) / (2.0 * beta);
        assert!((direct - completed).abs() <= 1e-10 * direct.abs().max(1.0));
        assert!((direct - (f + dot(&lam, &r) + 0.5 * beta * norm_sq(&r))).abs() < 1e-12);
    }

    #[test]
    fn safeguard_examples() {
        let l = crate::problem::Layout::new(vec![1, 1, 1], vec![1, 1]);
        let zk = PrimalPoint::from_parts(&l, vec![1.0, 1.0], vec![1.0]).unwrap();
        let z0 = PrimalPoint::zeros(&l);
        assert_eq!(safeguard_select(&zk, &z0, 3.0, 2.0), &z0);
        assert_eq!(safeguard_select(&zk, &z0, 1.5, 2.0), &zk);
        assert_eq!(safeguard_select(&zk, &z0, 2.0, 2.0), &zk);
    }

    #[test]
    fn multiplier_update_examples() {
        assert_eq!(multiplier_update(&[0.0, 0.0], 2.0, &[1.0, -1.0]), vec![2.0, -2.0]);
        assert_eq!(multiplier_update(&[0.5, 3.0], 7.0, &[0.0, 0.0]), vec![0.5, 3.0]);
    }

    #[test]
    fn penalty_update_examples() {
        assert_eq!(penalty_update(1.0, 1.0, 0, 2.0, 2.0, 0.5, 0.4, 1.0), 1.0);
        assert_eq!(penalty_update(1.0, 1.0, 0, 2.0, 2.0, 0.5, 0.6, 1.0), 2.0);
        assert_eq!(penalty_update(1.0, 1.0, 3, 2.0, 2.0, 0.5, 0.6, 1.0), 16.0);
    }

    #[test]
    fn epsilon_schedule_examples() {
        assert_eq!(epsilon_schedule(0.1, 0.01), 0.05);
        assert_eq!(epsilon_schedule(0.015, 0.01), 0.01);
        assert_eq!(epsilon_schedule(0.01, 0.01), 0.01);
    }

    #[test]
    fn config_validation() {
        assert!(AlmConfig::default().validate().is_ok());
        for bad in [
            AlmConfig { gamma: 1.0, ..Default::default() },
            AlmConfig { alpha: 1.0, ..Default::default() },
            AlmConfig { xi: 0.5, ..Default::default() },
            AlmConfig { beta0: Some(0.0), ..Default::default() },
            AlmConfig { eps: 0.0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let (spec, data, w) = small_instance(3);
        let p = NetworkProblem::new(&spec, &data).unwrap();
        let mut z = p.feasible_point(&w).unwrap();
        z.x[0] += 1e-6;
        assert!(matches!(alm_run_problem(&p, z, &AlmConfig::default()), Err(Error::InfeasibleStart(_))));
    }

    #[test]
    fn zero_cost_start_needs_explicit_penalty() {
        // zero weights and zero targets: f(z0) = 0, so the relative rule fails
        let spec = NetworkSpec::with_output_activation(vec![2, 3, 1], Activation::Tanh, Activation::Identity, 4, 0.1).unwrap();
        let data = Dataset::new(DMatrix::from_element(2, 4, 0.3), DMatrix::zeros(1, 4)).unwrap();
        let w = Weights::zeros(&spec);
        assert!(matches!(alm_run(&spec, &data, &AlmConfig::default(), &w), Err(Error::Config(_))));
        // already stationary with a fixed penalty: one outer iteration, no direction solves
        let cfg = AlmConfig { beta0: Some(1.0), ..Default::default() };
        let out = alm_run(&spec, &data, &cfg, &w).unwrap();
        assert_eq!(out.status, AlmStatus::Converged);
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.gn_iters, 0);
    }

    #[test]
    fn small_problem_converges_with_monotone_penalty() {
        let (spec, data, w) = small_instance(4);
        let cfg = AlmConfig { timings: false, ..Default::default() };
        let out = alm_run(&spec, &data, &cfg, &w).unwrap();
        assert_eq!(out.status, AlmStatus::Converged);
        let last = out.trace.last().unwrap();
        assert!(last.feas_inf <= cfg.eps && last.grad_inf <= cfg.eps_bar);
        for pair in out.trace.windows(2) {
            assert!(pair[1].beta >= pair[0].beta);
            let expected = penalty_update(pair[0].beta, out.beta0, pair[0].k, cfg.xi, cfg.alpha, cfg.gamma, pair[0].feas_inf, if pair[0].k == 0 { 0.0 } else { out.trace[pair[0].k - 1].feas_inf });
            assert_eq!(pair[1].beta, expected);
        }
        assert!(out.trace.iter().all(|r| r.wall_ms == 0.0));
    }
}
