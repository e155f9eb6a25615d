//! The lifted (multiple-shooting) problem shared by the network trainer and
//! the generic solvers.
//!
//! A problem has `N+1` stages. Stage `j` maps `(w_j, x_{j-1})` to a vector of
//! length `r_j`; for `j <= N` the states `x_j` are decision variables tied to
//! the stage output by an equality constraint, while the output of stage
//! `N+1` is compared with the targets in the cost.

use crate::error::{check_len, Result};
use crate::linalg::{dot, norm_sq, Csr};

/// Block sizes and offsets of the condensed variable `z = (w, x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// `r_0 ..= r_{N+1}`
    state: Vec<usize>,
    /// `s_1 ..= s_{N+1}` stored at indices `1..=N+1` (index 0 unused).
    weight: Vec<usize>,
    w_off: Vec<usize>,
    x_off: Vec<usize>,
}

impl Layout {
    /// `state` holds `r_0..=r_{N+1}`, `weight` holds `s_1..=s_{N+1}`.
    pub fn new(state: Vec<usize>, weight: Vec<usize>) -> Self {
        assert!(state.len() >= 2, "at least one stage");
        assert_eq!(weight.len() + 1, state.len(), "one weight block per stage");
        let mut w_off = vec![0; weight.len() + 2];
        for j in 1..=weight.len() {
            w_off[j + 1] = w_off[j] + weight[j - 1];
        }
        let hidden = state.len() - 2;
        let mut x_off = vec![0; hidden + 2];
        for j in 1..=hidden {
            x_off[j + 1] = x_off[j] + state[j];
        }
        let mut weight_full = vec![0];
        weight_full.extend(weight);
        Self {
            state,
            weight: weight_full,
            w_off,
            x_off,
        }
    }

    /// Number of constrained (hidden) stages, `N`.
    pub fn hidden(&self) -> usize {
        self.state.len() - 2
    }

    /// Total number of stages, `N+1`.
    pub fn stages(&self) -> usize {
        self.state.len() - 1
    }

    pub fn state_dim(&self, j: usize) -> usize {
        self.state[j]
    }

    pub fn weight_dim(&self, j: usize) -> usize {
        self.weight[j]
    }

    pub fn w_range(&self, j: usize) -> std::ops::Range<usize> {
        self.w_off[j]..self.w_off[j + 1]
    }

    pub fn x_range(&self, j: usize) -> std::ops::Range<usize> {
        self.x_off[j]..self.x_off[j + 1]
    }

    pub fn w_len(&self) -> usize {
        *self.w_off.last().unwrap()
    }

    pub fn x_len(&self) -> usize {
        *self.x_off.last().unwrap()
    }

    /// Length of the constraint residual, equal to `x_len`.
    pub fn residual_len(&self) -> usize {
        self.x_len()
    }
}

/// The condensed variable `z = (w, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    layout: Layout,
}

impl PrimalPoint {
    pub fn zeros(layout: &Layout) -> Self {
        Self {
            w: vec![0.0; layout.w_len()],
            x: vec![0.0; layout.x_len()],
            layout: layout.clone(),
        }
    }

    pub fn from_parts(layout: &Layout, w: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        check_len("primal point weights", layout.w_len(), w.len())?;
        check_len("primal point states", layout.x_len(), x.len())?;
        Ok(Self {
            w,
            x,
            layout: layout.clone(),
        })
    }

    /// Splits a flat `(w, x)` vector.
    pub fn from_flat(layout: &Layout, flat: &[f64]) -> Result<Self> {
        check_len("flat primal point", layout.w_len() + layout.x_len(), flat.len())?;
        let (w, x) = flat.split_at(layout.w_len());
        Self::from_parts(layout, w.to_vec(), x.to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w.len() + self.x.len());
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.x);
        out
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn w_block(&self, j: usize) -> &[f64] {
        &self.w[self.layout.w_range(j)]
    }

    pub fn w_block_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.layout.w_range(j);
        &mut self.w[r]
    }

    /// State block `j` for `1 <= j <= N`.
    pub fn x_block(&self, j: usize) -> &[f64] {
        &self.x[self.layout.x_range(j)]
    }

    pub fn x_block_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.layout.x_range(j);
        &mut self.x[r]
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &PrimalPoint) -> PrimalPoint {
        debug_assert_eq!(self.layout, other.layout);
        let mut out = self.clone();
        crate::linalg::axpy(s, &other.w, &mut out.w);
        crate::linalg::axpy(s, &other.x, &mut out.x);
        out
    }

    /// `self - other`
    pub fn sub(&self, other: &PrimalPoint) -> PrimalPoint {
        self.add_scaled(-1.0, other)
    }
}

/// A stagewise problem: stage maps, fixed input, targets and regularization.
pub trait StagewiseProblem {
    fn layout(&self) -> &Layout;

    /// `x_0`, length `r_0`.
    fn input(&self) -> &[f64];

    /// `y`, length `r_{N+1}`.
    fn target(&self) -> &[f64];

    /// `mu_w`
    fn weight_reg(&self) -> f64;

    /// Weight of the output misfit, `1/m` for the network problem.
    fn output_weight(&self) -> f64;

    /// `H_j(w_j, x_{j-1})`
    fn stage(&self, j: usize, w_j: &[f64], x_prev: &[f64]) -> Result<Vec<f64>>;

    /// `(J_x H_j, J_w H_j)` at `(w_j, x_{j-1})`.
    fn stage_jacobians(&self, j: usize, w_j: &[f64], x_prev: &[f64]) -> Result<(Csr, Csr)>;
}

/// State `x_j` of `z`, where `x_0` comes from the problem.
pub(crate) fn state<'a, P: StagewiseProblem + ?Sized>(
    problem: &'a P,
    z: &'a PrimalPoint,
    j: usize,
) -> &'a [f64] {
    if j == 0 {
        problem.input()
    } else {
        z.x_block(j)
    }
}

fn check_point<P: StagewiseProblem + ?Sized>(problem: &P, z: &PrimalPoint) -> Result<()> {
    let layout = problem.layout();
    check_len("primal point weights", layout.w_len(), z.w.len())?;
    check_len("primal point states", layout.x_len(), z.x.len())
}

/// Stage outputs and constraint residual at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `F(z)`, the `N` blocks `x_j - H_j` concatenated.
    pub residual: Vec<f64>,
    /// `H_{N+1}(w_{N+1}, x_N) - y`
    pub output_error: Vec<f64>,
}

pub fn evaluate<P: StagewiseProblem + ?Sized>(problem: &P, z: &PrimalPoint) -> Result<Evaluation> {
    check_point(problem, z)?;
    let layout = problem.layout();
    let n = layout.hidden();
    let mut residual = Vec::with_capacity(layout.residual_len());
    for j in 1..=n {
        let h = problem.stage(j, z.w_block(j), state(problem, z, j - 1))?;
        residual.extend(z.x_block(j).iter().zip(&h).map(|(x, h)| x - h));
    }
    let out = problem.stage(n + 1, z.w_block(n + 1), state(problem, z, n))?;
    let output_error = out.iter().zip(problem.target()).map(|(h, y)| h - y).collect();
    Ok(Evaluation {
        residual,
        output_error,
    })
}

/// `F(z)`
pub fn residual<P: StagewiseProblem + ?Sized>(problem: &P, z: &PrimalPoint) -> Result<Vec<f64>> {
    Ok(evaluate(problem, z)?.residual)
}

fn cost_from(problem: &(impl StagewiseProblem + ?Sized), z: &PrimalPoint, e: &Evaluation) -> f64 {
    0.5 * problem.output_weight() * norm_sq(&e.output_error) + 0.5 * problem.weight_reg() * norm_sq(&z.w)
}

/// `f(z)`
pub fn cost<P: StagewiseProblem + ?Sized>(problem: &P, z: &PrimalPoint) -> Result<f64> {
    let e = evaluate(problem, z)?;
    Ok(cost_from(problem, z, &e))
}

/// `f(z) + <lambda, F(z)> + beta/2 ||F(z)||^2`; `beta = 0` gives the plain
/// Lagrangian.
pub fn lagrangian_value<P: StagewiseProblem + ?Sized>(
    problem: &P,
    z: &PrimalPoint,
    multiplier: &[f64],
    beta: f64,
) -> Result<f64> {
    check_len("multiplier", problem.layout().residual_len(), multiplier.len())?;
    let e = evaluate(problem, z)?;
    Ok(cost_from(problem, z, &e) + dot(multiplier, &e.residual) + 0.5 * beta * norm_sq(&e.residual))
}

/// Gradient of [`lagrangian_value`] with respect to `z`.
///
/// With `g_j = lambda_j + beta F_j` for `j <= N` and
/// `g_{N+1} = -(output_weight) (H_{N+1} - y)`, the state block `x_j` receives
/// `g_j - (J_x H_{j+1})^T g_{j+1}` and the weight block `w_j` receives
/// `-(J_w H_j)^T g_j + mu_w w_j`.
pub fn lagrangian_gradient<P: StagewiseProblem + ?Sized>(
    problem: &P,
    z: &PrimalPoint,
    multiplier: &[f64],
    beta: f64,
) -> Result<PrimalPoint> {
    check_len("multiplier", problem.layout().residual_len(), multiplier.len())?;
    let layout = problem.layout();
    let n = layout.hidden();
    let e = evaluate(problem, z)?;
    let mut grad = PrimalPoint::zeros(layout);
    let mu = problem.weight_reg();
    for j in 1..=n + 1 {
        let g: Vec<f64> = if j <= n {
            let r = layout.x_range(j);
            multiplier[r.clone()]
                .iter()
                .zip(&e.residual[r])
                .map(|(l, f)| l + beta * f)
                .collect()
        } else {
            e.output_error.iter().map(|d| -problem.output_weight() * d).collect()
        };
        let (jx, jw) = problem.stage_jacobians(j, z.w_block(j), state(problem, z, j - 1))?;
        let gw = jw.tr_matvec(&g);
        for ((o, gwi), wi) in grad.w_block_mut(j).iter_mut().zip(&gw).zip(z.w_block(j)) {
            *o = -gwi + mu * wi;
        }
        if j <= n {
            for (o, gi) in grad.x_block_mut(j).iter_mut().zip(&g) {
                *o += gi;
            }
        }
        if j >= 2 {
            let gx = jx.tr_matvec(&g);
            for (o, v) in grad.x_block_mut(j - 1).iter_mut().zip(&gx) {
                *o -= v;
            }
        }
    }
    Ok(grad)
}

/// Stage maps `H_j(w_j, x_{j-1}) = P_j x_{j-1} + Q_j w_j + h_j`.
///
/// With affine stages the lifted objective is a linear least-squares problem.
#[derive(Debug, Clone)]
pub struct AffineProblem {
    layout: Layout,
    pub state_maps: Vec<Csr>,
    pub weight_maps: Vec<Csr>,
    pub offsets: Vec<Vec<f64>>,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub weight_reg: f64,
    pub output_weight: f64,
}

impl AffineProblem {
    /// Stage vectors are indexed from 0 for stage 1.
    pub fn new(
        state_maps: Vec<Csr>,
        weight_maps: Vec<Csr>,
        offsets: Vec<Vec<f64>>,
        input: Vec<f64>,
        target: Vec<f64>,
        weight_reg: f64,
        output_weight: f64,
    ) -> Result<Self> {
        let stages = state_maps.len();
        check_len("affine weight maps", stages, weight_maps.len())?;
        check_len("affine offsets", stages, offsets.len())?;
        let mut state = vec![input.len()];
        let mut weight = Vec::with_capacity(stages);
        for j in 0..stages {
            check_len("affine state map columns", state[j], state_maps[j].ncols())?;
            let r = state_maps[j].nrows();
            check_len("affine weight map rows", r, weight_maps[j].nrows())?;
            check_len("affine offset", r, offsets[j].len())?;
            state.push(r);
            weight.push(weight_maps[j].ncols());
        }
        check_len("affine target", *state.last().unwrap(), target.len())?;
        Ok(Self {
            layout: Layout::new(state, weight),
            state_maps,
            weight_maps,
            offsets,
            input,
            target,
            weight_reg,
            output_weight,
        })
    }
}

impl StagewiseProblem for AffineProblem {
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
        self.weight_reg
    }

    fn output_weight(&self) -> f64 {
        self.output_weight
    }

    fn stage(&self, j: usize, w_j: &[f64], x_prev: &[f64]) -> Result<Vec<f64>> {
        check_len("affine stage weights", self.layout.weight_dim(j), w_j.len())?;
        check_len("affine stage state", self.layout.state_dim(j - 1), x_prev.len())?;
        let mut out = self.state_maps[j - 1].matvec(x_prev);
        let qw = self.weight_maps[j - 1].matvec(w_j);
        for ((o, q), h) in out.iter_mut().zip(qw).zip(&self.offsets[j - 1]) {
            *o += q + h;
        }
        Ok(out)
    }

    fn stage_jacobians(&self, j: usize, _w_j: &[f64], _x_prev: &[f64]) -> Result<(Csr, Csr)> {
        Ok((self.state_maps[j - 1].clone(), self.weight_maps[j - 1].clone()))
    }
}
