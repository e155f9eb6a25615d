//! Forward dynamic programming solve of the linearized stagewise problem.
//!
//! The forward pass eliminates `w_j` and `x_{j-1}` stage by stage, carrying
//! the value function `V_j(x) = 1/2 ||M_j^{-1} x - q_j||^2_{M_j} + C_j`; the
//! backward pass recovers the minimizer. `E_j` and `S_j` are only ever
//! applied through cached Cholesky factors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gn::StageSystem;
use crate::linalg::{BlockCholesky, BlockSym};
use crate::problem::PrimalPoint;

/// Factorizations and recursion vectors of one solve.
#[derive(Debug, Clone)]
pub struct FdpWorkspace<'a> {
    stages: &'a StageSystem,
    /// Factor of `(mu_w/rho_j) I + B_j^T B_j`; index `j-1`.
    normal: Vec<BlockCholesky>,
    /// `M_j` and its factor; index `j-1`, `j = 1..=N+1`.
    m: Vec<BlockSym>,
    m_factor: Vec<BlockCholesky>,
    /// `q_0 = x_0, q_1, ..., q_N`
    q: Vec<Vec<f64>>,
    /// `q~_j`, index `j-1`, `j = 1..=N`
    q_tilde: Vec<Vec<f64>>,
    /// `c~_j`, index `j-1`, `j = 1..=N`
    c_tilde: Vec<Vec<f64>>,
    flip_s: bool,
}

impl<'a> FdpWorkspace<'a> {
    /// Factors the weight normal matrices only; `M_j` are added by
    /// [`forward_recursion`].
    fn prepare(stages: &'a StageSystem) -> Result<Self> {
        let mu = stages.weight_reg;
        let mut normal = Vec::with_capacity(stages.stages().len());
        for (idx, st) in stages.stages().iter().enumerate() {
            let s = st.weight_map.ncols();
            let n = BlockSym::assemble(s, mu / st.rho, &[(1.0, &st.weight_map)], None);
            normal.push(n.factor().map_err(|e| Error::Factorization {
                what: "weight normal matrix",
                stage: idx + 1,
                min_eigenvalue: e.min_eigenvalue,
            })?);
        }
        Ok(Self {
            stages,
            normal,
            m: Vec::new(),
            m_factor: Vec::new(),
            q: vec![stages.input.clone()],
            q_tilde: Vec::new(),
            c_tilde: Vec::new(),
            flip_s: false,
        })
    }

    pub fn stages(&self) -> &StageSystem {
        self.stages
    }

    /// Negates every `S_j` application. Only for exercising the self-check.
    #[doc(hidden)]
    pub fn inject_s_sign_fault(&mut self) {
        self.flip_s = true;
    }

    /// `E_j v = ((mu_w/rho_j) I + B_j^T B_j)^{-1} B_j^T v`
    pub fn apply_e(&self, j: usize, v: &[f64]) -> Vec<f64> {
        let st = self.stages.stage(j);
        self.normal[j - 1].solve(&st.weight_map_t().matvec(v))
    }

    /// `G_j v = v - B_j E_j v`
    pub fn apply_g(&self, j: usize, v: &[f64]) -> Vec<f64> {
        let be = self.stages.stage(j).weight_map.matvec(&self.apply_e(j, v));
        v.iter().zip(&be).map(|(a, b)| a - b).collect()
    }

    /// `rho_j G_j v`
    fn apply_rho_g(&self, j: usize, v: &[f64]) -> Vec<f64> {
        let rho = self.stages.stage(j).rho;
        self.apply_g(j, v).into_iter().map(|t| rho * t).collect()
    }

    /// `S_j v` for `v` of size `r_{j-1}`: solve `M_j v' = A_j M_{j-1} v` and
    /// return `M_{j-1}(v - A_j^T v')`. `S_1 = I`.
    pub fn apply_s(&self, j: usize, v: &[f64]) -> Vec<f64> {
        let mut out = if j == 1 {
            v.to_vec()
        } else {
            let a = &self.stages.stage(j).state_map;
            let prev = &self.m[j - 2];
            let vbar = self.m_factor[j - 1].solve(&a.matvec(&prev.matvec(v)));
            let atv = a.tr_matvec(&vbar);
            let diff: Vec<f64> = v.iter().zip(&atv).map(|(a, b)| a - b).collect();
            prev.matvec(&diff)
        };
        if self.flip_s {
            out.iter_mut().for_each(|t| *t = -*t);
        }
        out
    }

    /// `M_j^{-1} v`
    pub fn solve_m(&self, j: usize, v: &[f64]) -> Vec<f64> {
        self.m_factor[j - 1].solve(v)
    }

    /// `M_j`, `1 <= j <= N+1`.
    pub fn m(&self, j: usize) -> &BlockSym {
        &self.m[j - 1]
    }

    pub fn m_dense(&self, j: usize) -> DMatrix<f64> {
        self.m[j - 1].to_dense()
    }

    /// `q_j`, `0 <= j <= N`.
    pub fn q(&self, j: usize) -> &[f64] {
        &self.q[j]
    }

    /// `q~_j`, `1 <= j <= N`.
    pub fn q_tilde(&self, j: usize) -> &[f64] {
        &self.q_tilde[j - 1]
    }

    /// `c~_j = M_j^{-1} c_j`, `1 <= j <= N`.
    pub fn c_tilde(&self, j: usize) -> &[f64] {
        &self.c_tilde[j - 1]
    }

    fn push_m(&mut self, j: usize, m: BlockSym) -> Result<()> {
        let f = m.factor().map_err(|e| Error::Factorization {
            what: "value function matrix",
            stage: j,
            min_eigenvalue: e.min_eigenvalue,
        })?;
        self.m.push(m);
        self.m_factor.push(f);
        Ok(())
    }
}

/// Forms and factors `M_1..=M_{N+1}` and the recursion vectors
/// `c~_j`, `q~_j`, `q_j` for `j = 1..=N`.
pub fn forward_recursion(stages: &StageSystem) -> Result<FdpWorkspace<'_>> {
    forward_with(FdpWorkspace::prepare(stages)?)
}

fn forward_with(mut ws: FdpWorkspace<'_>) -> Result<FdpWorkspace<'_>> {
    let stages = ws.stages;
    let n = stages.hidden();
    let inv_mu = 1.0 / stages.weight_reg;
    let first = stages.stage(1);
    let m1 = BlockSym::assemble(
        first.offset.len(),
        1.0 / first.rho,
        &[(inv_mu, first.weight_map_t())],
        None,
    );
    ws.push_m(1, m1)?;
    for j in 1..=n {
        let st = stages.stage(j);
        let c_tilde = ws.solve_m(j, &st.offset);
        let q_tilde = ws.apply_s(j, &ws.q[j - 1]);
        let mut q = ws.apply_rho_g(j, &st.state_map.matvec(&q_tilde));
        q.iter_mut().zip(&c_tilde).for_each(|(a, b)| *a += b);
        ws.c_tilde.push(c_tilde);
        ws.q_tilde.push(q_tilde);
        ws.q.push(q);

        let next = stages.stage(j + 1);
        let m_next = BlockSym::assemble(
            next.offset.len(),
            1.0 / next.rho,
            &[(inv_mu, next.weight_map_t())],
            Some((&next.state_map, &ws.m[j - 1])),
        );
        ws.push_m(j + 1, m_next)?;
    }
    Ok(ws)
}

/// Recovers the minimizer from a completed forward pass.
pub fn backward_recursion(stages: &StageSystem, ws: &FdpWorkspace<'_>) -> Result<PrimalPoint> {
    let n = stages.hidden();
    if ws.m.len() != n + 1 {
        return Err(Error::Config("backward pass needs a completed forward pass".into()));
    }
    let mut z = PrimalPoint::zeros(stages.layout());

    let last = stages.stage(n + 1);
    let g_c = ws.apply_g(n + 1, &last.offset);
    let x_tilde = ws.apply_s(n + 1, &last.state_map.tr_matvec(&g_c));
    let q_tilde = ws.apply_s(n + 1, &ws.q[n]);
    let x_n: Vec<f64> = q_tilde
        .iter()
        .zip(&x_tilde)
        .map(|(q, x)| q - last.rho * x)
        .collect();
    let mut r = last.state_map.matvec(&x_n);
    r.iter_mut().zip(&last.offset).for_each(|(a, c)| *a = -(*a + c));
    z.w_block_mut(n + 1).copy_from_slice(&ws.apply_e(n + 1, &r));
    z.x_block_mut(n).copy_from_slice(&x_n);

    for j in (2..=n).rev() {
        let st = stages.stage(j);
        let x_j = z.x_block(j).to_vec();
        let shifted: Vec<f64> = x_j.iter().zip(&st.offset).map(|(x, c)| x - c).collect();
        let x_tilde = ws.apply_s(j, &st.state_map.tr_matvec(&ws.apply_g(j, &shifted)));
        let x_prev: Vec<f64> = ws
            .q_tilde(j)
            .iter()
            .zip(&x_tilde)
            .map(|(q, x)| q + st.rho * x)
            .collect();
        let ax = st.state_map.matvec(&x_prev);
        let r: Vec<f64> = shifted.iter().zip(&ax).map(|(s, a)| s - a).collect();
        z.w_block_mut(j).copy_from_slice(&ws.apply_e(j, &r));
        z.x_block_mut(j - 1).copy_from_slice(&x_prev);
    }

    let first = stages.stage(1);
    let ax = first.state_map.matvec(&stages.input);
    let r: Vec<f64> = z
        .x_block(1)
        .iter()
        .zip(&ax)
        .zip(&first.offset)
        .map(|((x, a), c)| x - a - c)
        .collect();
    z.w_block_mut(1).copy_from_slice(&ws.apply_e(1, &r));
    Ok(z)
}

/// Unique minimizer of the linearized problem.
pub fn fdp_solve(stages: &StageSystem) -> Result<PrimalPoint> {
    let ws = forward_recursion(stages)?;
    backward_recursion(stages, &ws)
}

/// Same as [`fdp_solve`] with every `S_j` application negated.
#[doc(hidden)]
pub fn fdp_solve_with_s_sign_fault(stages: &StageSystem) -> Result<PrimalPoint> {
    let mut ws = FdpWorkspace::prepare(stages)?;
    ws.inject_s_sign_fault();
    let ws = forward_with(ws)?;
    backward_recursion(stages, &ws)
}

/// Forward pass with the sign fault; used by the self-check to confirm the
/// identity suites catch it.
#[doc(hidden)]
pub fn forward_recursion_with_s_sign_fault(stages: &StageSystem) -> Result<FdpWorkspace<'_>> {
    let mut ws = FdpWorkspace::prepare(stages)?;
    ws.inject_s_sign_fault();
    forward_with(ws)
}
