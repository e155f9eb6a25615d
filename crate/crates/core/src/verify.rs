//! Independent dense oracles and finite differences for checking the
//! structured solvers. Desk-scale only.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gn::{Stage, StageSystem};
use crate::linalg::Csr;
use crate::problem::PrimalPoint;

/// Dense systems wider than this are refused.
pub const MAX_ORACLE_COLUMNS: usize = 5000;

/// `1/2 ||J z - b||^2` equals the linearized model value at `z = (w, x)`.
///
/// Row block `j` is `sqrt(rho_j) [ -B_j | delta_j I, -A_j ]` (with `A_1 x_0`
/// moved into `b`), followed by the `sqrt(mu_w) I` rows on the weights.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub jacobian: DMatrix<f64>,
    pub rhs: DVector<f64>,
    w_len: usize,
}

impl DenseSystem {
    pub fn weight_columns(&self) -> usize {
        self.w_len
    }

    /// `1/2 ||J z - b||^2`
    pub fn value(&self, z: &[f64]) -> f64 {
        let r = &self.jacobian * DVector::from_column_slice(z) - &self.rhs;
        0.5 * r.norm_squared()
    }

    /// Smallest singular value of `J`.
    pub fn min_singular_value(&self) -> f64 {
        self.jacobian
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn dense_system(stages: &StageSystem) -> Result<DenseSystem> {
    let layout = stages.layout();
    let (w_len, x_len) = (layout.w_len(), layout.x_len());
    let cols = w_len + x_len;
    if cols > MAX_ORACLE_COLUMNS {
        return Err(Error::Oracle(format!(
            "{cols} columns exceeds the {MAX_ORACLE_COLUMNS} column cap"
        )));
    }
    let n = stages.hidden();
    let stage_rows: usize = (1..=n + 1).map(|j| layout.state_dim(j)).sum();
    let rows = stage_rows + w_len;
    let mut jac = DMatrix::zeros(rows, cols);
    let mut rhs = DVector::zeros(rows);
    let mut row0 = 0;
    for j in 1..=n + 1 {
        let st = stages.stage(j);
        let sr = st.rho.sqrt();
        let r = layout.state_dim(j);
        let b = st.weight_map.to_dense();
        let wr = layout.w_range(j);
        for i in 0..r {
            for (c, col) in wr.clone().enumerate() {
                jac[(row0 + i, col)] = -sr * b[(i, c)];
            }
        }
        if j <= n {
            let xr = layout.x_range(j);
            for i in 0..r {
                jac[(row0 + i, w_len + xr.start + i)] = sr;
            }
        }
        let a = st.state_map.to_dense();
        let mut b_j = DVector::from_column_slice(&st.offset);
        if j >= 2 {
            let xr = layout.x_range(j - 1);
            for i in 0..r {
                for (c, col) in xr.clone().enumerate() {
                    jac[(row0 + i, w_len + col)] = -sr * a[(i, c)];
                }
            }
        } else {
            b_j += &a * DVector::from_column_slice(&stages.input);
        }
        rhs.rows_mut(row0, r).copy_from(&(b_j * sr));
        row0 += r;
    }
    let smu = stages.weight_reg.sqrt();
    for i in 0..w_len {
        jac[(stage_rows + i, i)] = smu;
    }
    Ok(DenseSystem {
        jacobian: jac,
        rhs,
        w_len,
    })
}

/// Solves `J^T J z = J^T b` by dense Cholesky.
pub fn dense_solve(stages: &StageSystem, sys: &DenseSystem) -> Result<PrimalPoint> {
    let jt = sys.jacobian.transpose();
    let normal = &jt * &sys.jacobian;
    let rhs = &jt * &sys.rhs;
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::Oracle("normal matrix is not positive definite".into()))?;
    let z = chol.solve(&rhs);
    PrimalPoint::from_flat(stages.layout(), z.as_slice())
}

/// Central differences `(f(z + h e_i) - f(z - h e_i)) / 2h`.
pub fn fd_gradient<F>(f: F, z: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    let mut probe = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteProbe { coordinate: i });
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// `||a - b||_inf / (1 + ||b||_inf)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rel_err length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    diff / (1.0 + scale)
}

/// `((1/rho) I + (1/mu) B B^T)^{-1}`, dense.
pub fn woodbury_dense(b: &DMatrix<f64>, rho: f64, mu: f64) -> DMatrix<f64> {
    let r = b.nrows();
    let m = DMatrix::identity(r, r) / rho + b * b.transpose() / mu;
    m.try_inverse().expect("SPD matrix")
}

/// `rho G = rho (I - B (mu/rho I + B^T B)^{-1} B^T)`, dense.
pub fn rho_g_dense(b: &DMatrix<f64>, rho: f64, mu: f64) -> DMatrix<f64> {
    let s = b.ncols();
    let normal = DMatrix::identity(s, s) * (mu / rho) + b.transpose() * b;
    let e = normal.try_inverse().expect("SPD matrix") * b.transpose();
    (DMatrix::identity(b.nrows(), b.nrows()) - b * e) * rho
}

/// `(M_prev^{-1} + rho A^T G A)^{-1}`, dense.
pub fn s_dense(m_prev: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, rho: f64, mu: f64) -> DMatrix<f64> {
    let inner = m_prev.clone().try_inverse().expect("SPD matrix") + a.transpose() * rho_g_dense(b, rho, mu) * a;
    inner.try_inverse().expect("SPD matrix")
}

/// Both sides of the quadratic completion identity
/// `sum_i ||V_i x - nu_i||^2_{H_i^{-1}}
///   = ||U x - d||^2_{U^{-1}} - ||d||^2_{U^{-1}} + sum_i ||nu_i||^2_{H_i^{-1}}`
/// with `U = sum_i V_i^T H_i^{-1} V_i` and `d = sum_i V_i^T H_i^{-1} nu_i`.
pub fn quadratic_completion_sides(
    h: &[DMatrix<f64>],
    v: &[DMatrix<f64>],
    nu: &[DVector<f64>],
    x: &DVector<f64>,
) -> Result<(f64, f64)> {
    if h.len() != v.len() || h.len() != nu.len() || h.is_empty() {
        return Err(Error::Config("mismatched term counts".into()));
    }
    let p = x.len();
    let mut u = DMatrix::zeros(p, p);
    let mut d = DVector::zeros(p);
    let mut lhs = 0.0;
    let mut nu_sum = 0.0;
    for ((hi, vi), ni) in h.iter().zip(v).zip(nu) {
        let hinv = hi
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Oracle("H_i is singular".into()))?;
        let r = vi * x - ni;
        lhs += r.dot(&(&hinv * &r));
        nu_sum += ni.dot(&(&hinv * ni));
        u += vi.transpose() * &hinv * vi;
        d += vi.transpose() * &hinv * ni;
    }
    let uinv = u
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Oracle("U is singular".into()))?;
    let ux = &u * x - &d;
    let rhs = ux.dot(&(&uinv * &ux)) - d.dot(&(&uinv * &d)) + nu_sum;
    Ok((lhs, rhs))
}

/// Shape limits for [`random_stage_system`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSystemShape {
    pub hidden: usize,
    pub max_state: usize,
    pub max_weight: usize,
    pub beta: f64,
    pub weight_reg: f64,
}

/// A linearized system with dense random `A_j`, `B_j`, `c_j`, `x_0`
/// (entries uniform in `[-1, 1]`), `rho_j = beta` for `j <= N` and a random
/// output weight in `[0.05, 1]`.
pub fn random_stage_system<R: Rng + ?Sized>(rng: &mut R, shape: &RandomSystemShape) -> Result<StageSystem> {
    let n = shape.hidden;
    let dims: Vec<usize> = (0..=n + 1).map(|_| rng.random_range(1..=shape.max_state)).collect();
    let mut stages = Vec::with_capacity(n + 1);
    for j in 1..=n + 1 {
        let s = rng.random_range(1..=shape.max_weight);
        let a = DMatrix::from_fn(dims[j], dims[j - 1], |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(dims[j], s, |_, _| rng.random_range(-1.0..1.0));
        let c = (0..dims[j]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = if j <= n { shape.beta } else { rng.random_range(0.05..1.0) };
        stages.push(Stage::new(Csr::from_dense(&a), Csr::from_dense(&b), c, rho));
    }
    let x0 = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    StageSystem::new(stages, x0, shape.weight_reg)
}
