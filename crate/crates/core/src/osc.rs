//! Ordered subspace clustering.
//!
//! Solves
//!
//! ```text
//! min ½‖X − XZ‖²_F + λ₁‖Z‖₁ + λ₂‖ZR‖₁,₂
//! ```
//!
//! by ADMM with the splits `J = Z` and `S = ZR`. `R` is the n×(n−1)
//! difference operator, so column j of `ZR` is `z_{j+1} − z_j`.
//!
//! The Z-update is the Sylvester equation
//! `(XᵀX + ρI) Z + ρ Z RRᵀ = C`. `RRᵀ` is the path-graph Laplacian, which the
//! orthonormal DCT-II basis diagonalizes, and `XᵀX` has rank at most m. Both
//! facts together turn every solve into two fast row transforms plus two
//! thin r×n×n products, instead of an n×n factorization per iteration.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustdct::{DctPlanner, TransformType2And3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Forces diag(Z) = 0 (the SSC constraint). Off for OSC proper.
    #[serde(default)]
    pub zero_diagonal: bool,
    /// Residual-balancing ρ adaptation.
    #[serde(default = "yes")]
    pub adapt_rho: bool,
}

fn yes() -> bool {
    true
}

impl Default for OscConfig {
    fn default() -> Self {
        OscConfig { lambda1: 0.1, lambda2: 1.0, rho: 1.0, max_iter: 300, tol: 1e-4, zero_diagonal: false, adapt_rho: true }
    }
}

impl OscConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        // λ₂ = 0 is allowed so the solver doubles as an SSC baseline
        if !positive(self.lambda1) || !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) || !positive(self.rho) || !positive(self.tol) {
            return Err(Error::InvalidParameter(format!("osc weights must be positive: {self:?}")));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("osc max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OscSolution {
    /// The sparse split variable at termination.
    pub z: DMatrix<f64>,
    /// `X − XZ`.
    pub e: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: Vec<f64>,
    pub primal_residual: Vec<f64>,
    pub dual_residual: Vec<f64>,
    pub final_rho: f64,
}

/// The n×(n−1) difference operator.
pub fn build_r(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::TooSmall { needed: 2, got: n });
    }
    let mut r = DMatrix::zeros(n, n - 1);
    for i in 0..n - 1 {
        r[(i, i)] = -1.0;
        r[(i + 1, i)] = 1.0;
    }
    Ok(r)
}

/// `ZR` without forming R.
pub fn times_r(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.ncols();
    if n < 2 {
        return DMatrix::zeros(z.nrows(), 0);
    }
    z.columns(1, n - 1) - z.columns(0, n - 1)
}

/// `Σⱼ ‖col j‖₂`.
pub fn norm_12(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).sum()
}

pub fn objective(x: &DMatrix<f64>, z: &DMatrix<f64>, cfg: &OscConfig) -> f64 {
    let e = x - x * z;
    0.5 * e.norm_squared() + cfg.lambda1 * z.iter().map(|v| v.abs()).sum::<f64>() + cfg.lambda2 * norm_12(&times_r(z))
}

/// Solver for `(XᵀX + ρI) Z + ρ Z L = C` with L the path Laplacian.
///
/// Works on transposes, `Zᵀ (XᵀX + ρI) + ρ L Zᵀ = Cᵀ`, so the DCT runs down
/// contiguous columns.
pub(crate) struct SylvesterSolver {
    n: usize,
    /// Orthonormal eigenvectors of XᵀX for its nonzero eigenvalues, n×r.
    v: DMatrix<f64>,
    vt: DMatrix<f64>,
    sigma2: Vec<f64>,
    /// Laplacian eigenvalues `2 − 2cos(πk/n)`.
    mu: Vec<f64>,
    /// Row scales of the orthonormal DCT-II basis.
    scale: Vec<f64>,
    dct2: Arc<dyn TransformType2And3<f64>>,
    dct3: Arc<dyn TransformType2And3<f64>>,
}

impl SylvesterSolver {
    pub(crate) fn new(x: &DMatrix<f64>) -> Self {
        let n = x.ncols();
        // XᵀX = VΣ²Vᵀ from the small m×m eigenproblem of XXᵀ
        let eig = (x * x.transpose()).symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-12 * top.max(f64::MIN_POSITIVE)).collect();
        let mut v = DMatrix::zeros(n, keep.len());
        let mut sigma2 = Vec::with_capacity(keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let s2 = eig.eigenvalues[i];
            let col = x.tr_mul(&eig.eigenvectors.column(i)) / s2.sqrt();
            v.set_column(c, &col);
            sigma2.push(s2);
        }
        let nf = n as f64;
        let mu = (0..n).map(|k| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / nf).cos()).collect();
        let scale = (0..n).map(|k| if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() }).collect();
        let mut planner = DctPlanner::new();
        let vt = v.transpose();
        SylvesterSolver { n, v, vt, sigma2, mu, scale, dct2: planner.plan_dct2(n), dct3: planner.plan_dct3(n) }
    }

    /// `Qᵀ M` in place, Q the orthonormal DCT basis.
    fn forward(&self, m: &mut DMatrix<f64>) {
        let mut scratch = vec![0.0; self.dct2.get_scratch_len()];
        for col in m.as_mut_slice().chunks_mut(self.n) {
            self.dct2.process_dct2_with_scratch(col, &mut scratch);
            for (v, s) in col.iter_mut().zip(&self.scale) {
                *v *= s;
            }
        }
    }

    /// `Q M` in place.
    fn inverse(&self, m: &mut DMatrix<f64>) {
        let mut scratch = vec![0.0; self.dct3.get_scratch_len()];
        for col in m.as_mut_slice().chunks_mut(self.n) {
            for (k, (v, s)) in col.iter_mut().zip(&self.scale).enumerate() {
                *v *= if k == 0 { 2.0 * s } else { *s };
            }
            self.dct3.process_dct3_with_scratch(col, &mut scratch);
        }
    }

    /// Returns `Zᵀ` given `Cᵀ`, consuming the right-hand side.
    pub(crate) fn solve_t(&self, mut ct: DMatrix<f64>, rho: f64) -> DMatrix<f64> {
        self.forward(&mut ct);
        let gt = &ct * &self.v;
        let d: Vec<f64> = self.mu.iter().map(|m| rho * (1.0 + m)).collect();
        let ht = DMatrix::from_fn(gt.nrows(), gt.ncols(), |k, i| gt[(k, i)] * (1.0 / (self.sigma2[i] + d[k]) - 1.0 / d[k]));
        let inv_d = nalgebra::DVector::from_iterator(d.len(), d.iter().map(|v| 1.0 / v));
        for mut col in ct.column_iter_mut() {
            col.component_mul_assign(&inv_d);
        }
        ct.gemm(1.0, &ht, &self.vt, 1.0);
        self.inverse(&mut ct);
        ct
    }

    #[cfg(test)]
    fn solve(&self, c: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
        self.solve_t(c.transpose(), rho).transpose()
    }
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn is_column_normalized(x: &DMatrix<f64>) -> bool {
    x.column_iter().all(|c| (c.norm() - 1.0).abs() < 1e-6)
}

pub fn osc_solve(x: &DMatrix<f64>, cfg: &OscConfig) -> Result<OscSolution> {
    cfg.validate()?;
    let n = x.ncols();
    if n < 2 {
        return Err(Error::TooSmall { needed: 2, got: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if !is_column_normalized(x) {
        log::warn!("osc input columns are not unit-norm");
    }

    // every iterate below is stored transposed (j holds Jᵀ, s holds Sᵀ, and
    // so on); the elementwise updates are fused into three column sweeps
    let solver = SylvesterSolver::new(x);
    let xt = x.transpose();
    let xtx = x.tr_mul(x);
    let q = n - 1;
    let mut rho = cfg.rho;
    let mut j = DMatrix::<f64>::zeros(n, n);
    let mut s = DMatrix::<f64>::zeros(q, n);
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut w = DMatrix::<f64>::zeros(q, n);
    let mut dj = DMatrix::<f64>::zeros(n, n);
    let mut c = DMatrix::<f64>::zeros(n, n);

    let mut objective_hist = Vec::new();
    let mut primal_hist = Vec::new();
    let mut dual_hist = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut group_sq = vec![0.0; q];
    let mut jr_sq = vec![0.0; q];

    for it in 1..=cfg.max_iter {
        iterations = it;
        // Cᵀ = XᵀX + ρ(Jᵀ − Uᵀ) + ρR(Sᵀ − Wᵀ)
        for col in 0..n {
            let (cc, jc, uc, xc) = (c.column_mut(col), j.column(col), u.column(col), xtx.column(col));
            let (sc, wc) = (s.column(col), w.column(col));
            let mut cc = cc;
            for i in 0..n {
                let here = if i < q { sc[i] - wc[i] } else { 0.0 };
                let before = if i > 0 { sc[i - 1] - wc[i - 1] } else { 0.0 };
                cc[i] = xc[i] + rho * (jc[i] - uc[i] - here + before);
            }
        }
        let z = solver.solve_t(std::mem::replace(&mut c, DMatrix::zeros(0, 0)), rho);

        let t1 = cfg.lambda1 / rho;
        let (mut r1_sq, mut z_sq, mut j_sq, mut l1) = (0.0, 0.0, 0.0, 0.0);
        group_sq.iter_mut().for_each(|v| *v = 0.0);
        jr_sq.iter_mut().for_each(|v| *v = 0.0);
        for col in 0..n {
            let zc = z.column(col);
            let wc = w.column(col);
            let mut jc = j.column_mut(col);
            let mut uc = u.column_mut(col);
            let mut dc = dj.column_mut(col);
            for i in 0..n {
                let zv = zc[i];
                let mut jn = soft(zv + uc[i], t1);
                if cfg.zero_diagonal && i == col {
                    jn = 0.0;
                }
                let r1 = zv - jn;
                uc[i] += r1;
                dc[i] = jn - jc[i];
                jc[i] = jn;
                r1_sq += r1 * r1;
                z_sq += zv * zv;
                j_sq += jn * jn;
                l1 += jn.abs();
                if i < q {
                    let v = zc[i + 1] - zv + wc[i];
                    group_sq[i] += v * v;
                }
            }
            for i in 0..q {
                let d = jc[i + 1] - jc[i];
                jr_sq[i] += d * d;
            }
        }

        let t2 = cfg.lambda2 / rho;
        let factor: Vec<f64> = group_sq
            .iter()
            .map(|g| {
                let norm = g.sqrt();
                if norm > 0.0 {
                    (1.0 - t2 / norm).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        let (mut r2_sq, mut zr_sq, mut s_sq, mut dual_sq, mut dual_scale_sq) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for col in 0..n {
            let zc = z.column(col);
            let uc = u.column(col);
            let mut sc = s.column_mut(col);
            let mut wc = w.column_mut(col);
            let mut dc = dj.column_mut(col);
            for i in 0..q {
                let zr = zc[i + 1] - zc[i];
                let v = zr + wc[i];
                let sn = factor[i] * v;
                let r2 = zr - sn;
                wc[i] = v - sn;
                let ds = sn - sc[i];
                sc[i] = sn;
                dc[i] -= ds;
                dc[i + 1] += ds;
                r2_sq += r2 * r2;
                zr_sq += zr * zr;
                s_sq += sn * sn;
            }
            for i in 0..n {
                dual_sq += dc[i] * dc[i];
                let here = if i < q { wc[i] } else { 0.0 };
                let before = if i > 0 { wc[i - 1] } else { 0.0 };
                let v = uc[i] - here + before;
                dual_scale_sq += v * v;
            }
        }
        c = z;

        let primal = (r1_sq + r2_sq).sqrt();
        let dual = rho * dual_sq.sqrt();
        let primal_scale = (z_sq + zr_sq).sqrt().max((j_sq + s_sq).sqrt());
        let dual_scale = rho * dual_scale_sq.sqrt();
        let primal_rel = primal / primal_scale.max(f64::MIN_POSITIVE);
        let dual_rel = dual / dual_scale.max(f64::MIN_POSITIVE);
        primal_hist.push(primal_rel);
        dual_hist.push(dual_rel);
        let fit = (&xt - &j * &xt).norm_squared();
        objective_hist.push(0.5 * fit + cfg.lambda1 * l1 + cfg.lambda2 * jr_sq.iter().map(|v| v.sqrt()).sum::<f64>());

        if primal_rel.max(dual_rel) < cfg.tol {
            converged = true;
            break;
        }
        if cfg.adapt_rho {
            if primal_rel > 10.0 * dual_rel {
                rho *= 2.0;
                u /= 2.0;
                w /= 2.0;
            } else if dual_rel > 10.0 * primal_rel {
                rho /= 2.0;
                u *= 2.0;
                w *= 2.0;
            }
        }
    }
    if !converged {
        log::warn!("osc stopped at {iterations} iterations without meeting tol {}", cfg.tol);
    }
    let z = j.transpose();
    let e = x - x * &z;
    Ok(OscSolution {
        z,
        e,
        iterations,
        converged,
        objective: objective_hist,
        primal_residual: primal_hist,
        dual_residual: dual_hist,
        final_rho: rho,
    })
}

/// Scales every nonzero column to unit norm.
pub fn normalize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    out
}

/// Column-stacks feature vectors into an m×n matrix.
pub fn stack_columns(columns: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = columns.first().map_or(0, Vec::len);
    if let Some(bad) = columns.iter().find(|c| c.len() != m) {
        return Err(Error::RaggedColumns { expected: m, got: bad.len() });
    }
    let data: Vec<f64> = columns.iter().flatten().copied().collect();
    Ok(DMatrix::from_vec(m, columns.len(), data))
}
