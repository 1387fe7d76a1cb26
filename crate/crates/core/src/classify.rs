//! Representation-based classification.
//!
//! An observation is coded over the whole dictionary, either in closed form
//! with the ridge projector (collaborative representation) or with an
//! l1-regularized solve (sparse representation). It is labeled by the class
//! whose coefficients alone reconstruct it with the smallest residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, Projector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Ridge,
    L1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub x_hat: DVector<f64>,
    pub solver: Solver,
    /// Zero for the closed-form ridge code.
    pub iterations: usize,
    /// False when an iterative solve stopped at its iteration cap with the
    /// optimality conditions still violated.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassResiduals {
    pub residuals: Vec<f64>,
    pub best: usize,
    /// Second smallest minus smallest residual; zero with a single class.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionResult {
    pub label: usize,
    pub residuals: ClassResiduals,
    pub coefficients: Coefficients,
}

/// How per-class residuals are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualForm {
    /// `‖y − A δᵢ(x̂)‖₂`.
    #[default]
    Plain,
    /// `‖y − A δᵢ(x̂)‖₂ / ‖δᵢ(x̂)‖₂`.
    CoefficientWeighted,
}

/// Closed-form ridge code `x̂ = P (y − center)`.
pub fn crc_code(y: &[f64], dict: &Dictionary, proj: &Projector) -> Result<Coefficients> {
    if proj.dims() != (dict.rows(), dict.cols()) {
        return Err(Error::DimensionMismatch { expected: dict.cols(), got: proj.dims().1 });
    }
    let yc = dict.apply_center(y)?;
    let x_hat = proj.matrix() * yc;
    Ok(Coefficients { x_hat, solver: Solver::Ridge, iterations: 0, converged: true })
}

/// Per-class reconstruction residuals of an already centered observation.
fn residuals_centered(yc: &DVector<f64>, dict: &Dictionary, x: &DVector<f64>, form: ResidualForm) -> ClassResiduals {
    let a = dict.matrix();
    let residuals: Vec<f64> = dict
        .blocks()
        .iter()
        .map(|block| {
            // plain ordered loops: the result is reproducible bit for bit
            // by a reference reconstruction
            let mut recon = vec![0.0; a.nrows()];
            for j in block.clone() {
                let c = x[j];
                for (r, &v) in recon.iter_mut().zip(a.column(j).iter()) {
                    *r += v * c;
                }
            }
            let r = yc.iter().zip(&recon).map(|(y, r)| (y - r) * (y - r)).sum::<f64>().sqrt();
            let coef = x.rows(block.start, block.len());
            match form {
                ResidualForm::Plain => r,
                ResidualForm::CoefficientWeighted => {
                    let c = coef.norm();
                    if c > 0.0 {
                        r / c
                    } else {
                        f64::INFINITY
                    }
                }
            }
        })
        .collect();
    rank(residuals)
}

fn rank(residuals: Vec<f64>) -> ClassResiduals {
    // strict comparison keeps the lowest index among ties
    let mut best = 0;
    for (i, &r) in residuals.iter().enumerate() {
        if r < residuals[best] {
            best = i;
        }
    }
    let second = residuals
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &r)| r)
        .fold(f64::INFINITY, f64::min);
    let margin = if second.is_finite() { second - residuals[best] } else { 0.0 };
    ClassResiduals { residuals, best, margin }
}

pub fn class_residuals(y: &[f64], dict: &Dictionary, x: &Coefficients) -> Result<ClassResiduals> {
    class_residuals_with(y, dict, x, ResidualForm::Plain)
}

pub fn class_residuals_with(y: &[f64], dict: &Dictionary, x: &Coefficients, form: ResidualForm) -> Result<ClassResiduals> {
    if x.x_hat.len() != dict.cols() {
        return Err(Error::DimensionMismatch { expected: dict.cols(), got: x.x_hat.len() });
    }
    let yc = dict.apply_center(y)?;
    Ok(residuals_centered(&yc, dict, &x.x_hat, form))
}

pub fn crc_classify(y: &[f64], dict: &Dictionary, proj: &Projector) -> Result<RecognitionResult> {
    crc_classify_with(y, dict, proj, ResidualForm::Plain)
}

pub fn crc_classify_with(y: &[f64], dict: &Dictionary, proj: &Projector, form: ResidualForm) -> Result<RecognitionResult> {
    let coefficients = crc_code(y, dict, proj)?;
    let residuals = class_residuals_with(y, dict, &coefficients, form)?;
    Ok(RecognitionResult { label: residuals.best, residuals, coefficients })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Options {
    pub max_iter: usize,
    /// Relative objective change that ends the iteration.
    pub tol: f64,
}

impl Default for L1Options {
    fn default() -> Self {
        L1Options { max_iter: 500, tol: 1e-6 }
    }
}

/// Largest eigenvalue of `AᵀA` by power iteration.
pub fn lipschitz_constant(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..100 {
        let w = a.tr_mul(&(a * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= 1e-6 * next.abs() {
            estimate = next;
            break;
        }
        estimate = next;
    }
    // the Rayleigh quotient approaches from below; pad so 1/L stays a safe step
    estimate * 1.01
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn lasso_objective(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - a * x).norm_squared() + lambda * x.lp_norm(1)
}

/// Largest violation of the lasso optimality conditions at `x`.
pub fn kkt_violation(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    let corr = a.tr_mul(&(y - a * x));
    corr.iter()
        .zip(x.iter())
        .map(|(&g, &xi)| {
            if xi != 0.0 {
                (g - lambda * xi.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Result of the raw lasso iteration, including the objective trace.
#[derive(Debug, Clone)]
pub struct LassoTrace {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub objective: Vec<f64>,
    pub kkt: f64,
    pub converged: bool,
}

/// Minimizes `½‖y − Ax‖² + λ‖x‖₁` with the monotone variant of the
/// accelerated proximal-gradient method, step `1/L`.
pub fn lasso(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &L1Options) -> Result<LassoTrace> {
    if a.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: y.len() });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("l1 weight must be > 0, got {lambda}")));
    }
    let n = a.ncols();
    let lip = lipschitz_constant(a);
    let mut x = DVector::zeros(n);
    let mut objective = vec![lasso_objective(a, y, &x, lambda)];
    if lip == 0.0 {
        return Ok(LassoTrace { x, iterations: 0, objective, kkt: 0.0, converged: true });
    }
    let step = 1.0 / lip;
    let aty = a.tr_mul(y);
    let gram = a.tr_mul(a);

    let mut extrapolated = x.clone();
    let mut theta: f64 = 1.0;
    let mut iterations = 0;
    let mut stalled = false;
    for it in 1..=opts.max_iter {
        iterations = it;
        let grad = &gram * &extrapolated - &aty;
        let candidate = (&extrapolated - grad * step).map(|v| soft_threshold(v, lambda * step));
        let f_candidate = lasso_objective(a, y, &candidate, lambda);
        let f_prev = *objective.last().expect("non-empty");
        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        let x_prev = x.clone();
        let f_next = if f_candidate <= f_prev {
            x = candidate.clone();
            f_candidate
        } else {
            f_prev
        };
        extrapolated = &x + (&candidate - &x) * (theta / theta_next) + (&x - &x_prev) * ((theta - 1.0) / theta_next);
        theta = theta_next;
        objective.push(f_next);
        let change = (f_prev - f_candidate).abs() / f_prev.abs().max(f64::MIN_POSITIVE);
        if change < opts.tol {
            stalled = true;
            break;
        }
    }
    let kkt = kkt_violation(a, y, &x, lambda);
    let converged = stalled || kkt <= 10.0 * opts.tol;
    Ok(LassoTrace { x, iterations, objective, kkt, converged })
}

/// Default sparse-coding weight `0.1‖Aᵀy‖∞`.
pub fn default_l1_lambda(dict: &Dictionary, y: &DVector<f64>) -> f64 {
    0.1 * dict.matrix().tr_mul(y).amax()
}

pub fn l1_solve(y: &[f64], dict: &Dictionary, lambda: f64, opts: &L1Options) -> Result<Coefficients> {
    let yc = dict.apply_center(y)?;
    let trace = lasso(dict.matrix(), &yc, lambda, opts)?;
    Ok(Coefficients { x_hat: trace.x, solver: Solver::L1, iterations: trace.iterations, converged: trace.converged })
}

/// Sparse-representation classification. `lambda = None` picks
/// [`default_l1_lambda`] per observation.
pub fn src_classify(y: &[f64], dict: &Dictionary, lambda: Option<f64>, opts: &L1Options) -> Result<RecognitionResult> {
    let yc = dict.apply_center(y)?;
    let lambda = match lambda {
        Some(l) => l,
        None => default_l1_lambda(dict, &yc),
    };
    if lambda == 0.0 {
        // y is orthogonal to every column: nothing to code
        let n = dict.cols();
        let coefficients = Coefficients { x_hat: DVector::zeros(n), solver: Solver::L1, iterations: 0, converged: true };
        let residuals = residuals_centered(&yc, dict, &coefficients.x_hat, ResidualForm::Plain);
        return Ok(RecognitionResult { label: residuals.best, residuals, coefficients });
    }
    let trace = lasso(dict.matrix(), &yc, lambda, opts)?;
    let coefficients = Coefficients { x_hat: trace.x, solver: Solver::L1, iterations: trace.iterations, converged: trace.converged };
    let residuals = residuals_centered(&yc, dict, &coefficients.x_hat, ResidualForm::Plain);
    Ok(RecognitionResult { label: residuals.best, residuals, coefficients })
}

/// Zeroes every coefficient outside class block `class`.
pub fn select_class(dict: &Dictionary, x: &DVector<f64>, class: usize) -> DVector<f64> {
    let block = &dict.blocks()[class];
    DVector::from_fn(x.len(), |i, _| if block.contains(&i) { x[i] } else { 0.0 })
}
