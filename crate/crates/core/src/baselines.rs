//! Penalized-likelihood baselines for Gaussian graphical models with missing
//! cells.
//!
//! * MissGlasso: EM on the observed-data penalized likelihood, alternating
//!   the Gaussian E-step with a graphical lasso M-step.
//! * mGlasso: a single graphical lasso on the pairwise available-case
//!   covariance.
//!
//! Both choose the penalty by observed-data BIC.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ObservedMatrix;
use crate::error::{GemsError, Result};
use crate::gaussian::{expected_stats, neg2_loglik_observed, GaussianParams};
use crate::glasso::{glasso_path, glasso_solve, support, GlassoFit, GlassoOptions};
use crate::graph::UndirectedGraph;
use crate::linalg::cholesky;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissGlassoOptions {
    pub max_iter: usize,
    /// Stop when the penalized objective changes by less than
    /// `tol · max(1, |objective|)`.
    pub tol: f64,
    pub glasso: GlassoOptions,
}

impl Default for MissGlassoOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-7,
            glasso: GlassoOptions {
                max_iter: 2000,
                tol: 1e-6,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenalizedFit {
    pub rho: f64,
    pub params: GaussianParams,
    pub graph: UndirectedGraph,
    /// Observed `-2 log-likelihood`.
    pub neg2_loglik: f64,
    pub bic: f64,
    /// Penalized objective per EM iteration (MissGlasso only).
    pub objective_trace: Vec<f64>,
}

fn l1_off(omega: &DMatrix<f64>) -> f64 {
    let p = omega.nrows();
    let mut s = 0.0;
    for j in 0..p {
        for k in 0..p {
            if j != k {
                s += omega[(j, k)].abs();
            }
        }
    }
    s
}

/// Observed penalized objective `-2 l(μ, Ω) + n ρ Σ_{j≠k} |Ω_jk|`.
pub fn penalized_objective(params: &GaussianParams, xo: &ObservedMatrix, rho: f64) -> Result<f64> {
    Ok(neg2_loglik_observed(params, xo)? + xo.n() as f64 * rho * l1_off(&params.omega))
}

/// Diagonal start: observed column means and reciprocal observed variances.
fn diagonal_start(xo: &ObservedMatrix) -> Result<GaussianParams> {
    let mu = xo.column_means();
    let p = xo.p();
    let var = DVector::from_fn(p, |j, _| {
        let (s, c) = (0..xo.n())
            .filter_map(|i| xo.get(i, j))
            .fold((0.0, 0usize), |(s, c), x| (s + (x - mu[j]).powi(2), c + 1));
        if c == 0 {
            1.0
        } else {
            (s / c as f64).max(1e-8)
        }
    });
    GaussianParams::new(mu, DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / var[i] } else { 0.0 }))
}

fn finish(xo: &ObservedMatrix, rho: f64, params: GaussianParams, trace: Vec<f64>) -> Result<PenalizedFit> {
    let graph = UndirectedGraph::from_edges(xo.p(), support(&params.omega))?;
    let neg2 = neg2_loglik_observed(&params, xo)?;
    Ok(PenalizedFit {
        rho,
        bic: neg2 + graph.num_edges() as f64 * (xo.n() as f64).ln(),
        neg2_loglik: neg2,
        params,
        graph,
        objective_trace: trace,
    })
}

/// EM for the observed-data graphical lasso at one penalty.
pub fn missglasso(xo: &ObservedMatrix, rho: f64, opts: &MissGlassoOptions) -> Result<PenalizedFit> {
    missglasso_from(xo, rho, opts, diagonal_start(xo)?, None).map(|(f, _)| f)
}

fn missglasso_from(
    xo: &ObservedMatrix,
    rho: f64,
    opts: &MissGlassoOptions,
    start: GaussianParams,
    warm: Option<&GlassoFit>,
) -> Result<(PenalizedFit, GlassoFit)> {
    let mut params = start;
    let mut trace = vec![penalized_objective(&params, xo, rho)?];
    let mut warm = warm.cloned();
    for _ in 0..opts.max_iter {
        let stats = expected_stats(xo, &params)?;
        let s = crate::ggm::ridge_if_needed(&stats.sstar);
        let fit = glasso_solve(&s, rho, &opts.glasso, warm.as_ref())?;
        params = GaussianParams::new(stats.xbar, fit.omega.clone())?;
        warm = Some(fit);
        let obj = penalized_objective(&params, xo, rho)?;
        let prev = *trace.last().expect("nonempty");
        trace.push(obj);
        if (prev - obj).abs() < opts.tol * obj.abs().max(1.0) {
            break;
        }
    }
    let warm = warm.ok_or_else(|| GemsError::InvalidInput("zero EM iterations requested".into()))?;
    Ok((finish(xo, rho, params, trace)?, warm))
}

/// MissGlasso over a penalty grid, returning the fit with the lowest BIC
/// (first on ties). Penalties are visited in descending order with warm
/// starts.
pub fn missglasso_select(xo: &ObservedMatrix, rhos: &[f64], opts: &MissGlassoOptions) -> Result<PenalizedFit> {
    if rhos.is_empty() {
        return Err(GemsError::InvalidInput("penalty grid is empty".into()));
    }
    let mut order: Vec<usize> = (0..rhos.len()).collect();
    order.sort_by(|&a, &b| rhos[b].total_cmp(&rhos[a]).then(a.cmp(&b)));
    let mut fits: Vec<Option<PenalizedFit>> = vec![None; rhos.len()];
    let mut start = diagonal_start(xo)?;
    let mut warm: Option<GlassoFit> = None;
    for idx in order {
        let (fit, w) = missglasso_from(xo, rhos[idx], opts, start.clone(), warm.as_ref())?;
        start = fit.params.clone();
        warm = Some(w);
        fits[idx] = Some(fit);
    }
    pick_min_bic(fits.into_iter().map(|f| f.expect("visited")).collect())
}

fn pick_min_bic(fits: Vec<PenalizedFit>) -> Result<PenalizedFit> {
    let mut best: Option<PenalizedFit> = None;
    for f in fits {
        if best.as_ref().is_none_or(|b| f.bic < b.bic) {
            best = Some(f);
        }
    }
    best.ok_or_else(|| GemsError::InvalidInput("penalty grid is empty".into()))
}

/// Pairwise available-case means and covariance. Entry `(j, k)` averages
/// over the rows observing both columns, centring each column by its mean
/// over those same rows (divisor: the number of such rows).
pub fn pairwise_covariance(xo: &ObservedMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = (xo.n(), xo.p());
    let mut s = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in j..p {
            let rows: Vec<usize> = (0..n).filter(|&i| xo.is_observed(i, j) && xo.is_observed(i, k)).collect();
            if rows.len() < 2 {
                return Err(GemsError::Estimator(format!(
                    "columns {j} and {k} are jointly observed in {} row(s); at least 2 required",
                    rows.len()
                )));
            }
            let m = rows.len() as f64;
            let v = xo.values();
            let mj = rows.iter().map(|&i| v[(i, j)]).sum::<f64>() / m;
            let mk = rows.iter().map(|&i| v[(i, k)]).sum::<f64>() / m;
            let c = rows.iter().map(|&i| (v[(i, j)] - mj) * (v[(i, k)] - mk)).sum::<f64>() / m;
            s[(j, k)] = c;
            s[(k, j)] = c;
        }
    }
    Ok((xo.column_means(), s))
}

/// Shifts a symmetric matrix by `(|λ_min| + 1e-6) I` when it is not
/// positive definite.
pub fn project_pd(s: &DMatrix<f64>) -> DMatrix<f64> {
    if cholesky(s, "").is_ok() {
        return s.clone();
    }
    let lmin = s.clone().symmetric_eigenvalues().min();
    let shift = lmin.abs() + 1e-6;
    s + DMatrix::identity(s.nrows(), s.ncols()) * shift
}

/// One-shot graphical lasso on the pairwise covariance, with the penalty
/// chosen by observed-data BIC.
pub fn mglasso(xo: &ObservedMatrix, rhos: &[f64], opts: &GlassoOptions) -> Result<PenalizedFit> {
    if rhos.is_empty() {
        return Err(GemsError::InvalidInput("penalty grid is empty".into()));
    }
    let (mu, s) = pairwise_covariance(xo)?;
    let s = project_pd(&s);
    let path = glasso_path(&s, rhos, opts)?;
    let fits = path
        .into_iter()
        .map(|f| finish(xo, f.rho, GaussianParams::new(mu.clone(), f.omega)?, Vec::new()))
        .collect::<Result<Vec<_>>>()?;
    pick_min_bic(fits)
}

/// Default baseline penalty grid from the mean-imputed covariance.
pub fn default_grid(xo: &ObservedMatrix, count: usize, min_ratio: f64) -> Result<Vec<f64>> {
    let (_, s) = crate::gaussian::sample_stats(&xo.mean_imputed())?;
    Ok(crate::glasso::rho_grid(&s, count, min_ratio))
}
