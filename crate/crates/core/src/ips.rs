//! Maximum likelihood for a Gaussian graphical model with a fixed graph.
//!
//! [`ips_fit`] runs iterative proportional scaling over the maximal cliques.
//! Graphs with many cliques are better served by [`covsel_fit`], which
//! solves the same problem one regression per vertex. [`refit`] picks
//! between them.

use nalgebra::{DMatrix, DVector};

use crate::error::{GemsError, Result};
use crate::gaussian::GaussianParams;
use crate::graph::UndirectedGraph;
use crate::linalg::{cholesky, inverse_pd, submatrix, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when the largest entry of a sweep's update falls below this.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-10,
        }
    }
}

/// Graph-constrained precision by clique-wise proportional scaling.
pub fn ips_fit(
    graph: &UndirectedGraph,
    xbar: &DVector<f64>,
    sstar: &DMatrix<f64>,
    opts: &FitOptions,
) -> Result<GaussianParams> {
    let cliques = graph
        .maximal_cliques(usize::MAX)
        .expect("unbounded clique enumeration");
    ips_with_cliques(&cliques, xbar, sstar, opts, |_| {})
}

/// IPS over the given cliques. `on_sweep` receives the precision after each
/// sweep (used to audit monotonicity).
pub fn ips_with_cliques(
    cliques: &[Vec<usize>],
    xbar: &DVector<f64>,
    sstar: &DMatrix<f64>,
    opts: &FitOptions,
    mut on_sweep: impl FnMut(&DMatrix<f64>),
) -> Result<GaussianParams> {
    let p = sstar.nrows();
    check_inputs(p, xbar, sstar)?;
    let clique_inv: Vec<DMatrix<f64>> = cliques
        .iter()
        .map(|c| inverse_pd(&submatrix(sstar, c, c), &format!("sample covariance on clique {c:?}")))
        .collect::<Result<_>>()?;
    let mut omega = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / sstar[(i, i)] } else { 0.0 });
    let mut sigma = DMatrix::from_fn(p, p, |i, j| if i == j { sstar[(i, i)] } else { 0.0 });
    for sweep in 1..=opts.max_iter {
        let mut max_delta: f64 = 0.0;
        for (c, s_inv) in cliques.iter().zip(&clique_inv) {
            let k = c.len();
            let sig_cc = submatrix(&sigma, c, c);
            let delta = symmetrize(&(s_inv - inverse_pd(&sig_cc, "clique block of covariance")?));
            max_delta = max_delta.max(delta.amax());
            for (a, &i) in c.iter().enumerate() {
                for (b, &j) in c.iter().enumerate() {
                    omega[(i, j)] += delta[(a, b)];
                }
            }
            // Σ ← Σ - Σ_{:,c} Δ (I + Σ_cc Δ)⁻¹ Σ_{c,:}
            let all: Vec<usize> = (0..p).collect();
            let sig_pc = submatrix(&sigma, &all, c);
            let core = DMatrix::<f64>::identity(k, k) + &sig_cc * &delta;
            let core_inv = core
                .try_inverse()
                .ok_or_else(|| GemsError::NotPositiveDefinite("IPS covariance update".into()))?;
            let left = &sig_pc * (&delta * core_inv);
            sigma -= left * sig_pc.transpose();
        }
        sigma = inverse_pd(&omega, "IPS precision")?;
        on_sweep(&omega);
        if max_delta < opts.tol {
            log::trace!("IPS converged after {sweep} sweeps");
            return GaussianParams::new(xbar.clone(), symmetrize(&omega));
        }
        if sweep == opts.max_iter {
            return Err(GemsError::NoConvergence {
                what: "iterative proportional scaling",
                iterations: sweep,
                residual: max_delta,
            });
        }
    }
    Err(GemsError::NoConvergence {
        what: "iterative proportional scaling",
        iterations: 0,
        residual: f64::INFINITY,
    })
}

fn check_inputs(p: usize, xbar: &DVector<f64>, sstar: &DMatrix<f64>) -> Result<()> {
    if sstar.shape() != (p, p) || xbar.len() != p {
        return Err(GemsError::Shape("mean and covariance dimensions differ".into()));
    }
    if let Some(j) = (0..p).find(|&j| !(sstar[(j, j)] > 0.0)) {
        return Err(GemsError::NotPositiveDefinite(format!(
            "covariance diagonal entry {j} is not positive"
        )));
    }
    Ok(())
}

/// Graph-constrained precision by per-vertex regressions: keep `W = S` on
/// the diagonal, and for each vertex solve `W_NN β = s_N` over its
/// neighbours `N`, then set `W_{·,j} = W β`. At convergence `W` matches `S`
/// on the diagonal and the edges, and `W⁻¹` has the graph's zero pattern.
pub fn covsel_fit(
    graph: &UndirectedGraph,
    xbar: &DVector<f64>,
    sstar: &DMatrix<f64>,
    opts: &FitOptions,
) -> Result<GaussianParams> {
    let p = sstar.nrows();
    check_inputs(p, xbar, sstar)?;
    if graph.p() != p {
        return Err(GemsError::Shape("graph and covariance dimensions differ".into()));
    }
    let adj = graph.adjacency();
    // Starting from S keeps every neighbourhood block positive definite;
    // zeroing the non-edges first does not.
    let mut w = sstar.clone();
    let mut betas: Vec<DVector<f64>> = vec![DVector::zeros(0); p];
    let scale = sstar.diagonal().amax();
    for sweep in 1..=opts.max_iter {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let nb = &adj[j];
            if nb.is_empty() {
                betas[j] = DVector::zeros(0);
                continue;
            }
            let w_nn = submatrix(&w, nb, nb);
            let s_n = DVector::from_fn(nb.len(), |a, _| sstar[(nb[a], j)]);
            let beta = cholesky(&w_nn, "neighbourhood block of covariance")?.solve(&s_n);
            for k in 0..p {
                if k == j {
                    continue;
                }
                let new: f64 = nb.iter().zip(beta.iter()).map(|(&l, b)| w[(k, l)] * b).sum();
                max_change = max_change.max((new - w[(k, j)]).abs());
                w[(k, j)] = new;
                w[(j, k)] = new;
            }
            betas[j] = beta;
        }
        if max_change < opts.tol * scale {
            log::trace!("covariance selection converged after {sweep} sweeps");
            let mut omega = DMatrix::zeros(p, p);
            for j in 0..p {
                let nb = &adj[j];
                let dot: f64 = nb.iter().zip(betas[j].iter()).map(|(&l, b)| w[(l, j)] * b).sum();
                let t22 = 1.0 / (sstar[(j, j)] - dot);
                if !(t22 > 0.0 && t22.is_finite()) {
                    return Err(GemsError::NotPositiveDefinite(format!(
                        "residual variance of vertex {j} is not positive"
                    )));
                }
                omega[(j, j)] = t22;
                for (&l, b) in nb.iter().zip(betas[j].iter()) {
                    omega[(l, j)] = -b * t22;
                }
            }
            return GaussianParams::new(xbar.clone(), symmetrize(&omega));
        }
        if sweep == opts.max_iter {
            return Err(GemsError::NoConvergence {
                what: "covariance selection",
                iterations: sweep,
                residual: max_change,
            });
        }
    }
    unreachable!("loop returns on the final sweep")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefitMode {
    Ips,
    Regression,
    /// IPS when the graph has at most `clique_limit` maximal cliques, the
    /// regression solver otherwise.
    Auto { clique_limit: usize },
}

impl Default for RefitMode {
    fn default() -> Self {
        RefitMode::Auto { clique_limit: 64 }
    }
}

pub fn refit(
    graph: &UndirectedGraph,
    xbar: &DVector<f64>,
    sstar: &DMatrix<f64>,
    mode: RefitMode,
    opts: &FitOptions,
) -> Result<GaussianParams> {
    match mode {
        RefitMode::Ips => ips_fit(graph, xbar, sstar, opts),
        RefitMode::Regression => covsel_fit(graph, xbar, sstar, opts),
        RefitMode::Auto { clique_limit } => match graph.maximal_cliques(clique_limit) {
            Some(cliques) => ips_with_cliques(&cliques, xbar, sstar, opts, |_| {}),
            None => covsel_fit(graph, xbar, sstar, opts),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn test_cov() -> DMatrix<f64> {
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.2, -0.3, 0.1,
            0.5, 1.2, 0.0, 0.4,
            0.1, -0.2, 0.9, 0.3,
            0.0, 0.3, 0.2, 1.1,
        ]);
        &a * a.transpose() + DMatrix::identity(4, 4) * 0.5
    }

    #[test]
    fn complete_graph_inverts() {
        let s = test_cov();
        let xbar = DVector::zeros(4);
        let fit = ips_fit(&UndirectedGraph::complete(4), &xbar, &s, &FitOptions::default()).unwrap();
        assert!(max_abs_diff(&fit.omega, &inverse_pd(&s, "s").unwrap()) < 1e-8);
    }

    #[test]
    fn empty_graph_is_diagonal() {
        let s = test_cov();
        let fit = ips_fit(&UndirectedGraph::empty(4), &DVector::zeros(4), &s, &FitOptions::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 / s[(i, i)] } else { 0.0 };
                assert!((fit.omega[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cycle_matches_regression_solver_and_moments() {
        let s = test_cov();
        let g = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let xbar = DVector::zeros(4);
        let a = ips_fit(&g, &xbar, &s, &FitOptions::default()).unwrap();
        let b = covsel_fit(&g, &xbar, &s, &FitOptions::default()).unwrap();
        assert!(max_abs_diff(&a.omega, &b.omega) < 1e-8);
        assert!(a.omega[(0, 2)] == 0.0 && b.omega[(1, 3)] == 0.0);
        let w = inverse_pd(&a.omega, "omega").unwrap();
        for (i, j) in g.edges().chain((0..4).map(|i| (i, i))) {
            assert!((w[(i, j)] - s[(i, j)]).abs() < 1e-8);
        }
    }
}
