//! Structure selection for Gaussian graphical models with missing cells.
//!
//! Each iteration computes the expected sufficient statistics under the
//! current parameters, runs the graphical lasso path on the expected
//! covariance to propose candidate graphs, refits every candidate by
//! constrained maximum likelihood and keeps the one minimizing the expected
//! BIC. The incumbent graph is always a candidate, so the expected criterion
//! never increases.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::ObservedMatrix;
use crate::engine::{run_gems, GemsConfig, GemsDriver, GemsTrace, GicValue, PsiState};
use crate::error::{GemsError, Result};
use crate::gaussian::{expected_stats, neg2_loglik_from_stats, neg2_loglik_observed, sample_stats, ExpectedStats, GaussianParams};
use crate::glasso::{glasso_path, rho_grid, GlassoOptions};
use crate::graph::UndirectedGraph;
use crate::ips::{refit, FitOptions, RefitMode};
use crate::linalg::{cholesky, log_det_chol};

/// A graph with parameters whose precision vanishes off the edge set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgmModel {
    pub graph: UndirectedGraph,
    pub params: GaussianParams,
}

impl GgmModel {
    pub fn new(graph: UndirectedGraph, params: GaussianParams) -> Result<Self> {
        let p = graph.p();
        if params.p() != p {
            return Err(GemsError::Shape("graph and parameter dimensions differ".into()));
        }
        for i in 0..p {
            for j in i + 1..p {
                if !graph.has_edge(i, j) && params.omega[(i, j)].abs() >= 1e-10 {
                    return Err(GemsError::InvalidInput(format!(
                        "precision entry ({i}, {j}) is nonzero but the pair is not an edge"
                    )));
                }
            }
        }
        Ok(Self { graph, params })
    }

    /// Number of edges (free off-diagonal precision entries).
    pub fn df(&self) -> usize {
        self.graph.num_edges()
    }
}

/// Complexity penalty `df ln n + 4 γ df ln p`.
pub fn ggm_penalty(df: usize, n: usize, p: usize, gamma: f64) -> f64 {
    let df = df as f64;
    df * (n as f64).ln() + 4.0 * gamma * df * (p as f64).ln()
}

/// Observed-data BIC (`γ = 0`) or extended BIC (`γ > 0`).
pub fn gic_ggm(model: &GgmModel, xo: &ObservedMatrix, gamma: f64) -> Result<f64> {
    Ok(neg2_loglik_observed(&model.params, xo)? + ggm_penalty(model.df(), xo.n(), xo.p(), gamma))
}

/// Expected complete-data criterion under the given E-step statistics.
pub fn q_ggm(graph: &UndirectedGraph, params: &GaussianParams, stats: &ExpectedStats, gamma: f64) -> Result<f64> {
    let fit = neg2_loglik_from_stats(params, stats.n, &stats.xbar, &stats.sstar)?;
    Ok(fit + ggm_penalty(graph.num_edges(), stats.n, graph.p(), gamma))
}

/// Penalty grid used for candidate generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyGrid {
    /// `count` log-spaced penalties from `min_ratio · ρ_max` to `ρ_max`,
    /// recomputed from each expected covariance.
    Auto { count: usize, min_ratio: f64 },
    /// Fixed penalties on the normalized scale (`ρ`), increasing.
    Fixed(Vec<f64>),
}

impl Default for PenaltyGrid {
    fn default() -> Self {
        PenaltyGrid::Auto {
            count: 20,
            min_ratio: 0.01,
        }
    }
}

impl PenaltyGrid {
    pub fn resolve(&self, s: &DMatrix<f64>) -> Result<Vec<f64>> {
        let grid = match self {
            PenaltyGrid::Auto { count, min_ratio } => rho_grid(s, *count, *min_ratio),
            PenaltyGrid::Fixed(v) => v.clone(),
        };
        if grid.is_empty() {
            return Err(GemsError::InvalidInput("penalty grid is empty".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GgmConfig {
    pub grid: PenaltyGrid,
    pub gamma: f64,
    pub gems: GemsConfig,
    pub glasso: GlassoOptions,
    pub refit_mode: RefitMode,
    pub fit: FitOptions,
    /// Use every graph on `p ≤ 5` vertices as the candidate set.
    pub exhaustive: bool,
}

impl Default for GgmConfig {
    fn default() -> Self {
        Self {
            grid: PenaltyGrid::default(),
            gamma: 0.0,
            gems: GemsConfig::default(),
            glasso: GlassoOptions::default(),
            refit_mode: RefitMode::default(),
            fit: FitOptions {
                max_iter: 2000,
                tol: 1e-8,
            },
            exhaustive: false,
        }
    }
}

/// A candidate graph and the position of the penalty that produced it
/// (`usize::MAX` for graphs not produced by the path).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub graph: UndirectedGraph,
    pub lambda_index: usize,
}

/// Lasso-path supports of `sstar` together with `current`, deduplicated.
pub fn candidate_graphs(
    sstar: &DMatrix<f64>,
    rhos: &[f64],
    current: &UndirectedGraph,
    opts: &GlassoOptions,
) -> Result<Vec<Candidate>> {
    if rhos.is_empty() {
        return Err(GemsError::InvalidInput("penalty grid is empty".into()));
    }
    let s = ridge_if_needed(sstar);
    let path = glasso_path(&s, rhos, opts)?;
    let p = sstar.nrows();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, fit) in path.iter().enumerate() {
        let g = UndirectedGraph::from_edges(p, crate::glasso::support(&fit.omega))?;
        if seen.insert(g.clone()) {
            out.push(Candidate {
                graph: g,
                lambda_index: idx,
            });
        }
    }
    if seen.insert(current.clone()) {
        out.push(Candidate {
            graph: current.clone(),
            lambda_index: usize::MAX,
        });
    }
    Ok(out)
}

/// Adds `1e-8 I` when the matrix fails a Cholesky factorization.
pub fn ridge_if_needed(s: &DMatrix<f64>) -> DMatrix<f64> {
    if cholesky(s, "").is_ok() {
        s.clone()
    } else {
        s + DMatrix::identity(s.nrows(), s.ncols()) * 1e-8
    }
}

/// Every graph on `p` vertices (`p ≤ 5`).
pub fn all_graphs(p: usize) -> Result<Vec<UndirectedGraph>> {
    if p > 5 {
        return Err(GemsError::InvalidInput(format!(
            "exhaustive candidate sets are limited to 5 vertices, got {p}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    (0u32..1 << pairs.len())
        .map(|mask| {
            UndirectedGraph::from_edges(
                p,
                pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, e)| *e),
            )
        })
        .collect()
}

/// Scores candidates by the expected criterion and returns the best graph
/// with its refitted parameters. `incumbent` parameters are also scored, so
/// the result is never worse than the incumbent.
///
/// Candidates are visited by increasing edge count and skipped once even the
/// saturated fit plus their penalty cannot beat the best score so far.
pub fn select_candidate(
    candidates: &[Candidate],
    stats: &ExpectedStats,
    incumbent: Option<(&UndirectedGraph, &GaussianParams)>,
    gamma: f64,
    mode: RefitMode,
    fit_opts: &FitOptions,
) -> Result<(UndirectedGraph, GaussianParams, f64)> {
    let p = stats.xbar.len();
    let n = stats.n;
    let floor = cholesky(&stats.sstar, "")
        .map(|c| n as f64 * (log_det_chol(&c) + p as f64))
        .unwrap_or(f64::NEG_INFINITY);
    let mut order: Vec<&Candidate> = candidates.iter().collect();
    order.sort_by_key(|c| (c.graph.num_edges(), c.lambda_index));
    let mut best: Option<(UndirectedGraph, GaussianParams, f64)> = None;
    if let Some((g, params)) = incumbent {
        let q = q_ggm(g, params, stats, gamma)?;
        best = Some((g.clone(), params.clone(), q));
    }
    let mut best_key: Option<(usize, usize)> = incumbent.map(|(g, _)| {
        let idx = candidates
            .iter()
            .find(|c| &c.graph == g)
            .map_or(usize::MAX, |c| c.lambda_index);
        (g.num_edges(), idx)
    });
    for cand in order {
        let key = (cand.graph.num_edges(), cand.lambda_index);
        let bound = floor + ggm_penalty(cand.graph.num_edges(), n, p, gamma);
        if let Some((_, _, bq)) = &best {
            if bound > *bq {
                // Sorted by edge count, so every later candidate is pruned too.
                break;
            }
        }
        let params = match refit(&cand.graph, &stats.xbar, &stats.sstar, mode, fit_opts) {
            Ok(params) => params,
            Err(e) => {
                log::debug!("skipping candidate with {} edges: {e}", cand.graph.num_edges());
                continue;
            }
        };
        let q = q_ggm(&cand.graph, &params, stats, gamma)?;
        // Near-ties go to fewer edges, then the lower penalty index; a
        // refit of the best graph itself is taken whenever it improves.
        let better = match &best {
            None => true,
            Some((bg, _, bq)) if &cand.graph == bg => q < *bq,
            Some((_, _, bq)) => {
                let eps = 1e-9 * bq.abs().max(1.0);
                q < *bq - eps || (q <= *bq + eps && best_key.is_none_or(|bk| key < bk))
            }
        };
        if better {
            best = Some((cand.graph.clone(), params, q));
            best_key = Some(key);
        }
    }
    best.ok_or_else(|| GemsError::Estimator("no candidate graph could be fitted".into()))
}

/// Drives the GEMS iteration for Gaussian graphical models.
pub struct GgmDriver<'a> {
    xo: &'a ObservedMatrix,
    config: GgmConfig,
}

impl<'a> GgmDriver<'a> {
    pub fn new(xo: &'a ObservedMatrix, config: GgmConfig) -> Self {
        Self { xo, config }
    }

    pub fn config(&self) -> &GgmConfig {
        &self.config
    }

    /// Starting state: impute column means, run the lasso path on the
    /// imputed covariance and keep the candidate with the best criterion on
    /// the imputed data. Falls back to the empty graph with a diagonal
    /// precision from the column variances.
    pub fn initial_state(&self) -> Result<(UndirectedGraph, GaussianParams)> {
        let imputed = self.xo.mean_imputed();
        let (xbar, s) = sample_stats(&imputed)?;
        let stats = ExpectedStats {
            n: self.xo.n(),
            xbar: xbar.clone(),
            sstar: s.clone(),
        };
        let p = self.xo.p();
        let attempt = (|| {
            let cands = self.candidates(&stats, &UndirectedGraph::empty(p))?;
            select_candidate(&cands, &stats, None, self.config.gamma, self.config.refit_mode, &self.config.fit)
        })();
        match attempt {
            Ok((g, params, _)) => Ok((g, params)),
            Err(e) => {
                log::warn!("lasso initialization failed ({e}); starting from the empty graph");
                let omega = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
                Ok((UndirectedGraph::empty(p), GaussianParams::new(xbar, omega)?))
            }
        }
    }

    fn candidates(&self, stats: &ExpectedStats, current: &UndirectedGraph) -> Result<Vec<Candidate>> {
        if self.config.exhaustive {
            return Ok(all_graphs(stats.xbar.len())?
                .into_iter()
                .enumerate()
                .map(|(i, graph)| Candidate {
                    graph,
                    lambda_index: i,
                })
                .collect());
        }
        let rhos = self.config.grid.resolve(&ridge_if_needed(&stats.sstar))?;
        candidate_graphs(&stats.sstar, &rhos, current, &self.config.glasso)
    }
}

impl GemsDriver for GgmDriver<'_> {
    type Model = UndirectedGraph;
    type Params = GaussianParams;
    type Summary = ExpectedStats;

    fn e_step(&mut self, psi: &PsiState<UndirectedGraph, GaussianParams>, _: usize) -> Result<ExpectedStats> {
        expected_stats(self.xo, &psi.params)
    }

    fn q_value(&self, g: &UndirectedGraph, params: &GaussianParams, stats: &ExpectedStats) -> Result<f64> {
        q_ggm(g, params, stats, self.config.gamma)
    }

    fn ms_step(
        &mut self,
        stats: &ExpectedStats,
        current: &PsiState<UndirectedGraph, GaussianParams>,
    ) -> Result<(UndirectedGraph, GaussianParams)> {
        let cands = self.candidates(stats, &current.model)?;
        let (g, params, _) = select_candidate(
            &cands,
            stats,
            Some((&current.model, &current.params)),
            self.config.gamma,
            self.config.refit_mode,
            &self.config.fit,
        )?;
        Ok((g, params))
    }

    fn observed_gic(&self, g: &UndirectedGraph, params: &GaussianParams) -> Result<GicValue> {
        let v = neg2_loglik_observed(params, self.xo)? + ggm_penalty(g.num_edges(), self.xo.n(), self.xo.p(), self.config.gamma);
        Ok(GicValue::exact(v))
    }

    fn model_hash(&self, g: &UndirectedGraph) -> u64 {
        g.model_hash()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GgmResult {
    pub model: GgmModel,
    pub gic: f64,
    pub trace: GemsTrace,
}

pub fn gems_ggm(xo: &ObservedMatrix, config: &GgmConfig) -> Result<GgmResult> {
    let mut driver = GgmDriver::new(xo, config.clone());
    let init = driver.initial_state()?;
    let (psi, trace) = run_gems(&mut driver, init, &config.gems)?;
    Ok(GgmResult {
        model: GgmModel::new(psi.model, psi.params)?,
        gic: psi.gic,
        trace,
    })
}

/// Edges with their precision entries.
pub fn edge_list_with_weights(model: &GgmModel) -> Vec<(usize, usize, f64)> {
    model
        .graph
        .edges()
        .map(|(i, j)| (i, j, model.params.omega[(i, j)]))
        .collect()
}
