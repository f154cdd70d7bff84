//! Group lasso for logistic regression on dummy-coded groups.
//!
//! Each group block is centred and orthonormalized (`X̃ᵀX̃ / n = I`) before
//! penalizing, so the penalty `λ Σ √k_j ‖β̃_j‖` treats groups of different
//! scale alike. Blocks are updated by a majorize-minimize step using the
//! logistic curvature bound 1/4, which with orthonormal blocks is a plain
//! group soft-threshold. Coefficients are mapped back to the original
//! dummy coding on return.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GemsError, Result};
use crate::glm::design::{bernoulli_log_lik, sigmoid, DummyDesign, GlmModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupLassoOptions {
    pub max_sweeps: usize,
    /// Largest tolerated violation of the group optimality conditions on
    /// the standardized scale.
    pub tol: f64,
}

impl Default for GroupLassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 20_000,
            tol: 1e-6,
        }
    }
}

/// One solution on a group lasso path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub model: GlmModel,
    pub log_lik: f64,
    pub df: usize,
    pub bic: f64,
}

/// Standardized group lasso problem for one data set.
#[derive(Debug, Clone)]
pub struct GroupLassoProblem {
    design: DummyDesign,
    /// Orthonormalized blocks, rows × design width.
    xt: DMatrix<f64>,
    y: Vec<f64>,
    /// Per group: column means and the inverse-transpose Cholesky factor
    /// mapping standardized coefficients back, or `None` for a degenerate
    /// block that is held at zero.
    transforms: Vec<Option<(Vec<f64>, DMatrix<f64>)>>,
}

/// State of a fit on the standardized scale.
#[derive(Debug, Clone)]
pub struct StandardizedFit {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub sweeps: usize,
}

impl GroupLassoProblem {
    /// `rows` are completed predictor rows and `y` the 0/1 response.
    pub fn new(design: &DummyDesign, rows: &[&[f64]], y: &[f64]) -> Result<Self> {
        let n = rows.len();
        if y.len() != n {
            return Err(GemsError::Shape("response length differs from row count".into()));
        }
        if n < 2 {
            return Err(GemsError::InvalidInput("group lasso needs at least two rows".into()));
        }
        let all: Vec<usize> = (0..design.num_vars()).collect();
        let mut xt = design.matrix(&all, rows.iter().copied());
        let nf = n as f64;
        let mut transforms = Vec::with_capacity(design.num_vars());
        for (j, g) in design.groups.iter().enumerate() {
            let k = g.len();
            let mut block = xt.columns(g.start, k).into_owned();
            let means: Vec<f64> = (0..k).map(|c| block.column(c).mean()).collect();
            for (c, m) in means.iter().enumerate() {
                block.column_mut(c).add_scalar_mut(-m);
            }
            let gram = block.transpose() * &block / nf;
            let scale = gram.diagonal().max().max(1.0);
            let chol = gram.clone().cholesky().filter(|c| {
                let l = c.l();
                (0..k).all(|i| l[(i, i)] > 1e-7 * scale.sqrt())
            });
            match chol {
                Some(c) => {
                    // X̃ = Xc L⁻ᵀ, so β = L⁻ᵀ β̃.
                    let linv_t = c
                        .l()
                        .transpose()
                        .try_inverse()
                        .ok_or_else(|| GemsError::Estimator(format!("group {j}: singular factor")))?;
                    let std_block = &block * &linv_t;
                    xt.columns_mut(g.start, k).copy_from(&std_block);
                    transforms.push(Some((means, linv_t)));
                }
                None => {
                    log::debug!("group {j} is degenerate in this data set and is held at zero");
                    xt.columns_mut(g.start, k).fill(0.0);
                    transforms.push(None);
                }
            }
        }
        Ok(Self {
            design: design.clone(),
            xt,
            y: y.to_vec(),
            transforms,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn null_intercept(&self) -> f64 {
        let ybar = (self.y.iter().sum::<f64>() / self.n() as f64).clamp(1e-10, 1.0 - 1e-10);
        (ybar / (1.0 - ybar)).ln()
    }

    /// `X̃_jᵀ r / n` for every group, with `r = y - p`.
    fn group_gradient(&self, j: usize, resid: &[f64]) -> Vec<f64> {
        let g = &self.design.groups[j];
        let nf = self.n() as f64;
        (g.start..g.end)
            .map(|c| self.xt.column(c).iter().zip(resid).map(|(a, r)| a * r).sum::<f64>() / nf)
            .collect()
    }

    fn weight(&self, j: usize) -> f64 {
        (self.design.group_size(j) as f64).sqrt()
    }

    /// Smallest penalty at which every group is zero.
    pub fn lambda_max(&self) -> f64 {
        let ybar = self.y.iter().sum::<f64>() / self.n() as f64;
        let resid: Vec<f64> = self.y.iter().map(|v| v - ybar).collect();
        (0..self.design.num_vars())
            .filter(|&j| self.transforms[j].is_some())
            .map(|j| norm(&self.group_gradient(j, &resid)) / self.weight(j))
            .fold(0.0, f64::max)
    }

    fn linear_predictor(&self, intercept: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![intercept; self.n()];
        for (c, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                for (e, x) in eta.iter_mut().zip(self.xt.column(c).iter()) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    /// Largest violation of the optimality conditions at `fit` for penalty
    /// `lambda`.
    pub fn kkt_violation(&self, fit: &StandardizedFit, lambda: f64) -> f64 {
        let eta = self.linear_predictor(fit.intercept, &fit.beta);
        let resid: Vec<f64> = self.y.iter().zip(&eta).map(|(y, e)| y - sigmoid(*e)).collect();
        let mut worst = (resid.iter().sum::<f64>() / self.n() as f64).abs();
        for j in 0..self.design.num_vars() {
            if self.transforms[j].is_none() {
                continue;
            }
            let g = self.group_gradient(j, &resid);
            let b = &fit.beta[self.design.groups[j].clone()];
            let nb = norm(b);
            let wl = lambda * self.weight(j);
            let v = if nb == 0.0 {
                (norm(&g) - wl).max(0.0)
            } else {
                g.iter()
                    .zip(b)
                    .map(|(gi, bi)| (gi - wl * bi / nb).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Minimizes `-ℓ/n + λ Σ √k_j ‖β̃_j‖` starting from `warm`.
    pub fn solve(&self, lambda: f64, warm: Option<&StandardizedFit>, opts: &GroupLassoOptions) -> Result<StandardizedFit> {
        let n = self.n();
        let width = self.design.width;
        let (mut b0, mut beta) = match warm {
            Some(w) => (w.intercept, w.beta.clone()),
            None => (self.null_intercept(), vec![0.0; width]),
        };
        let mut eta = self.linear_predictor(b0, &beta);
        let mut resid: Vec<f64> = self.y.iter().zip(&eta).map(|(y, e)| y - sigmoid(*e)).collect();
        let live: Vec<usize> = (0..self.design.num_vars()).filter(|&j| self.transforms[j].is_some()).collect();
        let inner_tol = opts.tol * 1e-2;
        let mut sweeps = 0;
        let mut full = true;
        loop {
            let groups: Vec<usize> = if full {
                live.clone()
            } else {
                live.iter()
                    .copied()
                    .filter(|&j| beta[self.design.groups[j].clone()].iter().any(|b| *b != 0.0))
                    .collect()
            };
            let mut max_change: f64 = 0.0;
            // Intercept.
            let step = 4.0 * resid.iter().sum::<f64>() / n as f64;
            if step != 0.0 {
                b0 += step;
                for i in 0..n {
                    eta[i] += step;
                    resid[i] = self.y[i] - sigmoid(eta[i]);
                }
                max_change = max_change.max(step.abs());
            }
            for &j in &groups {
                let range = self.design.groups[j].clone();
                let g = self.group_gradient(j, &resid);
                let z: Vec<f64> = beta[range.clone()].iter().zip(&g).map(|(b, gi)| b + 4.0 * gi).collect();
                let nz = norm(&z);
                let shrink = if nz > 0.0 {
                    (1.0 - 4.0 * lambda * self.weight(j) / nz).max(0.0)
                } else {
                    0.0
                };
                let mut changed = false;
                for (c, zc) in range.clone().zip(&z) {
                    let new = shrink * zc;
                    let d = new - beta[c];
                    if d != 0.0 {
                        changed = true;
                        max_change = max_change.max(d.abs());
                        for (e, x) in eta.iter_mut().zip(self.xt.column(c).iter()) {
                            *e += d * x;
                        }
                        beta[c] = new;
                    }
                }
                if changed {
                    for i in 0..n {
                        resid[i] = self.y[i] - sigmoid(eta[i]);
                    }
                }
            }
            sweeps += 1;
            if max_change < inner_tol {
                if full {
                    let fit = StandardizedFit {
                        intercept: b0,
                        beta: beta.clone(),
                        sweeps,
                    };
                    if self.kkt_violation(&fit, lambda) < opts.tol {
                        return Ok(fit);
                    }
                    // Tighten by continuing on the full set.
                } else {
                    full = true;
                    continue;
                }
            } else if full {
                full = false;
            }
            if sweeps >= opts.max_sweeps {
                let fit = StandardizedFit {
                    intercept: b0,
                    beta,
                    sweeps,
                };
                return Err(GemsError::NoConvergence {
                    what: "group lasso",
                    iterations: sweeps,
                    residual: self.kkt_violation(&fit, lambda),
                });
            }
        }
    }

    /// Maps a standardized fit back to the dummy coding.
    pub fn to_model(&self, fit: &StandardizedFit) -> GlmModel {
        let mut m = GlmModel::intercept_only(self.design.num_vars(), fit.intercept);
        for (j, t) in self.transforms.iter().enumerate() {
            let Some((means, linv_t)) = t else { continue };
            let range = self.design.groups[j].clone();
            let bt = nalgebra::DVector::from_column_slice(&fit.beta[range]);
            if bt.iter().all(|b| *b == 0.0) {
                continue;
            }
            let b = linv_t * bt;
            m.intercept -= means.iter().zip(b.iter()).map(|(a, c)| a * c).sum::<f64>();
            m.groups[j] = b.iter().copied().collect();
        }
        m
    }

    /// Log-likelihood of a standardized fit.
    pub fn log_lik(&self, fit: &StandardizedFit) -> f64 {
        let eta = self.linear_predictor(fit.intercept, &fit.beta);
        self.y.iter().zip(&eta).map(|(y, e)| bernoulli_log_lik(*y, *e)).sum()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `count` penalties log-spaced from `lambda_max` down to
/// `lambda_max * min_ratio`.
pub fn lambda_grid(lambda_max: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    if count <= 1 {
        return vec![lambda_max];
    }
    (0..count)
        .map(|i| lambda_max * min_ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// Path of solutions for decreasing penalties, warm-started in order.
pub fn group_lasso_path(
    problem: &GroupLassoProblem,
    lambdas: &[f64],
    opts: &GroupLassoOptions,
) -> Result<Vec<LassoFit>> {
    let ln_n = (problem.n() as f64).ln();
    let mut warm: Option<StandardizedFit> = None;
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let fit = problem.solve(lambda, warm.as_ref(), opts)?;
        let model = problem.to_model(&fit);
        let log_lik = problem.log_lik(&fit);
        let df = model.df();
        out.push(LassoFit {
            lambda,
            model,
            log_lik,
            df,
            bic: -2.0 * log_lik + df as f64 * ln_n,
        });
        warm = Some(fit);
    }
    Ok(out)
}

/// Minimum-BIC solution; ties go to the sparser model.
pub fn bic_choose(path: &[LassoFit]) -> Option<&LassoFit> {
    path.iter().min_by(|a, b| a.bic.total_cmp(&b.bic).then(a.df.cmp(&b.df)))
}

/// Default path for one data set: `count` penalties from `λ_max` down to
/// `λ_max · min_ratio`, then the minimum-BIC solution.
pub fn lasso_select(
    design: &DummyDesign,
    rows: &[&[f64]],
    y: &[f64],
    count: usize,
    min_ratio: f64,
    opts: &GroupLassoOptions,
) -> Result<LassoFit> {
    let problem = GroupLassoProblem::new(design, rows, y)?;
    let grid = lambda_grid(problem.lambda_max(), count, min_ratio);
    let path = group_lasso_path(&problem, &grid, opts)?;
    Ok(bic_choose(&path).expect("non-empty grid").clone())
}
