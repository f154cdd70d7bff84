//! Graphical lasso by block coordinate descent.
//!
//! Solves `min_Ω  -ln det Ω + tr(S Ω) + ρ Σ_{j≠k} |Ω_jk|` over positive
//! definite `Ω`. The diagonal is not penalized. In terms of the `n`-scaled
//! objective `(n/2)(ln det Ω⁻¹ + tr(ΩS)) + λ‖Ω‖₁` the two penalties are
//! related by `ρ = 2λ/n`; see [`rho_from_lambda`].
//!
//! The solver works on `W ≈ Ω⁻¹`, sweeping columns and solving one lasso
//! problem per column. At the optimum `W_jj = S_jj`, `W_jk - S_jk = ρ
//! sign(Ω_jk)` where `Ω_jk ≠ 0` and `|W_jk - S_jk| ≤ ρ` elsewhere.

use nalgebra::DMatrix;

use crate::error::{GemsError, Result};
use crate::linalg::symmetrize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest change of `W` during a sweep.
    pub tol: f64,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-4,
        }
    }
}

/// Solver state that can seed the next fit along a path.
#[derive(Debug, Clone)]
pub struct GlassoFit {
    pub rho: f64,
    pub omega: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// Column `j` holds the lasso coefficients of column `j` (zero at `j`).
    beta: DMatrix<f64>,
    pub sweeps: usize,
}

pub fn rho_from_lambda(lambda: f64, n: usize) -> f64 {
    2.0 * lambda / n as f64
}

/// Smallest `ρ` giving a diagonal solution.
pub fn rho_max(s: &DMatrix<f64>) -> f64 {
    let p = s.nrows();
    let mut m: f64 = 0.0;
    for j in 0..p {
        for k in 0..j {
            m = m.max(s[(j, k)].abs());
        }
    }
    m
}

/// `count` log-spaced values from `min_ratio * rho_max` to `rho_max`,
/// increasing.
pub fn rho_grid(s: &DMatrix<f64>, count: usize, min_ratio: f64) -> Vec<f64> {
    let hi = rho_max(s);
    log_spaced(hi * min_ratio, hi, count)
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

fn validate(s: &DMatrix<f64>, rho: f64) -> Result<()> {
    if !s.is_square() {
        return Err(GemsError::Shape("covariance is not square".into()));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(GemsError::InvalidInput(format!("penalty {rho} must be finite and >= 0")));
    }
    if !crate::linalg::is_symmetric(s, 1e-9 * s.amax().max(1.0)) {
        return Err(GemsError::InvalidInput("covariance is not symmetric".into()));
    }
    if let Some(j) = (0..s.nrows()).find(|&j| !(s[(j, j)] > 0.0)) {
        return Err(GemsError::InvalidInput(format!(
            "covariance diagonal entry {j} is not positive"
        )));
    }
    Ok(())
}

pub fn glasso_fit(s: &DMatrix<f64>, rho: f64, opts: &GlassoOptions) -> Result<DMatrix<f64>> {
    Ok(glasso_solve(s, rho, opts, None)?.omega)
}

/// Fits for every penalty in `rhos`, visiting them in descending order with
/// warm starts. Results are returned in the order of `rhos`.
pub fn glasso_path(s: &DMatrix<f64>, rhos: &[f64], opts: &GlassoOptions) -> Result<Vec<GlassoFit>> {
    let mut order: Vec<usize> = (0..rhos.len()).collect();
    order.sort_by(|&a, &b| rhos[b].total_cmp(&rhos[a]));
    let mut out: Vec<Option<GlassoFit>> = vec![None; rhos.len()];
    let mut prev: Option<GlassoFit> = None;
    for idx in order {
        let fit = glasso_solve(s, rhos[idx], opts, prev.as_ref())?;
        prev = Some(fit.clone());
        out[idx] = Some(fit);
    }
    Ok(out.into_iter().map(|f| f.expect("every index visited")).collect())
}

pub fn glasso_solve(
    s: &DMatrix<f64>,
    rho: f64,
    opts: &GlassoOptions,
    warm: Option<&GlassoFit>,
) -> Result<GlassoFit> {
    validate(s, rho)?;
    let p = s.nrows();
    let (mut w, mut beta) = match warm {
        Some(f) if f.w.shape() == s.shape() => (f.w.clone(), f.beta.clone()),
        _ => (DMatrix::from_diagonal(&s.diagonal()), DMatrix::zeros(p, p)),
    };
    for j in 0..p {
        w[(j, j)] = s[(j, j)];
    }
    if p == 1 || rho >= rho_max(s) {
        // The diagonal solution satisfies the optimality conditions.
        let omega = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
        return Ok(GlassoFit {
            rho,
            omega,
            w: DMatrix::from_diagonal(&s.diagonal()),
            beta: DMatrix::zeros(p, p),
            sweeps: 0,
        });
    }

    let mut r = vec![0.0; p];
    let inner_tol = opts.tol * 1e-2;
    let mut sweeps = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    while sweeps < opts.max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            // r_k = s_kj - Σ_{l≠j} W_kl β_l for k ≠ j.
            for k in 0..p {
                r[k] = if k == j { 0.0 } else { s[(k, j)] };
            }
            for l in 0..p {
                let b = beta[(l, j)];
                if l != j && b != 0.0 {
                    for k in 0..p {
                        if k != j {
                            r[k] -= w[(k, l)] * b;
                        }
                    }
                }
            }
            lasso_cd(&w, j, &mut beta, &mut r, rho, inner_tol, opts.max_iter * 10)?;
            for k in 0..p {
                if k == j {
                    continue;
                }
                let new = s[(k, j)] - r[k];
                max_change = max_change.max((new - w[(k, j)]).abs());
                w[(k, j)] = new;
                w[(j, k)] = new;
            }
        }
        last_change = max_change;
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }
    let omega = precision_from(&w, &beta);
    if !converged {
        return Err(GemsError::NoConvergence {
            what: "graphical lasso",
            iterations: sweeps,
            residual: duality_gap(s, &omega, rho).unwrap_or(last_change),
        });
    }
    Ok(GlassoFit {
        rho,
        omega,
        w,
        beta,
        sweeps,
    })
}

/// Coordinate descent for `min ½ βᵀ W₁₁ β - βᵀ s₁₂ + ρ‖β‖₁` on column `j`,
/// where `W₁₁` is `w` without row and column `j`. `r` holds the residual
/// `s₁₂ - W₁₁ β` and is kept current.
fn lasso_cd(
    w: &DMatrix<f64>,
    j: usize,
    beta: &mut DMatrix<f64>,
    r: &mut [f64],
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    let p = w.nrows();
    let mut full_pass = true;
    let mut iter = 0;
    loop {
        iter += 1;
        if iter > max_iter {
            return Err(GemsError::NoConvergence {
                what: "graphical lasso column update",
                iterations: max_iter,
                residual: f64::NAN,
            });
        }
        let mut max_delta: f64 = 0.0;
        for k in 0..p {
            if k == j || (!full_pass && beta[(k, j)] == 0.0) {
                continue;
            }
            let wkk = w[(k, k)];
            let old = beta[(k, j)];
            let z = r[k] + wkk * old;
            let new = soft_threshold(z, rho) / wkk;
            if new != old {
                let d = new - old;
                beta[(k, j)] = new;
                for (l, rl) in r.iter_mut().enumerate() {
                    if l != j {
                        *rl -= w[(l, k)] * d;
                    }
                }
                max_delta = max_delta.max(d.abs() * wkk);
            }
        }
        if max_delta < tol {
            if full_pass {
                return Ok(());
            }
            full_pass = true;
        } else {
            full_pass = false;
        }
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn precision_from(w: &DMatrix<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let p = w.nrows();
    let mut omega = DMatrix::zeros(p, p);
    for j in 0..p {
        let dot: f64 = (0..p).filter(|&k| k != j).map(|k| w[(k, j)] * beta[(k, j)]).sum();
        let t22 = 1.0 / (w[(j, j)] - dot);
        omega[(j, j)] = t22;
        for k in 0..p {
            if k != j {
                omega[(k, j)] = -beta[(k, j)] * t22;
            }
        }
    }
    // Column updates leave tiny asymmetries; an entry is kept only when both
    // column solutions agree that it is nonzero.
    let mut sym = symmetrize(&omega);
    for j in 0..p {
        for k in 0..j {
            if omega[(j, k)] == 0.0 || omega[(k, j)] == 0.0 {
                sym[(j, k)] = 0.0;
                sym[(k, j)] = 0.0;
            }
        }
    }
    sym
}

/// Duality gap `tr(SΩ) - p + ρ Σ_{j≠k}|Ω_jk|`, valid when `Ω` is feasible.
pub fn duality_gap(s: &DMatrix<f64>, omega: &DMatrix<f64>, rho: f64) -> Option<f64> {
    let p = s.nrows();
    let mut l1 = 0.0;
    for j in 0..p {
        for k in 0..p {
            if j != k {
                l1 += omega[(j, k)].abs();
            }
        }
    }
    let gap = crate::linalg::trace_product(s, omega) - p as f64 + rho * l1;
    gap.is_finite().then_some(gap)
}

/// Support of the off-diagonal part of `omega` as an edge list.
pub fn support(omega: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let p = omega.nrows();
    let mut out = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if omega[(i, j)] != 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}
