//! Multivariate normal likelihoods and E-step statistics.
//!
//! All `-2 log-likelihood` values omit the `n p ln 2π` constant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ObservedMatrix;
use crate::error::{GemsError, Result};
use crate::linalg::{cholesky, inverse_pd, log_det_chol, submatrix, subvector, symmetrize};

/// Mean vector and precision matrix of a multivariate normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: DVector<f64>,
    pub omega: DMatrix<f64>,
}

impl GaussianParams {
    /// Validates shape, symmetry (to 1e-10 relative) and positive
    /// definiteness. The stored precision is exactly symmetrized.
    pub fn new(mu: DVector<f64>, omega: DMatrix<f64>) -> Result<Self> {
        let p = mu.len();
        if omega.shape() != (p, p) {
            return Err(GemsError::Shape(format!(
                "mean has length {p} but precision is {}x{}",
                omega.nrows(),
                omega.ncols()
            )));
        }
        let scale = omega.amax().max(1.0);
        if crate::linalg::max_abs_diff(&omega, &omega.transpose()) > 1e-10 * scale {
            return Err(GemsError::InvalidInput("precision is not symmetric".into()));
        }
        let omega = symmetrize(&omega);
        cholesky(&omega, "precision")?;
        Ok(Self { mu, omega })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Result<DMatrix<f64>> {
        inverse_pd(&self.omega, "precision")
    }
}

/// E-step summaries: expected sample mean and expected covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedStats {
    pub n: usize,
    pub xbar: DVector<f64>,
    pub sstar: DMatrix<f64>,
}

/// Sample mean and covariance with divisor `n`.
pub fn sample_stats(x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(GemsError::DegenerateSample(format!(
            "{n} row(s); at least 2 required"
        )));
    }
    let xbar = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= xbar.transpose();
    }
    let s = symmetrize(&(centered.transpose() * &centered / n as f64));
    Ok((xbar, s))
}

/// `n ln det Σ + n tr(Ω S) + n (μ - x̄)ᵀ Ω (μ - x̄)`.
pub fn neg2_loglik_from_stats(
    params: &GaussianParams,
    n: usize,
    xbar: &DVector<f64>,
    s: &DMatrix<f64>,
) -> Result<f64> {
    let chol = cholesky(&params.omega, "precision")?;
    let log_det_sigma = -log_det_chol(&chol);
    let d = &params.mu - xbar;
    let quad = (d.transpose() * &params.omega * &d)[(0, 0)];
    let tr = crate::linalg::trace_product(&params.omega, s);
    Ok(n as f64 * (log_det_sigma + tr + quad))
}

pub fn neg2_loglik_complete(params: &GaussianParams, x: &DMatrix<f64>) -> Result<f64> {
    if x.ncols() != params.p() {
        return Err(GemsError::Shape("data width differs from parameter dimension".into()));
    }
    let n = x.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let xbar = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= xbar.transpose();
    }
    let s = centered.transpose() * &centered / n as f64;
    neg2_loglik_from_stats(params, n, &xbar, &s)
}

/// Observed-data `-2 log-likelihood`, summing each row's marginal density
/// over its observed coordinates.
///
/// Works from the precision directly: with `m` the missing and `o` the
/// observed index set, `ln det Σ_oo = -ln det Ω + ln det Ω_mm` and
/// `Σ_oo⁻¹ = Ω_oo - Ω_om Ω_mm⁻¹ Ω_mo`.
pub fn neg2_loglik_observed(params: &GaussianParams, xo: &ObservedMatrix) -> Result<f64> {
    if xo.p() != params.p() {
        return Err(GemsError::Shape("data width differs from parameter dimension".into()));
    }
    let full = cholesky(&params.omega, "precision")?;
    let log_det_omega = log_det_chol(&full);
    let p = params.p();
    let mut total = 0.0;
    let mut r = DVector::zeros(p);
    for i in 0..xo.n() {
        let obs = xo.observed_idx(i);
        let mis = xo.missing_idx(i);
        r.fill(0.0);
        for &j in obs {
            r[j] = xo.values()[(i, j)] - params.mu[j];
        }
        // Full Ω r with r zero on missing coordinates.
        let w = &params.omega * &r;
        let mut quad: f64 = obs.iter().map(|&j| r[j] * w[j]).sum();
        let mut log_det = -log_det_omega;
        if !mis.is_empty() {
            let omm = submatrix(&params.omega, mis, mis);
            let c = cholesky(&omm, "missing block of precision")?;
            log_det += log_det_chol(&c);
            let b = subvector(&w, mis);
            let sol = c.solve(&b);
            quad -= b.dot(&sol);
        }
        total += log_det + quad;
    }
    Ok(total)
}

/// Conditional first and second moments of a row given its observed cells.
pub fn conditional_moments(
    row: &[Option<f64>],
    params: &GaussianParams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = params.p();
    if row.len() != p {
        return Err(GemsError::Shape("row width differs from parameter dimension".into()));
    }
    let obs: Vec<usize> = (0..p).filter(|&j| row[j].is_some()).collect();
    let mis: Vec<usize> = (0..p).filter(|&j| row[j].is_none()).collect();
    let mut e_x = DVector::from_fn(p, |j, _| row[j].unwrap_or(0.0));
    let (c, cond_cov) = conditional_missing(params, &obs, &mis, &e_x)?;
    for (a, &j) in mis.iter().enumerate() {
        e_x[j] = c[a];
    }
    let mut e_xx = &e_x * e_x.transpose();
    for (a, &j) in mis.iter().enumerate() {
        for (b, &k) in mis.iter().enumerate() {
            e_xx[(j, k)] += cond_cov[(a, b)];
        }
    }
    Ok((e_x, e_xx))
}

/// Conditional mean `c = μ_m - Ω_mm⁻¹ Ω_mo (x_o - μ_o)` and conditional
/// covariance `Ω_mm⁻¹` of the missing block. `x` holds observed values at
/// `obs` positions; other entries are ignored.
fn conditional_missing(
    params: &GaussianParams,
    obs: &[usize],
    mis: &[usize],
    x: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if mis.is_empty() {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let omm = submatrix(&params.omega, mis, mis);
    let chol = cholesky(&omm, "missing block of precision")?;
    let r = DVector::from_fn(obs.len(), |a, _| x[obs[a]] - params.mu[obs[a]]);
    let omo = submatrix(&params.omega, mis, obs);
    let shift = chol.solve(&(omo * r));
    let c = DVector::from_fn(mis.len(), |a, _| params.mu[mis[a]] - shift[a]);
    Ok((c, symmetrize(&chol.inverse())))
}

/// Expected mean and covariance statistics given observed cells.
///
/// `xbar = n⁻¹ Σ E(x_i)` and `sstar = n⁻¹ Σ E(x_i x_iᵀ) - xbar xbarᵀ`.
pub fn expected_stats(xo: &ObservedMatrix, params: &GaussianParams) -> Result<ExpectedStats> {
    let (n, p) = (xo.n(), xo.p());
    if p != params.p() {
        return Err(GemsError::Shape("data width differs from parameter dimension".into()));
    }
    if n == 0 {
        return Err(GemsError::DegenerateSample("no rows".into()));
    }
    let mut filled = xo.values().clone();
    let mut extra = DMatrix::<f64>::zeros(p, p);
    let mut row = DVector::zeros(p);
    // Rows sharing a missingness pattern share the conditional covariance
    // and the solve factorization; patterns are typically few.
    let mut cache: std::collections::HashMap<Vec<usize>, (nalgebra::Cholesky<f64, nalgebra::Dyn>, DMatrix<f64>, DMatrix<f64>)> =
        std::collections::HashMap::new();
    for i in 0..n {
        let mis = xo.missing_idx(i);
        if mis.is_empty() {
            continue;
        }
        let obs = xo.observed_idx(i);
        if !cache.contains_key(mis) {
            let omm = submatrix(&params.omega, mis, mis);
            let chol = cholesky(&omm, "missing block of precision")?;
            let cov = symmetrize(&chol.inverse());
            let omo = submatrix(&params.omega, mis, obs);
            cache.insert(mis.to_vec(), (chol, cov, omo));
        }
        let (chol, cov, omo) = &cache[mis];
        for &j in obs {
            row[j] = xo.values()[(i, j)];
        }
        let r = DVector::from_fn(obs.len(), |a, _| row[obs[a]] - params.mu[obs[a]]);
        let shift = chol.solve(&(omo * r));
        for (a, &j) in mis.iter().enumerate() {
            filled[(i, j)] = params.mu[j] - shift[a];
            for (b, &k) in mis.iter().enumerate() {
                extra[(j, k)] += cov[(a, b)];
            }
        }
    }
    let nf = n as f64;
    let xbar = filled.row_mean().transpose();
    let second = (filled.transpose() * &filled + extra) / nf;
    let sstar = symmetrize(&(second - &xbar * xbar.transpose()));
    Ok(ExpectedStats { n, xbar, sstar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ar1(p: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
    }

    fn params_from_sigma(mu: DVector<f64>, sigma: &DMatrix<f64>) -> GaussianParams {
        GaussianParams::new(mu, inverse_pd(sigma, "sigma").unwrap()).unwrap()
    }

    #[test]
    fn two_point_sample_stats() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]);
        let (m, s) = sample_stats(&x).unwrap();
        assert_eq!(m, DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(s, DMatrix::from_element(2, 2, 1.0));
        assert!(sample_stats(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn constant_column_has_zero_variance() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 4.0, 5.0]);
        assert_eq!(sample_stats(&x).unwrap().1[(1, 1)], 0.0);
    }

    #[test]
    fn complete_loglik_at_mle() {
        let x = DMatrix::from_row_slice(4, 2, &[0.1, 1.0, 1.3, -0.4, -0.7, 0.2, 2.0, 1.1]);
        let (m, s) = sample_stats(&x).unwrap();
        let params = GaussianParams::new(m, inverse_pd(&s, "s").unwrap()).unwrap();
        let expected = 4.0 * crate::linalg::log_det_pd(&s, "s").unwrap() + 4.0 * 2.0;
        assert_relative_eq!(neg2_loglik_complete(&params, &x).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn scalar_zero_case() {
        let params = GaussianParams::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        assert_eq!(neg2_loglik_complete(&params, &DMatrix::zeros(1, 1)).unwrap(), 0.0);
    }

    #[test]
    fn single_observed_coordinate_contribution() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.5]);
        let params = params_from_sigma(DVector::from_vec(vec![0.5, -1.0]), &sigma);
        let xo = ObservedMatrix::from_rows(&[vec![None, Some(0.3)]]).unwrap();
        let expected = 1.5f64.ln() + (0.3f64 + 1.0).powi(2) / 1.5;
        assert_relative_eq!(neg2_loglik_observed(&params, &xo).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn bivariate_conditional_moments() {
        let params = params_from_sigma(DVector::zeros(2), &ar1(2, 0.7));
        let (e_x, e_xx) = conditional_moments(&[Some(1.0), None], &params).unwrap();
        assert_relative_eq!(e_x[1], 0.7, epsilon = 1e-12);
        assert_relative_eq!(e_xx[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e_xx[(0, 1)], 0.7, epsilon = 1e-12);
        assert_relative_eq!(e_xx[(1, 0)], 0.7, epsilon = 1e-12);
        assert_eq!(e_xx[(0, 0)], 1.0);
    }

    #[test]
    fn fully_missing_row_gives_unconditional_moments() {
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let sigma = ar1(3, 0.4);
        let params = params_from_sigma(mu.clone(), &sigma);
        let (e_x, e_xx) = conditional_moments(&[None, None, None], &params).unwrap();
        assert_relative_eq!(e_x, mu.clone(), epsilon = 1e-12);
        assert_relative_eq!(e_xx, &sigma + &mu * mu.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn expected_stats_on_complete_data_are_sample_stats() {
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 0.3 * j as f64);
        let params = params_from_sigma(DVector::zeros(3), &ar1(3, 0.5));
        let st = expected_stats(&ObservedMatrix::from_complete(x.clone()).unwrap(), &params).unwrap();
        let (m, s) = sample_stats(&x).unwrap();
        assert_relative_eq!(st.xbar, m, epsilon = 1e-12);
        assert_relative_eq!(st.sstar, s, epsilon = 1e-12);
    }

    #[test]
    fn expected_stats_agree_with_row_moments() {
        let params = params_from_sigma(DVector::from_vec(vec![0.2, 0.0, -0.4]), &ar1(3, 0.6));
        let rows = vec![
            vec![Some(1.0), None, Some(0.5)],
            vec![None, None, Some(-1.0)],
            vec![Some(0.3), Some(0.1), Some(2.0)],
            vec![None, Some(1.2), None],
        ];
        let xo = ObservedMatrix::from_rows(&rows).unwrap();
        let st = expected_stats(&xo, &params).unwrap();
        let mut sx = DVector::zeros(3);
        let mut sxx = DMatrix::zeros(3, 3);
        for r in &rows {
            let (e, ee) = conditional_moments(r, &params).unwrap();
            sx += e;
            sxx += ee;
        }
        let xbar = sx / 4.0;
        let sstar = sxx / 4.0 - &xbar * xbar.transpose();
        assert_relative_eq!(st.xbar, xbar, epsilon = 1e-12);
        assert_relative_eq!(st.sstar, sstar, epsilon = 1e-12);
    }
}
