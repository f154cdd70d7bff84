//! Structure recovery and estimation-error metrics.

use std::collections::HashSet;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GemsError, Result};
use crate::linalg::{cholesky, log_det_chol};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub tpr: f64,
    pub ppv: f64,
    pub mcc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm2: Option<f64>,
    pub runtime_s: f64,
}

impl MetricReport {
    /// Rates from confusion counts. A rate or correlation whose denominator
    /// vanishes is reported as 0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            tp,
            fp,
            fn_,
            tn,
            tpr: ratio(tp, tp + fn_),
            ppv: ratio(tp, tp + fp),
            mcc: mcc(tp, fp, fn_, tn),
            ..Self::default()
        }
    }
}

/// Matthews correlation coefficient, 0 when any marginal is empty.
pub fn mcc(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0) {
        return 0.0;
    }
    let num = tp as f64 * tn as f64 - fp as f64 * fn_ as f64;
    let den = factors.iter().map(|f| *f as f64).product::<f64>().sqrt();
    num / den
}

/// Confusion counts of `estimated` against `truth` over a universe of
/// `universe` items.
pub fn eval_structure<T: Eq + Hash>(estimated: &[T], truth: &[T], universe: usize) -> Result<MetricReport> {
    let est: HashSet<&T> = estimated.iter().collect();
    let tru: HashSet<&T> = truth.iter().collect();
    let tp = est.intersection(&tru).count() as u64;
    let fp = est.len() as u64 - tp;
    let fn_ = tru.len() as u64 - tp;
    let covered = (tp + fp + fn_) as usize;
    if covered > universe {
        return Err(GemsError::InvalidInput(format!(
            "{covered} distinct items exceed a universe of {universe}"
        )));
    }
    Ok(MetricReport::from_counts(tp, fp, fn_, (universe - covered) as u64))
}

/// `KL(N(mu1, sigma1) ‖ N(mu2, sigma2))`. In the benchmarks the first
/// argument is the truth and the second the estimate.
pub fn kl_gaussian(mu1: &DVector<f64>, sigma1: &DMatrix<f64>, mu2: &DVector<f64>, sigma2: &DMatrix<f64>) -> Result<f64> {
    let p = mu1.len();
    if sigma1.shape() != (p, p) || sigma2.shape() != (p, p) || mu2.len() != p {
        return Err(GemsError::Shape("distributions differ in dimension".into()));
    }
    let c1 = cholesky(sigma1, "first covariance")?;
    let c2 = cholesky(sigma2, "second covariance")?;
    let tr = c2.solve(sigma1).trace();
    let d = mu2 - mu1;
    let quad = d.dot(&c2.solve(&d));
    Ok(0.5 * (tr + quad - p as f64 + log_det_chol(&c2) - log_det_chol(&c1)))
}

/// Spectral norm of `a - b` by power iteration on `(a - b)ᵀ(a - b)`.
pub fn norm2_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(GemsError::Shape("matrices differ in shape".into()));
    }
    let d = a - b;
    let m = d.transpose() * &d;
    let k = m.ncols();
    if k == 0 || m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    // Deterministic start with no special alignment.
    let mut v = DVector::from_fn(k, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w = &m * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return Ok(0.0);
        }
        let next = nw;
        v = w / nw;
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(lambda.sqrt())
}

/// Upper-triangle support of a precision estimate.
pub fn edge_support(omega: &DMatrix<f64>, tol: f64) -> Vec<(usize, usize)> {
    let p = omega.nrows();
    (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .filter(|&(i, j)| omega[(i, j)].abs() > tol)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_mcc() {
        let r = MetricReport::from_counts(6, 2, 4, 88);
        let expected = 520.0 / (8.0f64 * 10.0 * 90.0 * 92.0).sqrt();
        assert!((r.mcc - expected).abs() < 1e-15);
        assert!((r.mcc - 0.6390).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_empty_estimates() {
        let truth = [(0, 1), (1, 2)];
        let r = eval_structure(&truth, &truth, 10).unwrap();
        assert_eq!((r.tpr, r.ppv, r.mcc), (1.0, 1.0, 1.0));
        let r = eval_structure(&[], &truth, 10).unwrap();
        assert_eq!((r.tpr, r.ppv, r.mcc), (0.0, 0.0, 0.0));
    }

    #[test]
    fn scalar_kl_and_asymmetry() {
        let z = DVector::zeros(1);
        let one = DMatrix::from_element(1, 1, 1.0);
        let two = DMatrix::from_element(1, 1, 2.0);
        let a = kl_gaussian(&z, &one, &z, &two).unwrap();
        assert!((a - 0.5 * (0.5 - 1.0 + 2f64.ln())).abs() < 1e-15);
        assert!((a - 0.0966).abs() < 1e-4);
        let b = kl_gaussian(&z, &two, &z, &one).unwrap();
        assert!((a - b).abs() > 1e-3);
        assert_eq!(kl_gaussian(&z, &one, &z, &one).unwrap(), 0.0);
    }

    #[test]
    fn norm2_simple_cases() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(norm2_diff(&i2, &i2).unwrap(), 0.0);
        assert!((norm2_diff(&(i2.clone() * 2.0), &i2).unwrap() - 1.0).abs() < 1e-12);
    }
}
