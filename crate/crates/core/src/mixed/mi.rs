//! Pairwise mutual information between mixed variables.
//!
//! `I_{u,v}` is the maximized log-likelihood of the saturated pair model
//! minus the maximized marginal log-likelihoods:
//!
//! * categorical–categorical: `Σ n_ab ln(n n_ab / (n_a n_b))`, df `(r-1)(s-1)`;
//! * continuous–continuous: `-(n/2) ln(1 - ρ̂²)`, df 1;
//! * categorical–continuous with per-level means and variances:
//!   `(n/2) ln σ̂² - Σ_a (n_a/2) ln σ̂_a²`, df `2(r-1)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MixedDataset, VarKind};
use crate::error::{GemsError, Result};

/// Value used for the information of perfectly correlated continuous pairs.
pub const MI_SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeight {
    pub u: usize,
    pub v: usize,
    pub mi: f64,
    pub df: usize,
    pub penalized: f64,
}

/// Per-degree-of-freedom penalty applied as `mi - coef · df / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgePenalty {
    /// `coef = ln(n)` with `n` the rows used for the pair.
    Bic,
    None,
    Coefficient(f64),
}

impl EdgePenalty {
    fn coef(&self, n: usize) -> f64 {
        match self {
            EdgePenalty::Bic => (n as f64).ln(),
            EdgePenalty::None => 0.0,
            EdgePenalty::Coefficient(c) => *c,
        }
    }
}

/// Free parameters added by an edge between variables of the given kinds.
pub fn edge_df(a: VarKind, b: VarKind) -> usize {
    match (a, b) {
        (VarKind::Categorical { levels: r }, VarKind::Categorical { levels: s }) => (r - 1) * (s - 1),
        (VarKind::Continuous, VarKind::Continuous) => 1,
        (VarKind::Categorical { levels: r }, VarKind::Continuous)
        | (VarKind::Continuous, VarKind::Categorical { levels: r }) => 2 * (r - 1),
    }
}

/// Mutual information from two complete columns.
pub fn mi_from_columns(ku: VarKind, xu: &[f64], kv: VarKind, xv: &[f64]) -> Result<(f64, usize)> {
    let n = xu.len();
    if xv.len() != n {
        return Err(GemsError::Shape("pair columns differ in length".into()));
    }
    let df = edge_df(ku, kv);
    let mi = match (ku, kv) {
        (VarKind::Categorical { levels: r }, VarKind::Categorical { levels: s }) => {
            let mut table = vec![0usize; r * s];
            for (a, b) in xu.iter().zip(xv) {
                table[*a as usize * s + *b as usize] += 1;
            }
            if let Some(cell) = table.iter().position(|&c| c == 0) {
                return Err(GemsError::MleNonexistence {
                    what: format!("categorical pair cell ({}, {})", cell / s, cell % s),
                    case: "i",
                });
            }
            let ra: Vec<usize> = (0..r).map(|a| (0..s).map(|b| table[a * s + b]).sum()).collect();
            let cb: Vec<usize> = (0..s).map(|b| (0..r).map(|a| table[a * s + b]).sum()).collect();
            let nf = n as f64;
            let mut g = 0.0;
            for a in 0..r {
                for b in 0..s {
                    let c = table[a * s + b] as f64;
                    g += c * (nf * c / (ra[a] as f64 * cb[b] as f64)).ln();
                }
            }
            g.max(0.0)
        }
        (VarKind::Continuous, VarKind::Continuous) => {
            if n <= 2 {
                return Err(GemsError::MleNonexistence {
                    what: format!("continuous pair with {n} rows"),
                    case: "ii",
                });
            }
            let (mu, mv) = (mean(xu), mean(xv));
            let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
            for (a, b) in xu.iter().zip(xv) {
                suu += (a - mu) * (a - mu);
                svv += (b - mv) * (b - mv);
                suv += (a - mu) * (b - mv);
            }
            if suu <= 0.0 || svv <= 0.0 {
                return Err(GemsError::MleNonexistence {
                    what: "continuous pair with a constant column".into(),
                    case: "ii",
                });
            }
            let r2 = (suv * suv / (suu * svv)).min(1.0);
            if r2 >= 1.0 - 1e-15 {
                log::warn!("perfectly correlated continuous pair; information set to {MI_SENTINEL}");
                MI_SENTINEL
            } else {
                -(n as f64 / 2.0) * (1.0 - r2).ln()
            }
        }
        (VarKind::Categorical { levels }, VarKind::Continuous) => cat_cont_mi(levels, xu, xv)?,
        (VarKind::Continuous, VarKind::Categorical { levels }) => cat_cont_mi(levels, xv, xu)?,
    };
    Ok((mi, df))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn cat_cont_mi(levels: usize, w: &[f64], z: &[f64]) -> Result<f64> {
    let n = w.len();
    let mut cnt = vec![0usize; levels];
    let mut sum = vec![0.0; levels];
    for (a, x) in w.iter().zip(z) {
        cnt[*a as usize] += 1;
        sum[*a as usize] += x;
    }
    if let Some(a) = cnt.iter().position(|&c| c < 2) {
        return Err(GemsError::MleNonexistence {
            what: format!("level {a} has {} observation(s); at least 2 required", cnt[a]),
            case: "iii",
        });
    }
    let means: Vec<f64> = (0..levels).map(|a| sum[a] / cnt[a] as f64).collect();
    let mut ss = vec![0.0; levels];
    for (a, x) in w.iter().zip(z) {
        ss[*a as usize] += (x - means[*a as usize]).powi(2);
    }
    let m = mean(z);
    let total: f64 = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    let mut mi = (n as f64 / 2.0) * total.ln();
    for a in 0..levels {
        let var = ss[a] / cnt[a] as f64;
        if var <= 0.0 {
            return Err(GemsError::MleNonexistence {
                what: format!("level {a} has zero within-level variance"),
                case: "iii",
            });
        }
        mi -= cnt[a] as f64 / 2.0 * var.ln();
    }
    Ok(mi.max(0.0))
}

/// Mutual information for columns `u` and `v` of a dataset, using the rows
/// where both are observed.
pub fn pairwise_mi(ds: &MixedDataset, u: usize, v: usize, penalty: EdgePenalty) -> Result<EdgeWeight> {
    let (mut xu, mut xv) = (Vec::new(), Vec::new());
    for i in 0..ds.n() {
        if let (Some(a), Some(b)) = (ds.get(i, u), ds.get(i, v)) {
            xu.push(a);
            xv.push(b);
        }
    }
    let kinds = ds.kinds();
    let (mi, df) = mi_from_columns(kinds[u], &xu, kinds[v], &xv)?;
    Ok(EdgeWeight {
        u,
        v,
        mi,
        df,
        penalized: mi - penalty.coef(xu.len()) * df as f64 / 2.0,
    })
}

/// Outcome for every pair `u < v`: a weight, or the reason none exists.
pub type PairOutcome = std::result::Result<EdgeWeight, String>;

/// Weights for all pairs of a complete data matrix (rows × variables).
/// Pairs whose maximum likelihood estimate does not exist are reported as
/// errors in place; other failures abort.
pub fn all_pair_weights(kinds: &[VarKind], x: &DMatrix<f64>, penalty: EdgePenalty) -> Result<Vec<PairOutcome>> {
    let d = kinds.len();
    if x.ncols() != d {
        return Err(GemsError::Shape("data width differs from the number of variables".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|u| (u + 1..d).map(move |v| (u, v))).collect();
    let n = x.nrows();
    pairs
        .par_iter()
        .map(|&(u, v)| {
            match mi_from_columns(kinds[u], x.column(u).as_slice(), kinds[v], x.column(v).as_slice()) {
                Ok((mi, df)) => Ok(Ok(EdgeWeight {
                    u,
                    v,
                    mi,
                    df,
                    penalized: mi - penalty.coef(n) * df as f64 / 2.0,
                })),
                Err(e @ GemsError::MleNonexistence { .. }) => Ok(Err(e.to_string())),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Weights for all pairs of a dataset using pairwise complete cases.
pub fn all_pair_weights_pairwise(ds: &MixedDataset, penalty: EdgePenalty) -> Result<Vec<PairOutcome>> {
    let d = ds.width();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|u| (u + 1..d).map(move |v| (u, v))).collect();
    pairs
        .par_iter()
        .map(|&(u, v)| match pairwise_mi(ds, u, v, penalty) {
            Ok(w) => Ok(Ok(w)),
            Err(e @ GemsError::MleNonexistence { .. }) => Ok(Err(e.to_string())),
            Err(e) => Err(e),
        })
        .collect()
}
