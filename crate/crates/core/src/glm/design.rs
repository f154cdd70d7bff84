//! Dummy coding of mixed predictors and the logistic model on top of it.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::VarKind;
use crate::error::{GemsError, Result};

/// Maps mixed predictor rows to design rows. A categorical variable with `r`
/// levels contributes `r - 1` indicator columns (level 0 is the baseline); a
/// continuous variable contributes itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyDesign {
    pub kinds: Vec<VarKind>,
    /// Design columns of each variable.
    pub groups: Vec<Range<usize>>,
    pub width: usize,
}

impl DummyDesign {
    pub fn new(kinds: &[VarKind]) -> Self {
        let mut groups = Vec::with_capacity(kinds.len());
        let mut start = 0;
        for k in kinds {
            let size = group_size(*k);
            groups.push(start..start + size);
            start += size;
        }
        Self {
            kinds: kinds.to_vec(),
            groups,
            width: start,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn group_size(&self, j: usize) -> usize {
        self.groups[j].len()
    }

    /// Writes the design columns of variable `j` for value `x` into `out`.
    fn encode(&self, j: usize, x: f64, out: &mut [f64]) {
        match self.kinds[j] {
            VarKind::Continuous => out[0] = x,
            VarKind::Categorical { .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let level = x as usize;
                if level > 0 {
                    out[level - 1] = 1.0;
                }
            }
        }
    }

    /// Design matrix (without intercept) restricted to the variables in
    /// `vars`, one row per completed predictor row.
    pub fn matrix<'r>(&self, vars: &[usize], rows: impl ExactSizeIterator<Item = &'r [f64]>) -> DMatrix<f64> {
        let w: usize = vars.iter().map(|&j| self.group_size(j)).sum();
        let n = rows.len();
        let mut out = DMatrix::zeros(n, w);
        let mut buf = vec![0.0; w];
        for (i, row) in rows.enumerate() {
            let mut c = 0;
            for &j in vars {
                let k = self.group_size(j);
                self.encode(j, row[j], &mut buf[c..c + k]);
                c += k;
            }
            for (c, b) in buf.iter().enumerate() {
                out[(i, c)] = *b;
            }
        }
        out
    }
}

fn group_size(k: VarKind) -> usize {
    match k {
        VarKind::Continuous => 1,
        VarKind::Categorical { levels } => levels - 1,
    }
}

/// Logistic regression on dummy-coded predictors. `groups[j]` is empty when
/// variable `j` is excluded and otherwise holds all its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub intercept: f64,
    pub groups: Vec<Vec<f64>>,
    /// Dispersion; fixed at 1 for the logistic link.
    pub tau: f64,
}

impl GlmModel {
    pub fn intercept_only(num_vars: usize, intercept: f64) -> Self {
        Self {
            intercept,
            groups: vec![Vec::new(); num_vars],
            tau: 1.0,
        }
    }

    /// Builds a model from coefficients laid out in the order of `vars`.
    pub fn from_coefficients(design: &DummyDesign, vars: &[usize], intercept: f64, coef: &[f64]) -> Self {
        let mut m = Self::intercept_only(design.num_vars(), intercept);
        let mut c = 0;
        for &j in vars {
            let k = design.group_size(j);
            m.groups[j] = coef[c..c + k].to_vec();
            c += k;
        }
        m
    }

    /// Indices of the included variables, ascending.
    pub fn selected(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .map(|(j, _)| j)
            .collect()
    }

    pub fn df(&self) -> usize {
        self.groups.iter().map(|g| g.iter().filter(|b| **b != 0.0).count()).sum()
    }

    /// Linear predictor for one completed predictor row.
    pub fn eta(&self, design: &DummyDesign, row: &[f64]) -> f64 {
        let mut eta = self.intercept;
        for (j, g) in self.groups.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            match design.kinds[j] {
                VarKind::Continuous => eta += g[0] * row[j],
                VarKind::Categorical { .. } => {
                    let level = row[j] as usize;
                    if level > 0 {
                        eta += g[level - 1];
                    }
                }
            }
        }
        eta
    }

    /// `ln f(y | x)` for a binary response.
    pub fn log_lik_row(&self, design: &DummyDesign, row: &[f64], y: f64) -> f64 {
        bernoulli_log_lik(y, self.eta(design, row))
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y η - ln(1 + e^η)`.
pub fn bernoulli_log_lik(y: f64, eta: f64) -> f64 {
    y * eta - softplus(eta)
}

pub fn check_binary(y: &[f64]) -> Result<()> {
    match y.iter().position(|v| *v != 0.0 && *v != 1.0) {
        Some(i) => Err(GemsError::InvalidInput(format!(
            "response must be 0/1; row {i} has {}",
            y[i]
        ))),
        None => Ok(()),
    }
}

/// Weighted unpenalized logistic fit by damped Newton iterations. `x`
/// excludes the intercept column. Returns `(intercept, coefficients,
/// weighted log-likelihood)`.
pub fn logistic_mle(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    start: Option<(f64, &[f64])>,
) -> Result<(f64, Vec<f64>, f64)> {
    let (n, k) = x.shape();
    if y.len() != n || w.len() != n {
        return Err(GemsError::Shape("design, response and weights differ in length".into()));
    }
    let mut beta = DVector::zeros(k + 1);
    match start {
        Some((b0, b)) if b.len() == k => {
            beta[0] = b0;
            beta.rows_mut(1, k).copy_from_slice(b);
        }
        _ => {
            let sw: f64 = w.iter().sum();
            let ybar = (y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw).clamp(1e-6, 1.0 - 1e-6);
            beta[0] = (ybar / (1.0 - ybar)).ln();
        }
    }
    let eta_of = |b: &DVector<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| b[0] + (0..k).map(|c| x[(i, c)] * b[c + 1]).sum::<f64>())
            .collect()
    };
    let ll_of = |eta: &[f64]| -> f64 { (0..n).map(|i| w[i] * bernoulli_log_lik(y[i], eta[i])).sum() };
    let mut eta = eta_of(&beta);
    let mut ll = ll_of(&eta);
    for _ in 0..100 {
        let mut grad = DVector::zeros(k + 1);
        let mut hess = DMatrix::zeros(k + 1, k + 1);
        let mut row = vec![1.0; k + 1];
        for i in 0..n {
            for c in 0..k {
                row[c + 1] = x[(i, c)];
            }
            let p = sigmoid(eta[i]);
            let r = w[i] * (y[i] - p);
            let v = w[i] * p * (1.0 - p);
            for a in 0..=k {
                grad[a] += r * row[a];
                if v > 0.0 {
                    for b in 0..=a {
                        hess[(a, b)] += v * row[a] * row[b];
                    }
                }
            }
        }
        for a in 0..=k {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
            hess[(a, a)] += 1e-10;
        }
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => {
                let mut h = hess;
                for a in 0..=k {
                    h[(a, a)] += 1e-6;
                }
                match h.cholesky() {
                    Some(c) => c.solve(&grad),
                    None => break,
                }
            }
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &beta + &step * t;
            let e = eta_of(&cand);
            let l = ll_of(&e);
            if l >= ll - 1e-12 * ll.abs() {
                let gain = l - ll;
                beta = cand;
                eta = e;
                ll = l;
                improved = gain > 1e-10 * (1.0 + ll.abs());
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((beta[0], beta.rows(1, k).iter().copied().collect(), ll))
}
