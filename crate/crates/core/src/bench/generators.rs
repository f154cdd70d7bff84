//! Simulation designs: precision matrices, Gaussian samples, missingness
//! mechanisms and mixed-predictor logistic scenes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{ColumnSpec, MixedDataset, ObservedMatrix};
use crate::error::{GemsError, Result};
use crate::linalg::{cholesky, inverse_pd, symmetrize};
use crate::rng::{substream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionModel {
    /// `Σ_jk = 0.7^|j-k|`.
    Ar1,
    /// Banded precision with bands 1, 0.4, 0.2, 0.2, 0.1.
    Ar4,
    /// `B + δI` with random 0.5 entries at rate `5/p`, condition number `p`.
    RandomSparse,
    /// Ten 3×3 blocks `B_jk = 0.7^|j-k|` of the covariance; `p = 30`.
    Block4,
}

/// `(Ω, Σ)` for a model and dimension.
pub fn gen_precision(model: PrecisionModel, p: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if p < 2 {
        return Err(GemsError::InvalidInput("p must be at least 2".into()));
    }
    match model {
        PrecisionModel::Ar1 => {
            let sigma = DMatrix::from_fn(p, p, |i, j| 0.7f64.powi(i.abs_diff(j) as i32));
            let omega = symmetrize(&inverse_pd(&sigma, "AR(1) covariance")?);
            Ok((omega, sigma))
        }
        PrecisionModel::Ar4 => {
            let band = [1.0, 0.4, 0.2, 0.2, 0.1];
            let omega = DMatrix::from_fn(p, p, |i, j| band.get(i.abs_diff(j)).copied().unwrap_or(0.0));
            let sigma = symmetrize(&inverse_pd(&omega, "AR(4) precision")?);
            Ok((omega, sigma))
        }
        PrecisionModel::RandomSparse => {
            for attempt in 0..100u64 {
                let mut rng = substream(seed, &[tag("random-sparse"), attempt]);
                let rate = (5.0 / p as f64).min(1.0);
                let mut b = DMatrix::zeros(p, p);
                for i in 0..p {
                    for j in i + 1..p {
                        if rng.random::<f64>() < rate {
                            b[(i, j)] = 0.5;
                            b[(j, i)] = 0.5;
                        }
                    }
                }
                let eig = SymmetricEigen::new(b.clone()).eigenvalues;
                let (lo, hi) = (eig.min(), eig.max());
                if hi - lo < 1e-12 {
                    continue;
                }
                // (hi + δ) / (lo + δ) = p
                let delta = (hi - p as f64 * lo) / (p as f64 - 1.0);
                let omega = b + DMatrix::identity(p, p) * delta;
                if let Ok(s) = inverse_pd(&omega, "random sparse precision") {
                    return Ok((omega, symmetrize(&s)));
                }
            }
            Err(GemsError::Estimator("no usable random sparse precision in 100 draws".into()))
        }
        PrecisionModel::Block4 => {
            if p != 30 {
                return Err(GemsError::Shape(format!("the block model has p = 30, got {p}")));
            }
            let mut sigma = DMatrix::zeros(p, p);
            for b in 0..10 {
                for i in 0..3 {
                    for j in 0..3 {
                        sigma[(3 * b + i, 3 * b + j)] = 0.7f64.powi(i.abs_diff(j) as i32);
                    }
                }
            }
            let mut omega = symmetrize(&inverse_pd(&sigma, "block covariance")?);
            omega.iter_mut().filter(|v| v.abs() < 1e-12).for_each(|v| *v = 0.0);
            Ok((omega, sigma))
        }
    }
}

/// Support of the off-diagonal part of a precision matrix.
pub fn true_edges(omega: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let p = omega.nrows();
    (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .filter(|&(i, j)| omega[(i, j)].abs() > 1e-10)
        .collect()
}

/// `n` rows from `N(mu, sigma)`.
pub fn sample_mvn(mu: &DVector<f64>, sigma: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let p = mu.len();
    if sigma.shape() != (p, p) {
        return Err(GemsError::Shape("mean and covariance differ in dimension".into()));
    }
    let l = cholesky(sigma, "sampling covariance")?.l();
    let mut rng = substream(seed, &[tag("mvn")]);
    let z = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
    let x = &l * z;
    Ok(DMatrix::from_fn(n, p, |i, j| x[(j, i)] + mu[j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum MissingSpec {
    /// Every cell missing independently with probability `rate`.
    Mcar { rate: f64 },
    /// Every third column (1-based 3, 6, …) missing independently with
    /// probability `pi`.
    Bernoulli { pi: f64 },
    /// Column `3b` missing when column `3b - 2` is below `Φ⁻¹(pi)`.
    Mar { pi: f64 },
    /// Column `3b` missing when its own value is below `Φ⁻¹(pi)`.
    Nmar { pi: f64 },
}

impl MissingSpec {
    fn param(&self) -> f64 {
        match *self {
            MissingSpec::Mcar { rate } => rate,
            MissingSpec::Bernoulli { pi } | MissingSpec::Mar { pi } | MissingSpec::Nmar { pi } => pi,
        }
    }
}

/// Masks cells of `x` according to `spec`. Under MCAR, rows that lose every
/// cell are redrawn.
pub fn apply_missing(x: &DMatrix<f64>, spec: MissingSpec, seed: u64) -> Result<ObservedMatrix> {
    let (n, p) = x.shape();
    let a = spec.param();
    let mcar = matches!(spec, MissingSpec::Mcar { .. });
    if !(0.0..1.0).contains(&a) || (!mcar && a == 0.0) {
        return Err(GemsError::InvalidInput(format!("missingness parameter {a} outside (0, 1)")));
    }
    let mut rng = substream(seed, &[tag("missing")]);
    let mut mask = vec![true; n * p];
    match spec {
        MissingSpec::Mcar { rate } => {
            for i in 0..n {
                let mut redraws = 0;
                loop {
                    for j in 0..p {
                        mask[i * p + j] = rng.random::<f64>() >= rate;
                    }
                    if mask[i * p..(i + 1) * p].iter().any(|m| *m) {
                        break;
                    }
                    redraws += 1;
                    log::debug!("row {i} lost every cell; redraw {redraws}");
                }
            }
        }
        _ => {
            if p % 3 != 0 {
                return Err(GemsError::Shape(format!("mechanisms on column triples need p divisible by 3, got {p}")));
            }
            let t = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(a);
            for b in 0..p / 3 {
                let target = 3 * b + 2;
                for i in 0..n {
                    let missing = match spec {
                        MissingSpec::Bernoulli { pi } => rng.random::<f64>() < pi,
                        MissingSpec::Mar { .. } => x[(i, 3 * b)] < t,
                        MissingSpec::Nmar { .. } => x[(i, target)] < t,
                        MissingSpec::Mcar { .. } => unreachable!(),
                    };
                    mask[i * p + target] = !missing;
                }
            }
        }
    }
    ObservedMatrix::new(x.clone(), mask)
}

/// Conditional of one vertex in a generated mixed DAG, per configuration of
/// its categorical parents (configurations enumerated in mixed radix with
/// the first parent varying slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SceneConditional {
    Categorical { probs: Vec<Vec<f64>> },
    /// Per configuration: intercept, coefficients on continuous parents,
    /// variance.
    Continuous { coefs: Vec<(f64, Vec<f64>, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedScene {
    /// Predictors with missing cells.
    pub data: MixedDataset,
    /// Predictors before masking.
    pub complete: MixedDataset,
    pub y: Vec<f64>,
    /// Variables with nonzero response coefficients, ascending.
    pub truth: Vec<usize>,
    /// Response coefficients by variable (dummy coding, baseline level 0).
    pub coefficients: Vec<Vec<f64>>,
    pub cat_parents: Vec<Vec<usize>>,
    pub cont_parents: Vec<Vec<usize>>,
    pub conditionals: Vec<SceneConditional>,
}

/// Random conditional Gaussian DAG on `q` categorical (columns `0..q`) and
/// `p` continuous (columns `q..q+p`) predictors, a logistic response on 3–5
/// categorical and 3–5 continuous true predictors, and MCAR masking at
/// `rate`.
pub fn gen_mixed_scene(p: usize, q: usize, n: usize, rate: f64, seed: u64) -> Result<MixedScene> {
    if p < 5 || q < 5 {
        return Err(GemsError::InvalidInput("p and q must be at least 5".into()));
    }
    let d = p + q;
    let mut rng = substream(seed, &[tag("mixed-scene")]);
    let levels: Vec<usize> = (0..q).map(|_| rng.random_range(2..=3)).collect();
    // Topological order: categorical vertices first, so no categorical
    // vertex has a continuous parent.
    let mut cats: Vec<usize> = (0..q).collect();
    let mut conts: Vec<usize> = (q..d).collect();
    cats.shuffle(&mut rng);
    conts.shuffle(&mut rng);
    let order: Vec<usize> = cats.into_iter().chain(conts).collect();
    let edge_prob = 2.0 / (d as f64 - 1.0);
    let mut cat_parents = vec![Vec::new(); d];
    let mut cont_parents = vec![Vec::new(); d];
    for (a, &u) in order.iter().enumerate() {
        for &v in &order[a + 1..] {
            if rng.random::<f64>() < edge_prob {
                if u < q {
                    cat_parents[v].push(u);
                } else {
                    cont_parents[v].push(u);
                }
            }
        }
    }
    for v in 0..d {
        cat_parents[v].sort_unstable();
        cont_parents[v].sort_unstable();
    }
    let choices = [-1.0, -0.5, 0.5, 1.0];
    let configs = |v: usize| cat_parents[v].iter().map(|&u| levels[u]).product::<usize>();
    let mut conditionals = Vec::with_capacity(d);
    for v in 0..d {
        let c = configs(v);
        conditionals.push(if v < q {
            let probs = (0..c)
                .map(|_| {
                    let r: Vec<f64> = (0..levels[v]).map(|_| rng.random_range(2..=8) as f64).collect();
                    let s: f64 = r.iter().sum();
                    r.iter().map(|x| x / s).collect()
                })
                .collect();
            SceneConditional::Categorical { probs }
        } else {
            let k = cont_parents[v].len();
            let coefs = (0..c)
                .map(|_| {
                    let var = rng.random_range(0.5..2.0);
                    if k == 0 {
                        (rng.random_range(-1.0..1.0), Vec::new(), var)
                    } else {
                        let b0 = choices[rng.random_range(0..4)];
                        let b = (0..k).map(|_| choices[rng.random_range(0..4)]).collect();
                        (b0, b, var)
                    }
                })
                .collect();
            SceneConditional::Continuous { coefs }
        });
    }
    // Response.
    let n_cat = rng.random_range(3..=5);
    let n_cont = rng.random_range(3..=5);
    let mut cat_pool: Vec<usize> = (0..q).collect();
    let mut cont_pool: Vec<usize> = (q..d).collect();
    cat_pool.shuffle(&mut rng);
    cont_pool.shuffle(&mut rng);
    let mut truth: Vec<usize> = cat_pool[..n_cat].iter().chain(&cont_pool[..n_cont]).copied().collect();
    truth.sort_unstable();
    let resp_choices = [-2.0, -1.0, 1.0, 2.0];
    let mut coefficients = vec![Vec::new(); d];
    for &v in &truth {
        let k = if v < q { levels[v] - 1 } else { 1 };
        coefficients[v] = (0..k).map(|_| resp_choices[rng.random_range(0..4)]).collect();
    }
    // Rows.
    let mut cells = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = vec![0.0; d];
        for &v in &order {
            let mut cfg = 0;
            for &u in &cat_parents[v] {
                cfg = cfg * levels[u] + x[u] as usize;
            }
            x[v] = match &conditionals[v] {
                SceneConditional::Categorical { probs } => {
                    crate::mixed::model::sample_index(&probs[cfg], &mut rng) as f64
                }
                SceneConditional::Continuous { coefs } => {
                    let (b0, b, var) = &coefs[cfg];
                    let mean = b0 + b.iter().zip(&cont_parents[v]).map(|(c, &u)| c * x[u]).sum::<f64>();
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + var.sqrt() * z
                }
            };
        }
        let mut eta = 0.0;
        for &v in &truth {
            if v < q {
                let l = x[v] as usize;
                if l > 0 {
                    eta += coefficients[v][l - 1];
                }
            } else {
                eta += coefficients[v][0] * x[v];
            }
        }
        y.push(if rng.random::<f64>() < crate::glm::design::sigmoid(eta) { 1.0 } else { 0.0 });
        cells.extend(x.into_iter().map(Some));
    }
    let columns: Vec<ColumnSpec> = (0..d)
        .map(|v| {
            if v < q {
                ColumnSpec::categorical(format!("w{}", v + 1), levels[v])
            } else {
                ColumnSpec::continuous(format!("z{}", v - q + 1))
            }
        })
        .collect();
    let complete = MixedDataset::new(columns.clone(), cells.clone())?;
    let mut masked = cells;
    let mut mrng = substream(seed, &[tag("mixed-missing")]);
    for i in 0..n {
        loop {
            let keep: Vec<bool> = (0..d).map(|_| mrng.random::<f64>() >= rate).collect();
            if keep.iter().any(|k| *k) {
                for (j, k) in keep.into_iter().enumerate() {
                    if !k {
                        masked[i * d + j] = None;
                    }
                }
                break;
            }
            log::debug!("row {i} lost every cell; redrawing its mask");
        }
    }
    let data = MixedDataset::new(columns, masked)?;
    Ok(MixedScene {
        data,
        complete,
        y,
        truth,
        coefficients,
        cat_parents,
        cont_parents,
        conditionals,
    })
}
