//! Exact posterior sampling of missing cells on a single-parent DAG.
//!
//! An upward pass absorbs the evidence below each vertex into a message for
//! its parent: a vector of log-weights over the parent's levels when the
//! parent is categorical, or an unnormalized Gaussian factor
//! `exp(k - a x²/2 + b x)` when the parent is continuous. The root
//! messages give the log-density of the observed cells. A downward pass then
//! samples each missing vertex from its posterior given the sampled parent
//! and the evidence below it.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{GemsError, Result};
use crate::linalg::log_sum_exp;
use crate::mixed::model::{log_normal, sample_index, Conditional, SingleParentDag};

/// `k - a x²/2 + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Form {
    k: f64,
    a: f64,
    b: f64,
}

impl Form {
    fn eval(&self, x: f64) -> f64 {
        self.k - 0.5 * self.a * x * x + self.b * x
    }

    fn add(&mut self, o: &Form) {
        self.k += o.k;
        self.a += o.a;
        self.b += o.b;
    }

    /// `ln ∫ N(x; m, s) exp(self(x)) dx`.
    fn integrate_normal(&self, m: f64, s: f64) -> f64 {
        let p = 1.0 / s + self.a;
        let l = m / s + self.b;
        self.k - 0.5 * (1.0 + s * self.a).ln() + l * l / (2.0 * p) - m * m / (2.0 * s)
    }

    /// Posterior mean and variance of `N(x; m, s) exp(self(x))`.
    fn posterior(&self, m: f64, s: f64) -> (f64, f64) {
        let p = 1.0 / s + self.a;
        ((m / s + self.b) / p, 1.0 / p)
    }
}

/// Evidence absorbed at every vertex for one partially observed row.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    dag: &'a SingleParentDag,
    row: Vec<Option<f64>>,
    /// Categorical vertices: log-evidence per own level (including the
    /// observation indicator).
    cat_h: Vec<Vec<f64>>,
    /// Continuous vertices: evidence from children as a factor in own value.
    cont_f: Vec<Form>,
    log_evidence: f64,
}

impl<'a> Posterior<'a> {
    pub fn new(dag: &'a SingleParentDag, row: &[Option<f64>]) -> Result<Self> {
        let d = dag.num_vertices();
        if row.len() != d {
            return Err(GemsError::Shape(format!("row has {} cells, DAG has {d} vertices", row.len())));
        }
        let mut cat_h: Vec<Vec<f64>> = dag
            .kinds
            .iter()
            .enumerate()
            .map(|(v, k)| match k.levels() {
                Some(r) => (0..r)
                    .map(|b| match row[v] {
                        Some(x) if x as usize != b => f64::NEG_INFINITY,
                        _ => 0.0,
                    })
                    .collect(),
                None => Vec::new(),
            })
            .collect();
        for (v, k) in dag.kinds.iter().enumerate() {
            if let (Some(r), Some(x)) = (k.levels(), row[v]) {
                if x < 0.0 || x.fract() != 0.0 || x as usize >= r {
                    return Err(GemsError::InvalidInput(format!("vertex {v}: level {x} out of range")));
                }
            }
        }
        let mut cont_f = vec![Form::default(); d];
        let mut log_evidence = 0.0;
        for &v in dag.order.iter().rev() {
            let parent = dag.parent[v];
            match &dag.conditionals[v] {
                Conditional::RootCat { probs } => {
                    let terms: Vec<f64> = probs.iter().zip(&cat_h[v]).map(|(p, h)| p.ln() + h).collect();
                    log_evidence += log_sum_exp(&terms);
                }
                Conditional::CatGivenCat { table } => {
                    let u = parent.expect("non-root");
                    let msg: Vec<f64> = table
                        .iter()
                        .map(|row_t| {
                            let terms: Vec<f64> = row_t.iter().zip(&cat_h[v]).map(|(p, h)| p.ln() + h).collect();
                            log_sum_exp(&terms)
                        })
                        .collect();
                    for (acc, m) in cat_h[u].iter_mut().zip(msg) {
                        *acc += m;
                    }
                }
                Conditional::RootCont { mean, var } => {
                    log_evidence += match row[v] {
                        Some(x) => log_normal(x, *mean, *var) + cont_f[v].eval(x),
                        None => cont_f[v].integrate_normal(*mean, *var),
                    };
                }
                Conditional::ContGivenCat { means, vars } => {
                    let u = parent.expect("non-root");
                    let f = cont_f[v];
                    for (a, acc) in cat_h[u].iter_mut().enumerate() {
                        *acc += match row[v] {
                            Some(x) => log_normal(x, means[a], vars[a]) + f.eval(x),
                            None => f.integrate_normal(means[a], vars[a]),
                        };
                    }
                }
                Conditional::ContGivenCont { intercept, slope, var } => {
                    let u = parent.expect("non-root");
                    let (al, be, s) = (*intercept, *slope, *var);
                    let f = cont_f[v];
                    let msg = match row[v] {
                        Some(x) => Form {
                            k: log_normal(x, al, s) + f.eval(x),
                            a: be * be / s,
                            b: be * (x - al) / s,
                        },
                        None => {
                            let p = 1.0 / s + f.a;
                            let l0 = al / s + f.b;
                            Form {
                                k: f.k - 0.5 * (1.0 + s * f.a).ln() + l0 * l0 / (2.0 * p) - al * al / (2.0 * s),
                                a: be * be * f.a / (1.0 + s * f.a),
                                b: l0 * (be / s) / p - al * be / s,
                            }
                        }
                    };
                    cont_f[u].add(&msg);
                }
            }
        }
        if !log_evidence.is_finite() {
            return Err(GemsError::ImpossibleEvidence(format!(
                "observed cells have zero density (log-density {log_evidence})"
            )));
        }
        Ok(Self {
            dag,
            row: row.to_vec(),
            cat_h,
            cont_f,
            log_evidence,
        })
    }

    /// Natural log of the marginal density of the observed cells.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    /// One completed row drawn from the exact posterior.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let dag = self.dag;
        let mut out = vec![0.0; dag.num_vertices()];
        for &v in &dag.order {
            if let Some(x) = self.row[v] {
                out[v] = x;
                continue;
            }
            let parent_value = dag.parent[v].map(|u| out[u]);
            out[v] = match &dag.conditionals[v] {
                Conditional::RootCat { probs } => self.draw_level(v, probs, rng),
                Conditional::CatGivenCat { table } => {
                    self.draw_level(v, &table[parent_value.expect("non-root") as usize], rng)
                }
                Conditional::RootCont { mean, var } => self.draw_cont(v, *mean, *var, rng),
                Conditional::ContGivenCat { means, vars } => {
                    let a = parent_value.expect("non-root") as usize;
                    self.draw_cont(v, means[a], vars[a], rng)
                }
                Conditional::ContGivenCont { intercept, slope, var } => {
                    let m = intercept + slope * parent_value.expect("non-root");
                    self.draw_cont(v, m, *var, rng)
                }
            };
        }
        out
    }

    fn draw_level(&self, v: usize, prior: &[f64], rng: &mut impl rand::Rng) -> f64 {
        let logw: Vec<f64> = prior.iter().zip(&self.cat_h[v]).map(|(p, h)| p.ln() + h).collect();
        let z = log_sum_exp(&logw);
        let w: Vec<f64> = logw.iter().map(|l| (l - z).exp()).collect();
        sample_index(&w, rng) as f64
    }

    fn draw_cont(&self, v: usize, m: f64, s: f64, rng: &mut impl rand::Rng) -> f64 {
        let (mean, var) = self.cont_f[v].posterior(m, s);
        let z: f64 = StandardNormal.sample(rng);
        mean + var.sqrt() * z
    }
}

/// `count` completions of `row` drawn from the posterior of its missing
/// cells.
pub fn conditional_sample(
    dag: &SingleParentDag,
    row: &[Option<f64>],
    count: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<Vec<f64>>> {
    let post = Posterior::new(dag, row)?;
    Ok((0..count).map(|_| post.sample(rng)).collect())
}

/// Seeded variant of [`conditional_sample`].
pub fn conditional_sample_seeded(
    dag: &SingleParentDag,
    row: &[Option<f64>],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    conditional_sample(dag, row, count, &mut crate::rng::from_seed(seed))
}

/// Natural log of the marginal density of the observed cells of `row`.
pub fn log_marginal(dag: &SingleParentDag, row: &[Option<f64>]) -> Result<f64> {
    Ok(Posterior::new(dag, row)?.log_evidence())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VarKind;

    fn two_node() -> SingleParentDag {
        SingleParentDag {
            kinds: vec![VarKind::Categorical { levels: 2 }, VarKind::Continuous],
            parent: vec![None, Some(0)],
            children: vec![vec![1], vec![]],
            roots: vec![0],
            order: vec![0, 1],
            conditionals: vec![
                Conditional::RootCat { probs: vec![0.3, 0.7] },
                Conditional::ContGivenCat {
                    means: vec![-1.0, 1.5],
                    vars: vec![1.0, 0.5],
                },
            ],
        }
    }

    #[test]
    fn bayes_rule_on_two_nodes() {
        let dag = two_node();
        let z = 0.4;
        let w0 = 0.3 * log_normal(z, -1.0, 1.0).exp();
        let w1 = 0.7 * log_normal(z, 1.5, 0.5).exp();
        let exact = w0 / (w0 + w1);
        let draws = conditional_sample_seeded(&dag, &[None, Some(z)], 10_000, 11).unwrap();
        let freq = draws.iter().filter(|r| r[0] == 0.0).count() as f64 / 1e4;
        let se = (exact * (1.0 - exact) / 1e4).sqrt();
        assert!((freq - exact).abs() < 3.0 * se, "{freq} vs {exact}");
        let le = log_marginal(&dag, &[None, Some(z)]).unwrap();
        assert!((le - (w0 + w1).ln()).abs() < 1e-12);
    }

    #[test]
    fn fully_observed_row_is_copied() {
        let dag = two_node();
        let draws = conditional_sample_seeded(&dag, &[Some(1.0), Some(0.2)], 3, 1).unwrap();
        assert!(draws.iter().all(|r| r == &vec![1.0, 0.2]));
    }

    #[test]
    fn evidence_of_empty_row_is_one() {
        assert!(log_marginal(&two_node(), &[None, None]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn linear_gaussian_chain_marginal() {
        // x0 ~ N(1, 2); x1 | x0 ~ N(0.5 + 0.8 x0, 0.3); observe x1 only.
        let dag = SingleParentDag {
            kinds: vec![VarKind::Continuous, VarKind::Continuous],
            parent: vec![None, Some(0)],
            children: vec![vec![1], vec![]],
            roots: vec![0],
            order: vec![0, 1],
            conditionals: vec![
                Conditional::RootCont { mean: 1.0, var: 2.0 },
                Conditional::ContGivenCont {
                    intercept: 0.5,
                    slope: 0.8,
                    var: 0.3,
                },
            ],
        };
        let x1 = 2.0;
        let expected = log_normal(x1, 0.5 + 0.8, 0.3 + 0.64 * 2.0);
        assert!((log_marginal(&dag, &[None, Some(x1)]).unwrap() - expected).abs() < 1e-12);
        // Observing x0 as well gives the product of conditionals.
        let both = log_normal(0.7, 1.0, 2.0) + log_normal(x1, 0.5 + 0.8 * 0.7, 0.3);
        assert!((log_marginal(&dag, &[Some(0.7), Some(x1)]).unwrap() - both).abs() < 1e-12);
    }

    #[test]
    fn impossible_level_is_reported() {
        let mut dag = two_node();
        dag.conditionals[0] = Conditional::RootCat { probs: vec![1.0, 0.0] };
        let err = Posterior::new(&dag, &[Some(1.0), None]).unwrap_err();
        assert!(matches!(err, GemsError::ImpossibleEvidence(_)));
    }
}
