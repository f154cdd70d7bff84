//! Conditional-Gaussian marginals on a forest and the single-parent DAG
//! factorization of its joint density.
//!
//! A forest model is determined by closed-form maximum likelihood estimates
//! of its one- and two-variable marginals. Orienting every edge away from a
//! root (categorical whenever the component has one) turns these into
//! conditionals `f(x_v | x_parent)`, and the joint density is their product.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::VarKind;
use crate::error::{GemsError, Result};
use crate::mixed::forest::SdForest;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VertexMarginal {
    Categorical { probs: Vec<f64> },
    Continuous { mean: f64, var: f64 },
}

/// Pairwise marginal of an edge `(a, b)`, `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EdgeMarginal {
    /// `joint[i][j] = P(x_a = i, x_b = j)`.
    CatCat { joint: Vec<Vec<f64>> },
    ContCont { mean: [f64; 2], cov: [[f64; 2]; 2] },
    /// Per-level mean and variance of the continuous end, with `cat` the
    /// categorical end.
    CatCont {
        cat: usize,
        probs: Vec<f64>,
        means: Vec<f64>,
        vars: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestMarginals {
    pub vertices: Vec<VertexMarginal>,
    /// Aligned with [`SdForest::edges`].
    pub edges: Vec<EdgeMarginal>,
}

fn nonexistence(what: String, case: &'static str) -> GemsError {
    GemsError::MleNonexistence { what, case }
}

fn level_counts(col: &[f64], levels: usize) -> Vec<usize> {
    let mut c = vec![0usize; levels];
    for x in col {
        c[*x as usize] += 1;
    }
    c
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n)
}

/// Closed-form maximum likelihood fit of every vertex and edge marginal from
/// complete rows (`x` is rows × variables).
pub fn fit_marginals(forest: &SdForest, x: &DMatrix<f64>) -> Result<SdForest> {
    let d = forest.num_vertices();
    if x.ncols() != d {
        return Err(GemsError::Shape("data width differs from the number of vertices".into()));
    }
    let n = x.nrows();
    let col = |j: usize| x.column(j);
    let mut vertices = Vec::with_capacity(d);
    for (v, kind) in forest.kinds.iter().enumerate() {
        let c = col(v);
        vertices.push(match *kind {
            VarKind::Categorical { levels } => {
                let counts = level_counts(c.as_slice(), levels);
                if let Some(l) = counts.iter().position(|&k| k == 0) {
                    return Err(nonexistence(format!("vertex {v}: level {l} never observed"), "iv"));
                }
                VertexMarginal::Categorical {
                    probs: counts.iter().map(|&k| k as f64 / n as f64).collect(),
                }
            }
            VarKind::Continuous => {
                if n <= 1 {
                    return Err(nonexistence(format!("vertex {v}: {n} row(s)"), "v"));
                }
                let (mean, var) = mean_var(c.as_slice());
                if var <= 0.0 {
                    return Err(nonexistence(format!("vertex {v}: zero variance"), "v"));
                }
                VertexMarginal::Continuous { mean, var }
            }
        });
    }
    let mut edges = Vec::with_capacity(forest.edges.len());
    for &(a, b) in &forest.edges {
        let (ka, kb) = (forest.kinds[a], forest.kinds[b]);
        let (xa, xb) = (col(a), col(b));
        edges.push(match (ka, kb) {
            (VarKind::Categorical { levels: r }, VarKind::Categorical { levels: s }) => {
                let mut joint = vec![vec![0.0; s]; r];
                for (i, j) in xa.iter().zip(xb.iter()) {
                    joint[*i as usize][*j as usize] += 1.0;
                }
                for (i, row) in joint.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        if *cell == 0.0 {
                            return Err(nonexistence(format!("edge ({a}, {b}): empty cell ({i}, {j})"), "i"));
                        }
                        *cell /= n as f64;
                    }
                }
                EdgeMarginal::CatCat { joint }
            }
            (VarKind::Continuous, VarKind::Continuous) => {
                if n <= 2 {
                    return Err(nonexistence(format!("edge ({a}, {b}): {n} row(s)"), "ii"));
                }
                let (ma, va) = mean_var(xa.as_slice());
                let (mb, vb) = mean_var(xb.as_slice());
                let cab = xa.iter().zip(xb.iter()).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n as f64;
                if va * vb - cab * cab <= 1e-14 * va * vb {
                    return Err(nonexistence(format!("edge ({a}, {b}): singular covariance"), "ii"));
                }
                EdgeMarginal::ContCont {
                    mean: [ma, mb],
                    cov: [[va, cab], [cab, vb]],
                }
            }
            (VarKind::Categorical { levels }, VarKind::Continuous) => cat_cont(a, b, levels, xa.as_slice(), xb.as_slice())?,
            (VarKind::Continuous, VarKind::Categorical { levels }) => cat_cont(b, a, levels, xb.as_slice(), xa.as_slice())?,
        });
    }
    Ok(SdForest {
        kinds: forest.kinds.clone(),
        edges: forest.edges.clone(),
        marginals: Some(ForestMarginals { vertices, edges }),
    })
}

fn cat_cont(cat: usize, cont: usize, levels: usize, w: &[f64], z: &[f64]) -> Result<EdgeMarginal> {
    let counts = level_counts(w, levels);
    let mut means = vec![0.0; levels];
    for (a, x) in w.iter().zip(z) {
        means[*a as usize] += x;
    }
    for l in 0..levels {
        if counts[l] < 2 {
            return Err(nonexistence(
                format!("edge ({cat}, {cont}): level {l} has {} row(s)", counts[l]),
                "iii",
            ));
        }
        means[l] /= counts[l] as f64;
    }
    let mut vars = vec![0.0; levels];
    for (a, x) in w.iter().zip(z) {
        vars[*a as usize] += (x - means[*a as usize]).powi(2);
    }
    for l in 0..levels {
        vars[l] /= counts[l] as f64;
        if vars[l] <= 0.0 {
            return Err(nonexistence(format!("edge ({cat}, {cont}): level {l} has zero variance"), "iii"));
        }
    }
    let n = w.len() as f64;
    Ok(EdgeMarginal::CatCont {
        cat,
        probs: counts.iter().map(|&c| c as f64 / n).collect(),
        means,
        vars,
    })
}

/// Conditional law of a vertex given its parent (or its marginal for roots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Conditional {
    RootCat { probs: Vec<f64> },
    RootCont { mean: f64, var: f64 },
    /// `table[parent level][child level]`.
    CatGivenCat { table: Vec<Vec<f64>> },
    ContGivenCat { means: Vec<f64>, vars: Vec<f64> },
    ContGivenCont { intercept: f64, slope: f64, var: f64 },
}

/// Every edge of a forest oriented away from one root per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleParentDag {
    pub kinds: Vec<VarKind>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub roots: Vec<usize>,
    /// Parents before children.
    pub order: Vec<usize>,
    pub conditionals: Vec<Conditional>,
}

/// Orients each component from its lowest-index categorical vertex, or from
/// its lowest-index vertex when the component is all continuous.
pub fn orient_single_parent(forest: &SdForest) -> Result<SingleParentDag> {
    let roots: Vec<usize> = forest
        .components()
        .iter()
        .map(|comp| {
            comp.iter()
                .copied()
                .find(|&v| forest.kinds[v].is_categorical())
                .unwrap_or(comp[0])
        })
        .collect();
    orient_from_roots(forest, &roots)
}

/// Orients from the given roots (one per component). A component holding a
/// categorical vertex must be rooted at a categorical vertex.
pub fn orient_from_roots(forest: &SdForest, roots: &[usize]) -> Result<SingleParentDag> {
    let m = forest
        .marginals
        .as_ref()
        .ok_or_else(|| GemsError::InvalidInput("forest marginals are not fitted".into()))?;
    let d = forest.num_vertices();
    let adj = forest.adjacency();
    let mut parent = vec![None; d];
    let mut children = vec![Vec::new(); d];
    let mut visited = vec![false; d];
    let mut order = Vec::with_capacity(d);
    for &r in roots {
        if r >= d || visited[r] {
            return Err(GemsError::InvalidInput(format!("root {r} repeats a component")));
        }
        visited[r] = true;
        let start = order.len();
        order.push(r);
        let mut head = start;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent[v] = Some(u);
                    children[u].push(v);
                    order.push(v);
                }
            }
        }
        if !forest.kinds[r].is_categorical() && order[start..].iter().any(|&v| forest.kinds[v].is_categorical()) {
            return Err(GemsError::InvalidInput(format!(
                "component of vertex {r} contains a categorical vertex and needs a categorical root"
            )));
        }
    }
    if let Some(v) = visited.iter().position(|&s| !s) {
        return Err(GemsError::InvalidInput(format!("vertex {v} has no root")));
    }
    let edge_index = |a: usize, b: usize| {
        forest
            .edges
            .binary_search(&(a.min(b), a.max(b)))
            .expect("tree edge belongs to the forest")
    };
    let mut conditionals = Vec::with_capacity(d);
    for v in 0..d {
        conditionals.push(match parent[v] {
            None => match &m.vertices[v] {
                VertexMarginal::Categorical { probs } => Conditional::RootCat { probs: probs.clone() },
                VertexMarginal::Continuous { mean, var } => Conditional::RootCont { mean: *mean, var: *var },
            },
            Some(u) => match &m.edges[edge_index(u, v)] {
                EdgeMarginal::CatCat { joint } => {
                    let oriented: Vec<Vec<f64>> = if u < v {
                        joint.clone()
                    } else {
                        (0..joint[0].len()).map(|j| joint.iter().map(|row| row[j]).collect()).collect()
                    };
                    let table = oriented
                        .into_iter()
                        .map(|row| {
                            let s: f64 = row.iter().sum();
                            row.into_iter().map(|x| x / s).collect()
                        })
                        .collect();
                    Conditional::CatGivenCat { table }
                }
                EdgeMarginal::CatCont { cat, means, vars, .. } => {
                    if *cat != u {
                        return Err(GemsError::InvalidInput(format!(
                            "continuous vertex {u} would be the parent of categorical vertex {v}"
                        )));
                    }
                    Conditional::ContGivenCat {
                        means: means.clone(),
                        vars: vars.clone(),
                    }
                }
                EdgeMarginal::ContCont { mean, cov } => {
                    let (pu, pv) = if u < v { (0, 1) } else { (1, 0) };
                    let slope = cov[pu][pv] / cov[pu][pu];
                    Conditional::ContGivenCont {
                        intercept: mean[pv] - slope * mean[pu],
                        slope,
                        var: cov[pv][pv] - cov[pu][pv] * cov[pu][pv] / cov[pu][pu],
                    }
                }
            },
        });
    }
    Ok(SingleParentDag {
        kinds: forest.kinds.clone(),
        parent,
        children,
        roots: roots.to_vec(),
        order,
        conditionals,
    })
}

pub(crate) fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

impl SingleParentDag {
    pub fn num_vertices(&self) -> usize {
        self.kinds.len()
    }

    /// `ln f(x_v | x_parent)` for a complete row.
    pub fn log_conditional(&self, v: usize, row: &[f64]) -> f64 {
        let x = row[v];
        match &self.conditionals[v] {
            Conditional::RootCat { probs } => probs[x as usize].ln(),
            Conditional::RootCont { mean, var } => log_normal(x, *mean, *var),
            Conditional::CatGivenCat { table } => {
                table[row[self.parent[v].expect("non-root")] as usize][x as usize].ln()
            }
            Conditional::ContGivenCat { means, vars } => {
                let a = row[self.parent[v].expect("non-root")] as usize;
                log_normal(x, means[a], vars[a])
            }
            Conditional::ContGivenCont { intercept, slope, var } => {
                let xu = row[self.parent[v].expect("non-root")];
                log_normal(x, intercept + slope * xu, *var)
            }
        }
    }

    /// Natural log of the joint density of a complete row.
    pub fn log_density(&self, row: &[f64]) -> f64 {
        (0..self.num_vertices()).map(|v| self.log_conditional(v, row)).sum()
    }

    /// Draws a complete row by ancestral sampling.
    pub fn sample_prior(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let mut row = vec![0.0; self.num_vertices()];
        for &v in &self.order {
            row[v] = self.sample_conditional(v, &row, rng);
        }
        row
    }

    pub(crate) fn sample_conditional(&self, v: usize, row: &[f64], rng: &mut impl rand::Rng) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let z = |rng: &mut dyn rand::RngCore| -> f64 { StandardNormal.sample(rng) };
        match &self.conditionals[v] {
            Conditional::RootCat { probs } => sample_index(probs, rng) as f64,
            Conditional::RootCont { mean, var } => mean + var.sqrt() * z(rng),
            Conditional::CatGivenCat { table } => {
                sample_index(&table[row[self.parent[v].expect("non-root")] as usize], rng) as f64
            }
            Conditional::ContGivenCat { means, vars } => {
                let a = row[self.parent[v].expect("non-root")] as usize;
                means[a] + vars[a].sqrt() * z(rng)
            }
            Conditional::ContGivenCont { intercept, slope, var } => {
                let xu = row[self.parent[v].expect("non-root")];
                intercept + slope * xu + var.sqrt() * z(rng)
            }
        }
    }
}

/// Index drawn with probability proportional to `weights`.
pub(crate) fn sample_index(weights: &[f64], rng: &mut impl rand::Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const C: VarKind = VarKind::Continuous;
    const B: VarKind = VarKind::Categorical { levels: 2 };

    #[test]
    fn single_vertex_marginals() {
        let f = SdForest::empty(vec![C]);
        let fit = fit_marginals(&f, &DMatrix::from_column_slice(2, 1, &[0.0, 2.0])).unwrap();
        assert_eq!(
            fit.marginals.unwrap().vertices[0],
            VertexMarginal::Continuous { mean: 1.0, var: 1.0 }
        );
        let f = SdForest::empty(vec![B]);
        let fit = fit_marginals(&f, &DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(
            fit.marginals.unwrap().vertices[0],
            VertexMarginal::Categorical { probs: vec![0.75, 0.25] }
        );
    }

    #[test]
    fn edgeless_density_is_product_of_univariates() {
        let x = DMatrix::from_row_slice(5, 2, &[0.0, 1.2, 1.0, 0.3, 1.0, -0.4, 0.0, 2.2, 1.0, 0.9]);
        let f = fit_marginals(&SdForest::empty(vec![B, C]), &x).unwrap();
        let dag = orient_single_parent(&f).unwrap();
        assert!(dag.parent.iter().all(Option::is_none));
        let total: f64 = (0..5).map(|i| dag.log_density(&[x[(i, 0)], x[(i, 1)]])).sum();
        let z: Vec<f64> = (0..5).map(|i| x[(i, 1)]).collect();
        let (m, v) = mean_var(&z);
        let ll_z: f64 = z.iter().map(|&a| log_normal(a, m, v)).sum();
        let ll_w = 2.0 * 0.4f64.ln() + 3.0 * 0.6f64.ln();
        assert!((total - ll_z - ll_w).abs() < 1e-8);
    }

    #[test]
    fn continuous_parent_of_categorical_is_rejected() {
        let x = DMatrix::from_row_slice(6, 2, &[0.0, 1.2, 1.0, 0.3, 1.0, -0.4, 0.0, 2.2, 1.0, 0.9, 0.0, 0.1]);
        let f = fit_marginals(&SdForest::new(vec![B, C], [(0, 1)]).unwrap(), &x).unwrap();
        assert!(orient_from_roots(&f, &[1]).is_err());
        let dag = orient_from_roots(&f, &[0]).unwrap();
        assert_eq!(dag.parent, vec![None, Some(0)]);
    }
}
