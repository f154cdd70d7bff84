//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the solver code it is used to check; the oracles
//! use textbook formulas, dense decompositions or brute force.
#![allow(dead_code)]

use gems_core::data::VarKind;
use gems_core::mixed::{Conditional, EdgeWeight, SingleParentDag};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Sample covariance (divisor n) of `n` standard normal draws mixed through
/// a random matrix, so the result is a generic positive definite matrix.
pub fn random_covariance(p: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| normal(rng));
    let z = DMatrix::from_fn(n, p, |_, _| normal(rng)) * a;
    let mean = DVector::from_fn(p, |j, _| z.column(j).mean());
    let mut s = DMatrix::zeros(p, p);
    for i in 0..n {
        let d = z.row(i).transpose() - &mean;
        s += &d * d.transpose();
    }
    s / n as f64
}

/// Random positive definite precision with unit-scale entries.
pub fn random_precision(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| normal(rng));
    &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.5
}

// ---------------------------------------------------------------------------
// Decomposable graphs

pub fn is_clique(adj: &[Vec<bool>], set: &[usize]) -> bool {
    set.iter()
        .enumerate()
        .all(|(a, &u)| set[a + 1..].iter().all(|&v| adj[u][v]))
}

/// Chordality by repeated removal of simplicial vertices.
pub fn is_chordal(adj: &[Vec<bool>]) -> bool {
    let p = adj.len();
    let mut alive = vec![true; p];
    for _ in 0..p {
        let next = (0..p).find(|&v| {
            alive[v] && {
                let nb: Vec<usize> = (0..p).filter(|&u| alive[u] && adj[v][u]).collect();
                is_clique(adj, &nb)
            }
        });
        match next {
            Some(v) => alive[v] = false,
            None => return false,
        }
    }
    true
}

/// Random chordal graph: a random graph completed with the fill-in of a
/// random elimination order.
pub fn random_chordal(p: usize, density: f64, rng: &mut impl Rng) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; p]; p];
    for i in 0..p {
        for j in i + 1..p {
            if rng.random::<f64>() < density {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut eliminated = vec![false; p];
    for &v in &order {
        let nb: Vec<usize> = (0..p).filter(|&u| !eliminated[u] && u != v && adj[v][u]).collect();
        for a in 0..nb.len() {
            for b in a + 1..nb.len() {
                adj[nb[a]][nb[b]] = true;
                adj[nb[b]][nb[a]] = true;
            }
        }
        eliminated[v] = true;
    }
    adj
}

/// Maximal cliques by subset enumeration (small `p` only).
pub fn brute_cliques(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let p = adj.len();
    let sets: Vec<Vec<usize>> = (1u32..1 << p)
        .map(|mask| (0..p).filter(|&v| mask >> v & 1 == 1).collect::<Vec<_>>())
        .filter(|s| is_clique(adj, s))
        .collect();
    sets.iter()
        .filter(|s| !sets.iter().any(|t| t.len() > s.len() && s.iter().all(|v| t.contains(v))))
        .cloned()
        .collect()
}

fn padded_inverse(s: &DMatrix<f64>, set: &[usize]) -> DMatrix<f64> {
    let p = s.nrows();
    let sub = DMatrix::from_fn(set.len(), set.len(), |a, b| s[(set[a], set[b])]);
    let inv = sub.try_inverse().expect("principal submatrix is invertible");
    let mut out = DMatrix::zeros(p, p);
    for (a, &i) in set.iter().enumerate() {
        for (b, &j) in set.iter().enumerate() {
            out[(i, j)] = inv[(a, b)];
        }
    }
    out
}

/// Closed-form maximum likelihood precision of a decomposable model:
/// `Σ_C [S_C⁻¹]⁰ - Σ_S [S_S⁻¹]⁰` over the cliques and the separators of a
/// junction tree (a maximum-weight spanning tree on clique intersections).
pub fn decomposable_mle(adj: &[Vec<bool>], s: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(is_chordal(adj));
    let cliques = brute_cliques(adj);
    let k = cliques.len();
    let inter = |a: usize, b: usize| -> Vec<usize> {
        cliques[a].iter().copied().filter(|v| cliques[b].contains(v)).collect()
    };
    let mut omega = DMatrix::zeros(s.nrows(), s.nrows());
    for c in &cliques {
        omega += padded_inverse(s, c);
    }
    // Prim's algorithm, maximizing separator size.
    let mut in_tree = vec![false; k];
    in_tree[0] = true;
    for _ in 1..k {
        let mut best: Option<(usize, usize, usize)> = None;
        for a in (0..k).filter(|&a| in_tree[a]) {
            for b in (0..k).filter(|&b| !in_tree[b]) {
                let w = inter(a, b).len();
                if best.is_none_or(|(_, _, bw)| w > bw) {
                    best = Some((a, b, w));
                }
            }
        }
        let (a, b, w) = best.expect("a vertex remains outside the tree");
        in_tree[b] = true;
        if w > 0 {
            omega -= padded_inverse(s, &inter(a, b));
        }
    }
    omega
}

// ---------------------------------------------------------------------------
// Gaussian conditionals through the covariance

/// Conditional mean and covariance of the missing block of `x` given the
/// observed block, by `Σ_mo Σ_oo⁻¹`.
pub fn sigma_conditional(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    row: &[Option<f64>],
) -> (Vec<usize>, DVector<f64>, DMatrix<f64>) {
    let obs: Vec<usize> = (0..row.len()).filter(|&j| row[j].is_some()).collect();
    let mis: Vec<usize> = (0..row.len()).filter(|&j| row[j].is_none()).collect();
    let pick = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |a, b| sigma[(r[a], c[b])]);
    let soo_inv = pick(&obs, &obs).try_inverse().expect("observed block invertible");
    let smo = pick(&mis, &obs);
    let resid = DVector::from_fn(obs.len(), |a, _| row[obs[a]].unwrap() - mu[obs[a]]);
    let mean = DVector::from_fn(mis.len(), |a, _| mu[mis[a]]) + &smo * &soo_inv * resid;
    let cov = pick(&mis, &mis) - &smo * &soo_inv * smo.transpose();
    (mis, mean, cov)
}

/// Lower Cholesky factor by the textbook recurrence.
pub fn cholesky_lower(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                l[(i, i)] = (a[(i, i)] - s).max(0.0).sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    l
}

// ---------------------------------------------------------------------------
// Strongly decomposable forests

/// Acyclic and free of forbidden paths, checked from scratch: for every
/// pair of categorical vertices joined by a path whose interior is all
/// continuous, the pair must be adjacent.
pub fn is_legal_sd_forest(kinds: &[VarKind], edges: &[(usize, usize)]) -> bool {
    let d = kinds.len();
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        r
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    let mut adj = vec![vec![false; d]; d];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    let cat = |v: usize| kinds[v].is_categorical();
    for a in (0..d).filter(|&v| cat(v)) {
        // Depth-first search through continuous vertices only.
        let mut seen = vec![false; d];
        let mut stack: Vec<usize> = (0..d).filter(|&c| adj[a][c] && !cat(c)).collect();
        for &c in &stack {
            seen[c] = true;
        }
        while let Some(c) = stack.pop() {
            for w in 0..d {
                if !adj[c][w] || seen[w] || w == a {
                    continue;
                }
                seen[w] = true;
                if cat(w) {
                    if !adj[a][w] {
                        return false;
                    }
                } else {
                    stack.push(w);
                }
            }
        }
    }
    true
}

/// Largest total penalized weight over all legal SD-forests, by enumerating
/// every edge subset.
pub fn brute_force_best_forest(kinds: &[VarKind], weights: &[EdgeWeight]) -> f64 {
    let m = weights.len();
    assert!(m <= 20, "exhaustive search is limited to 20 candidate edges");
    let mut best = 0.0f64;
    for mask in 0u32..1 << m {
        let chosen: Vec<&EdgeWeight> = (0..m).filter(|&e| mask >> e & 1 == 1).map(|e| &weights[e]).collect();
        let total: f64 = chosen.iter().map(|w| w.penalized).sum();
        if total <= best {
            continue;
        }
        let edges: Vec<(usize, usize)> = chosen.iter().map(|w| (w.u, w.v)).collect();
        if is_legal_sd_forest(kinds, &edges) {
            best = total;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Single-parent DAGs

/// Random tree over `kinds` that is strongly decomposable, oriented from a
/// categorical root when there is one, with random conditionals.
pub fn random_sd_dag(kinds: Vec<VarKind>, rng: &mut impl Rng) -> SingleParentDag {
    let d = kinds.len();
    let edges = loop {
        // Random labelled tree: attach each vertex of a shuffled order to an
        // earlier one.
        let mut order: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let edges: Vec<(usize, usize)> = (1..d)
            .map(|i| {
                let u = order[rng.random_range(0..i)];
                (u.min(order[i]), u.max(order[i]))
            })
            .collect();
        if is_legal_sd_forest(&kinds, &edges) {
            break edges;
        }
    };
    let root = (0..d).find(|&v| kinds[v].is_categorical()).unwrap_or(0);
    let mut parent = vec![None; d];
    let mut children = vec![Vec::new(); d];
    let mut order = vec![root];
    let mut seen = vec![false; d];
    seen[root] = true;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &(a, b) in &edges {
            let v = if a == u { b } else if b == u { a } else { continue };
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                children[u].push(v);
                order.push(v);
            }
        }
    }
    let levels = |v: usize| kinds[v].levels().unwrap_or(0);
    let probs = |k: usize, rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let w: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    };
    let mut conditionals = Vec::with_capacity(d);
    for v in 0..d {
        let cond = match (parent[v], kinds[v].is_categorical()) {
            (None, true) => Conditional::RootCat { probs: probs(levels(v), rng) },
            (None, false) => Conditional::RootCont {
                mean: rng.random_range(-1.0..1.0),
                var: rng.random_range(0.5..2.0),
            },
            (Some(u), true) => {
                assert!(kinds[u].is_categorical(), "SD-tree rooted at a categorical vertex");
                Conditional::CatGivenCat {
                    table: (0..levels(u)).map(|_| probs(levels(v), rng)).collect(),
                }
            }
            (Some(u), false) if kinds[u].is_categorical() => Conditional::ContGivenCat {
                means: (0..levels(u)).map(|_| rng.random_range(-1.5..1.5)).collect(),
                vars: (0..levels(u)).map(|_| rng.random_range(0.5..2.0)).collect(),
            },
            (Some(_), false) => Conditional::ContGivenCont {
                intercept: rng.random_range(-1.0..1.0),
                slope: rng.random_range(-1.0..1.0),
                var: rng.random_range(0.5..2.0),
            },
        };
        conditionals.push(cond);
    }
    SingleParentDag {
        kinds,
        parent,
        children,
        roots: vec![root],
        order,
        conditionals,
    }
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

fn weighted_index(w: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, x) in w.iter().enumerate() {
        if u < *x {
            return k;
        }
        u -= x;
    }
    w.len() - 1
}

/// One likelihood-weighted draw: ancestral sampling from the prior with
/// observed cells clamped. Returns `None` when a sampled categorical cell
/// disagrees with its observation (rejection), otherwise the completed row
/// and the importance weight from the continuous evidence.
pub fn rejection_draw(dag: &SingleParentDag, row: &[Option<f64>], rng: &mut impl Rng) -> Option<(Vec<f64>, f64)> {
    let mut x = vec![0.0; dag.kinds.len()];
    let mut log_w = 0.0;
    for &v in &dag.order {
        let pv = dag.parent[v].map(|u| x[u]);
        match &dag.conditionals[v] {
            Conditional::RootCat { probs } => x[v] = weighted_index(probs, rng) as f64,
            Conditional::CatGivenCat { table } => {
                x[v] = weighted_index(&table[pv.unwrap() as usize], rng) as f64
            }
            cond => {
                let (mean, var) = match cond {
                    Conditional::RootCont { mean, var } => (*mean, *var),
                    Conditional::ContGivenCat { means, vars } => {
                        let a = pv.unwrap() as usize;
                        (means[a], vars[a])
                    }
                    Conditional::ContGivenCont { intercept, slope, var } => (intercept + slope * pv.unwrap(), *var),
                    _ => unreachable!(),
                };
                match row[v] {
                    Some(obs) => {
                        x[v] = obs;
                        log_w += log_normal(obs, mean, var);
                    }
                    None => x[v] = mean + var.sqrt() * normal(rng),
                }
                continue;
            }
        }
        if let Some(obs) = row[v] {
            if obs != x[v] {
                return None;
            }
        }
    }
    Some((x, log_w))
}

/// Total variation distance between two discrete distributions.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

// ---------------------------------------------------------------------------
// Metrics

/// Spectral norm from a dense singular value decomposition.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// Gaussian KL divergence with explicit inverse and LU determinants.
pub fn kl_dense(mu1: &DVector<f64>, s1: &DMatrix<f64>, mu2: &DVector<f64>, s2: &DMatrix<f64>) -> f64 {
    let p = mu1.len() as f64;
    let inv2 = s2.clone().try_inverse().unwrap();
    let d = mu2 - mu1;
    let quad = (d.transpose() * &inv2 * &d)[(0, 0)];
    0.5 * ((&inv2 * s1).trace() + quad - p + (s2.clone().lu().determinant() / s1.clone().lu().determinant()).ln())
}
