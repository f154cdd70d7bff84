//! Undirected graphs over `p` vertices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{GemsError, Result};

/// Simple undirected graph. Edges are stored as ordered pairs `(i, j)` with
/// `i < j`, so membership is independent of orientation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UndirectedGraph {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl UndirectedGraph {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn complete(p: usize) -> Self {
        let mut g = Self::empty(p);
        for i in 0..p {
            for j in i + 1..p {
                g.edges.insert((i, j));
            }
        }
        g
    }

    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(p);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(GemsError::InvalidInput(format!("self-loop at vertex {i}")));
        }
        if i >= self.p || j >= self.p {
            return Err(GemsError::InvalidInput(format!(
                "edge ({i}, {j}) out of range for {} vertices",
                self.p
            )));
        }
        self.edges.insert((i.min(j), i.max(j)));
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_set(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.p];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Stable 64-bit identifier of the edge set.
    pub fn model_hash(&self) -> u64 {
        let mut h = crate::rng::derive_seed(self.p as u64, &[]);
        for &(i, j) in &self.edges {
            h = crate::rng::derive_seed(h, &[i as u64, j as u64]);
        }
        h
    }

    /// Maximal cliques by Bron–Kerbosch with pivoting. Returns `None` when
    /// more than `limit` cliques exist. Isolated vertices are singleton
    /// cliques, so the result always covers every vertex.
    pub fn maximal_cliques(&self, limit: usize) -> Option<Vec<Vec<usize>>> {
        let adj: Vec<BTreeSet<usize>> = self
            .adjacency()
            .into_iter()
            .map(|a| a.into_iter().collect())
            .collect();
        let mut out = Vec::new();
        let p_set: BTreeSet<usize> = (0..self.p).collect();
        let ok = bron_kerbosch(&adj, Vec::new(), p_set, BTreeSet::new(), &mut out, limit);
        if !ok {
            return None;
        }
        for c in &mut out {
            c.sort_unstable();
        }
        out.sort();
        Some(out)
    }
}

fn bron_kerbosch(
    adj: &[BTreeSet<usize>],
    r: Vec<usize>,
    mut p: BTreeSet<usize>,
    mut x: BTreeSet<usize>,
    out: &mut Vec<Vec<usize>>,
    limit: usize,
) -> bool {
    if p.is_empty() && x.is_empty() {
        out.push(r);
        return out.len() <= limit;
    }
    let pivot = p
        .iter()
        .chain(x.iter())
        .max_by_key(|&&u| adj[u].intersection(&p).count())
        .copied()
        .expect("p or x is nonempty");
    let candidates: Vec<usize> = p.difference(&adj[pivot]).copied().collect();
    for v in candidates {
        let mut r2 = r.clone();
        r2.push(v);
        let p2 = p.intersection(&adj[v]).copied().collect();
        let x2 = x.intersection(&adj[v]).copied().collect();
        if !bron_kerbosch(adj, r2, p2, x2, out, limit) {
            return false;
        }
        p.remove(&v);
        x.insert(v);
    }
    true
}
