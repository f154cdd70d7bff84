//! Strong-decomposition forests over mixed variables.
//!
//! A forest is strongly decomposable when no path joins two non-adjacent
//! categorical vertices through continuous vertices only. Equivalently,
//! every connected piece of the continuous-only subgraph touches at most one
//! categorical vertex. [`learn_sd_forest`] grows the maximum-weight forest
//! greedily and keeps, per continuous piece, the categorical vertex it
//! touches ("anchor") so that each insertion is checked in near-constant
//! time.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::data::VarKind;
use crate::error::{GemsError, Result};
use crate::mixed::mi::EdgeWeight;
use crate::mixed::model::ForestMarginals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// Skip edges with non-positive penalized weight.
    #[default]
    Forest,
    /// Join every component, whatever the sign of the weights.
    Tree,
}

/// Forest skeleton over typed vertices, optionally with fitted marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdForest {
    pub kinds: Vec<VarKind>,
    /// Edges `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<ForestMarginals>,
}

impl SdForest {
    pub fn new(kinds: Vec<VarKind>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let d = kinds.len();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a >= d || b >= d {
                return Err(GemsError::InvalidInput(format!("bad forest edge ({a}, {b})")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let f = Self {
            kinds,
            edges: set.into_iter().collect(),
            marginals: None,
        };
        if !f.is_acyclic() {
            return Err(GemsError::InvalidInput("edge set contains a cycle".into()));
        }
        if let Some((a, b)) = f.forbidden_path() {
            return Err(GemsError::InvalidInput(format!(
                "forbidden path between categorical vertices {a} and {b}"
            )));
        }
        Ok(f)
    }

    pub fn empty(kinds: Vec<VarKind>) -> Self {
        Self {
            kinds,
            edges: Vec::new(),
            marginals: None,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.kinds.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.kinds.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn is_acyclic(&self) -> bool {
        let mut uf = UnionFind::new(self.kinds.len());
        self.edges.iter().all(|&(a, b)| uf.union(a, b))
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let d = self.kinds.len();
        let mut uf = UnionFind::new(d);
        for &(a, b) in &self.edges {
            uf.union(a, b);
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for v in 0..d {
            groups.entry(uf.find(v)).or_default().push(v);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort();
        out
    }

    /// A pair of non-adjacent categorical vertices joined by a path with
    /// continuous interior, if any. Checked by breadth-first search from
    /// each categorical vertex through continuous vertices.
    pub fn forbidden_path(&self) -> Option<(usize, usize)> {
        let adj = self.adjacency();
        let d = self.kinds.len();
        for a in (0..d).filter(|&v| self.kinds[v].is_categorical()) {
            let mut seen = vec![false; d];
            seen[a] = true;
            let mut queue: VecDeque<usize> = VecDeque::new();
            for &c in &adj[a] {
                if !self.kinds[c].is_categorical() {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
            while let Some(c) = queue.pop_front() {
                for &w in &adj[c] {
                    if seen[w] {
                        continue;
                    }
                    seen[w] = true;
                    if self.kinds[w].is_categorical() {
                        return Some((a.min(w), a.max(w)));
                    }
                    queue.push_back(w);
                }
            }
        }
        None
    }

    /// Free parameters: categorical vertex `r - 1`, continuous vertex 2, plus
    /// each edge's added parameters.
    pub fn df(&self) -> usize {
        let vertex: usize = self
            .kinds
            .iter()
            .map(|k| match k {
                VarKind::Categorical { levels } => levels - 1,
                VarKind::Continuous => 2,
            })
            .sum();
        let edge: usize = self
            .edges
            .iter()
            .map(|&(a, b)| crate::mixed::mi::edge_df(self.kinds[a], self.kinds[b]))
            .sum();
        vertex + edge
    }

    /// GraphViz rendering: categorical vertices as filled dots, continuous
    /// vertices as circles.
    pub fn to_dot(&self, names: Option<&[String]>) -> String {
        let mut s = String::from("graph sd_forest {\n");
        for (v, k) in self.kinds.iter().enumerate() {
            let label = names.and_then(|n| n.get(v)).cloned().unwrap_or_else(|| v.to_string());
            let shape = if k.is_categorical() {
                "shape=point, width=0.15, xlabel"
            } else {
                "shape=circle, label"
            };
            s.push_str(&format!("  v{v} [{shape}=\"{}\"];\n", label.replace('"', "\\\"")));
        }
        for &(a, b) in &self.edges {
            s.push_str(&format!("  v{a} -- v{b};\n"));
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merge the sets of `a` and `b`; false when already merged.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Incremental acyclicity and forbidden-path bookkeeping.
struct SdBuilder<'a> {
    kinds: &'a [VarKind],
    all: UnionFind,
    /// Union-find over continuous vertices joined by continuous edges.
    cont: UnionFind,
    /// Categorical vertex touching each continuous piece (indexed by root).
    anchor: Vec<Option<usize>>,
}

impl<'a> SdBuilder<'a> {
    fn new(kinds: &'a [VarKind]) -> Self {
        let d = kinds.len();
        Self {
            kinds,
            all: UnionFind::new(d),
            cont: UnionFind::new(d),
            anchor: vec![None; d],
        }
    }

    fn try_add(&mut self, u: usize, v: usize) -> bool {
        if self.all.find(u) == self.all.find(v) {
            return false;
        }
        let (cu, cv) = (self.kinds[u].is_categorical(), self.kinds[v].is_categorical());
        match (cu, cv) {
            (true, true) => {}
            (true, false) | (false, true) => {
                let (cat, c) = if cu { (u, v) } else { (v, u) };
                let root = self.cont.find(c);
                if self.anchor[root].is_some() {
                    return false;
                }
                self.anchor[root] = Some(cat);
            }
            (false, false) => {
                let (ru, rv) = (self.cont.find(u), self.cont.find(v));
                let (au, av) = (self.anchor[ru], self.anchor[rv]);
                if au.is_some() && av.is_some() {
                    return false;
                }
                self.cont.union(u, v);
                let root = self.cont.find(u);
                self.anchor[root] = au.or(av);
            }
        }
        self.all.union(u, v);
        true
    }
}

/// Greedy maximum-weight strongly decomposable forest.
///
/// Edges are taken in descending penalized weight (ties by vertex pair) and
/// accepted when they keep the graph acyclic and create no forbidden path.
/// Pairs absent from `weights` are never joined.
pub fn learn_sd_forest(kinds: &[VarKind], weights: &[EdgeWeight], mode: ForestMode) -> Result<SdForest> {
    let d = kinds.len();
    let mut order: Vec<&EdgeWeight> = weights.iter().collect();
    for w in &order {
        if w.u == w.v || w.u >= d || w.v >= d {
            return Err(GemsError::InvalidInput(format!("bad edge weight ({}, {})", w.u, w.v)));
        }
    }
    order.sort_by(|a, b| {
        b.penalized
            .total_cmp(&a.penalized)
            .then((a.u.min(a.v), a.u.max(a.v)).cmp(&(b.u.min(b.v), b.u.max(b.v))))
    });
    let mut builder = SdBuilder::new(kinds);
    let mut edges = Vec::new();
    for w in order {
        if mode == ForestMode::Forest && w.penalized <= 0.0 {
            break;
        }
        if builder.try_add(w.u, w.v) {
            edges.push((w.u.min(w.v), w.u.max(w.v)));
        }
    }
    let forest = SdForest::new(kinds.to_vec(), edges)?;
    if mode == ForestMode::Tree {
        let comps = forest.components();
        if comps.len() > 1 {
            return Err(GemsError::ForestInfeasible(format!(
                "cannot join {} components without a forbidden path or missing pair: {:?}",
                comps.len(),
                comps
            )));
        }
    }
    Ok(forest)
}
