//! Directed acyclic graphs over a small, labeled node set.
//!
//! Nodes are addressed by 0-based index in code; labels and the JSON
//! exchange format use the 1-based `X1..Xd` convention.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest node count accepted by [`enumerate_dags`].
pub const MAX_ENUMERATION_NODES: usize = 5;

pub fn default_labels(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("X{i}")).collect()
}

/// Binary adjacency of a DAG. Entry `(i, j)` is set iff `i -> j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagStructure {
    adj: DMatrix<bool>,
    labels: Vec<String>,
}

impl DagStructure {
    pub fn new(adj: DMatrix<bool>) -> Result<Self> {
        let d = adj.nrows();
        Self::with_labels(adj, default_labels(d))
    }

    pub fn with_labels(adj: DMatrix<bool>, labels: Vec<String>) -> Result<Self> {
        if !adj.is_square() {
            return Err(Error::DimensionMismatch {
                expected: adj.nrows(),
                found: adj.ncols(),
            });
        }
        let d = adj.nrows();
        if d == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        if labels.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: labels.len(),
            });
        }
        if (0..d).any(|i| adj[(i, i)]) {
            return Err(Error::Cycle);
        }
        if !is_acyclic(&adj) {
            return Err(Error::Cycle);
        }
        Ok(Self { adj, labels })
    }

    pub fn empty(d: usize) -> Self {
        Self::new(DMatrix::from_element(d, d, false)).expect("empty graph is a DAG")
    }

    /// Builds a DAG from 0-based `(from, to)` pairs.
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = DMatrix::from_element(d, d, false);
        for &(i, j) in edges {
            if i >= d {
                return Err(Error::IndexOutOfRange { index: i, len: d });
            }
            if j >= d {
                return Err(Error::IndexOutOfRange { index: j, len: d });
            }
            adj[(i, j)] = true;
        }
        Self::new(adj)
    }

    pub fn d(&self) -> usize {
        self.adj.nrows()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn adjacency(&self) -> &DMatrix<bool> {
        &self.adj
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adj[(from, to)]
    }

    /// Whether `a` and `b` are joined by an edge in either direction.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[(a, b)] || self.adj[(b, a)]
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.d();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adj[(i, j)])
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        (0..self.d()).filter(|&i| self.adj[(i, node)]).collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.d()).filter(|&j| self.adj[(node, j)]).collect()
    }

    pub fn reversed(&self) -> Self {
        Self {
            adj: self.adj.transpose(),
            labels: self.labels.clone(),
        }
    }

    /// Returns a copy with `from -> to` added, failing if that closes a cycle.
    pub fn with_edge(&self, from: usize, to: usize) -> Result<Self> {
        let mut adj = self.adj.clone();
        adj[(from, to)] = true;
        Self::with_labels(adj, self.labels.clone())
    }

    pub fn without_edge(&self, from: usize, to: usize) -> Self {
        let mut adj = self.adj.clone();
        adj[(from, to)] = false;
        Self {
            adj,
            labels: self.labels.clone(),
        }
    }

    /// Edge-set equality, ignoring labels.
    pub fn same_edges(&self, other: &Self) -> bool {
        self.adj == other.adj
    }

    /// Undirected skeleton equality.
    pub fn same_skeleton(&self, other: &Self) -> bool {
        let d = self.d();
        d == other.d() && (0..d).all(|i| (i + 1..d).all(|j| self.adjacent(i, j) == other.adjacent(i, j)))
    }

    /// Whether every edge of `self` is also an edge of `other`.
    pub fn is_subgraph_of(&self, other: &Self) -> bool {
        self.d() == other.d() && self.adj.zip_map(&other.adj, |a, b| !a || b).iter().all(|&x| x)
    }

    /// Topological order with ties broken by ascending node index.
    pub fn topological_order(&self) -> Vec<usize> {
        topological_sort(&self.adj).expect("DagStructure is acyclic by construction")
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            d: self.d(),
            labels: self.labels.clone(),
            edges: self
                .edges()
                .into_iter()
                .map(|(i, j)| EdgeJson::Plain(i + 1, j + 1))
                .collect(),
        }
    }
}

/// True iff the directed graph given by `adj` admits a topological order.
pub fn is_acyclic(adj: &DMatrix<bool>) -> bool {
    topological_sort(adj).is_ok()
}

/// Kahn's algorithm; among ready nodes the smallest index is emitted first.
pub fn topological_sort(adj: &DMatrix<bool>) -> Result<Vec<usize>> {
    if !adj.is_square() {
        return Err(Error::DimensionMismatch {
            expected: adj.nrows(),
            found: adj.ncols(),
        });
    }
    let d = adj.nrows();
    let mut indegree: Vec<usize> = (0..d).map(|j| (0..d).filter(|&i| adj[(i, j)]).count()).collect();
    let mut ready: BTreeSet<usize> = (0..d).filter(|&j| indegree[j] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(node) = ready.pop_first() {
        order.push(node);
        for child in 0..d {
            if adj[(node, child)] {
                indegree[child] -= 1;
                if indegree[child] == 0 {
                    ready.insert(child);
                }
            }
        }
    }
    if order.len() == d {
        Ok(order)
    } else {
        Err(Error::Cycle)
    }
}

/// `X1 -> X2 -> ... -> Xd`.
pub fn make_chain(d: usize) -> Result<DagStructure> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("chain needs d >= 2, got {d}")));
    }
    let edges: Vec<_> = (0..d - 1).map(|i| (i, i + 1)).collect();
    DagStructure::from_edges(d, &edges)
}

/// 1-based index of the fork's origin node: `ceil(d / 2)`.
pub fn fork_center(d: usize) -> usize {
    d.div_ceil(2)
}

/// `X1 <- ... <- Xc -> ... -> Xd` with `c = ceil(d / 2)`.
pub fn make_fork(d: usize) -> Result<DagStructure> {
    if d < 3 {
        return Err(Error::InvalidArgument(format!("fork needs d >= 3, got {d}")));
    }
    let c = fork_center(d) - 1;
    let mut edges: Vec<_> = (1..=c).map(|i| (i, i - 1)).collect();
    edges.extend((c..d - 1).map(|i| (i, i + 1)));
    DagStructure::from_edges(d, &edges)
}

/// `X1 -> X2 <- X3`.
pub fn make_collider() -> DagStructure {
    DagStructure::from_edges(3, &[(0, 1), (2, 1)]).expect("collider is a DAG")
}

/// All labeled DAGs on `d` nodes.
///
/// Graphs are produced in ascending order of their edge bitmask, where bit
/// `k` corresponds to the `k`-th off-diagonal position in row-major order.
/// The position in the returned list is a stable graph id.
pub fn enumerate_dags(d: usize) -> Result<Vec<DagStructure>> {
    if !(1..=MAX_ENUMERATION_NODES).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "DAG enumeration supports 1 <= d <= {MAX_ENUMERATION_NODES}, got {d}"
        )));
    }
    let slots: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .collect();
    let mut out = Vec::new();
    let mut parents = vec![0u32; d];
    for mask in 0u32..(1u32 << slots.len()) {
        parents.iter_mut().for_each(|p| *p = 0);
        for (k, &(i, j)) in slots.iter().enumerate() {
            if mask >> k & 1 == 1 {
                parents[j] |= 1 << i;
            }
        }
        if !bitmask_acyclic(&parents) {
            continue;
        }
        let mut adj = DMatrix::from_element(d, d, false);
        for (k, &(i, j)) in slots.iter().enumerate() {
            adj[(i, j)] = mask >> k & 1 == 1;
        }
        out.push(DagStructure {
            adj,
            labels: default_labels(d),
        });
    }
    Ok(out)
}

// Peels off nodes whose parents have all been removed.
fn bitmask_acyclic(parents: &[u32]) -> bool {
    let all = (1u32 << parents.len()) - 1;
    let mut removed = 0u32;
    loop {
        let mut progressed = false;
        for (j, &p) in parents.iter().enumerate() {
            let bit = 1 << j;
            if removed & bit == 0 && p & !removed == 0 {
                removed |= bit;
                progressed = true;
            }
        }
        if removed == all {
            return true;
        }
        if !progressed {
            return false;
        }
    }
}

/// One `(i, j)` per nonzero entry of `A^k` for each `k` in `1..d`.
///
/// A pair reachable by paths of several different lengths appears once per
/// length. Order: by `k`, then row-major.
pub fn path_pairs(g: &DagStructure) -> Vec<(usize, usize)> {
    let d = g.d();
    let adj = g.adjacency();
    let mut power = adj.clone();
    let mut pairs = Vec::new();
    for _k in 1..d {
        for i in 0..d {
            for j in 0..d {
                if power[(i, j)] {
                    pairs.push((i, j));
                }
            }
        }
        power = DMatrix::from_fn(d, d, |i, j| (0..d).any(|m| power[(i, m)] && adj[(m, j)]));
    }
    pairs
}

/// 3-node canonical structure kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Chain,
    Fork,
    Collider,
}

impl StructureKind {
    pub fn build(self, d: usize) -> Result<DagStructure> {
        match self {
            Self::Chain => make_chain(d),
            Self::Fork => make_fork(d),
            Self::Collider if d == 3 => Ok(make_collider()),
            Self::Collider => Err(Error::InvalidArgument(format!(
                "collider is fixed at 3 nodes, got d = {d}"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Chain => "chain",
            Self::Fork => "fork",
            Self::Collider => "collider",
        }
    }
}

impl std::str::FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Self::Chain),
            "fork" => Ok(Self::Fork),
            "collider" => Ok(Self::Collider),
            other => Err(Error::InvalidArgument(format!(
                "unknown structure kind '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for StructureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A DAG with a real weight on each edge. Off-support weights are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDag {
    structure: DagStructure,
    weights: DMatrix<f64>,
}

impl WeightedDag {
    pub fn new(structure: DagStructure, weights: DMatrix<f64>) -> Result<Self> {
        let d = structure.d();
        if weights.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: weights.nrows(),
            });
        }
        for i in 0..d {
            for j in 0..d {
                let w = weights[(i, j)];
                if structure.has_edge(i, j) {
                    if !w.is_finite() || w == 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "edge X{}->X{} needs a finite nonzero weight, got {w}",
                            i + 1,
                            j + 1
                        )));
                    }
                } else if w != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "weight {w} given for absent edge X{}->X{}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { structure, weights })
    }

    /// Every edge gets the same weight.
    pub fn uniform(structure: DagStructure, weight: f64) -> Result<Self> {
        let weights = structure.adjacency().map(|e| if e { weight } else { 0.0 });
        Self::new(structure, weights)
    }

    pub fn structure(&self) -> &DagStructure {
        &self.structure
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[(from, to)]
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            d: self.structure.d(),
            labels: self.structure.labels().to_vec(),
            edges: self
                .structure
                .edges()
                .into_iter()
                .map(|(i, j)| EdgeJson::Weighted(i + 1, j + 1, self.weights[(i, j)]))
                .collect(),
        }
    }
}

/// `[from, to]` or `[from, to, weight]`, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeJson {
    Weighted(usize, usize, f64),
    Plain(usize, usize),
}

impl EdgeJson {
    fn endpoints(&self) -> (usize, usize) {
        match *self {
            Self::Weighted(i, j, _) | Self::Plain(i, j) => (i, j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub d: usize,
    pub labels: Vec<String>,
    pub edges: Vec<EdgeJson>,
}

impl GraphJson {
    fn adjacency(&self) -> Result<DMatrix<bool>> {
        let mut adj = DMatrix::from_element(self.d, self.d, false);
        for e in &self.edges {
            let (i, j) = e.endpoints();
            for idx in [i, j] {
                if idx == 0 || idx > self.d {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        len: self.d,
                    });
                }
            }
            adj[(i - 1, j - 1)] = true;
        }
        Ok(adj)
    }

    pub fn to_dag(&self) -> Result<DagStructure> {
        DagStructure::with_labels(self.adjacency()?, self.labels.clone())
    }

    /// Edges without a weight field are rejected.
    pub fn to_weighted(&self) -> Result<WeightedDag> {
        let structure = self.to_dag()?;
        let mut weights = DMatrix::zeros(self.d, self.d);
        for e in &self.edges {
            match *e {
                EdgeJson::Weighted(i, j, w) => weights[(i - 1, j - 1)] = w,
                EdgeJson::Plain(i, j) => {
                    return Err(Error::InvalidArgument(format!("edge [{i}, {j}] has no weight")))
                }
            }
        }
        WeightedDag::new(structure, weights)
    }
}
