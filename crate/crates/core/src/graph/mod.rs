//! Random geometric graphs over a distance matrix.
//!
//! Weights follow the kernel form `w_ij = eps^{-d} eta(dist_ij / eps)` (the
//! `eps^{-d}` factor is optional, see [`Kernel::normalized`]), or the symmetric
//! 0/1 kNN relation. Graphs are stored as symmetric CSR adjacency without
//! self-loops.

mod kernel;

pub use kernel::{Kernel, KernelShape};

use std::io::Write;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use thiserror::Error;

use crate::lot::{LotEmbedding, LotError};
use crate::measures::LabeledDataset;
use crate::transport::{self, TransportError};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("k = {k} is invalid for {n} nodes (need 1 <= k < n)")]
    InvalidK { k: usize, n: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Lot(#[from] LotError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Symmetric `n x n` matrix of pairwise distances, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Fills the upper triangle with `f(i, j)` (rows in parallel) and mirrors it.
    pub fn try_from_fn<E: Send>(
        n: usize,
        f: impl Fn(usize, usize) -> std::result::Result<f64, E> + Sync,
    ) -> std::result::Result<Self, E> {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| f(i, j)).collect())
            .collect::<std::result::Result<_, E>>()?;
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        Self::try_from_fn::<std::convert::Infallible>(n, |i, j| Ok(f(i, j))).unwrap()
    }

    /// Euclidean distances between points.
    pub fn euclidean<P: AsRef<[f64]> + Sync>(points: &[P]) -> Self {
        Self::from_fn(points.len(), |i, j| {
            transport::squared_distance(points[i].as_ref(), points[j].as_ref()).sqrt()
        })
    }

    /// Validates a row-major matrix: square, symmetric, zero diagonal, finite, nonnegative.
    pub fn from_dense(n: usize, data: Vec<f64>) -> Result<Self> {
        let bad = |s: String| Err(GraphError::InvalidDistances(s));
        if data.len() != n * n {
            return bad(format!("{} entries for n = {n}", data.len()));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return bad(format!("nonzero diagonal at {i}"));
            }
            for j in 0..n {
                let d = data[i * n + j];
                if !(d.is_finite() && d >= 0.0) {
                    return bad(format!("entry ({i}, {j}) = {d}"));
                }
                if d != data[j * n + i] {
                    return bad(format!("asymmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Dense CSV, one matrix row per line.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(f64::to_string).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Ground metric between the measures of a dataset.
#[derive(Debug, Clone, Copy)]
pub enum Metric<'a> {
    /// Exact 2-Wasserstein distance.
    W2Exact,
    /// Linearized distance from a prebuilt embedding of the same dataset.
    Lot(&'a LotEmbedding),
}

pub fn pairwise_distances(dataset: &LabeledDataset, metric: Metric<'_>) -> Result<DistanceMatrix> {
    let n = dataset.len();
    match metric {
        Metric::W2Exact => DistanceMatrix::try_from_fn(n, |i, j| {
            transport::w2_exact(dataset.measure(i), dataset.measure(j)).map(|(d, _)| d)
        })
        .map_err(GraphError::from),
        Metric::Lot(emb) => {
            if emb.len() != n {
                return Err(GraphError::InvalidDistances(format!(
                    "embedding has {} measures, dataset has {n}",
                    emb.len()
                )));
            }
            let features = emb.feature_matrix();
            Ok(DistanceMatrix::euclidean(&features))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GraphKind {
    Epsilon,
    Knn { k: usize },
    Custom,
}

/// Symmetric nonnegative weighted graph in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    epsilon: f64,
    kernel: Option<Kernel>,
    kind: GraphKind,
}

impl WeightedGraph {
    /// Builds a graph from undirected edges `(i, j, w)`, each listed once.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        epsilon: f64,
        kernel: Option<Kernel>,
        kind: GraphKind,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(GraphError::InvalidEpsilon(epsilon));
        }
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(GraphError::InvalidEdge(format!("({i}, {j}) with n = {n}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(GraphError::InvalidEdge(format!("({i}, {j}) has weight {w}")));
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (i, mut row) in adjacency.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(GraphError::InvalidEdge(format!("duplicate edge at node {i}")));
            }
            for (j, w) in row {
                targets.push(j);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        Ok(Self {
            n,
            offsets,
            targets,
            weights,
            epsilon,
            kernel,
            kind,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kernel(&self) -> Option<&Kernel> {
        self.kernel.as_ref()
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.targets.len() / 2
    }

    /// `(j, w_ij)` for every neighbor `j` of `i`, in increasing `j`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.targets[range.clone()].binary_search(&j) {
            Ok(pos) => self.weights[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights[self.offsets[i]..self.offsets[i + 1]].iter().sum()
    }

    /// Row-major dense weight matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, x) in self.neighbors(i) {
                w[i * self.n + j] = x;
            }
        }
        w
    }

    /// Component id per node, numbered in order of first appearance.
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::<usize>::new(self.n);
        for (i, j, _) in self.edges() {
            uf.union(i, j);
        }
        let mut ids = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut out = vec![0; self.n];
        for (i, slot) in out.iter_mut().enumerate() {
            let root = uf.find(i);
            if ids[root] == usize::MAX {
                ids[root] = next;
                next += 1;
            }
            *slot = ids[root];
        }
        out
    }

    /// Edge list CSV with header `i,j,w`, each undirected edge once.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "i,j,w")?;
        for (i, j, w) in self.edges() {
            writeln!(out, "{i},{j},{w}")?;
        }
        Ok(())
    }
}

/// Kernel graph: `w_ij = scale * eta(dist_ij / eps)`, keeping only positive weights.
pub fn epsilon_graph(distances: &DistanceMatrix, epsilon: f64, kernel: &Kernel) -> Result<WeightedGraph> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(GraphError::InvalidEpsilon(epsilon));
    }
    kernel.validate()?;
    let scale = kernel.scale(epsilon);
    let n = distances.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = scale * kernel.eval(distances.get(i, j) / epsilon);
            if w > 0.0 {
                edges.push((i, j, w));
            }
        }
    }
    WeightedGraph::from_edges(n, &edges, epsilon, Some(kernel.clone()), GraphKind::Epsilon)
}

/// Symmetrized kNN graph with unit weights; ties at the k-th distance go to the lower index.
pub fn knn_graph(distances: &DistanceMatrix, k: usize) -> Result<WeightedGraph> {
    let n = distances.n();
    if k == 0 || k >= n {
        return Err(GraphError::InvalidK { k, n });
    }
    let neighbor_lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = distances.row(i);
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = neighbor_lists
        .iter()
        .enumerate()
        .flat_map(|(i, list)| list.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    let edges: Vec<_> = pairs.into_iter().map(|(i, j)| (i, j, 1.0)).collect();
    WeightedGraph::from_edges(n, &edges, 1.0, None, GraphKind::Knn { k })
}

/// Largest edge of a minimum spanning tree (dense Prim): the smallest radius at
/// which the closed-ball indicator graph is connected.
pub fn connectivity_epsilon(distances: &DistanceMatrix) -> Result<f64> {
    let n = distances.n();
    if n < 2 {
        return Err(GraphError::DegenerateInput(format!(
            "connectivity radius needs at least 2 nodes, got {n}"
        )));
    }
    let mut in_tree = vec![false; n];
    let mut best = distances.row(0).to_vec();
    in_tree[0] = true;
    let mut bottleneck = 0.0f64;
    for _ in 1..n {
        let (next, d) = (0..n)
            .filter(|&j| !in_tree[j])
            .map(|j| (j, best[j]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("nodes remain");
        bottleneck = bottleneck.max(d);
        in_tree[next] = true;
        for (b, &d) in best.iter_mut().zip(distances.row(next)) {
            if d < *b {
                *b = d;
            }
        }
    }
    Ok(bottleneck)
}

pub fn is_connected(graph: &WeightedGraph) -> bool {
    graph.components().iter().all(|&c| c == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> DistanceMatrix {
        DistanceMatrix::from_fn(xs.len(), |i, j| (xs[i] - xs[j]).abs())
    }

    fn indicator(d: usize, normalized: bool) -> Kernel {
        Kernel::indicator(1.0, 1.0, d, normalized).unwrap()
    }

    #[test]
    fn distance_matrix_basics() {
        let one = line(&[4.0]);
        assert_eq!(one.n(), 1);
        assert_eq!(one.get(0, 0), 0.0);
        let m = line(&[0.0, 1.0, 3.0]);
        assert_eq!(m.row(0), &[0.0, 1.0, 3.0]);
        assert_eq!(m.row(2), &[3.0, 2.0, 0.0]);
        assert!(DistanceMatrix::from_dense(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,1,3\n1,0,2\n3,2,0\n");
    }

    #[test]
    fn epsilon_graph_weights() {
        let m = DistanceMatrix::from_fn(2, |_, _| 0.2);
        let g = epsilon_graph(&m, 0.5, &indicator(0, false)).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        let g = epsilon_graph(&m, 0.5, &indicator(2, true)).unwrap();
        assert_eq!(g.weight(0, 1), 4.0);
        let far = line(&[0.0, 5.0, 10.0]);
        let g = epsilon_graph(&far, 1.0, &indicator(1, true)).unwrap();
        assert_eq!(g.n_edges(), 0);
        assert!(matches!(
            epsilon_graph(&far, 0.0, &indicator(1, true)),
            Err(GraphError::InvalidEpsilon(_))
        ));
    }

    #[test]
    fn knn_cases() {
        let g = knn_graph(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        let edges: Vec<_> = g.edges().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
        let g = knn_graph(&line(&[0.0, 1.0, 3.0, 7.0]), 3).unwrap();
        assert_eq!(g.n_edges(), 6);
        let g = knn_graph(&line(&[0.0, 1.0]), 1).unwrap();
        assert_eq!(g.n_edges(), 1);
        // equidistant neighbors: node 1 picks the lower index
        let g = knn_graph(&line(&[0.0, 1.0, 2.0]), 1).unwrap();
        let edges: Vec<_> = g.edges().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
        assert!(matches!(knn_graph(&line(&[0.0, 1.0]), 2), Err(GraphError::InvalidK { .. })));
    }

    #[test]
    fn connectivity_radius() {
        assert_eq!(connectivity_epsilon(&line(&[0.0, 1.0, 3.0])).unwrap(), 2.0);
        assert_eq!(connectivity_epsilon(&line(&[2.0, 2.0])).unwrap(), 0.0);
        assert_eq!(connectivity_epsilon(&line(&[0.0, 5.0])).unwrap(), 5.0);
        assert!(matches!(
            connectivity_epsilon(&line(&[1.0])),
            Err(GraphError::DegenerateInput(_))
        ));
    }

    #[test]
    fn connectivity_checks() {
        let empty = WeightedGraph::from_edges(2, &[], 1.0, None, GraphKind::Custom).unwrap();
        assert!(!is_connected(&empty));
        let complete = knn_graph(&line(&[0.0, 1.0, 2.0, 3.0]), 3).unwrap();
        assert!(is_connected(&complete));
        let two_cliques = WeightedGraph::from_edges(
            4,
            &[(0, 1, 1.0), (2, 3, 1.0)],
            1.0,
            None,
            GraphKind::Custom,
        )
        .unwrap();
        assert!(!is_connected(&two_cliques));
        assert_eq!(two_cliques.components(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn rejects_bad_edges() {
        for edges in [
            vec![(0, 0, 1.0)],
            vec![(0, 2, 1.0)],
            vec![(0, 1, 0.0)],
            vec![(0, 1, 1.0), (1, 0, 2.0)],
        ] {
            assert!(WeightedGraph::from_edges(2, &edges, 1.0, None, GraphKind::Custom).is_err());
        }
    }

    #[test]
    fn edge_csv() {
        let g = knn_graph(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,j,w\n0,1,1\n1,2,1\n");
    }
}
