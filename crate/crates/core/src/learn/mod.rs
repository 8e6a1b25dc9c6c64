//! Laplace learning: hard-constrained minimization of the graph p-Dirichlet
//! energy, one one-hot class column at a time, followed by argmax prediction.

mod export;

pub use export::{write_predictions_csv, RunSummary};

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dirichlet::{raw_p_laplacian, weighted_variation};
use crate::graph::WeightedGraph;
use crate::measures::{LabeledDataset, Labels};

/// Graphs with fewer nodes than this are solved by a dense Cholesky factorization.
pub const DENSE_SOLVE_LIMIT: usize = 500;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("components {components:?} contain no labeled node")]
    UnlabeledComponent { components: Vec<usize> },
    #[error("the unlabeled block of the graph Laplacian is singular")]
    SingularSystem,
    #[error("solver stopped after {} iterations without converging", .0.iterations)]
    MaxIterExceeded(Box<LearnResult>),
    #[error("shape mismatch: expected {expected} nodes, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid exponent p = {0}")]
    InvalidExponent(f64),
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, LearnError>;

/// What to do with connected components that carry no label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentPolicy {
    #[default]
    Error,
    /// Give every node of such a component the most frequent label (lowest
    /// class on ties). Affected nodes are listed in [`LearnResult::fallback_nodes`].
    MajorityFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    pub p: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub components: ComponentPolicy,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            p: 2.0,
            max_iter: 20_000,
            tol: 1e-12,
            components: ComponentPolicy::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnResult {
    /// `values[i][l]`: relaxed score of class `l` at node `i`.
    pub values: Vec<Vec<f64>>,
    /// Argmax of each row, lowest class on ties.
    pub predictions: Vec<usize>,
    /// Sup-norm over unlabeled nodes and classes of the unscaled p-Laplacian
    /// `sum_j w_ij |f_i - f_j|^{p-2} (f_i - f_j)`; for `p = 2` this is `(D - W) f`.
    pub residual: f64,
    /// Largest iteration count over class columns (1 for a direct solve).
    pub iterations: usize,
    /// Graph p-Dirichlet energy summed over class columns.
    pub objective: f64,
    /// Per-class objective values, one entry per accepted iterate (p > 2 only).
    pub objective_traces: Vec<Vec<f64>>,
    pub converged: bool,
    pub fallback_nodes: Vec<usize>,
    pub p: f64,
}

impl LearnResult {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn n_classes(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Values of class `l` at every node.
    pub fn column(&self, l: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[l]).collect()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (l, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = l;
        }
    }
    best
}

struct Problem {
    n: usize,
    n_classes: usize,
    /// Column-major class values with labeled and fallback rows already final.
    columns: Vec<Vec<f64>>,
    /// Unlabeled nodes whose component carries a label, in increasing order.
    free: Vec<usize>,
    fallback: Vec<usize>,
}

fn prepare(graph: &WeightedGraph, labels: &Labels, policy: ComponentPolicy) -> Result<Problem> {
    let n = graph.n();
    if labels.len() != n {
        return Err(LearnError::ShapeMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let c = labels.n_classes();
    if c == 0 {
        return Err(LearnError::InvalidInput("labels declare no classes".into()));
    }
    if labels.n_labeled() == 0 {
        return Err(LearnError::InvalidInput("no labeled node".into()));
    }
    let comps = graph.components();
    let n_comps = comps.iter().max().map_or(0, |m| m + 1);
    let mut has_label = vec![false; n_comps];
    let mut counts = vec![0usize; c];
    for i in labels.labeled_indices() {
        has_label[comps[i]] = true;
        counts[labels.get(i).expect("labeled")] += 1;
    }
    let offending: Vec<usize> = (0..n_comps).filter(|&k| !has_label[k]).collect();
    if !offending.is_empty() && policy == ComponentPolicy::Error {
        return Err(LearnError::UnlabeledComponent { components: offending });
    }
    let majority = (0..c).fold(0, |best, l| if counts[l] > counts[best] { l } else { best });
    let mut columns = vec![vec![0.0; n]; c];
    let mut free = Vec::new();
    let mut fallback = Vec::new();
    for i in 0..n {
        match labels.get(i) {
            Some(l) => columns[l][i] = 1.0,
            None if has_label[comps[i]] => free.push(i),
            None => {
                columns[majority][i] = 1.0;
                fallback.push(i);
            }
        }
    }
    Ok(Problem {
        n,
        n_classes: c,
        columns,
        free,
        fallback,
    })
}

fn residual(graph: &WeightedGraph, columns: &[Vec<f64>], free: &[usize], p: f64) -> f64 {
    columns
        .iter()
        .map(|col| {
            let lf = raw_p_laplacian(graph, col, p);
            free.iter().map(|&i| lf[i].abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn objective(graph: &WeightedGraph, columns: &[Vec<f64>], p: f64) -> f64 {
    let n = graph.n() as f64;
    let scale = 1.0 / (n * n * graph.epsilon().powf(p));
    columns.iter().map(|c| weighted_variation(graph, c, p) * scale).sum()
}

fn finish(
    graph: &WeightedGraph,
    problem: Problem,
    p: f64,
    iterations: usize,
    traces: Vec<Vec<f64>>,
    converged: bool,
) -> LearnResult {
    let values: Vec<Vec<f64>> = (0..problem.n)
        .map(|i| problem.columns.iter().map(|c| c[i]).collect())
        .collect();
    let predictions = values.iter().map(|r| argmax(r)).collect();
    LearnResult {
        residual: residual(graph, &problem.columns, &problem.free, p),
        objective: objective(graph, &problem.columns, p),
        values,
        predictions,
        iterations,
        objective_traces: traces,
        converged,
        fallback_nodes: problem.fallback,
        p,
    }
}

/// Laplace learning (`p = 2`) with the labels of `dataset`.
pub fn solve_p2(graph: &WeightedGraph, dataset: &LabeledDataset) -> Result<LearnResult> {
    solve_p2_with(graph, dataset.labels(), ComponentPolicy::Error)
}

/// Solves `L_uu f_u = W_ul y_l` for each class column.
pub fn solve_p2_with(graph: &WeightedGraph, labels: &Labels, policy: ComponentPolicy) -> Result<LearnResult> {
    let mut problem = prepare(graph, labels, policy)?;
    if problem.free.is_empty() {
        return Ok(finish(graph, problem, 2.0, 0, Vec::new(), true));
    }
    let system = UnlabeledSystem::new(graph, &problem.free, &problem.columns);
    let iterations = if graph.n() < DENSE_SOLVE_LIMIT {
        let solution = system.solve_dense()?;
        for (col, sol) in problem.columns.iter_mut().zip(solution) {
            for (&i, x) in problem.free.iter().zip(sol) {
                col[i] = x;
            }
        }
        1
    } else {
        let solved: Vec<(Vec<f64>, usize)> = (0..problem.n_classes)
            .into_par_iter()
            .map(|l| system.solve_cg(l))
            .collect();
        let mut iterations = 0;
        for (col, (sol, it)) in problem.columns.iter_mut().zip(solved) {
            iterations = iterations.max(it);
            for (&i, x) in problem.free.iter().zip(sol) {
                col[i] = x;
            }
        }
        iterations
    };
    Ok(finish(graph, problem, 2.0, iterations, Vec::new(), true))
}

/// Unlabeled block `L_uu = (D - W)_uu` in CSR form with one right-hand side per class.
struct UnlabeledSystem {
    diag: Vec<f64>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<Vec<f64>>,
}

impl UnlabeledSystem {
    fn new(graph: &WeightedGraph, free: &[usize], columns: &[Vec<f64>]) -> Self {
        let mut local = vec![usize::MAX; graph.n()];
        for (a, &i) in free.iter().enumerate() {
            local[i] = a;
        }
        let mut diag = Vec::with_capacity(free.len());
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut rhs = vec![vec![0.0; free.len()]; columns.len()];
        for (a, &i) in free.iter().enumerate() {
            diag.push(graph.degree(i));
            for (j, w) in graph.neighbors(i) {
                if local[j] != usize::MAX {
                    cols.push(local[j]);
                    vals.push(w);
                } else {
                    for (r, col) in rhs.iter_mut().zip(columns) {
                        r[a] += w * col[j];
                    }
                }
            }
            offsets.push(cols.len());
        }
        Self {
            diag,
            offsets,
            cols,
            vals,
            rhs,
        }
    }

    fn size(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[a] * x[a];
            for k in self.offsets[a]..self.offsets[a + 1] {
                acc -= self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    fn solve_dense(&self) -> Result<Vec<Vec<f64>>> {
        let u = self.size();
        let mut a = DMatrix::<f64>::zeros(u, u);
        for r in 0..u {
            a[(r, r)] = self.diag[r];
            for k in self.offsets[r]..self.offsets[r + 1] {
                a[(r, self.cols[k])] = -self.vals[k];
            }
        }
        let b = DMatrix::from_fn(u, self.rhs.len(), |r, l| self.rhs[l][r]);
        let chol = Cholesky::new(a.clone()).ok_or(LearnError::SingularSystem)?;
        let mut x = chol.solve(&b);
        // One step of iterative refinement.
        let correction = chol.solve(&(&b - &a * &x));
        x += correction;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::SingularSystem);
        }
        Ok((0..self.rhs.len())
            .map(|l| x.column(l).iter().copied().collect())
            .collect())
    }

    /// Jacobi-preconditioned conjugate gradient for class `l`.
    fn solve_cg(&self, l: usize) -> (Vec<f64>, usize) {
        const TOL: f64 = 1e-11;
        let u = self.size();
        let b = &self.rhs[l];
        let mut x = vec![0.0; u];
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut dir = z.clone();
        let mut q = vec![0.0; u];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 20 * u + 100;
        let mut it = 0;
        while it < max_iter {
            if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= TOL {
                break;
            }
            it += 1;
            self.apply(&dir, &mut q);
            let dq: f64 = dir.iter().zip(&q).map(|(a, b)| a * b).sum();
            if dq <= 0.0 {
                break;
            }
            let alpha = rz / dq;
            for a in 0..u {
                x[a] += alpha * dir[a];
                r[a] -= alpha * q[a];
            }
            if it % 50 == 0 {
                self.apply(&x, &mut q);
                for a in 0..u {
                    r[a] = b[a] - q[a];
                }
            }
            for a in 0..u {
                z[a] = r[a] / self.diag[a];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for a in 0..u {
                dir[a] = z[a] + beta * dir[a];
            }
        }
        (x, it)
    }
}

/// p-Laplace learning (`p > 2`) with the labels of `dataset`.
pub fn solve_p(
    graph: &WeightedGraph,
    dataset: &LabeledDataset,
    p: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LearnResult> {
    let options = LearnOptions {
        p,
        max_iter,
        tol,
        components: ComponentPolicy::Error,
    };
    solve_p_with(graph, dataset.labels(), &options)
}

/// Projected gradient descent on the unlabeled coordinates with Barzilai–Borwein
/// steps and Armijo backtracking, started from the `p = 2` solution.
///
/// Stops when the relative decrease of a column's objective falls below `tol`
/// or its unscaled p-Laplacian on free nodes has sup-norm below `tol`.
pub fn solve_p_with(graph: &WeightedGraph, labels: &Labels, options: &LearnOptions) -> Result<LearnResult> {
    let p = options.p;
    if !(p > 2.0 && p.is_finite()) {
        return Err(LearnError::InvalidExponent(p));
    }
    let mut problem = prepare(graph, labels, options.components)?;
    if problem.free.is_empty() {
        return Ok(finish(graph, problem, p, 0, vec![Vec::new(); labels.n_classes()], true));
    }
    let warm = solve_p2_with(graph, labels, options.components)?;
    for (l, col) in problem.columns.iter_mut().enumerate() {
        for &i in &problem.free {
            col[i] = warm.values[i][l];
        }
    }
    let outcomes: Vec<Descent> = problem
        .columns
        .par_iter()
        .map(|col| descend(graph, p, col.clone(), &problem.free, options.max_iter, options.tol))
        .collect();
    let iterations = outcomes.iter().map(|o| o.iterations).max().unwrap_or(0);
    let converged = outcomes.iter().all(|o| o.converged);
    let mut traces = Vec::with_capacity(outcomes.len());
    for (col, o) in problem.columns.iter_mut().zip(outcomes) {
        *col = o.values;
        traces.push(o.trace);
    }
    let result = finish(graph, problem, p, iterations, traces, converged);
    if converged {
        Ok(result)
    } else {
        Err(LearnError::MaxIterExceeded(Box::new(result)))
    }
}

/// Dispatches on `options.p`.
pub fn solve(graph: &WeightedGraph, labels: &Labels, options: &LearnOptions) -> Result<LearnResult> {
    if options.p == 2.0 {
        solve_p2_with(graph, labels, options.components)
    } else {
        solve_p_with(graph, labels, options)
    }
}

struct Descent {
    values: Vec<f64>,
    iterations: usize,
    trace: Vec<f64>,
    converged: bool,
}

fn descend(graph: &WeightedGraph, p: f64, mut x: Vec<f64>, free: &[usize], max_iter: usize, tol: f64) -> Descent {
    const ARMIJO: f64 = 1e-4;
    const MAX_HALVINGS: usize = 80;
    let gradient = |f: &[f64]| -> Vec<f64> {
        let lf = raw_p_laplacian(graph, f, p);
        free.iter().map(|&i| 2.0 * p * lf[i]).collect()
    };
    let sup = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut fx = weighted_variation(graph, &x, p);
    let mut g = gradient(&x);
    let mut trace = vec![fx];
    let mut step = 1.0 / sup(&g).max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    let mut trial = x.clone();
    loop {
        if sup(&g) / (2.0 * p) < tol {
            return Descent { values: x, iterations, trace, converged: true };
        }
        if iterations >= max_iter {
            return Descent { values: x, iterations, trace, converged: false };
        }
        iterations += 1;
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for (&i, gi) in free.iter().zip(&g) {
                trial[i] = x[i] - step * gi;
            }
            let ft = weighted_variation(graph, &trial, p);
            if ft <= fx - ARMIJO * step * g2 {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(f_next) = accepted else {
            // No representable decrease remains along the gradient.
            return Descent { values: x, iterations, trace, converged: true };
        };
        let g_next = gradient(&trial);
        let (mut ss, mut sy) = (0.0, 0.0);
        for (k, &i) in free.iter().enumerate() {
            let s = trial[i] - x[i];
            ss += s * s;
            sy += s * (g_next[k] - g[k]);
        }
        let decrease = (fx - f_next) / fx.max(f64::MIN_POSITIVE);
        std::mem::swap(&mut x, &mut trial);
        trial.copy_from_slice(&x);
        fx = f_next;
        g = g_next;
        trace.push(fx);
        if decrease < tol {
            return Descent { values: x, iterations, trace, converged: true };
        }
        step = if sy > 0.0 { ss / sy } else { step * 2.0 };
    }
}

/// Accuracy over the unlabeled nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub accuracy: f64,
    pub evaluated: usize,
    /// Set when no node was left to score; `accuracy` is then 1.
    pub vacuous: bool,
}

/// Scores predictions against `truth` on every node not listed in `labeled`.
pub fn predict_and_score(result: &LearnResult, truth: &[usize], labeled: &[usize]) -> Result<Score> {
    let n = result.n();
    if truth.len() != n {
        return Err(LearnError::ShapeMismatch {
            expected: n,
            found: truth.len(),
        });
    }
    let mut is_labeled = vec![false; n];
    for &i in labeled {
        if i >= n {
            return Err(LearnError::InvalidInput(format!("labeled index {i} out of range")));
        }
        is_labeled[i] = true;
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for i in (0..n).filter(|&i| !is_labeled[i]) {
        total += 1;
        hits += usize::from(result.predictions[i] == truth[i]);
    }
    Ok(if total == 0 {
        Score {
            accuracy: 1.0,
            evaluated: 0,
            vacuous: true,
        }
    } else {
        Score {
            accuracy: hits as f64 / total as f64,
            evaluated: total,
            vacuous: false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> WeightedGraph {
        WeightedGraph::from_edges(n, edges, 1.0, None, GraphKind::Custom).unwrap()
    }

    fn labels(values: &[Option<usize>], c: usize) -> Labels {
        Labels::new(values.to_vec(), c).unwrap()
    }

    #[test]
    fn path_midpoint() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let y = labels(&[Some(0), None, Some(1)], 2);
        let r = solve_p2_with(&g, &y, ComponentPolicy::Error).unwrap();
        assert!((r.values[1][1] - 0.5).abs() < 1e-15);
        assert_eq!(r.predictions[1], 0);
        for p in [3.0, 4.0, 6.0] {
            let opts = LearnOptions { p, ..Default::default() };
            let r = solve_p_with(&g, &y, &opts).unwrap();
            assert!((r.values[1][1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn four_cycle() {
        let g = graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]);
        let y = labels(&[Some(0), None, Some(1), None], 2);
        let r = solve_p2_with(&g, &y, ComponentPolicy::Error).unwrap();
        assert!((r.values[1][1] - 0.5).abs() < 1e-15);
        assert!((r.values[3][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fully_labeled() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let y = labels(&[Some(0), Some(2), Some(1)], 3);
        let r = solve_p2_with(&g, &y, ComponentPolicy::Error).unwrap();
        assert_eq!(r.values[1], vec![0.0, 0.0, 1.0]);
        assert_eq!(r.residual, 0.0);
        let opts = LearnOptions { p: 4.0, ..Default::default() };
        let r = solve_p_with(&g, &y, &opts).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.predictions, vec![0, 2, 1]);
        let s = predict_and_score(&r, &[0, 2, 1], &[0, 1, 2]).unwrap();
        assert!(s.vacuous);
        assert_eq!(s.accuracy, 1.0);
    }

    #[test]
    fn unlabeled_component() {
        let g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let y = labels(&[Some(1), None, None, None], 2);
        match solve_p2_with(&g, &y, ComponentPolicy::Error) {
            Err(LearnError::UnlabeledComponent { components }) => assert_eq!(components, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
        let r = solve_p2_with(&g, &y, ComponentPolicy::MajorityFallback).unwrap();
        assert_eq!(r.fallback_nodes, vec![2, 3]);
        assert_eq!(r.predictions, vec![1, 1, 1, 1]);
    }

    #[test]
    fn dense_and_cg_agree() {
        // A ring with chords, large enough to take the iterative path.
        let n = DENSE_SOLVE_LIMIT + 20;
        let mut edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0 + (i % 7) as f64 / 7.0)).collect();
        edges.extend((0..n).step_by(5).map(|i| (i, (i + n / 3) % n, 0.5)));
        let g = graph(n, &edges);
        let y: Vec<Option<usize>> = (0..n)
            .map(|i| if i % 10 == 0 { Some((i / 10) % 3) } else { None })
            .collect();
        let y = labels(&y, 3);
        let r = solve_p2_with(&g, &y, ComponentPolicy::Error).unwrap();
        assert!(r.residual <= 1e-8);
        let problem = prepare(&g, &y, ComponentPolicy::Error).unwrap();
        let system = UnlabeledSystem::new(&g, &problem.free, &problem.columns);
        let dense = system.solve_dense().unwrap();
        for (l, col) in dense.iter().enumerate() {
            for (&i, x) in problem.free.iter().zip(col) {
                assert!((r.values[i][l] - x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scoring() {
        let r = LearnResult {
            values: vec![vec![1.0, 0.0], vec![0.4, 0.6], vec![0.5, 0.5]],
            predictions: vec![0, 1, 0],
            residual: 0.0,
            iterations: 0,
            objective: 0.0,
            objective_traces: Vec::new(),
            converged: true,
            fallback_nodes: Vec::new(),
            p: 2.0,
        };
        assert_eq!(argmax(&r.values[1]), 1);
        assert_eq!(argmax(&r.values[2]), 0);
        let s = predict_and_score(&r, &[0, 1, 1], &[0]).unwrap();
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.evaluated, 2);
        assert!(predict_and_score(&r, &[0, 1], &[0]).is_err());
    }
}
