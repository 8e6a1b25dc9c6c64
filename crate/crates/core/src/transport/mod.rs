//! Exact discrete optimal transport between empirical measures.
//!
//! Three exact routes, chosen by shape:
//! - one-dimensional measures: monotone (sorted) coupling, optimal for convex costs;
//! - equal sizes: linear assignment, so the plan is a permutation;
//! - unequal sizes: a transportation problem solved by min-cost flow with
//!   integerized masses (`lcm` of the two sizes).
//!
//! [`brute_force_ot`] enumerates permutations and serves as an independent oracle.

mod assignment;
mod bottleneck;
mod flow;

use itertools::Itertools;
use thiserror::Error;

use crate::measures::EmpiricalMeasure;

/// Largest cost matrix (`m * m'`) accepted by the min-cost-flow route.
pub const MAX_FLOW_ENTRIES: usize = 1_000_000;
/// Largest `m` accepted by [`brute_force_ot`].
pub const MAX_BRUTE_FORCE_SIZE: usize = 7;
/// Denominator cap when converting general masses to integers.
pub const MAX_MASS_DENOMINATOR: u64 = 1 << 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("problem with {entries} cost entries exceeds the limit of {limit}")]
    SizeLimitExceeded { entries: usize, limit: usize },
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
    #[error("unequal sizes: {0} vs {1}")]
    UnequalSizes(usize, usize),
    #[error("plan row {0} carries no mass")]
    ZeroRowMass(usize),
    #[error("plan does not match the target measure: {0}")]
    PlanMismatch(String),
    #[error("invalid masses: {0}")]
    InvalidMasses(String),
    #[error("transport solver failed to route all mass")]
    Infeasible,
}

pub type Result<T> = std::result::Result<T, TransportError>;

/// Ground-cost exponent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

/// A coupling between two discrete measures, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub source_size: usize,
    pub target_size: usize,
    /// `(source index, target index, mass)`, sorted by source then target.
    pub entries: Vec<(usize, usize, f64)>,
    /// `sum mass * |x_i - y_j|^p` for this plan's exponent.
    pub total_cost: f64,
    pub p: Exponent,
}

impl TransportPlan {
    pub fn row_marginals(&self) -> Vec<f64> {
        let mut rows = vec![0.0; self.source_size];
        for &(i, _, w) in &self.entries {
            rows[i] += w;
        }
        rows
    }

    pub fn column_marginals(&self) -> Vec<f64> {
        let mut cols = vec![0.0; self.target_size];
        for &(_, j, w) in &self.entries {
            cols[j] += w;
        }
        cols
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// The matching `source -> target` if the plan is a permutation.
    pub fn matching(&self) -> Option<Vec<usize>> {
        if self.source_size != self.target_size || self.entries.len() != self.source_size {
            return None;
        }
        let mut target = vec![usize::MAX; self.source_size];
        let mut hit = vec![false; self.target_size];
        for &(i, j, _) in &self.entries {
            if target[i] != usize::MAX || hit[j] {
                return None;
            }
            target[i] = j;
            hit[j] = true;
        }
        Some(target)
    }
}

/// Images `T(x_i)` of the source atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    images: Vec<f64>,
    dim: usize,
}

impl TransportMap {
    pub fn new(images: Vec<f64>, dim: usize) -> Self {
        debug_assert!(dim > 0 && images.len().is_multiple_of(dim));
        Self { images, dim }
    }

    /// Number of source atoms.
    pub fn len(&self) -> usize {
        self.images.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major images, `len() * dim()` values.
    pub fn as_flat(&self) -> &[f64] {
        &self.images
    }
}

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u64, b: u64) -> Option<u64> {
    (a / gcd(a, b)).checked_mul(b)
}

fn check_dims(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(TransportError::DimensionMismatch(mu.dim(), nu.dim()));
    }
    Ok(())
}

fn squared_cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> CostMatrix {
    CostMatrix::from_fn(mu.len(), nu.len(), |i, j| {
        squared_distance(mu.point(i), nu.point(j))
    })
}

/// Plan from integer flows `(i, j, units)` out of `scale` total units.
fn plan_from_units(
    source_size: usize,
    target_size: usize,
    units: Vec<(usize, usize, f64)>,
    scale: f64,
    cost: impl Fn(usize, usize) -> f64,
    p: Exponent,
) -> TransportPlan {
    let mut entries: Vec<(usize, usize, f64)> =
        units.into_iter().map(|(i, j, u)| (i, j, u / scale)).collect();
    entries.sort_by_key(|a| (a.0, a.1));
    let terms: Vec<f64> = entries.iter().map(|&(i, j, w)| w * cost(i, j)).collect();
    TransportPlan {
        source_size,
        target_size,
        total_cost: pairwise_sum(&terms),
        entries,
        p,
    }
}

/// Monotone coupling of two one-dimensional uniform measures.
fn sorted_coupling(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> TransportPlan {
    let (m, n) = (mu.len(), nu.len());
    let mut xs: Vec<usize> = (0..m).collect();
    let mut ys: Vec<usize> = (0..n).collect();
    xs.sort_by(|&a, &b| mu.coords()[a].total_cmp(&mu.coords()[b]).then(a.cmp(&b)));
    ys.sort_by(|&a, &b| nu.coords()[a].total_cmp(&nu.coords()[b]).then(a.cmp(&b)));
    let g = gcd(m as u64, n as u64);
    let total = (m as u64 / g) * n as u64;
    let (unit_a, unit_b) = (total / m as u64, total / n as u64);
    let mut units = Vec::with_capacity(m + n);
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut left_a, mut left_b) = (unit_a, unit_b);
    while ia < m && ib < n {
        let amount = left_a.min(left_b);
        units.push((xs[ia], ys[ib], amount as f64));
        left_a -= amount;
        left_b -= amount;
        if left_a == 0 {
            ia += 1;
            left_a = unit_a;
        }
        if left_b == 0 {
            ib += 1;
            left_b = unit_b;
        }
    }
    plan_from_units(
        m,
        n,
        units,
        total as f64,
        |i, j| {
            let d = mu.coords()[i] - nu.coords()[j];
            d * d
        },
        Exponent::Finite(2.0),
    )
}

fn permutation_plan(assignment: &[usize], cost: &CostMatrix, p: Exponent) -> TransportPlan {
    let m = assignment.len();
    let units = assignment.iter().enumerate().map(|(i, &j)| (i, j, 1.0)).collect();
    plan_from_units(m, m, units, m as f64, |i, j| cost.get(i, j), p)
}

/// Exact 2-Wasserstein distance and an optimal plan.
///
/// Equal sizes always yield a permutation plan. Unequal sizes go through the
/// min-cost-flow route and are limited to [`MAX_FLOW_ENTRIES`] cost entries.
pub fn w2_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<(f64, TransportPlan)> {
    check_dims(mu, nu)?;
    let (m, n) = (mu.len(), nu.len());
    let plan = if mu.dim() == 1 {
        sorted_coupling(mu, nu)
    } else if m == n {
        let cost = squared_cost_matrix(mu, nu);
        permutation_plan(&assignment::solve(m, &cost.data), &cost, Exponent::Finite(2.0))
    } else {
        if m * n > MAX_FLOW_ENTRIES {
            return Err(TransportError::SizeLimitExceeded {
                entries: m * n,
                limit: MAX_FLOW_ENTRIES,
            });
        }
        let cost = squared_cost_matrix(mu, nu);
        let total = lcm(m as u64, n as u64).expect("sizes fit in u64");
        let supply = vec![(total / m as u64) as f64; m];
        let demand = vec![(total / n as u64) as f64; n];
        let units = flow::solve(&cost.data, &supply, &demand, 0.0).ok_or(TransportError::Infeasible)?;
        plan_from_units(m, n, units, total as f64, |i, j| cost.get(i, j), Exponent::Finite(2.0))
    };
    Ok((plan.total_cost.max(0.0).sqrt(), plan))
}

/// Exact infinity-Wasserstein distance between equal-size uniform measures.
///
/// One-dimensional inputs use the sorted matching; otherwise a bottleneck
/// assignment (binary search over candidate edge lengths with bipartite matching).
pub fn winf(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_dims(mu, nu)?;
    let (m, n) = (mu.len(), nu.len());
    if m != n {
        return Err(TransportError::UnsupportedShape(format!(
            "infinity-Wasserstein needs equal sizes, got {m} and {n}"
        )));
    }
    if mu.dim() == 1 {
        let mut xs = mu.coords().to_vec();
        let mut ys = nu.coords().to_vec();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        return Ok(xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    let cost = squared_cost_matrix(mu, nu);
    Ok(bottleneck::bottleneck_value(m, &cost.data).sqrt())
}

/// Barycentric projection `T(x_i) = sum_j pi_ij y_j / sum_j pi_ij`.
///
/// Rows with a single entry map exactly onto the matched atom.
pub fn barycentric_map(plan: &TransportPlan, nu: &EmpiricalMeasure) -> Result<TransportMap> {
    if plan.target_size != nu.len() {
        return Err(TransportError::PlanMismatch(format!(
            "plan targets {} atoms, measure has {}",
            plan.target_size,
            nu.len()
        )));
    }
    let k = nu.dim();
    let mut images = vec![0.0; plan.source_size * k];
    let mut row_mass = vec![0.0; plan.source_size];
    let mut row_count = vec![0usize; plan.source_size];
    let mut single = vec![usize::MAX; plan.source_size];
    for &(i, j, w) in &plan.entries {
        if i >= plan.source_size || j >= nu.len() {
            return Err(TransportError::PlanMismatch(format!("entry ({i}, {j}) out of range")));
        }
        row_mass[i] += w;
        row_count[i] += 1;
        single[i] = j;
        for (acc, y) in images[i * k..(i + 1) * k].iter_mut().zip(nu.point(j)) {
            *acc += w * y;
        }
    }
    for i in 0..plan.source_size {
        let row = &mut images[i * k..(i + 1) * k];
        if row_count[i] == 1 && row_mass[i] > 0.0 {
            row.copy_from_slice(nu.point(single[i]));
        } else if row_mass[i] > 0.0 {
            row.iter_mut().for_each(|x| *x /= row_mass[i]);
        } else {
            return Err(TransportError::ZeroRowMass(i));
        }
    }
    Ok(TransportMap::new(images, k))
}

/// Exact `W_p` by enumerating all `m!` matchings (`m <= 7`).
pub fn brute_force_ot(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: Exponent) -> Result<f64> {
    check_dims(mu, nu)?;
    let m = mu.len();
    if m != nu.len() {
        return Err(TransportError::UnequalSizes(m, nu.len()));
    }
    if m > MAX_BRUTE_FORCE_SIZE {
        return Err(TransportError::SizeLimitExceeded {
            entries: m,
            limit: MAX_BRUTE_FORCE_SIZE,
        });
    }
    let dist = |i: usize, j: usize| squared_distance(mu.point(i), nu.point(j)).sqrt();
    let best = match p {
        Exponent::Infinity => (0..m)
            .permutations(m)
            .map(|perm| perm.iter().enumerate().map(|(i, &j)| dist(i, j)).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min),
        Exponent::Finite(q) if q == 2.0 => {
            let best = (0..m)
                .permutations(m)
                .map(|perm| {
                    perm.iter()
                        .enumerate()
                        .map(|(i, &j)| squared_distance(mu.point(i), nu.point(j)))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            (best / m as f64).sqrt()
        }
        Exponent::Finite(q) => {
            let best = (0..m)
                .permutations(m)
                .map(|perm| perm.iter().enumerate().map(|(i, &j)| dist(i, j).powf(q)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            (best / m as f64).powf(1.0 / q)
        }
    };
    Ok(best)
}

/// Rational approximation `num/den` of `x` with `den <= max_den` (continued fractions).
fn rational(x: f64, max_den: u64) -> (u64, u64) {
    let (mut h0, mut h1, mut k0, mut k1) = (0u64, 1u64, 1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > u64::MAX as f64 / 2.0 {
            break;
        }
        let a = a as u64;
        let Some(k2) = a.checked_mul(k1).and_then(|v| v.checked_add(k0)) else { break };
        if k2 > max_den {
            break;
        }
        let Some(h2) = a.checked_mul(h1).and_then(|v| v.checked_add(h0)) else { break };
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac.abs() < 1e-15 || ((h1 as f64 / k1 as f64) - x).abs() <= 1e-15 * x.max(1.0) {
            break;
        }
        r = 1.0 / frac;
    }
    (h1, k1.max(1))
}

/// Integer supplies for general masses over a common denominator, if one exists
/// below the cap that reproduces every mass to 1e-12 and both totals exactly.
fn integerize(a: &[f64], b: &[f64]) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let mut den = 1u64;
    for &w in a.iter().chain(b) {
        let (_, q) = rational(w, 1 << 20);
        den = lcm(den, q)?;
        if den > MAX_MASS_DENOMINATOR {
            return None;
        }
    }
    let scale = den as f64;
    let to_units = |ws: &[f64]| -> Option<Vec<f64>> {
        let units: Vec<f64> = ws.iter().map(|w| (w * scale).round()).collect();
        let ok = ws.iter().zip(&units).all(|(w, u)| (u / scale - w).abs() <= 1e-12);
        let total: f64 = units.iter().sum();
        (ok && total == scale).then_some(units)
    };
    Some((to_units(a)?, to_units(b)?, scale))
}

fn validate_masses(w: &[f64], side: &str) -> Result<()> {
    if w.is_empty() {
        return Err(TransportError::InvalidMasses(format!("{side}: no atoms")));
    }
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(TransportError::InvalidMasses(format!("{side}: negative or non-finite mass")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(TransportError::InvalidMasses(format!("{side}: masses sum to {total}")));
    }
    Ok(())
}

/// Optimal coupling of masses `a` (rows) and `b` (columns) under a general cost matrix.
///
/// Equal uniform masses use the assignment solver; otherwise masses are scaled to
/// integers over a common denominator when possible, falling back to f64 flow with
/// a 1e-10 feasibility tolerance. The plan's `total_cost` is `sum pi_ij c_ij`.
pub fn discrete_ot(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    if cost.rows != a.len() || cost.cols != b.len() {
        return Err(TransportError::DimensionMismatch(cost.rows * cost.cols, a.len() * b.len()));
    }
    validate_masses(a, "source")?;
    validate_masses(b, "target")?;
    let p = Exponent::Finite(1.0);
    let uniform = |w: &[f64]| w.iter().all(|&x| x == w[0]);
    if a.len() == b.len() && uniform(a) && uniform(b) {
        return Ok(permutation_plan(&assignment::solve(a.len(), &cost.data), cost, p));
    }
    if cost.rows * cost.cols > MAX_FLOW_ENTRIES {
        return Err(TransportError::SizeLimitExceeded {
            entries: cost.rows * cost.cols,
            limit: MAX_FLOW_ENTRIES,
        });
    }
    let (units, scale) = match integerize(a, b) {
        Some((sa, sb, scale)) => (flow::solve(&cost.data, &sa, &sb, 0.0), scale),
        None => (flow::solve(&cost.data, a, b, 1e-10), 1.0),
    };
    let units = units.ok_or(TransportError::Infeasible)?;
    Ok(plan_from_units(cost.rows, cost.cols, units, scale, |i, j| cost.get(i, j), p))
}
