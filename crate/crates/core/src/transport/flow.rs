//! Transportation problems by successive shortest paths.
//!
//! The bipartite residual network is kept implicit: forward arcs source -> sink
//! always exist with cost `c[i][j]` and unbounded capacity, backward arcs
//! sink -> source exist while `flow[i][j] > 0`. Node potentials keep reduced
//! costs nonnegative so each phase is a Dijkstra search that stops at the first
//! sink with unmet demand. Each augmentation pushes the path bottleneck, so the
//! number of phases does not depend on the magnitude of the supplies.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Optimal flows `(i, j, amount)` moving `supply` onto `demand` at cost `cost[i * nb + j]`.
///
/// `supply` and `demand` must have equal totals. Amounts below `tol` are treated
/// as zero; pass `0.0` when supplies are integers held exactly in f64.
/// Returns `None` if the search gets stuck (unbalanced totals).
pub(crate) fn solve(
    cost: &[f64],
    supply: &[f64],
    demand: &[f64],
    tol: f64,
) -> Option<Vec<(usize, usize, f64)>> {
    let na = supply.len();
    let nb = demand.len();
    debug_assert_eq!(cost.len(), na * nb);
    let mut supply_left = supply.to_vec();
    let mut demand_left = demand.to_vec();
    let mut flow = vec![0.0f64; na * nb];
    let mut pot = vec![0.0f64; na + nb];
    let mut dist = vec![f64::INFINITY; na + nb];
    let mut prev = vec![usize::MAX; na + nb];
    let mut heap = BinaryHeap::new();

    loop {
        if supply_left.iter().all(|&s| s <= tol) {
            break;
        }
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        heap.clear();
        for (i, &s) in supply_left.iter().enumerate() {
            if s > tol {
                dist[i] = 0.0;
                heap.push(Entry { dist: 0.0, node: i });
            }
        }
        let mut target = None;
        while let Some(Entry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            if node < na {
                let i = node;
                let row = &cost[i * nb..(i + 1) * nb];
                for (j, &c) in row.iter().enumerate() {
                    let v = na + j;
                    let nd = d + (c + pot[i] - pot[v]).max(0.0);
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = i;
                        heap.push(Entry { dist: nd, node: v });
                    }
                }
            } else {
                let j = node - na;
                if demand_left[j] > tol {
                    target = Some(node);
                    break;
                }
                for i in 0..na {
                    if flow[i * nb + j] > tol {
                        let nd = d + (-cost[i * nb + j] + pot[node] - pot[i]).max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = node;
                            heap.push(Entry { dist: nd, node: i });
                        }
                    }
                }
            }
        }
        let t = target?;
        let reach = dist[t];
        for (p, &d) in pot.iter_mut().zip(&dist) {
            *p += d.min(reach);
        }

        let mut amount = demand_left[t - na];
        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= na {
                // backward arc: sink u -> source v cancels flow[v][u]
                amount = amount.min(flow[v * nb + (u - na)]);
            }
            v = u;
        }
        let start = v;
        amount = amount.min(supply_left[start]);

        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < na {
                flow[u * nb + (v - na)] += amount;
            } else {
                let f = &mut flow[v * nb + (u - na)];
                *f -= amount;
                if *f <= tol {
                    *f = 0.0;
                }
            }
            v = u;
        }
        supply_left[start] -= amount;
        if supply_left[start] <= tol {
            supply_left[start] = 0.0;
        }
        demand_left[t - na] -= amount;
        if demand_left[t - na] <= tol {
            demand_left[t - na] = 0.0;
        }
    }

    Some(
        flow.iter()
            .enumerate()
            .filter(|(_, &f)| f > 0.0)
            .map(|(idx, &f)| (idx / nb, idx % nb, f))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[f64], nb: usize, flows: &[(usize, usize, f64)]) -> f64 {
        flows.iter().map(|&(i, j, f)| f * cost[i * nb + j]).sum()
    }

    #[test]
    fn two_by_three_integer_supplies() {
        // sources 0, 1 at positions 0, 3; sinks at 0, 1, 3 on a line, squared cost
        let xs = [0.0, 3.0];
        let ys = [0.0, 1.0, 3.0];
        let cost: Vec<f64> = xs
            .iter()
            .flat_map(|x| ys.iter().map(move |y| (x - y) * (x - y)))
            .collect();
        let flows = solve(&cost, &[3.0, 3.0], &[2.0, 2.0, 2.0], 0.0).unwrap();
        // monotone coupling: 0 -> {0:2, 1:1}, 3 -> {1:1, 3:2}
        assert_eq!(total(&cost, 3, &flows), 1.0 + 4.0);
        for i in 0..2 {
            let row: f64 = flows.iter().filter(|f| f.0 == i).map(|f| f.2).sum();
            assert_eq!(row, 3.0);
        }
    }

    #[test]
    fn fractional_supplies() {
        let cost = [1.0, 2.0, 2.0, 1.0];
        let flows = solve(&cost, &[0.3, 0.7], &[0.6, 0.4], 1e-13).unwrap();
        let t = total(&cost, 2, &flows);
        // 0.3 on (0,0), 0.3 on (1,0), 0.4 on (1,1)
        assert!((t - (0.3 + 0.6 + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_totals_fail() {
        assert!(solve(&[1.0], &[2.0], &[1.0], 0.0).is_none());
    }
}
