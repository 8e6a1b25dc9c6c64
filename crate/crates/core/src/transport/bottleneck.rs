//! Bottleneck assignment: the smallest threshold admitting a perfect matching.

/// Perfect matching on the bipartite graph `{(i, j) : allowed(i, j)}`, by
/// Kuhn's augmenting paths.
fn has_perfect_matching(n: usize, allowed: impl Fn(usize, usize) -> bool) -> bool {
    let mut owner = vec![usize::MAX; n];
    let mut visited = vec![false; n];

    fn augment(
        i: usize,
        n: usize,
        allowed: &dyn Fn(usize, usize) -> bool,
        owner: &mut [usize],
        visited: &mut [bool],
    ) -> bool {
        for j in 0..n {
            if !visited[j] && allowed(i, j) {
                visited[j] = true;
                if owner[j] == usize::MAX || augment(owner[j], n, allowed, owner, visited) {
                    owner[j] = i;
                    return true;
                }
            }
        }
        false
    }

    for i in 0..n {
        visited.fill(false);
        if !augment(i, n, &allowed, &mut owner, &mut visited) {
            return false;
        }
    }
    true
}

/// Minimum over perfect matchings of the maximum matched cost, for a dense
/// `n x n` cost matrix. Binary search over the sorted distinct cost values.
pub(crate) fn bottleneck_value(n: usize, cost: &[f64]) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut candidates = cost.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let t = candidates[mid];
        if has_perfect_matching(n, |i, j| cost[i * n + j] <= t) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;

    #[test]
    fn agrees_with_enumeration() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 1..=6 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| next()).collect();
                let brute = (0..n)
                    .permutations(n)
                    .map(|p| {
                        p.iter()
                            .enumerate()
                            .map(|(i, &j)| cost[i * n + j])
                            .fold(0.0, f64::max)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(bottleneck_value(n, &cost), brute);
            }
        }
    }
}
