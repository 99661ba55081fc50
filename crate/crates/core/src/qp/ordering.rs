//! Reverse Cuthill–McKee ordering for symmetric sparsity patterns.

use std::collections::VecDeque;

/// Returns `perm` with `perm[new] = old`. `adjacency[i]` lists the neighbours of `i`
/// (self loops ignored).
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency
        .iter()
        .enumerate()
        .map(|(i, nb)| nb.iter().filter(|&&j| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    // Components are seeded in order of their lowest-degree vertex so the result is deterministic.
    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by_key(|&i| (degree[i], i));
    for &seed in &seeds {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adjacency, &degree, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&j| !visited[j])
                .collect();
            next.sort_by_key(|&j| (degree[j], j));
            next.dedup();
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adjacency: &[Vec<usize>], start: usize) -> Vec<Vec<usize>> {
    let mut seen = std::collections::HashSet::from([start]);
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &j in &adjacency[v] {
                if seen.insert(j) {
                    next.push(j);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn pseudo_peripheral(adjacency: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let mut depth = bfs_levels(adjacency, current).len();
    loop {
        let levels = bfs_levels(adjacency, current);
        let candidate = *levels
            .last()
            .unwrap()
            .iter()
            .min_by_key(|&&j| (degree[j], j))
            .unwrap();
        let d = bfs_levels(adjacency, candidate).len();
        if d > depth {
            depth = d;
            current = candidate;
        } else {
            return current;
        }
    }
}

/// Half bandwidth of the pattern under `perm` (`perm[new] = old`).
pub fn bandwidth(adjacency: &[Vec<usize>], perm: &[usize]) -> usize {
    let mut inv = vec![0usize; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    adjacency
        .iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().map(move |&j| (i, j)))
        .map(|(i, j)| inv[i].abs_diff(inv[j]))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize, labels: &[usize]) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for w in 0..n - 1 {
            let (a, b) = (labels[w], labels[w + 1]);
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    #[test]
    fn shuffled_path_recovers_unit_bandwidth() {
        let n = 40;
        let mut labels: Vec<usize> = (0..n).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let adj = path(n, &labels);
        let identity: Vec<usize> = (0..n).collect();
        assert!(bandwidth(&adj, &identity) > 1);
        let perm = reverse_cuthill_mckee(&adj);
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, identity);
        assert_eq!(bandwidth(&adj, &perm), 1);
    }

    #[test]
    fn isolated_vertices_and_components() {
        let adj = vec![vec![1], vec![0], vec![], vec![4], vec![3]];
        let perm = reverse_cuthill_mckee(&adj);
        assert_eq!(perm.len(), 5);
        assert_eq!(bandwidth(&adj, &perm), 1);
    }
}
