//! Face-adjacency connectivity and articulation modules.

use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{add, Configuration, Direction, ModuleId};

/// Neighbor lists over module slots (id-sorted order).
fn adjacency(config: &Configuration) -> Vec<Vec<usize>> {
    let index: HashMap<_, usize> = config.modules().iter().enumerate().map(|(i, m)| (m.pos, i)).collect();
    config
        .modules()
        .iter()
        .map(|m| {
            Direction::ALL
                .iter()
                .filter_map(|d| index.get(&add(m.pos, d.vector())).copied())
                .collect()
        })
        .collect()
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// True iff the face-adjacency graph over all modules is one component.
pub fn is_connected(config: &Configuration) -> bool {
    if config.is_empty() {
        return true;
    }
    reachable(&adjacency(config), 0).into_iter().all(|s| s)
}

pub(crate) fn unreachable_from_anchor(config: &Configuration) -> Vec<ModuleId> {
    let Some(start) = config.slot_of(config.anchor_id) else {
        return config.ids().collect();
    };
    let seen = reachable(&adjacency(config), start);
    config
        .modules()
        .iter()
        .zip(seen)
        .filter(|(_, s)| !s)
        .map(|(m, _)| m.id)
        .collect()
}

/// Non-anchor modules whose removal leaves the rest connected.
///
/// Uses Tarjan's low-link articulation test (iterative DFS).
pub fn removable_modules(config: &Configuration) -> BTreeSet<ModuleId> {
    let n = config.len();
    let adj = adjacency(config);
    let mut articulation = vec![false; n];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        let mut root_children = 0;
        // (vertex, parent, next neighbor index)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        while let Some(top) = stack.last_mut() {
            let (u, parent, next) = *top;
            if next < adj[u].len() {
                top.2 += 1;
                let v = adj[u][next];
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    if u == root {
                        root_children += 1;
                    }
                    stack.push((v, u, 0));
                } else if v != parent {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[u]);
                    if parent != root && low[u] >= disc[parent] {
                        articulation[parent] = true;
                    }
                }
            }
        }
        if root_children > 1 {
            articulation[root] = true;
        }
    }

    config
        .modules()
        .iter()
        .zip(articulation)
        .filter(|(m, art)| !art && m.id != config.anchor_id)
        .map(|(m, _)| m.id)
        .collect()
}
