//! Exact and heuristic search over configurations.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::time::Instant;

use super::PlanError;
use crate::lattice::{
    apply_action, legal_actions, mismatch_count, Action, Bounds, Configuration, OrientPolicy, ShapeKey,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchLimits {
    /// Expanded-node budget.
    pub max_nodes: usize,
    /// Heuristic weight; 1 keeps the search optimal.
    pub weight: f64,
    pub policy: OrientPolicy,
    /// Wall-clock cutoff, reported as an exceeded budget.
    pub deadline: Option<Instant>,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_nodes: 200_000,
            weight: 1.0,
            policy: OrientPolicy::PreserveWorld,
            deadline: None,
        }
    }
}

fn unwind(nodes: &[(Configuration, usize, Option<Action>)], mut i: usize) -> Vec<Action> {
    let mut out = Vec::new();
    while let (_, parent, Some(a)) = &nodes[i] {
        out.push(*a);
        i = *parent;
    }
    out.reverse();
    out
}

/// Breadth-first search; returns a shortest action sequence.
pub fn bfs_plan(
    start: &Configuration,
    target: &Configuration,
    policy: OrientPolicy,
    bounds: Option<&Bounds>,
    max_nodes: usize,
) -> Result<Vec<Action>, PlanError> {
    let goal = target.shape_key();
    mismatch_count(start, target)?;
    let mut nodes = vec![(start.clone(), 0, None)];
    let mut seen: HashMap<ShapeKey, usize> = HashMap::from([(start.shape_key(), 0)]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        if nodes[i].0.shape_key() == goal {
            return Ok(unwind(&nodes, i));
        }
        if i >= max_nodes {
            return Err(PlanError::BudgetExceeded { nodes: i });
        }
        let state = nodes[i].0.clone();
        for a in legal_actions(&state, policy, bounds) {
            let next = apply_action(&state, &a)?;
            let key = next.shape_key();
            if seen.contains_key(&key) {
                continue;
            }
            seen.insert(key, nodes.len());
            queue.push_back(nodes.len());
            nodes.push((next, i, Some(a)));
        }
    }
    Err(PlanError::NoPlan {
        best_mismatch: mismatch_count(start, target)?,
    })
}

/// Best-first search on `g + w·mismatch`. Each action relocates one module,
/// so mismatch never overestimates the remaining moves and `w = 1` returns
/// a shortest plan.
pub fn astar_plan(
    start: &Configuration,
    target: &Configuration,
    bounds: Option<&Bounds>,
    limits: &SearchLimits,
) -> Result<Vec<Action>, PlanError> {
    let h0 = mismatch_count(start, target)?;
    let score = |g: usize, h: usize| ((g as f64 + limits.weight * h as f64) * 1024.0).round() as u64;
    let mut nodes = vec![(start.clone(), 0, None)];
    let mut best_g: HashMap<ShapeKey, usize> = HashMap::from([(start.shape_key(), 0)]);
    // (f, −g, insertion order) gives deterministic, depth-first tie-breaking.
    let mut open = BinaryHeap::from([Reverse((score(0, h0), Reverse(0usize), 0usize))]);
    let mut expanded = 0;
    let mut best_mismatch = h0;
    while let Some(Reverse((_, Reverse(g), i))) = open.pop() {
        let state = nodes[i].0.clone();
        if best_g.get(&state.shape_key()).is_some_and(|&bg| bg < g) {
            continue;
        }
        let h = mismatch_count(&state, target)?;
        best_mismatch = best_mismatch.min(h);
        if h == 0 {
            return Ok(unwind(&nodes, i));
        }
        expanded += 1;
        let late = expanded % 256 == 0 && limits.deadline.is_some_and(|d| Instant::now() >= d);
        if expanded > limits.max_nodes || late {
            return Err(PlanError::BudgetExceeded { nodes: expanded });
        }
        for a in legal_actions(&state, limits.policy, bounds) {
            let next = apply_action(&state, &a)?;
            let key = next.shape_key();
            if best_g.get(&key).is_some_and(|&bg| bg <= g + 1) {
                continue;
            }
            best_g.insert(key, g + 1);
            let hn = mismatch_count(&next, target)?;
            let id = nodes.len();
            nodes.push((next, i, Some(a)));
            open.push(Reverse((score(g + 1, hn), Reverse(g + 1), id)));
        }
    }
    Err(PlanError::NoPlan { best_mismatch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::random_walk;

    fn line4() -> Configuration {
        Configuration::from_cells(&[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], "m")
    }

    fn square4() -> Configuration {
        Configuration::from_cells(&[[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], "m")
    }

    fn replay(start: &Configuration, plan: &[Action]) -> Configuration {
        plan.iter().fold(start.clone(), |s, a| apply_action(&s, a).unwrap())
    }

    #[test]
    fn line_to_square_takes_two() {
        let plan = bfs_plan(&line4(), &square4(), OrientPolicy::PreserveWorld, None, 100_000).unwrap();
        assert_eq!(plan.len(), 2);
        assert!(replay(&line4(), &plan).same_shape(&square4()));
        let a = astar_plan(&line4(), &square4(), None, &SearchLimits::default()).unwrap();
        assert_eq!(a.len(), 2);
        assert!(replay(&line4(), &a).same_shape(&square4()));
    }

    #[test]
    fn trivial_and_budget() {
        assert_eq!(
            bfs_plan(&line4(), &line4(), OrientPolicy::PreserveWorld, None, 10).unwrap(),
            vec![]
        );
        assert_eq!(
            astar_plan(&line4(), &line4(), None, &SearchLimits::default()).unwrap(),
            vec![]
        );
        let tight = SearchLimits {
            max_nodes: 0,
            ..SearchLimits::default()
        };
        assert!(matches!(
            astar_plan(&line4(), &square4(), None, &tight),
            Err(PlanError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn astar_matches_bfs_length_on_random_pairs() {
        let target = Configuration::from_cells(&[[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1]], "m");
        for seed in 0..15 {
            let start = random_walk(&target, 3, seed).unwrap().goal;
            let b = bfs_plan(&start, &target, OrientPolicy::PreserveWorld, None, 1_000_000).unwrap();
            let a = astar_plan(&start, &target, None, &SearchLimits::default()).unwrap();
            assert_eq!(a.len(), b.len(), "seed {seed}");
            assert!(b.len() <= 3);
            assert!(replay(&start, &a).same_shape(&target));
        }
    }

    #[test]
    fn bounded_search_respects_box() {
        let b = Bounds::covering(&[&line4(), &square4()], 0);
        let plan = bfs_plan(&line4(), &square4(), OrientPolicy::PreserveWorld, Some(&b), 100_000).unwrap();
        let mut s = line4();
        for a in &plan {
            s = apply_action(&s, a).unwrap();
            assert!(b.contains_config(&s));
        }
    }
}
