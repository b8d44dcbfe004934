//! Exact shortest paths on layered graphs.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graphgen::{LayeredGraph, NodeId};

/// Default cap on the number of source-to-destination paths [`brute_force`]
/// is willing to enumerate.
pub const DEFAULT_PATH_CAP: u128 = 10_000_000;

/// Per-node sub-problem solutions and the optimal answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    /// Minimal cumulative cost from the source, `None` if unreachable.
    pub best_cost: Vec<Option<u32>>,
    /// A minimal-cost path from the source to each reachable node.
    pub best_path: Vec<Option<Vec<NodeId>>>,
    pub opt_cost: u32,
    pub opt_path: Vec<NodeId>,
}

/// Bottom-up dynamic programming over the gaps in layer order.
///
/// Every edge is relaxed once. Ties between predecessors resolve to the
/// lowest predecessor id.
pub fn solve_dp(g: &LayeredGraph) -> Result<Solution> {
    if g.layer_sizes.len() != g.gaps.len() + 1 || g.gaps.is_empty() {
        return Err(Error::InvalidGraph(
            "layer sizes do not match the edge gaps".into(),
        ));
    }
    let n = g.num_nodes();
    let mut best_cost: Vec<Option<u32>> = vec![None; n];
    let mut pred: Vec<Option<NodeId>> = vec![None; n];
    best_cost[g.source()] = Some(0);

    for (gap, edges) in g.gaps.iter().enumerate() {
        let from = g.layer_nodes(gap);
        let to = g.layer_nodes(gap + 1);
        for e in edges {
            if !from.contains(&e.src) || !to.contains(&e.dst) {
                return Err(Error::InvalidGraph(format!(
                    "edge n{}->n{} does not belong to gap {}",
                    e.src,
                    e.dst,
                    gap + 1
                )));
            }
            let Some(base) = best_cost[e.src] else {
                continue;
            };
            let cand = base + e.cost;
            let better = match (best_cost[e.dst], pred[e.dst]) {
                (None, _) => true,
                (Some(cur), Some(p)) => cand < cur || (cand == cur && e.src < p),
                (Some(cur), None) => cand < cur,
            };
            if better {
                best_cost[e.dst] = Some(cand);
                pred[e.dst] = Some(e.src);
            }
        }
    }

    let best_path: Vec<Option<Vec<NodeId>>> = (0..n)
        .map(|node| {
            best_cost[node]?;
            let mut path = vec![node];
            let mut cur = node;
            while let Some(p) = pred[cur] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            Some(path)
        })
        .collect();

    let dest = g.destination();
    let opt_cost = best_cost[dest].ok_or(Error::Unreachable(dest))?;
    let opt_path = best_path[dest].clone().ok_or(Error::Unreachable(dest))?;
    Ok(Solution {
        best_cost,
        best_path,
        opt_cost,
        opt_path,
    })
}

/// Result of exhaustive enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BruteForce {
    pub min_cost: u32,
    pub optimal_paths: BTreeSet<Vec<NodeId>>,
}

/// Number of distinct source-to-destination paths, counted by DP.
pub fn count_paths(g: &LayeredGraph) -> u128 {
    let mut count = vec![0u128; g.num_nodes()];
    count[g.source()] = 1;
    for e in g.edges() {
        if e.src < count.len() && e.dst < count.len() {
            count[e.dst] = count[e.dst].saturating_add(count[e.src]);
        }
    }
    count[g.destination()]
}

/// Enumerates every source-to-destination path and keeps the cheapest ones.
pub fn brute_force(g: &LayeredGraph) -> Result<BruteForce> {
    brute_force_capped(g, DEFAULT_PATH_CAP)
}

pub fn brute_force_capped(g: &LayeredGraph, cap: u128) -> Result<BruteForce> {
    let paths = count_paths(g);
    if paths > cap {
        return Err(Error::EnumerationCap { paths, cap });
    }
    let dest = g.destination();
    let adj = g.adjacency();
    let mut min_cost = u32::MAX;
    let mut optimal_paths = BTreeSet::new();
    let mut path = vec![g.source()];

    fn walk(
        adj: &[Vec<(NodeId, u32)>],
        dest: NodeId,
        path: &mut Vec<NodeId>,
        cost: u32,
        min_cost: &mut u32,
        optimal: &mut BTreeSet<Vec<NodeId>>,
    ) {
        let node = *path.last().unwrap();
        if node == dest {
            if cost < *min_cost {
                *min_cost = cost;
                optimal.clear();
            }
            if cost == *min_cost {
                optimal.insert(path.clone());
            }
            return;
        }
        for &(next, c) in &adj[node] {
            path.push(next);
            walk(adj, dest, path, cost + c, min_cost, optimal);
            path.pop();
        }
    }

    walk(&adj, dest, &mut path, 0, &mut min_cost, &mut optimal_paths);
    if optimal_paths.is_empty() {
        return Err(Error::Unreachable(dest));
    }
    Ok(BruteForce {
        min_cost,
        optimal_paths,
    })
}

/// True edge-cost sum of `path`, or `None` if some hop is not an edge.
pub fn path_cost(g: &LayeredGraph, path: &[NodeId]) -> Option<u32> {
    path.windows(2).map(|w| g.edge_cost(w[0], w[1])).sum()
}

/// Whether `path` with `declared_cost` is a correct answer for `g`: a
/// source-to-destination path with one node per layer whose declared cost is
/// both its true cost and the optimum. Any minimum-cost path is accepted.
pub fn is_optimal_answer(g: &LayeredGraph, path: &[NodeId], declared_cost: u32) -> bool {
    if path.len() != g.num_layers() {
        return false;
    }
    if path
        .iter()
        .enumerate()
        .any(|(layer, &n)| g.layer_of(n) != Some(layer))
    {
        return false;
    }
    let Some(true_cost) = path_cost(g, path) else {
        return false;
    };
    let Ok(solution) = solve_dp(g) else {
        return false;
    };
    declared_cost == true_cost && declared_cost == solution.opt_cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{fixtures::worked_example, sample_graph, GraphParams};
    use proptest::prelude::*;

    #[test]
    fn worked_example_dp() {
        let s = solve_dp(&worked_example()).unwrap();
        assert_eq!(s.opt_cost, 4);
        assert_eq!(s.opt_path, vec![0, 2, 3, 4]);
        assert_eq!(
            s.best_cost,
            vec![Some(0), Some(2), Some(1), Some(3), Some(4)]
        );
        assert_eq!(s.best_path[1], Some(vec![0, 1]));
    }

    #[test]
    fn worked_example_brute_force() {
        let b = brute_force(&worked_example()).unwrap();
        assert_eq!(b.min_cost, 4);
        assert_eq!(b.optimal_paths, BTreeSet::from([vec![0, 2, 3, 4]]));
    }

    #[test]
    fn chain_graph() {
        let g = LayeredGraph::from_edges(vec![1, 1, 1], &[(0, 1, 3), (1, 2, 2)]).unwrap();
        let s = solve_dp(&g).unwrap();
        assert_eq!((s.opt_cost, s.opt_path), (5, vec![0, 1, 2]));
    }

    #[test]
    fn ties_are_all_enumerated_and_dp_picks_lowest_predecessor() {
        let g =
            LayeredGraph::from_edges(vec![1, 2, 1], &[(0, 1, 1), (0, 2, 2), (1, 3, 2), (2, 3, 1)])
                .unwrap();
        let b = brute_force(&g).unwrap();
        assert_eq!(b.min_cost, 3);
        assert_eq!(
            b.optimal_paths,
            BTreeSet::from([vec![0, 1, 3], vec![0, 2, 3]])
        );
        assert_eq!(solve_dp(&g).unwrap().opt_path, vec![0, 1, 3]);
        assert!(is_optimal_answer(&g, &[0, 2, 3], 3));
        assert!(is_optimal_answer(&g, &[0, 1, 3], 3));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let params = GraphParams::new(7, 6, 5, 1.0).unwrap();
        let g = (0..)
            .map(|s| sample_graph(&params, s).unwrap())
            .find(|g| g.num_gaps() == 7)
            .unwrap();
        let paths = count_paths(&g);
        assert!(paths > 100);
        assert!(matches!(
            brute_force_capped(&g, 100),
            Err(Error::EnumerationCap { cap: 100, .. })
        ));
    }

    #[test]
    fn unreachable_destination_is_an_error() {
        let g = LayeredGraph::from_edges(vec![1, 2, 1], &[(0, 1, 1), (2, 3, 1)]).unwrap();
        assert!(matches!(solve_dp(&g), Err(Error::Unreachable(3))));
        assert!(matches!(brute_force(&g), Err(Error::Unreachable(3))));
    }

    #[test]
    fn answer_checks_on_worked_example() {
        let g = worked_example();
        assert!(is_optimal_answer(&g, &[0, 2, 3, 4], 4));
        assert!(!is_optimal_answer(&g, &[0, 1, 3, 4], 6));
        assert!(!is_optimal_answer(&g, &[0, 2, 3, 4], 3));
        assert!(!is_optimal_answer(&g, &[0, 2, 3], 3));
        assert!(!is_optimal_answer(&g, &[0, 2, 4, 4], 4));
        assert!(!is_optimal_answer(&g, &[], 0));
    }

    #[test]
    fn dp_matches_brute_force_on_small_graphs() {
        let params = GraphParams::new(5, 4, 5, 0.6).unwrap();
        for seed in 0..1000 {
            let g = sample_graph(&params, seed).unwrap();
            let dp = solve_dp(&g).unwrap();
            let bf = brute_force(&g).unwrap();
            assert_eq!(dp.opt_cost, bf.min_cost, "seed {seed}");
            assert!(bf.optimal_paths.contains(&dp.opt_path));
        }
    }

    proptest! {
        #[test]
        fn dp_invariants(seed in any::<u64>(), density in 0.05f64..=1.0) {
            let params = GraphParams::new(7, 6, 5, density).unwrap();
            let g = sample_graph(&params, seed).unwrap();
            let s = solve_dp(&g).unwrap();
            prop_assert_eq!(s.best_cost[0], Some(0));
            for e in g.edges() {
                let (u, v) = (s.best_cost[e.src].unwrap(), s.best_cost[e.dst].unwrap());
                prop_assert!(v <= u + e.cost);
            }
            for v in 1..g.num_nodes() {
                let tight = g.edges().filter(|e| e.dst == v).any(|e| {
                    s.best_cost[e.src].unwrap() + e.cost == s.best_cost[v].unwrap()
                });
                prop_assert!(tight);
            }
            let gaps = g.num_gaps() as u32;
            prop_assert!((gaps..=5 * gaps).contains(&s.opt_cost));
            prop_assert_eq!(s.opt_path.len(), g.num_layers());
            prop_assert_eq!(path_cost(&g, &s.opt_path), Some(s.opt_cost));
            prop_assert_eq!(s.best_cost[g.destination()], Some(s.opt_cost));
            prop_assert!(is_optimal_answer(&g, &s.opt_path, s.opt_cost));
        }
    }
}
