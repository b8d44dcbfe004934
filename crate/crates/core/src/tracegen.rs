//! Reasoning traces from a weighted exploration queue.
//!
//! The generator keeps a queue of candidate extensions `(src, dst, layer)`
//! together with best-known costs and paths per node. Each iteration removes
//! one entry, states the extended path and its cost as a trace step, and
//! commits it when it improves on the best cost known for `dst`, in which case
//! the out-edges of `dst` are queued. The temperature `eta` weights entries by
//! depth: large positive values explore layer by layer (the DP order), large
//! negative values explore depth first and backtrack whenever a cheaper path
//! to an already expanded node shows up.
//!
//! Two redundancy modes extend the plain trace. In [`TraceMode::Rr`] every
//! stated step is ignored with probability 1/2 and its entry goes back into
//! the queue; in [`TraceMode::Dr`] every step is written twice in a row.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::{sample_graph, GraphParams, LayeredGraph, NodeId};
use crate::seed;
use crate::solver::{path_cost, solve_dp};

/// `|eta|` at or above this value selects entries in strict depth order.
pub const ORDERED_ETA: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    Plain,
    /// Randomized redundancy.
    Rr,
    /// Deterministic redundancy.
    Dr,
}

impl fmt::Display for TraceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceMode::Plain => "plain",
            TraceMode::Rr => "rr",
            TraceMode::Dr => "dr",
        })
    }
}

impl FromStr for TraceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(TraceMode::Plain),
            "rr" => Ok(TraceMode::Rr),
            "dr" => Ok(TraceMode::Dr),
            other => Err(Error::InvalidParams(format!(
                "unknown trace mode {other:?}"
            ))),
        }
    }
}

/// One path-cost statement.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceStep {
    pub path: Vec<NodeId>,
    pub cost: u32,
}

impl TraceStep {
    pub fn new(path: Vec<NodeId>, cost: u32) -> Self {
        Self { path, cost }
    }

    /// 1-based index of the gap crossed by the last hop.
    pub fn gap(&self) -> usize {
        self.path.len().saturating_sub(1)
    }

    pub fn prefix(&self) -> &[NodeId] {
        &self.path[..self.path.len().saturating_sub(1)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub eta: f64,
    pub mode: TraceMode,
    pub seed: u64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Weight of the entries spawned while expanding an entry at 0-based depth
/// `layer`: `exp(-eta * (layer + 1))`. Entries out of the source sit at depth
/// 0 with weight 1, so an entry at depth `k` always weighs `exp(-eta * k)`.
pub fn step_weight(layer: usize, eta: f64) -> f64 {
    (-eta * (layer as f64 + 1.0)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueueEntry {
    pub src: NodeId,
    pub dst: NodeId,
    /// 0-based depth: the entry crosses gap `layer + 1`.
    pub layer: usize,
    pub weight: f64,
}

/// Candidate extensions; no `(src, dst)` pair is queued twice.
#[derive(Clone, Debug, Default)]
pub struct ExplorationQueue {
    entries: Vec<QueueEntry>,
    queued: HashSet<(NodeId, NodeId)>,
}

impl ExplorationQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn contains(&self, src: NodeId, dst: NodeId) -> bool {
        self.queued.contains(&(src, dst))
    }

    /// Appends `entry` unless its edge is already queued.
    pub fn push(&mut self, entry: QueueEntry) -> bool {
        if !self.queued.insert((entry.src, entry.dst)) {
            return false;
        }
        self.entries.push(entry);
        true
    }

    pub fn remove(&mut self, index: usize) -> QueueEntry {
        let entry = self.entries.remove(index);
        self.queued.remove(&(entry.src, entry.dst));
        entry
    }

    /// Picks the index of the next entry among those accepted by `eligible`.
    ///
    /// For `|eta| >= ORDERED_ETA` the choice is uniform among the shallowest
    /// (`eta > 0`) or deepest (`eta < 0`) eligible entries; otherwise it is
    /// proportional to the entry weights.
    pub fn choose<R: Rng + ?Sized>(
        &self,
        eta: f64,
        rng: &mut R,
        eligible: impl Fn(&QueueEntry) -> bool,
    ) -> Option<usize> {
        let candidates: Vec<usize> = (0..self.entries.len())
            .filter(|&i| eligible(&self.entries[i]))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        if eta.abs() >= ORDERED_ETA {
            let layers = candidates.iter().map(|&i| self.entries[i].layer);
            let target = if eta > 0.0 {
                layers.min()
            } else {
                layers.max()
            }
            .unwrap();
            let extreme: Vec<usize> = candidates
                .into_iter()
                .filter(|&i| self.entries[i].layer == target)
                .collect();
            return Some(extreme[rng.gen_range(0..extreme.len())]);
        }
        let total: f64 = candidates.iter().map(|&i| self.entries[i].weight).sum();
        let mut r = rng.gen::<f64>() * total;
        for &i in &candidates {
            r -= self.entries[i].weight;
            if r < 0.0 {
                return Some(i);
            }
        }
        candidates.last().copied()
    }
}

/// Runs the exploration on `g` and records every stated step.
///
/// Plain and DR modes commit a removal iff its cost is strictly below the
/// best cost known for its target. In RR mode a stated step may be ignored;
/// while the best cost stated for a node is not yet committed, entries leaving
/// that node are held back, so no step ever builds on a path that an earlier
/// step has already beaten.
pub fn generate_trace(g: &LayeredGraph, eta: f64, mode: TraceMode, seed: u64) -> Trace {
    let mut rng = seed::rng(seed);
    let adj = g.adjacency();
    let n = g.num_nodes();
    let src = g.source();

    // Committed state drives expansion; stated state is what the trace shows.
    let mut cost: Vec<Option<u32>> = vec![None; n];
    let mut path: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut stated_cost: Vec<Option<u32>> = vec![None; n];
    let mut stated_path: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    cost[src] = Some(0);
    path[src] = vec![src];
    stated_cost[src] = Some(0);
    stated_path[src] = vec![src];
    let mut pending = vec![false; n];

    let mut queue = ExplorationQueue::new();
    for &(dst, _) in &adj[src] {
        queue.push(QueueEntry {
            src,
            dst,
            layer: 0,
            weight: 1.0,
        });
    }

    let mut steps = Vec::new();
    while !queue.is_empty() {
        let index = queue
            .choose(eta, &mut rng, |e| !pending[e.src])
            .expect("a queued entry is always eligible");
        let entry = queue.remove(index);
        let edge_cost = adj[entry.src]
            .iter()
            .find(|&&(d, _)| d == entry.dst)
            .map(|&(_, c)| c)
            .expect("queued entries are graph edges");
        let c = cost[entry.src].expect("queued sources are committed") + edge_cost;
        let mut p = path[entry.src].clone();
        p.push(entry.dst);

        let step = TraceStep::new(p.clone(), c);
        if mode == TraceMode::Dr {
            steps.push(step.clone());
        }
        steps.push(step);

        let dst = entry.dst;
        if stated_cost[dst].is_none_or(|s| c < s) {
            stated_cost[dst] = Some(c);
            stated_path[dst] = p.clone();
        }

        if mode == TraceMode::Rr && rng.gen_bool(0.5) {
            pending[dst] = stated_path[dst] != path[dst];
            queue.push(entry);
            continue;
        }

        if stated_path[dst] == p && path[dst] != p {
            cost[dst] = Some(c);
            path[dst] = p;
            pending[dst] = false;
            for &(next, _) in &adj[dst] {
                queue.push(QueueEntry {
                    src: dst,
                    dst: next,
                    layer: entry.layer + 1,
                    weight: step_weight(entry.layer, eta),
                });
            }
        }
    }
    Trace {
        steps,
        eta,
        mode,
        seed,
    }
}

/// Outcome of replaying a trace against its graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaReport {
    /// Every step is a real path from the source with its true cost.
    pub correct_statements: bool,
    /// Every step extends the source or an earlier step by one node in the
    /// next layer.
    pub incremental: bool,
    /// Every step extends the best path stated so far to its prefix endpoint.
    pub best_prefix: bool,
    /// The best path stated to the destination is globally optimal.
    pub complete: bool,
}

impl CriteriaReport {
    pub fn all(&self) -> bool {
        self.correct_statements && self.incremental && self.best_prefix && self.complete
    }
}

/// Replays `t` on `g` and evaluates the four trace criteria.
pub fn check_criteria(t: &Trace, g: &LayeredGraph) -> CriteriaReport {
    let n = g.num_nodes();
    let source = g.source();
    let mut best: Vec<Option<(u32, &[NodeId])>> = vec![None; n];
    let source_path = [source];
    best[source] = Some((0, &source_path));
    let mut seen: HashSet<&[NodeId]> = HashSet::new();

    let mut report = CriteriaReport {
        correct_statements: true,
        incremental: true,
        best_prefix: true,
        complete: false,
    };
    for step in &t.steps {
        let p = step.path.as_slice();
        let layered = p.len() >= 2
            && p.first() == Some(&source)
            && p.iter()
                .enumerate()
                .all(|(i, &node)| g.layer_of(node) == Some(i));
        let correct = layered && path_cost(g, p) == Some(step.cost);
        report.correct_statements &= correct;

        let prefix = step.prefix();
        let extends_known = prefix == [source] || seen.contains(prefix);
        report.incremental &= layered && extends_known;

        let prefix_is_best = prefix
            .last()
            .and_then(|&end| best.get(end).copied().flatten())
            .is_some_and(|(_, bp)| bp == prefix);
        report.best_prefix &= prefix_is_best;

        if correct {
            let last = *p.last().unwrap();
            if best[last].is_none_or(|(c, _)| step.cost < c) {
                best[last] = Some((step.cost, p));
            }
        }
        seen.insert(p);
    }
    if let (Some((c, p)), Ok(solution)) = (best[g.destination()], solve_dp(g)) {
        report.complete = c == solution.opt_cost && p.len() == g.num_layers();
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
}

impl StepStats {
    pub fn from_counts(counts: &[usize]) -> Self {
        let samples = counts.len();
        if samples == 0 {
            return Self {
                samples,
                mean: 0.0,
                std: 0.0,
            };
        }
        let sum: u64 = counts.iter().map(|&c| c as u64).sum();
        let mean = sum as f64 / samples as f64;
        let var = if samples > 1 {
            counts
                .iter()
                .map(|&c| (c as f64 - mean).powi(2))
                .sum::<f64>()
                / (samples - 1) as f64
        } else {
            0.0
        };
        Self {
            samples,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Trace seed used alongside a graph seed; keeps the two streams independent.
pub fn trace_seed(graph_seed: u64) -> u64 {
    seed::derive(graph_seed, u64::MAX)
}

/// Step counts of `n_samples` fresh (graph, trace) pairs. Sample `i` uses
/// graph seed `seed::derive(seed, i)`.
pub fn step_counts(
    params: &GraphParams,
    eta: f64,
    mode: TraceMode,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    params.validate()?;
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let graph_seed = seed::derive(seed, i);
            let g = sample_graph(params, graph_seed)?;
            Ok(generate_trace(&g, eta, mode, trace_seed(graph_seed)).len())
        })
        .collect()
}

/// Mean and standard deviation of trace length over fresh samples.
pub fn trace_stats(
    params: &GraphParams,
    eta: f64,
    mode: TraceMode,
    n_samples: usize,
    seed: u64,
) -> Result<StepStats> {
    if n_samples == 0 {
        return Err(Error::InvalidParams("n_samples must be >= 1".into()));
    }
    Ok(StepStats::from_counts(&step_counts(
        params, eta, mode, n_samples, seed,
    )?))
}
