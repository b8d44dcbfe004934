//! Random layered DAGs with integer edge costs.
//!
//! A graph has `num_gaps + 1` layers. The first and last layers hold a single
//! node (the source and the destination); every edge connects two consecutive
//! layers. Node ids are assigned layer by layer, in drawing order within a
//! layer, so the source is always `0` and the destination is `num_nodes - 1`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub type NodeId = usize;

/// Generator family `{L, K, C, p_e}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    /// Maximum number of layers after the source (`L`).
    pub layers: usize,
    /// Maximum number of nodes in an internal layer (`K`).
    pub max_width: usize,
    /// Maximum edge cost (`C`).
    pub max_cost: u32,
    /// Probability that any given inter-layer edge is drawn (`p_e`).
    pub edge_prob: f64,
}

impl GraphParams {
    pub fn new(layers: usize, max_width: usize, max_cost: u32, edge_prob: f64) -> Result<Self> {
        let params = Self {
            layers,
            max_width,
            max_cost,
            edge_prob,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::InvalidParams(format!(
                "layers must be >= 2, got {}",
                self.layers
            )));
        }
        if self.max_width < 2 {
            return Err(Error::InvalidParams(format!(
                "max_width must be >= 2, got {}",
                self.max_width
            )));
        }
        if self.max_cost < 1 {
            return Err(Error::InvalidParams("max_cost must be >= 1".into()));
        }
        if !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "edge_prob must lie in (0, 1], got {}",
                self.edge_prob
            )));
        }
        Ok(())
    }

    /// Largest node count any graph of this family can have.
    pub fn max_nodes(&self) -> usize {
        2 + (self.layers - 1) * self.max_width
    }

    /// Largest cumulative path cost any graph of this family can have.
    pub fn max_path_cost(&self) -> u32 {
        self.max_cost * self.layers as u32
    }
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            layers: 7,
            max_width: 6,
            max_cost: 5,
            edge_prob: 0.6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub cost: u32,
}

impl Edge {
    pub fn new(src: NodeId, dst: NodeId, cost: u32) -> Self {
        Self { src, dst, cost }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayeredGraph {
    /// `[1, s_1, ..., s_{n-1}, 1]`.
    pub layer_sizes: Vec<usize>,
    /// `gaps[g]` holds the edges from layer `g` to layer `g + 1`, sorted by
    /// `(src, dst)`.
    pub gaps: Vec<Vec<Edge>>,
}

impl LayeredGraph {
    /// Builds a graph from layer sizes and a flat edge list. Edges are
    /// assigned to gaps by the layer of their source and sorted canonically.
    pub fn from_edges(layer_sizes: Vec<usize>, edges: &[(NodeId, NodeId, u32)]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidGraph(
                "a graph needs at least two layers".into(),
            ));
        }
        let mut graph = Self {
            gaps: vec![Vec::new(); layer_sizes.len() - 1],
            layer_sizes,
        };
        for &(src, dst, cost) in edges {
            let gap = graph
                .layer_of(src)
                .filter(|&l| l < graph.num_gaps())
                .ok_or_else(|| {
                    Error::InvalidGraph(format!("edge source n{src} has no outgoing gap"))
                })?;
            graph.gaps[gap].push(Edge::new(src, dst, cost));
        }
        graph.canonicalize();
        Ok(graph)
    }

    pub fn canonicalize(&mut self) {
        for gap in &mut self.gaps {
            gap.sort_by_key(|e| (e.src, e.dst));
        }
    }

    pub fn num_gaps(&self) -> usize {
        self.gaps.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.layer_sizes.iter().sum()
    }

    pub fn source(&self) -> NodeId {
        0
    }

    pub fn destination(&self) -> NodeId {
        self.num_nodes() - 1
    }

    /// First node id of `layer`.
    pub fn layer_start(&self, layer: usize) -> NodeId {
        self.layer_sizes[..layer].iter().sum()
    }

    pub fn layer_nodes(&self, layer: usize) -> std::ops::Range<NodeId> {
        let start = self.layer_start(layer);
        start..start + self.layer_sizes[layer]
    }

    pub fn layer_of(&self, node: NodeId) -> Option<usize> {
        let mut start = 0;
        for (layer, &size) in self.layer_sizes.iter().enumerate() {
            if node < start + size {
                return Some(layer);
            }
            start += size;
        }
        None
    }

    pub fn edge_count(&self) -> usize {
        self.gaps.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.gaps.iter().flatten()
    }

    pub fn edge_cost(&self, src: NodeId, dst: NodeId) -> Option<u32> {
        let gap = self.layer_of(src)?;
        self.gaps
            .get(gap)?
            .iter()
            .find(|e| e.src == src && e.dst == dst)
            .map(|e| e.cost)
    }

    /// Out-neighbours of every node, as `(dst, cost)` in ascending `dst`.
    pub fn adjacency(&self) -> Vec<Vec<(NodeId, u32)>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for e in self.edges() {
            if e.src < adj.len() {
                adj[e.src].push((e.dst, e.cost));
            }
        }
        adj
    }

    /// Structural invariants that hold independently of the generator family:
    /// endpoint layers of size one, edges between consecutive layers only,
    /// positive costs, canonical edge order, and no dead ends.
    pub fn violations(&self) -> Vec<GraphViolation> {
        let mut out = Vec::new();
        if self.layer_sizes.len() != self.gaps.len() + 1 || self.gaps.is_empty() {
            out.push(GraphViolation::ShapeMismatch {
                layers: self.layer_sizes.len(),
                gaps: self.gaps.len(),
            });
            return out;
        }
        let last = self.layer_sizes.len() - 1;
        for (layer, &size) in self.layer_sizes.iter().enumerate() {
            let endpoint = layer == 0 || layer == last;
            if (endpoint && size != 1) || size == 0 {
                out.push(GraphViolation::LayerSize { layer, size });
            }
        }
        let n = self.num_nodes();
        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        for (gap, edges) in self.gaps.iter().enumerate() {
            let from = self.layer_nodes(gap);
            let to = self.layer_nodes(gap + 1);
            for pair in edges.windows(2) {
                let (a, b) = ((pair[0].src, pair[0].dst), (pair[1].src, pair[1].dst));
                if a == b {
                    out.push(GraphViolation::DuplicateEdge {
                        gap: gap + 1,
                        src: a.0,
                        dst: a.1,
                    });
                } else if a > b {
                    out.push(GraphViolation::UnsortedGap { gap: gap + 1 });
                }
            }
            for e in edges {
                if !from.contains(&e.src) || !to.contains(&e.dst) {
                    out.push(GraphViolation::EdgeOutsideGap {
                        gap: gap + 1,
                        src: e.src,
                        dst: e.dst,
                    });
                    continue;
                }
                if e.cost == 0 {
                    out.push(GraphViolation::CostOutOfRange {
                        src: e.src,
                        dst: e.dst,
                        cost: e.cost,
                        max: None,
                    });
                }
                out_deg[e.src] += 1;
                in_deg[e.dst] += 1;
            }
        }
        for node in 0..n {
            if node != n - 1 && out_deg[node] == 0 {
                out.push(GraphViolation::NoOutgoing { node });
            }
            if node != 0 && in_deg[node] == 0 {
                out.push(GraphViolation::NoIncoming { node });
            }
        }
        out
    }
}

/// One broken invariant of a [`LayeredGraph`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphViolation {
    ShapeMismatch {
        layers: usize,
        gaps: usize,
    },
    TooManyGaps {
        gaps: usize,
        max: usize,
    },
    TooFewGaps {
        gaps: usize,
    },
    LayerSize {
        layer: usize,
        size: usize,
    },
    InternalWidth {
        layer: usize,
        size: usize,
        max: usize,
    },
    EdgeOutsideGap {
        gap: usize,
        src: NodeId,
        dst: NodeId,
    },
    CostOutOfRange {
        src: NodeId,
        dst: NodeId,
        cost: u32,
        max: Option<u32>,
    },
    DuplicateEdge {
        gap: usize,
        src: NodeId,
        dst: NodeId,
    },
    UnsortedGap {
        gap: usize,
    },
    NoOutgoing {
        node: NodeId,
    },
    NoIncoming {
        node: NodeId,
    },
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use GraphViolation::*;
        match self {
            ShapeMismatch { layers, gaps } => {
                write!(f, "{layers} layers do not match {gaps} edge gaps")
            }
            TooManyGaps { gaps, max } => write!(f, "{gaps} gaps exceed the maximum of {max}"),
            TooFewGaps { gaps } => write!(f, "{gaps} gaps, at least 2 required"),
            LayerSize { layer, size } => write!(f, "layer {layer} has invalid size {size}"),
            InternalWidth { layer, size, max } => {
                write!(
                    f,
                    "internal layer {layer} has width {size}, expected 2..={max}"
                )
            }
            EdgeOutsideGap { gap, src, dst } => {
                write!(
                    f,
                    "edge n{src}->n{dst} does not connect the layers of gap {gap}"
                )
            }
            CostOutOfRange {
                src,
                dst,
                cost,
                max,
            } => match max {
                Some(max) => write!(f, "edge n{src}->n{dst} has cost {cost}, expected 1..={max}"),
                None => write!(f, "edge n{src}->n{dst} has non-positive cost {cost}"),
            },
            DuplicateEdge { gap, src, dst } => {
                write!(f, "edge n{src}->n{dst} appears twice in gap {gap}")
            }
            UnsortedGap { gap } => write!(f, "edges of gap {gap} are not in (src, dst) order"),
            NoOutgoing { node } => write!(f, "node n{node} has no outgoing edge"),
            NoIncoming { node } => write!(f, "node n{node} has no incoming edge"),
        }
    }
}

/// Checks every invariant of `g`, including the bounds of the family `params`.
pub fn validate_graph(g: &LayeredGraph, params: &GraphParams) -> Vec<GraphViolation> {
    let mut out = g.violations();
    if matches!(out.first(), Some(GraphViolation::ShapeMismatch { .. })) {
        return out;
    }
    let gaps = g.num_gaps();
    if gaps < 2 {
        out.push(GraphViolation::TooFewGaps { gaps });
    }
    if gaps > params.layers {
        out.push(GraphViolation::TooManyGaps {
            gaps,
            max: params.layers,
        });
    }
    for layer in 1..g.num_layers() - 1 {
        let size = g.layer_sizes[layer];
        if !(2..=params.max_width).contains(&size) {
            out.push(GraphViolation::InternalWidth {
                layer,
                size,
                max: params.max_width,
            });
        }
    }
    for e in g.edges() {
        if e.cost > params.max_cost {
            out.push(GraphViolation::CostOutOfRange {
                src: e.src,
                dst: e.dst,
                cost: e.cost,
                max: Some(params.max_cost),
            });
        }
    }
    out
}

pub fn edge_count(g: &LayeredGraph) -> usize {
    g.edge_count()
}

/// Samples one graph of the family `params`.
///
/// Draw order: number of gaps, internal widths, the edge matrix of every gap
/// (row-major, each entry present with probability `edge_prob`), then the
/// connectivity repair. Nodes without an outgoing edge are fixed first, layer
/// by layer from the source; nodes without an incoming edge are fixed next,
/// from the destination backwards. Every random choice comes from one
/// per-graph stream seeded with `seed`.
#[allow(clippy::needless_range_loop)]
pub fn sample_graph(params: &GraphParams, seed: u64) -> Result<LayeredGraph> {
    params.validate()?;
    let mut rng = seed::rng(seed);

    let num_gaps = rng.gen_range(2..=params.layers);
    let mut layer_sizes = Vec::with_capacity(num_gaps + 1);
    layer_sizes.push(1);
    for _ in 1..num_gaps {
        layer_sizes.push(rng.gen_range(2..=params.max_width));
    }
    layer_sizes.push(1);

    // costs[g][i][j] for local indices i (layer g) and j (layer g + 1).
    let mut costs: Vec<Vec<Vec<Option<u32>>>> = (0..num_gaps)
        .map(|g| {
            (0..layer_sizes[g])
                .map(|_| {
                    (0..layer_sizes[g + 1])
                        .map(|_| {
                            if rng.gen::<f64>() < params.edge_prob {
                                Some(rng.gen_range(1..=params.max_cost))
                            } else {
                                None
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    for (g, matrix) in costs.iter_mut().enumerate() {
        let next = layer_sizes[g + 1];
        for row in matrix.iter_mut() {
            if row.iter().all(Option::is_none) {
                let j = rng.gen_range(0..next);
                row[j] = Some(rng.gen_range(1..=params.max_cost));
            }
        }
    }
    for g in (0..num_gaps).rev() {
        let prev = layer_sizes[g];
        for j in 0..layer_sizes[g + 1] {
            if (0..prev).all(|i| costs[g][i][j].is_none()) {
                let i = rng.gen_range(0..prev);
                costs[g][i][j] = Some(rng.gen_range(1..=params.max_cost));
            }
        }
    }

    let mut gaps = Vec::with_capacity(num_gaps);
    let mut start = 0;
    for (g, matrix) in costs.iter().enumerate() {
        let next_start = start + layer_sizes[g];
        let mut edges = Vec::new();
        for (i, row) in matrix.iter().enumerate() {
            for (j, cost) in row.iter().enumerate() {
                if let Some(cost) = *cost {
                    edges.push(Edge::new(start + i, next_start + j, cost));
                }
            }
        }
        gaps.push(edges);
        start = next_start;
    }
    Ok(LayeredGraph { layer_sizes, gaps })
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn reachable(g: &LayeredGraph) -> bool {
        let adj = g.adjacency();
        let mut seen = vec![false; g.num_nodes()];
        let mut queue = VecDeque::from([g.source()]);
        seen[g.source()] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen[g.destination()]
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(GraphParams::new(1, 6, 5, 0.6).is_err());
        assert!(GraphParams::new(7, 1, 5, 0.6).is_err());
        assert!(GraphParams::new(7, 6, 0, 0.6).is_err());
        assert!(GraphParams::new(7, 6, 5, 0.0).is_err());
        assert!(GraphParams::new(7, 6, 5, 1.5).is_err());
        assert!(GraphParams::new(7, 6, 5, f64::NAN).is_err());
        let bad = GraphParams {
            layers: 1,
            ..GraphParams::default()
        };
        assert!(matches!(
            sample_graph(&bad, 0),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn sampled_graphs_are_valid_and_connected() {
        let params = GraphParams::default();
        for seed in 0..10_000 {
            let g = sample_graph(&params, seed).unwrap();
            assert!(validate_graph(&g, &params).is_empty(), "seed {seed}");
            assert!((2..=7).contains(&g.num_gaps()));
            assert!(reachable(&g), "seed {seed}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = GraphParams::default();
        let a = serde_json::to_string(&sample_graph(&params, 42).unwrap()).unwrap();
        let b = serde_json::to_string(&sample_graph(&params, 42).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sparse_sampling_is_repaired() {
        let params = GraphParams::new(2, 2, 3, 1e-12).unwrap();
        for seed in 0..200 {
            let g = sample_graph(&params, seed).unwrap();
            assert!(validate_graph(&g, &params).is_empty());
            assert_eq!(g.layer_sizes, vec![1, 2, 1]);
            assert_eq!(g.edge_count(), 4);
        }
    }

    #[test]
    fn gap_count_is_uniform() {
        let params = GraphParams::default();
        let n = 100_000u64;
        let mut hist = [0u64; 8];
        for seed in 0..n {
            hist[sample_graph(&params, seed).unwrap().num_gaps()] += 1;
        }
        let p = 1.0 / 6.0;
        let expected = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (gaps, &count) in hist.iter().enumerate().skip(2) {
            let dev = (count as f64 - expected).abs();
            assert!(
                dev < 3.0 * sigma,
                "gaps={gaps} count={count} expected={expected}"
            );
        }
    }

    #[test]
    fn worked_example_counts_five_edges() {
        let g = fixtures::worked_example();
        assert_eq!(edge_count(&g), 5);
        assert!(g.violations().is_empty());
        // Its single-node middle layer is outside the family's width bounds.
        let v = validate_graph(&g, &GraphParams::default());
        assert_eq!(
            v,
            vec![GraphViolation::InternalWidth {
                layer: 2,
                size: 1,
                max: 6
            }]
        );
    }

    #[test]
    fn full_density_graphs_of_same_shape_have_equal_edge_counts() {
        let params = GraphParams::new(4, 4, 5, 1.0).unwrap();
        let graphs: Vec<_> = (0..500)
            .map(|s| sample_graph(&params, s).unwrap())
            .collect();
        for a in &graphs {
            for b in graphs.iter().filter(|b| b.layer_sizes == a.layer_sizes) {
                assert_eq!(a.edge_count(), b.edge_count());
            }
            let expected: usize = a.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum();
            assert_eq!(a.edge_count(), expected);
        }
    }

    #[test]
    fn isolated_node_is_reported() {
        let g = LayeredGraph::from_edges(vec![1, 2, 1], &[(0, 1, 1), (1, 3, 1)]).unwrap();
        let v = g.violations();
        assert!(v.contains(&GraphViolation::NoIncoming { node: 2 }));
        assert!(v.contains(&GraphViolation::NoOutgoing { node: 2 }));
    }

    #[test]
    fn zero_cost_is_reported() {
        let g =
            LayeredGraph::from_edges(vec![1, 2, 1], &[(0, 1, 1), (0, 2, 0), (1, 3, 1), (2, 3, 2)])
                .unwrap();
        assert_eq!(
            g.violations(),
            vec![GraphViolation::CostOutOfRange {
                src: 0,
                dst: 2,
                cost: 0,
                max: None
            }]
        );
    }

    #[test]
    fn cost_above_family_bound_is_reported() {
        let g =
            LayeredGraph::from_edges(vec![1, 2, 1], &[(0, 1, 9), (0, 2, 1), (1, 3, 1), (2, 3, 2)])
                .unwrap();
        let v = validate_graph(&g, &GraphParams::default());
        assert_eq!(
            v,
            vec![GraphViolation::CostOutOfRange {
                src: 0,
                dst: 1,
                cost: 9,
                max: Some(5)
            }]
        );
    }

    #[test]
    fn layer_skipping_edge_is_reported() {
        let mut g = fixtures::worked_example();
        g.gaps[0].push(Edge::new(0, 3, 1));
        assert!(g.violations().contains(&GraphViolation::EdgeOutsideGap {
            gap: 1,
            src: 0,
            dst: 3
        }));
    }
}
