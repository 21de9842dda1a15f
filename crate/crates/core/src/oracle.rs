//! Reference engines used to check the fast paths: exhaustive constrained
//! search on tiny graphs, textbook Dijkstra, a linear-scan ellipse filter,
//! and the hand-checkable DIAMOND fixture.
//!
//! Nothing here shares code with the search kernels it validates except the
//! model types and the `edge_in_ellipse` predicate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geometry::{edge_in_ellipse, Ellipse};
use crate::model::{EdgeId, NodeId, Objective, Path, RoadNetwork, FEASIBILITY_SLACK};
use crate::shortest_path::SpResult;

/// DIAMOND fixture node ids: A=0, B=1, C=2, D=3.
pub mod diamond_ids {
    use crate::model::{EdgeId, NodeId};

    pub const A: NodeId = NodeId(0);
    pub const B: NodeId = NodeId(1);
    pub const C: NodeId = NodeId(2);
    pub const D: NodeId = NodeId(3);

    pub const E1: EdgeId = EdgeId(0);
    pub const E2: EdgeId = EdgeId(1);
    pub const E3: EdgeId = EdgeId(2);
    pub const E4: EdgeId = EdgeId(3);
    pub const E5: EdgeId = EdgeId(4);
}

/// Four nodes A(0,0) B(1,1) C(1,-1) D(2,0) and five directed edges:
/// e1 A→B (1.5, score 5), e2 B→D (1.5, 0), e3 A→C (1.5, 0), e4 C→D (1.5, 3),
/// e5 A→D (2.0, 0). The min-cost A→D path is `[e5]`.
pub fn diamond() -> RoadNetwork {
    RoadNetwork::from_parts(
        &[(0.0, 0.0), (1.0, 1.0), (1.0, -1.0), (2.0, 0.0)],
        &[
            (0, 1, 1.5, 5.0),
            (1, 3, 1.5, 0.0),
            (0, 2, 1.5, 0.0),
            (2, 3, 1.5, 3.0),
            (0, 3, 2.0, 0.0),
        ],
    )
    .expect("fixture satisfies model invariants")
}

/// Size guard for [`exact_cpo`]. A network is accepted when it is within
/// either bound.
#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    pub max_nodes: usize,
    pub max_edges: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_nodes: 14,
            max_edges: 40,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("network too large for exhaustive search: {nodes} nodes, {edges} edges")]
    TooLarge { nodes: usize, edges: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub score: f64,
    pub witness: Path,
}

/// Mode-optimal score over all edge-simple `u → v` paths with cost `<= beta`.
pub fn exact_cpo(
    network: &RoadNetwork,
    u: NodeId,
    v: NodeId,
    beta: f64,
    mode: Objective,
    limits: OracleLimits,
) -> Result<Option<ExactSolution>, OracleError> {
    if network.node_count() > limits.max_nodes && network.edge_count() > limits.max_edges {
        return Err(OracleError::TooLarge {
            nodes: network.node_count(),
            edges: network.edge_count(),
        });
    }
    let mut best: Option<(f64, Vec<EdgeId>)> = None;
    let mut used = vec![false; network.edge_count()];
    let mut stack = Vec::new();
    for_each_feasible_path(
        network,
        u,
        v,
        beta,
        &mut used,
        &mut stack,
        0.0,
        &mut |edges| {
            let score: f64 = edges.iter().map(|&e| network.edge(e).score).sum();
            let better = match &best {
                None => true,
                Some((s, _)) => mode.improves(score, *s),
            };
            if better {
                best = Some((score, edges.to_vec()));
            }
        },
    );
    Ok(best.map(|(_, edges)| {
        let witness = Path::from_edges(network, u, edges).expect("dfs emits chained paths");
        ExactSolution {
            score: witness.total_score(),
            witness,
        }
    }))
}

/// Every edge-simple `u → v` path with cost `<= beta`, in DFS order.
pub fn enumerate_feasible_paths(
    network: &RoadNetwork,
    u: NodeId,
    v: NodeId,
    beta: f64,
) -> Vec<Vec<EdgeId>> {
    let mut out = Vec::new();
    let mut used = vec![false; network.edge_count()];
    let mut stack = Vec::new();
    for_each_feasible_path(network, u, v, beta, &mut used, &mut stack, 0.0, &mut |p| {
        out.push(p.to_vec())
    });
    out
}

#[allow(clippy::too_many_arguments)]
fn for_each_feasible_path(
    network: &RoadNetwork,
    at: NodeId,
    target: NodeId,
    beta: f64,
    used: &mut [bool],
    stack: &mut Vec<EdgeId>,
    spent: f64,
    visit: &mut dyn FnMut(&[EdgeId]),
) {
    if at == target {
        visit(stack);
    }
    for &id in network.outgoing(at) {
        if used[id.index()] {
            continue;
        }
        let edge = network.edge(id);
        let next = spent + edge.cost;
        if next > beta + FEASIBILITY_SLACK {
            continue;
        }
        used[id.index()] = true;
        stack.push(id);
        for_each_feasible_path(network, edge.dst, target, beta, used, stack, next, visit);
        stack.pop();
        used[id.index()] = false;
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Min-heap on (dist, node).
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

/// Plain Dijkstra over the whole graph. Ties on distance keep the lowest
/// incoming `EdgeId` as predecessor.
pub fn dijkstra(network: &RoadNetwork, u: NodeId, v: NodeId) -> SpResult {
    let n = network.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<EdgeId>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[u.index()] = 0.0;
    heap.push(Entry { dist: 0.0, node: u });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if done[node.index()] {
            continue;
        }
        done[node.index()] = true;
        for &id in network.outgoing(node) {
            let edge = network.edge(id);
            let nd = d + edge.cost;
            let slot = edge.dst.index();
            if nd < dist[slot] {
                dist[slot] = nd;
                pred[slot] = Some(id);
                heap.push(Entry {
                    dist: nd,
                    node: edge.dst,
                });
            } else if nd == dist[slot] && pred[slot].is_some_and(|p| id < p) {
                pred[slot] = Some(id);
            }
        }
    }
    if !dist[v.index()].is_finite() {
        return SpResult::absent();
    }
    let mut edges = Vec::new();
    let mut at = v;
    while at != u {
        let id = pred[at.index()].expect("reached node has a predecessor");
        edges.push(id);
        at = network.edge(id).src;
    }
    edges.reverse();
    SpResult::found(Path::from_edges(network, u, edges).expect("predecessor chain"))
}

/// Linear scan over every edge with the ellipse predicate and optional
/// positive-score filter.
pub fn scan_candidates(network: &RoadNetwork, ell: &Ellipse, positive_only: bool) -> Vec<EdgeId> {
    network
        .edges()
        .iter()
        .filter(|e| !positive_only || e.score > 0.0)
        .filter(|e| edge_in_ellipse(network, e, ell))
        .map(|e| e.id)
        .collect()
}
