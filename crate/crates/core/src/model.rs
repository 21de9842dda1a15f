//! Core domain types: the road network, paths over it, and the score (Γ) and
//! cost (Φ) aggregates.
//!
//! Everything here is immutable once built and can be shared freely between
//! worker threads.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Absolute slack (meters) applied to every budget comparison.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Dense node identifier, `0..node_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

/// Dense edge identifier, `0..edge_count`. Ascending `EdgeId` is the canonical
/// iteration order for adjacency lists, index results and candidate loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    /// Projected planar coordinates in meters.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    /// Traversal cost in meters, never below the straight-line length.
    pub cost: f64,
    pub score: f64,
}

/// Whether the search maximizes or minimizes total score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    #[default]
    Maximize,
    Minimize,
}

impl Objective {
    /// Strict comparison used for every incumbent update.
    #[inline]
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Objective::Maximize => candidate > incumbent,
            Objective::Minimize => candidate < incumbent,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("node {index} has id {found}; node ids must be dense and match their position")]
    NodeIdMismatch { index: usize, found: NodeId },
    #[error("node {0} has non-finite coordinates")]
    NonFiniteCoordinate(NodeId),
    #[error("edge {index} has id {found}; edge ids must be dense and match their position")]
    EdgeIdMismatch { index: usize, found: EdgeId },
    #[error("edge {edge} references unknown node {node}")]
    UnknownNode { edge: EdgeId, node: NodeId },
    #[error("edge {edge} has invalid cost {cost} (must be finite and > 0)")]
    InvalidCost { edge: EdgeId, cost: f64 },
    #[error("edge {edge} cost {cost} is below the straight-line distance {euclid} between its endpoints")]
    CostBelowEuclid {
        edge: EdgeId,
        cost: f64,
        euclid: f64,
    },
    #[error("edge {edge} has non-finite score {score}")]
    InvalidScore { edge: EdgeId, score: f64 },
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error(
        "path does not chain: expected an edge leaving {expected}, got {edge} leaving {found}"
    )]
    EndpointMismatch {
        edge: EdgeId,
        expected: NodeId,
        found: NodeId,
    },
    #[error("score vector has {got} entries, network has {expected} edges")]
    ScoreLengthMismatch { expected: usize, got: usize },
}

/// Immutable directed road graph with outgoing adjacency sorted by `EdgeId`.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adj_offsets: Vec<usize>,
    adj_edges: Vec<EdgeId>,
}

impl RoadNetwork {
    /// Validates and builds a network. Node and edge ids must equal their
    /// position in the respective vector.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, ModelError> {
        for (index, node) in nodes.iter().enumerate() {
            if node.id.index() != index {
                return Err(ModelError::NodeIdMismatch {
                    index,
                    found: node.id,
                });
            }
            if !node.x.is_finite() || !node.y.is_finite() {
                return Err(ModelError::NonFiniteCoordinate(node.id));
            }
        }
        for (index, edge) in edges.iter().enumerate() {
            if edge.id.index() != index {
                return Err(ModelError::EdgeIdMismatch {
                    index,
                    found: edge.id,
                });
            }
            for node in [edge.src, edge.dst] {
                if node.index() >= nodes.len() {
                    return Err(ModelError::UnknownNode {
                        edge: edge.id,
                        node,
                    });
                }
            }
            if !(edge.cost.is_finite() && edge.cost > 0.0) {
                return Err(ModelError::InvalidCost {
                    edge: edge.id,
                    cost: edge.cost,
                });
            }
            let euclid = distance(&nodes[edge.src.index()], &nodes[edge.dst.index()]);
            if edge.cost < euclid {
                return Err(ModelError::CostBelowEuclid {
                    edge: edge.id,
                    cost: edge.cost,
                    euclid,
                });
            }
            if !edge.score.is_finite() {
                return Err(ModelError::InvalidScore {
                    edge: edge.id,
                    score: edge.score,
                });
            }
        }

        // Counting sort by source; edges are visited in id order so each
        // bucket ends up ascending.
        let mut adj_offsets = vec![0usize; nodes.len() + 1];
        for edge in &edges {
            adj_offsets[edge.src.index() + 1] += 1;
        }
        for i in 0..nodes.len() {
            adj_offsets[i + 1] += adj_offsets[i];
        }
        let mut fill = adj_offsets.clone();
        let mut adj_edges = vec![EdgeId(0); edges.len()];
        for edge in &edges {
            let slot = &mut fill[edge.src.index()];
            adj_edges[*slot] = edge.id;
            *slot += 1;
        }

        Ok(Self {
            nodes,
            edges,
            adj_offsets,
            adj_edges,
        })
    }

    /// Convenience constructor from coordinates and `(src, dst, cost, score)`
    /// tuples; ids are assigned by position.
    pub fn from_parts(
        coords: &[(f64, f64)],
        edges: &[(u32, u32, f64, f64)],
    ) -> Result<Self, ModelError> {
        let nodes = coords
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Node {
                id: NodeId(i as u32),
                x,
                y,
            })
            .collect();
        let edges = edges
            .iter()
            .enumerate()
            .map(|(i, &(src, dst, cost, score))| Edge {
                id: EdgeId(i as u32),
                src: NodeId(src),
                dst: NodeId(dst),
                cost,
                score,
            })
            .collect();
        Self::new(nodes, edges)
    }

    /// Same topology and costs with a replacement score vector.
    pub fn with_scores(&self, scores: &[f64]) -> Result<Self, ModelError> {
        if scores.len() != self.edges.len() {
            return Err(ModelError::ScoreLengthMismatch {
                expected: self.edges.len(),
                got: scores.len(),
            });
        }
        let mut network = self.clone();
        for (edge, &score) in network.edges.iter_mut().zip(scores) {
            if !score.is_finite() {
                return Err(ModelError::InvalidScore {
                    edge: edge.id,
                    score,
                });
            }
            edge.score = score;
        }
        Ok(network)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    #[inline]
    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.index()]
    }

    pub fn get_edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(id.index())
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    /// Outgoing edges of `id`, ascending by `EdgeId`.
    #[inline]
    pub fn outgoing(&self, id: NodeId) -> &[EdgeId] {
        let i = id.index();
        &self.adj_edges[self.adj_offsets[i]..self.adj_offsets[i + 1]]
    }

    /// Straight-line distance between two nodes in meters.
    #[inline]
    pub fn euclid(&self, a: NodeId, b: NodeId) -> f64 {
        distance(self.node(a), self.node(b))
    }

    pub fn has_negative_scores(&self) -> bool {
        self.edges.iter().any(|e| e.score < 0.0)
    }

    /// Bounding box `(min_x, min_y, max_x, max_y)`, `None` for an empty network.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.nodes.first()?;
        Some(self.nodes.iter().fold(
            (first.x, first.y, first.x, first.y),
            |(x0, y0, x1, y1), n| (x0.min(n.x), y0.min(n.y), x1.max(n.x), y1.max(n.y)),
        ))
    }
}

#[inline]
fn distance(a: &Node, b: &Node) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// An ordered chain of edges with cached aggregates.
///
/// `cost` and `score` are always the left fold of the stored edge sequence, so
/// two paths with the same edges carry bit-identical aggregates regardless of
/// how they were assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    edges: Vec<EdgeId>,
    origin: NodeId,
    terminus: NodeId,
    cost: f64,
    score: f64,
}

impl Path {
    /// The empty path sitting at `at`.
    pub fn empty(at: NodeId) -> Self {
        Self {
            edges: Vec::new(),
            origin: at,
            terminus: at,
            cost: 0.0,
            score: 0.0,
        }
    }

    /// Builds a path from `origin` along `edges`, checking the chain.
    pub fn from_edges(
        network: &RoadNetwork,
        origin: NodeId,
        edges: Vec<EdgeId>,
    ) -> Result<Self, ModelError> {
        let mut at = origin;
        let mut cost = 0.0;
        let mut score = 0.0;
        for &id in &edges {
            let edge = network.get_edge(id).ok_or(ModelError::UnknownEdge(id))?;
            if edge.src != at {
                return Err(ModelError::EndpointMismatch {
                    edge: id,
                    expected: at,
                    found: edge.src,
                });
            }
            cost += edge.cost;
            score += edge.score;
            at = edge.dst;
        }
        Ok(Self {
            edges,
            origin,
            terminus: at,
            cost,
            score,
        })
    }

    pub fn edge_ids(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn origin(&self) -> NodeId {
        self.origin
    }

    pub fn terminus(&self) -> NodeId {
        self.terminus
    }

    pub fn total_cost(&self) -> f64 {
        self.cost
    }

    pub fn total_score(&self) -> f64 {
        self.score
    }

    pub fn hop_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Visited node sequence, starting at the origin.
    pub fn node_sequence(&self, network: &RoadNetwork) -> Vec<NodeId> {
        std::iter::once(self.origin)
            .chain(self.edges.iter().map(|&e| network.edge(e).dst))
            .collect()
    }
}

/// Total score Γ of a path.
pub fn gamma(path: &Path) -> f64 {
    path.score
}

/// Total cost Φ of a path.
pub fn phi(path: &Path) -> f64 {
    path.cost
}

/// Joins `p1`, `bridge` and `p2` in that order.
pub fn concat(
    network: &RoadNetwork,
    p1: &Path,
    bridge: &Edge,
    p2: &Path,
) -> Result<Path, ModelError> {
    if p1.terminus != bridge.src {
        return Err(ModelError::EndpointMismatch {
            edge: bridge.id,
            expected: p1.terminus,
            found: bridge.src,
        });
    }
    if bridge.dst != p2.origin {
        return Err(ModelError::EndpointMismatch {
            edge: p2.edges.first().copied().unwrap_or(bridge.id),
            expected: bridge.dst,
            found: p2.origin,
        });
    }
    let mut edges = Vec::with_capacity(p1.edges.len() + 1 + p2.edges.len());
    edges.extend_from_slice(&p1.edges);
    edges.push(bridge.id);
    edges.extend_from_slice(&p2.edges);

    // Continue the left fold of p1 so the aggregates match `from_edges`.
    let mut cost = p1.cost + bridge.cost;
    let mut score = p1.score + bridge.score;
    for &id in &p2.edges {
        let e = network.edge(id);
        cost += e.cost;
        score += e.score;
    }
    Ok(Path {
        edges,
        origin: p1.origin,
        terminus: p2.terminus,
        cost,
        score,
    })
}

/// True iff `p1`, `p2` and `{bridge}` share no edge pairwise.
pub fn edge_disjoint(p1: &Path, bridge: &Edge, p2: &Path) -> bool {
    let (small, large) = if p1.edges.len() <= p2.edges.len() {
        (&p1.edges, &p2.edges)
    } else {
        (&p2.edges, &p1.edges)
    };
    if small.contains(&bridge.id) || large.contains(&bridge.id) {
        return false;
    }
    if small.is_empty() {
        return true;
    }
    if small.len() * large.len() <= 256 {
        return !small.iter().any(|e| large.contains(e));
    }
    let seen: HashSet<EdgeId> = small.iter().copied().collect();
    !large.iter().any(|e| seen.contains(e))
}

/// A constrained path query. The budget is derived from the min-cost path:
/// `budget = cost(shortest) * (1 + overhead)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpoQuery {
    pub source: NodeId,
    pub dest: NodeId,
    /// Allowed fractional slack over the min-cost path, `>= 0`.
    pub overhead: f64,
}

impl CpoQuery {
    pub fn new(source: NodeId, dest: NodeId, overhead: f64) -> Self {
        Self {
            source,
            dest,
            overhead,
        }
    }

    pub fn budget_for(&self, shortest_cost: f64) -> f64 {
        shortest_cost * (1.0 + self.overhead)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::diamond;

    fn e(i: u32) -> EdgeId {
        EdgeId(i)
    }

    #[test]
    fn gamma_phi_on_fixture() {
        let net = diamond();
        let a = NodeId(0);
        assert_eq!(gamma(&Path::empty(a)), 0.0);
        assert_eq!(phi(&Path::empty(a)), 0.0);

        let top = Path::from_edges(&net, a, vec![e(0), e(1)]).unwrap();
        assert_eq!(gamma(&top), 5.0);
        assert_eq!(phi(&top), 3.0);

        let bottom = Path::from_edges(&net, a, vec![e(2), e(3)]).unwrap();
        assert_eq!(gamma(&bottom), 3.0);

        let direct = Path::from_edges(&net, a, vec![e(4)]).unwrap();
        assert_eq!(phi(&direct), 2.0);
        assert_eq!(direct.terminus(), NodeId(3));
    }

    #[test]
    fn concat_examples() {
        let net = diamond();
        let (a, b) = (NodeId(0), NodeId(1));
        let p = concat(&net, &Path::empty(a), net.edge(e(0)), &Path::empty(b)).unwrap();
        assert_eq!(p.edge_ids(), &[e(0)]);

        let tail = Path::from_edges(&net, b, vec![e(1)]).unwrap();
        let p = concat(&net, &Path::empty(a), net.edge(e(0)), &tail).unwrap();
        assert_eq!(p.edge_ids(), &[e(0), e(1)]);
        assert_eq!(p.total_cost(), 3.0);
        assert_eq!(p.total_score(), 5.0);
        assert_eq!(p, Path::from_edges(&net, a, vec![e(0), e(1)]).unwrap());

        let err = concat(&net, &Path::empty(b), net.edge(e(0)), &Path::empty(b));
        assert!(matches!(err, Err(ModelError::EndpointMismatch { .. })));
        let err = concat(&net, &Path::empty(a), net.edge(e(0)), &Path::empty(a));
        assert!(matches!(err, Err(ModelError::EndpointMismatch { .. })));
    }

    #[test]
    fn disjointness_examples() {
        let net = diamond();
        let (a, b) = (NodeId(0), NodeId(1));
        let e1 = net.edge(e(0));
        let e2 = net.edge(e(1));
        assert!(edge_disjoint(&Path::empty(a), e1, &Path::empty(b)));

        let p_e1 = Path::from_edges(&net, a, vec![e(0)]).unwrap();
        assert!(!edge_disjoint(&p_e1, e1, &Path::empty(b)));
        assert!(!edge_disjoint(&p_e1, e2, &p_e1));
    }

    #[test]
    fn adjacency_is_sorted() {
        let net = diamond();
        assert_eq!(net.outgoing(NodeId(0)), &[e(0), e(2), e(4)]);
        assert_eq!(net.outgoing(NodeId(3)), &[] as &[EdgeId]);
    }

    #[test]
    fn rejects_bad_networks() {
        let err = RoadNetwork::from_parts(&[(0.0, 0.0)], &[(0, 1, 1.0, 0.0)]).unwrap_err();
        assert!(matches!(err, ModelError::UnknownNode { .. }));
        let err =
            RoadNetwork::from_parts(&[(0.0, 0.0), (3.0, 4.0)], &[(0, 1, 4.9, 0.0)]).unwrap_err();
        assert!(matches!(err, ModelError::CostBelowEuclid { .. }));
        let err =
            RoadNetwork::from_parts(&[(0.0, 0.0), (0.0, 0.0)], &[(0, 1, 0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidCost { .. }));
        let err = RoadNetwork::from_parts(&[(f64::NAN, 0.0)], &[]).unwrap_err();
        assert!(matches!(err, ModelError::NonFiniteCoordinate(_)));
    }

    #[test]
    fn from_edges_rejects_broken_chain() {
        let net = diamond();
        let err = Path::from_edges(&net, NodeId(0), vec![e(0), e(3)]).unwrap_err();
        assert!(matches!(err, ModelError::EndpointMismatch { .. }));
        let err = Path::from_edges(&net, NodeId(0), vec![e(99)]).unwrap_err();
        assert_eq!(err, ModelError::UnknownEdge(e(99)));
    }

    #[test]
    fn objective_comparison_is_strict() {
        assert!(Objective::Maximize.improves(2.0, 1.0));
        assert!(!Objective::Maximize.improves(1.0, 1.0));
        assert!(Objective::Minimize.improves(1.0, 2.0));
        assert!(!Objective::Minimize.improves(2.0, 2.0));
    }
}
