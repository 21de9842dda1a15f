//! Min-cost path kernel: A* with a straight-line heuristic, plus a sharded
//! memo cache keyed on `(source, target)`.
//!
//! The search is deterministic. Frontier ties on `f` pop the lowest
//! `(g, NodeId)`; among predecessors reaching a node at equal cost the lowest
//! `EdgeId` wins. Given a consistent heuristic this yields the same path as a
//! plain Dijkstra using the same predecessor rule.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::model::{EdgeId, NodeId, Path, RoadNetwork};

/// The heuristic is shrunk by this relative factor so `h(x) - h(y) < cost(x, y)`
/// holds strictly even after floating-point rounding.
const HEURISTIC_SHRINK: f64 = 1.0 - 1e-9;

/// Outcome of a shortest-path query; `path` is `None` when unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct SpResult {
    path: Option<Path>,
}

impl SpResult {
    pub fn found(path: Path) -> Self {
        Self { path: Some(path) }
    }

    pub fn absent() -> Self {
        Self { path: None }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_ref()
    }

    pub fn into_path(self) -> Option<Path> {
        self.path
    }

    /// Path cost, `f64::INFINITY` when absent.
    pub fn cost(&self) -> f64 {
        self.path.as_ref().map_or(f64::INFINITY, Path::total_cost)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    f: f64,
    g: f64,
    node: NodeId,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // Reversed so `BinaryHeap` pops the lexicographic minimum of (f, g, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-thread search buffers, reset lazily through a generation stamp.
#[derive(Default)]
struct Scratch {
    stamp: Vec<u32>,
    generation: u32,
    dist: Vec<f64>,
    pred: Vec<Option<EdgeId>>,
    heap: BinaryHeap<Frontier>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        if self.stamp.len() != n {
            self.stamp = vec![0; n];
            self.dist = vec![f64::INFINITY; n];
            self.pred = vec![None; n];
            self.generation = 0;
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
        self.heap.clear();
    }

    #[inline]
    fn dist(&self, i: usize) -> f64 {
        if self.stamp[i] == self.generation {
            self.dist[i]
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    fn pred(&self, i: usize) -> Option<EdgeId> {
        if self.stamp[i] == self.generation {
            self.pred[i]
        } else {
            None
        }
    }

    #[inline]
    fn set(&mut self, i: usize, dist: f64, pred: EdgeId) {
        self.stamp[i] = self.generation;
        self.dist[i] = dist;
        self.pred[i] = Some(pred);
    }
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

/// Cost-minimal `u → v` path. `u == v` yields the empty path.
///
/// # Panics
///
/// Panics if `u` or `v` is not a node of `network`.
pub fn shortest_path(network: &RoadNetwork, u: NodeId, v: NodeId) -> SpResult {
    assert!(
        network.contains_node(u) && network.contains_node(v),
        "shortest_path on unknown node ({u}, {v})"
    );
    if u == v {
        return SpResult::found(Path::empty(u));
    }
    SCRATCH.with(|cell| {
        let mut scratch = cell.borrow_mut();
        astar(&mut scratch, network, u, v)
    })
}

fn astar(s: &mut Scratch, network: &RoadNetwork, u: NodeId, v: NodeId) -> SpResult {
    s.reset(network.node_count());
    let h = |n: NodeId| network.euclid(n, v) * HEURISTIC_SHRINK;
    s.stamp[u.index()] = s.generation;
    s.dist[u.index()] = 0.0;
    s.pred[u.index()] = None;
    s.heap.push(Frontier {
        f: h(u),
        g: 0.0,
        node: u,
    });
    let mut reached = false;
    while let Some(Frontier { g, node, .. }) = s.heap.pop() {
        if g > s.dist(node.index()) {
            continue;
        }
        if node == v {
            reached = true;
            break;
        }
        for &id in network.outgoing(node) {
            let edge = network.edge(id);
            let slot = edge.dst.index();
            let ng = g + edge.cost;
            let old = s.dist(slot);
            if ng < old {
                s.set(slot, ng, id);
                s.heap.push(Frontier {
                    f: ng + h(edge.dst),
                    g: ng,
                    node: edge.dst,
                });
            } else if ng == old && s.pred(slot).is_some_and(|p| id < p) {
                s.pred[slot] = Some(id);
            }
        }
    }
    if !reached {
        return SpResult::absent();
    }
    let mut edges = Vec::new();
    let mut at = v;
    while at != u {
        let id = s.pred(at.index()).expect("settled node has a predecessor");
        edges.push(id);
        at = network.edge(id).src;
    }
    edges.reverse();
    SpResult::found(Path::from_edges(network, u, edges).expect("predecessor chain is connected"))
}

/// Snapshot of cache counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub entries: usize,
}

#[derive(Default)]
struct Shard {
    map: HashMap<(NodeId, NodeId), Arc<SpResult>>,
    order: VecDeque<(NodeId, NodeId)>,
}

/// Memo of shortest-path results with insertion-order eviction.
///
/// Entries are split over independently locked shards; each shard holds at
/// most `ceil(capacity / shards)` entries and evicts its own oldest insertion.
/// With a single shard the eviction order is exactly global FIFO.
pub struct SpCache {
    shards: Vec<Mutex<Shard>>,
    per_shard: usize,
    hits: AtomicU64,
    misses: AtomicU64,
    evictions: AtomicU64,
}

pub const DEFAULT_CACHE_CAPACITY: usize = 1_000_000;
const DEFAULT_SHARDS: usize = 64;

impl Default for SpCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_CAPACITY)
    }
}

impl std::fmt::Debug for SpCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpCache")
            .field("shards", &self.shards.len())
            .field("stats", &self.stats())
            .finish()
    }
}

impl SpCache {
    pub fn new(capacity: usize) -> Self {
        Self::with_shards(capacity, DEFAULT_SHARDS.min(capacity.max(1)))
    }

    pub fn with_shards(capacity: usize, shards: usize) -> Self {
        let shards = shards.max(1);
        Self {
            shards: (0..shards).map(|_| Mutex::new(Shard::default())).collect(),
            per_shard: capacity.div_ceil(shards),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            evictions: AtomicU64::new(0),
        }
    }

    fn shard(&self, key: &(NodeId, NodeId)) -> &Mutex<Shard> {
        if self.shards.len() == 1 {
            return &self.shards[0];
        }
        let mut h = DefaultHasher::new();
        key.hash(&mut h);
        &self.shards[(h.finish() as usize) % self.shards.len()]
    }

    /// Cached result for `(u, v)`, computing and inserting it on a miss.
    ///
    /// Two threads missing on the same key both compute; the results are
    /// identical so whichever insert lands is correct.
    pub fn get_or_compute(&self, network: &RoadNetwork, u: NodeId, v: NodeId) -> Arc<SpResult> {
        let key = (u, v);
        let shard = self.shard(&key);
        if let Some(hit) = shard.lock().map.get(&key) {
            self.hits.fetch_add(1, AtomicOrdering::Relaxed);
            return Arc::clone(hit);
        }
        self.misses.fetch_add(1, AtomicOrdering::Relaxed);
        let result = Arc::new(shortest_path(network, u, v));
        if self.per_shard == 0 {
            return result;
        }
        let mut guard = shard.lock();
        if guard.map.insert(key, Arc::clone(&result)).is_none() {
            guard.order.push_back(key);
            while guard.order.len() > self.per_shard {
                if let Some(old) = guard.order.pop_front() {
                    guard.map.remove(&old);
                    self.evictions.fetch_add(1, AtomicOrdering::Relaxed);
                }
            }
        }
        result
    }

    pub fn contains(&self, u: NodeId, v: NodeId) -> bool {
        self.shard(&(u, v)).lock().map.contains_key(&(u, v))
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.lock().map.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        for shard in &self.shards {
            let mut s = shard.lock();
            s.map.clear();
            s.order.clear();
        }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(AtomicOrdering::Relaxed),
            misses: self.misses.load(AtomicOrdering::Relaxed),
            evictions: self.evictions.load(AtomicOrdering::Relaxed),
            entries: self.len(),
        }
    }
}

/// Same contract as [`shortest_path`], memoized in `cache`.
pub fn cached_shortest_path(
    cache: &SpCache,
    network: &RoadNetwork,
    u: NodeId,
    v: NodeId,
) -> Arc<SpResult> {
    cache.get_or_compute(network, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::diamond_ids::*;
    use crate::oracle::{diamond, dijkstra};

    #[test]
    fn diamond_examples() {
        let net = diamond();
        let r = shortest_path(&net, A, D);
        assert_eq!(r.cost(), 2.0);
        assert_eq!(r.path().unwrap().edge_ids(), &[E5]);

        let r = shortest_path(&net, A, A);
        assert!(r.path().unwrap().is_empty());
        assert_eq!(r.cost(), 0.0);

        // A has no incoming edges.
        let r = shortest_path(&net, D, A);
        assert!(r.path().is_none());
        assert_eq!(r.cost(), f64::INFINITY);
    }

    #[test]
    fn tie_rule_prefers_lowest_edge_id() {
        // Two parallel routes of identical cost: 0→1→3 via e0,e1 and 0→2→3
        // via e2,e3; plus a later duplicate edge 0→1 (e4).
        let net = RoadNetwork::from_parts(
            &[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            &[
                (0, 1, 1.0, 0.0),
                (1, 3, 1.0, 0.0),
                (0, 2, 1.0, 0.0),
                (2, 3, 1.0, 0.0),
                (0, 1, 1.0, 0.0),
            ],
        )
        .unwrap();
        let a = shortest_path(&net, NodeId(0), NodeId(3));
        let d = dijkstra(&net, NodeId(0), NodeId(3));
        assert_eq!(a.path().unwrap().edge_ids(), &[EdgeId(0), EdgeId(1)]);
        assert_eq!(a, d);
    }

    #[test]
    fn cache_hits_and_eviction() {
        let net = diamond();
        let cache = SpCache::with_shards(2, 1);
        let first = cached_shortest_path(&cache, &net, B, D);
        assert_eq!(first.path().unwrap().edge_ids(), &[E2]);
        assert_eq!(first.cost(), 1.5);
        let second = cached_shortest_path(&cache, &net, B, D);
        assert_eq!(first, second);
        assert_eq!(cache.stats().hits, 1);
        assert_eq!(cache.stats().misses, 1);

        cached_shortest_path(&cache, &net, A, D);
        cached_shortest_path(&cache, &net, C, D);
        // Capacity 2: (B, D) was inserted first and gets evicted.
        assert!(!cache.contains(B, D));
        assert!(cache.contains(A, D));
        assert!(cache.contains(C, D));
        assert_eq!(cache.stats().evictions, 1);
        assert_eq!(
            *cached_shortest_path(&cache, &net, B, D),
            shortest_path(&net, B, D)
        );
    }

    #[test]
    fn zero_capacity_cache_still_answers() {
        let net = diamond();
        let cache = SpCache::new(0);
        assert_eq!(cached_shortest_path(&cache, &net, A, D).cost(), 2.0);
        assert!(cache.is_empty());
    }
}
