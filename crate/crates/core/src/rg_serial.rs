//! Serial recursive greedy search.
//!
//! Starting from the min-cost path, every candidate bridge edge `e = (x, y)`
//! and every budget split `b` on an arithmetic grid is tried: the path
//! `P1 ∪ e ∪ P2`, with `P1` solved recursively for `u → x` under budget `b`
//! and `P2` for `y → v` under the remainder, replaces the incumbent when it is
//! edge-disjoint and strictly better. Recursion bottoms out at depth `theta`,
//! where the min-cost path is returned as is.

use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::geometry::{default_cell_size, Ellipse, GridError, GridIndex};
use crate::model::{
    concat, edge_disjoint, CpoQuery, EdgeId, ModelError, NodeId, Objective, Path, RoadNetwork,
    FEASIBILITY_SLACK,
};
use crate::shortest_path::{SpCache, DEFAULT_CACHE_CAPACITY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RgError {
    #[error("unknown node {0}")]
    InvalidNode(NodeId),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("destination {dest} is unreachable from {from}")]
    Unreachable { from: NodeId, dest: NodeId },
    #[error("negative edge scores are only supported when minimizing")]
    NegativeScores,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("job {index} panicked: {message}")]
    JobPanicked { index: usize, message: String },
}

/// Search knobs shared by the serial and parallel engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgParams {
    /// Maximum recursion depth; the root runs at level 0.
    pub theta: u32,
    /// Increment of the budget-split loop, in meters.
    pub budget_step: f64,
    /// Only bridge over edges with positive score (ignored when minimizing).
    pub positive_only: bool,
    /// Use the grid index for candidate lookup instead of scanning all edges.
    pub use_ellipse: bool,
    pub mode: Objective,
}

impl Default for RgParams {
    fn default() -> Self {
        Self {
            theta: 1,
            budget_step: 1.0,
            positive_only: true,
            use_ellipse: true,
            mode: Objective::Maximize,
        }
    }
}

impl RgParams {
    pub fn validate(&self) -> Result<(), RgError> {
        if !(self.budget_step.is_finite() && self.budget_step > 0.0) {
            return Err(RgError::InvalidParams(format!(
                "budget step must be finite and positive, got {}",
                self.budget_step
            )));
        }
        Ok(())
    }

    pub(crate) fn score_filter(&self) -> bool {
        self.positive_only && self.mode == Objective::Maximize
    }
}

/// Network plus the read-only structures every search consults.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub network: Arc<RoadNetwork>,
    pub index: Arc<GridIndex>,
    pub cache: Arc<SpCache>,
}

impl SearchSpace {
    /// Builds the grid (default cell size when `cell_size` is `None`) and an
    /// empty cache of default capacity.
    pub fn new(network: Arc<RoadNetwork>, cell_size: Option<f64>) -> Result<Self, GridError> {
        let cell = cell_size.unwrap_or_else(|| default_cell_size(&network));
        let index = Arc::new(GridIndex::build(&network, cell)?);
        Ok(Self {
            network,
            index,
            cache: Arc::new(SpCache::new(DEFAULT_CACHE_CAPACITY)),
        })
    }

    /// Same network and index with a fresh cache.
    pub fn with_fresh_cache(&self) -> Self {
        Self {
            network: Arc::clone(&self.network),
            index: Arc::clone(&self.index),
            cache: Arc::new(SpCache::new(DEFAULT_CACHE_CAPACITY)),
        }
    }

    pub(crate) fn check_node(&self, id: NodeId) -> Result<(), RgError> {
        if self.network.contains_node(id) {
            Ok(())
        } else {
            Err(RgError::InvalidNode(id))
        }
    }

    /// Min-cost path if it fits within `beta`.
    pub(crate) fn seed(&self, u: NodeId, v: NodeId, beta: f64) -> Option<Path> {
        let sp = self.cache.get_or_compute(&self.network, u, v);
        match sp.path() {
            Some(p) if p.total_cost() <= beta + FEASIBILITY_SLACK => Some(p.clone()),
            _ => None,
        }
    }

    /// Bridge candidates for a recursion call, ascending by `EdgeId`.
    pub(crate) fn candidates(
        &self,
        u: NodeId,
        v: NodeId,
        beta: f64,
        params: &RgParams,
    ) -> Vec<EdgeId> {
        let positive_only = params.score_filter();
        if params.use_ellipse {
            self.index
                .candidate_edges(&self.network, &Ellipse::new(u, v, beta), positive_only)
        } else {
            self.network
                .edges()
                .iter()
                .filter(|e| !positive_only || e.score > 0.0)
                .map(|e| e.id)
                .collect()
        }
    }
}

/// Budget split points for bridging `u → v` through `bridge`:
/// `b_k = |u x| + k * step` while `b_k <= beta - cost(e) - |y v|`.
pub fn budget_splits(
    network: &RoadNetwork,
    u: NodeId,
    v: NodeId,
    bridge: EdgeId,
    beta: f64,
    step: f64,
) -> impl Iterator<Item = f64> {
    let edge = network.edge(bridge);
    let lo = network.euclid(u, edge.src);
    let hi = beta - edge.cost - network.euclid(edge.dst, v) + FEASIBILITY_SLACK;
    (0u64..)
        .map(move |k| lo + k as f64 * step)
        .take_while(move |&b| b <= hi)
}

/// Joins `p1 ∪ bridge ∪ p2` if the parts are edge-disjoint and the result
/// respects `beta`.
pub(crate) fn try_join(
    network: &RoadNetwork,
    p1: &Path,
    bridge: EdgeId,
    p2: &Path,
    beta: f64,
) -> Result<Option<Path>, RgError> {
    let edge = network.edge(bridge);
    if !edge_disjoint(p1, edge, p2) {
        return Ok(None);
    }
    let joined = concat(network, p1, edge, p2)?;
    Ok((joined.total_cost() <= beta + FEASIBILITY_SLACK).then_some(joined))
}

/// One recursion call of the serial search. `None` means no `u → v` path fits
/// within `beta`.
pub fn spatial_rg(
    space: &SearchSpace,
    u: NodeId,
    v: NodeId,
    beta: f64,
    level: u32,
    params: &RgParams,
) -> Result<Option<Path>, RgError> {
    space.check_node(u)?;
    space.check_node(v)?;
    params.validate()?;
    recurse(space, u, v, beta, level, params)
}

fn recurse(
    space: &SearchSpace,
    u: NodeId,
    v: NodeId,
    beta: f64,
    level: u32,
    params: &RgParams,
) -> Result<Option<Path>, RgError> {
    let Some(mut best) = space.seed(u, v, beta) else {
        return Ok(None);
    };
    if level >= params.theta {
        return Ok(Some(best));
    }
    let network = &*space.network;
    for bridge in space.candidates(u, v, beta, params) {
        let edge = network.edge(bridge);
        for b in budget_splits(network, u, v, bridge, beta, params.budget_step) {
            let Some(p1) = recurse(space, u, edge.src, b, level + 1, params)? else {
                continue;
            };
            let Some(p2) = recurse(space, edge.dst, v, beta - b - edge.cost, level + 1, params)?
            else {
                continue;
            };
            if let Some(joined) = try_join(network, &p1, bridge, &p2, beta)? {
                if params
                    .mode
                    .improves(joined.total_score(), best.total_score())
                {
                    best = joined;
                }
            }
        }
    }
    Ok(Some(best))
}

/// Result of a full query.
#[derive(Debug, Clone, PartialEq)]
pub struct CpoSolution {
    pub path: Path,
    pub shortest: Path,
    pub budget: f64,
    /// `score(path) - score(shortest)`.
    pub score_gain: f64,
    pub runtime: Duration,
}

pub(crate) fn prepare_query(
    space: &SearchSpace,
    query: &CpoQuery,
    params: &RgParams,
) -> Result<(Path, f64), RgError> {
    space.check_node(query.source)?;
    space.check_node(query.dest)?;
    params.validate()?;
    if !(query.overhead.is_finite() && query.overhead >= 0.0) {
        return Err(RgError::InvalidParams(format!(
            "overhead must be finite and >= 0, got {}",
            query.overhead
        )));
    }
    if params.mode == Objective::Maximize && space.network.has_negative_scores() {
        return Err(RgError::NegativeScores);
    }
    let sp = space
        .cache
        .get_or_compute(&space.network, query.source, query.dest);
    let shortest = sp.path().cloned().ok_or(RgError::Unreachable {
        from: query.source,
        dest: query.dest,
    })?;
    let budget = query.budget_for(shortest.total_cost());
    Ok((shortest, budget))
}

pub(crate) fn finish_query(
    path: Path,
    shortest: Path,
    budget: f64,
    started: Instant,
) -> CpoSolution {
    CpoSolution {
        score_gain: path.total_score() - shortest.total_score(),
        path,
        shortest,
        budget,
        runtime: started.elapsed(),
    }
}

/// Solves a query with the serial engine: budget from the min-cost path and
/// the overhead, then the search at level 0.
pub fn solve_query(
    space: &SearchSpace,
    query: &CpoQuery,
    params: &RgParams,
) -> Result<CpoSolution, RgError> {
    let started = Instant::now();
    let (shortest, budget) = prepare_query(space, query, params)?;
    let path = recurse(space, query.source, query.dest, budget, 0, params)?
        .expect("the min-cost path always fits its own budget");
    Ok(finish_query(path, shortest, budget, started))
}
