//! Parallel recursive greedy search over local job pools.
//!
//! Every recursion call creates one edge job per bridge candidate; each edge
//! job walks its budget splits and, per split, creates a two-job pool for the
//! sub-searches `u → x` and `y → v`. Jobs run either on an idle worker or
//! inline on the task that created them (see [`pool`]).
//!
//! Results are reduced in job-creation order with the same strict comparison
//! as the serial engine, so the returned path is identical to
//! [`crate::rg_serial::spatial_rg`] for any worker count.

pub mod pool;

use std::sync::Arc;
use std::time::Instant;

pub use pool::{
    default_worker_count, JobPool, PoolError, PoolHandle, PoolOptions, PoolStats, WorkerPool,
};

use crate::model::{CpoQuery, EdgeId, NodeId, Path};
use crate::rg_serial::{
    budget_splits, finish_query, prepare_query, try_join, CpoSolution, RgError, RgParams,
    SearchSpace,
};

/// A unit of work placed in a local pool.
#[derive(Debug, Clone)]
pub enum Job {
    /// Best replacement for the call `(u, v, beta, level)` through one bridge
    /// edge, starting from that call's seed path.
    Edge {
        bridge: EdgeId,
        seed: Arc<Path>,
        u: NodeId,
        v: NodeId,
        beta: f64,
        level: u32,
    },
    /// A recursive sub-search.
    Recurse {
        u: NodeId,
        v: NodeId,
        beta: f64,
        level: u32,
    },
}

enum JobOutput {
    /// `None` when nothing beat the seed.
    Edge(Option<Path>),
    Recurse(Option<Path>),
}

impl Job {
    fn run(self, ctx: &Arc<Context>) -> Result<JobOutput, RgError> {
        match self {
            Job::Edge {
                bridge,
                seed,
                u,
                v,
                beta,
                level,
            } => {
                solve_edge(ctx, seed.total_score(), u, v, bridge, beta, level).map(JobOutput::Edge)
            }
            Job::Recurse { u, v, beta, level } => {
                recurse(ctx, u, v, beta, level).map(JobOutput::Recurse)
            }
        }
    }
}

struct Context {
    space: SearchSpace,
    pool: PoolHandle,
    params: RgParams,
}

fn submit(ctx: &Arc<Context>, jobs: Vec<Job>) -> Result<Vec<Result<JobOutput, RgError>>, RgError> {
    let mut pool = JobPool::with_capacity(jobs.len());
    for job in jobs {
        let ctx = Arc::clone(ctx);
        pool.push(move || job.run(&ctx));
    }
    Ok(ctx.pool.run_pool(pool)?)
}

impl From<PoolError> for RgError {
    fn from(err: PoolError) -> Self {
        match err {
            PoolError::JobPanicked { index, message } => RgError::JobPanicked { index, message },
            PoolError::SlotMissing { index } => RgError::JobPanicked {
                index,
                message: "result slot left empty".to_string(),
            },
        }
    }
}

fn recurse(
    ctx: &Arc<Context>,
    u: NodeId,
    v: NodeId,
    beta: f64,
    level: u32,
) -> Result<Option<Path>, RgError> {
    let Some(seed) = ctx.space.seed(u, v, beta) else {
        return Ok(None);
    };
    if level >= ctx.params.theta {
        return Ok(Some(seed));
    }
    let candidates = ctx.space.candidates(u, v, beta, &ctx.params);
    if candidates.is_empty() {
        return Ok(Some(seed));
    }
    let seed = Arc::new(seed);
    let jobs = candidates
        .into_iter()
        .map(|bridge| Job::Edge {
            bridge,
            seed: Arc::clone(&seed),
            u,
            v,
            beta,
            level,
        })
        .collect();
    let results = submit(ctx, jobs)?;

    let mut best: Option<Path> = None;
    for result in results {
        let JobOutput::Edge(path) = result? else {
            unreachable!("edge jobs return edge output")
        };
        let Some(path) = path else { continue };
        let incumbent = best.as_ref().map_or(seed.total_score(), Path::total_score);
        if ctx.params.mode.improves(path.total_score(), incumbent) {
            best = Some(path);
        }
    }
    Ok(Some(best.unwrap_or_else(|| Arc::unwrap_or_clone(seed))))
}

fn solve_edge(
    ctx: &Arc<Context>,
    seed_score: f64,
    u: NodeId,
    v: NodeId,
    bridge: EdgeId,
    beta: f64,
    level: u32,
) -> Result<Option<Path>, RgError> {
    let network = &*ctx.space.network;
    let mut best: Option<Path> = None;
    let edge = *network.edge(bridge);
    // Sub-searches at the depth limit are plain min-cost lookups; a pool
    // for those would cost more than the lookups themselves.
    let leaf = level + 1 >= ctx.params.theta;
    for b in budget_splits(network, u, v, bridge, beta, ctx.params.budget_step) {
        let rest = beta - b - edge.cost;
        let (p1, p2) = if leaf {
            let Some(p1) = ctx.space.seed(u, edge.src, b) else {
                continue;
            };
            (Some(p1), ctx.space.seed(edge.dst, v, rest))
        } else {
            let sub = vec![
                Job::Recurse {
                    u,
                    v: edge.src,
                    beta: b,
                    level: level + 1,
                },
                Job::Recurse {
                    u: edge.dst,
                    v,
                    beta: rest,
                    level: level + 1,
                },
            ];
            let mut results = submit(ctx, sub)?.into_iter();
            let (Some(r1), Some(r2)) = (results.next(), results.next()) else {
                unreachable!("two jobs submitted")
            };
            let (JobOutput::Recurse(p1), JobOutput::Recurse(p2)) = (r1?, r2?) else {
                unreachable!("recursion jobs return recursion output")
            };
            (p1, p2)
        };
        let (Some(p1), Some(p2)) = (p1, p2) else {
            continue;
        };
        if let Some(joined) = try_join(network, &p1, bridge, &p2, beta)? {
            let incumbent = best.as_ref().map_or(seed_score, Path::total_score);
            if ctx.params.mode.improves(joined.total_score(), incumbent) {
                best = Some(joined);
            }
        }
    }
    Ok(best)
}

fn context(space: &SearchSpace, pool: &PoolHandle, params: &RgParams) -> Arc<Context> {
    Arc::new(Context {
        space: space.clone(),
        pool: pool.clone(),
        params: *params,
    })
}

/// Parallel counterpart of [`crate::rg_serial::spatial_rg`]; same contract
/// and the same output.
pub fn parallel_spatial_rg(
    space: &SearchSpace,
    pool: &PoolHandle,
    u: NodeId,
    v: NodeId,
    beta: f64,
    level: u32,
    params: &RgParams,
) -> Result<Option<Path>, RgError> {
    space.check_node(u)?;
    space.check_node(v)?;
    params.validate()?;
    recurse(&context(space, pool, params), u, v, beta, level)
}

/// Best path through `bridge` for the call `(u, v, beta, level)`, starting
/// from `seed`: walks the budget splits, solving each pair of sub-searches in
/// its own local pool. Returns `seed` when no split improves on it.
#[allow(clippy::too_many_arguments)]
pub fn solve_task(
    space: &SearchSpace,
    pool: &PoolHandle,
    seed: Path,
    u: NodeId,
    v: NodeId,
    bridge: EdgeId,
    beta: f64,
    level: u32,
    params: &RgParams,
) -> Result<Path, RgError> {
    space.check_node(u)?;
    space.check_node(v)?;
    params.validate()?;
    if space.network.get_edge(bridge).is_none() {
        return Err(crate::model::ModelError::UnknownEdge(bridge).into());
    }
    let better = solve_edge(
        &context(space, pool, params),
        seed.total_score(),
        u,
        v,
        bridge,
        beta,
        level,
    )?;
    Ok(better.unwrap_or(seed))
}

/// Parallel counterpart of [`crate::rg_serial::solve_query`].
pub fn parallel_solve_query(
    space: &SearchSpace,
    pool: &PoolHandle,
    query: &CpoQuery,
    params: &RgParams,
) -> Result<CpoSolution, RgError> {
    let started = Instant::now();
    let (shortest, budget) = prepare_query(space, query, params)?;
    let path = recurse(
        &context(space, pool, params),
        query.source,
        query.dest,
        budget,
        0,
    )?
    .expect("the min-cost path always fits its own budget");
    Ok(finish_query(path, shortest, budget, started))
}
