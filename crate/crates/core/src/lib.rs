//! Budget-constrained path optimization on road networks.
//!
//! Given a source, a destination and a cost budget, find a path that
//! collects as much edge score as possible without exceeding the budget. The
//! crate provides a serial recursive greedy search ([`rg_serial`]), a
//! parallel version built on per-call local job pools ([`rg_parallel`]) that
//! returns identical paths, exact reference engines for testing
//! ([`oracle`]), and an experiment runner ([`harness`]).

pub mod geometry;
pub mod harness;
pub mod io;
pub mod model;
pub mod oracle;
pub mod rg_parallel;
pub mod rg_serial;
pub mod shortest_path;

pub use geometry::{build_grid, edge_in_ellipse, Ellipse, GridIndex};
pub use model::{
    concat, edge_disjoint, gamma, phi, CpoQuery, Edge, EdgeId, Node, NodeId, Objective, Path,
    RoadNetwork, FEASIBILITY_SLACK,
};
pub use rg_parallel::{parallel_solve_query, parallel_spatial_rg, PoolOptions, WorkerPool};
pub use rg_serial::{solve_query, spatial_rg, CpoSolution, RgError, RgParams, SearchSpace};
pub use shortest_path::{cached_shortest_path, shortest_path, SpCache, SpResult};
