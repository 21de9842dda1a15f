#![allow(dead_code)]

use cpo_core::io::{assign_scores, synthetic, ScoreConfig};
use cpo_core::{NodeId, Path, RoadNetwork};

/// Random k-nearest-neighbour network with a share of scored edges.
pub fn scored_geometric(n: usize, k: usize, seed: u64, fraction: f64) -> RoadNetwork {
    let net = synthetic::random_geometric(n, k, 100.0, seed);
    assign_scores(
        &net,
        &ScoreConfig {
            fraction,
            seed: seed ^ 0x5eed,
            ..ScoreConfig::default()
        },
    )
    .unwrap()
}

pub fn scored_grid(rows: usize, cols: usize, spacing: f64, seed: u64) -> RoadNetwork {
    let net = synthetic::grid(rows, cols, spacing, 0.3, seed);
    assign_scores(
        &net,
        &ScoreConfig {
            seed,
            ..ScoreConfig::default()
        },
    )
    .unwrap()
}

/// Checks that `path` is a chained `u -> v` walk whose stored aggregates are
/// the left folds over its edges.
pub fn check_path(net: &RoadNetwork, path: &Path, u: NodeId, v: NodeId) -> Result<(), String> {
    if path.origin() != u || path.terminus() != v {
        return Err(format!(
            "endpoints {}->{} instead of {u}->{v}",
            path.origin(),
            path.terminus()
        ));
    }
    let mut at = u;
    let (mut cost, mut score) = (0.0, 0.0);
    for &id in path.edge_ids() {
        let e = net.edge(id);
        if e.src != at {
            return Err(format!(
                "edge {id} leaves {} but the walk is at {at}",
                e.src
            ));
        }
        at = e.dst;
        cost += e.cost;
        score += e.score;
    }
    if at != v {
        return Err(format!("walk ends at {at}, expected {v}"));
    }
    if cost != path.total_cost() || score != path.total_score() {
        return Err(format!(
            "aggregates ({}, {}) differ from folds ({cost}, {score})",
            path.total_cost(),
            path.total_score()
        ));
    }
    Ok(())
}
