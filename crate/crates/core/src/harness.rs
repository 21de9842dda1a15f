//! Experiment runner: batch benchmarks over queries and configurations, CSV
//! result rows, per-bucket summaries and single-query reports.
//!
//! Queries run one at a time; any parallelism lives inside a solve. Each
//! measured solve starts from an empty shortest-path cache so runtimes do not
//! depend on run order. With [`BenchConfig::warm`] set, the same solve is
//! repeated on the primed cache and reported separately.

use std::io::{Read, Write};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{HopBucket, SampledQuery};
use crate::model::{CpoQuery, NodeId, Path, FEASIBILITY_SLACK};
use crate::rg_parallel::{default_worker_count, parallel_solve_query, PoolOptions, WorkerPool};
use crate::rg_serial::{solve_query, CpoSolution, RgError, RgParams, SearchSpace};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("query {id} ({source_node} -> {dest}): {err}")]
    Solve {
        id: usize,
        source_node: NodeId,
        dest: NodeId,
        #[source]
        err: RgError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Serial,
    Parallel,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Serial => "serial",
            Algorithm::Parallel => "parallel",
        })
    }
}

/// One benchmark query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchQuery {
    pub id: usize,
    pub source: NodeId,
    pub dest: NodeId,
    pub hop_bucket: String,
}

impl BenchQuery {
    pub fn from_sampled(queries: &[SampledQuery]) -> Vec<BenchQuery> {
        queries
            .iter()
            .enumerate()
            .map(|(id, q)| BenchQuery {
                id,
                source: q.source,
                dest: q.dest,
                hop_bucket: q.bucket.label(),
            })
            .collect()
    }

    /// Plain pairs, labelled with the first bucket containing the hop count
    /// of their min-cost path (`"all"` without buckets, `"none"` if no
    /// bucket matches or the pair is unreachable).
    pub fn from_pairs(
        space: &SearchSpace,
        pairs: &[(NodeId, NodeId)],
        buckets: &[HopBucket],
    ) -> Vec<BenchQuery> {
        pairs
            .iter()
            .enumerate()
            .map(|(id, &(source, dest))| {
                let hop_bucket = if buckets.is_empty() {
                    "all".to_string()
                } else if !space.network.contains_node(source) || !space.network.contains_node(dest)
                {
                    "none".to_string()
                } else {
                    let sp = space.cache.get_or_compute(&space.network, source, dest);
                    sp.path()
                        .and_then(|p| buckets.iter().find(|b| b.contains(p.hop_count())))
                        .map_or_else(|| "none".to_string(), HopBucket::label)
                };
                BenchQuery {
                    id,
                    source,
                    dest,
                    hop_bucket,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub thetas: Vec<u32>,
    pub overheads_pct: Vec<f64>,
    /// Worker counts for parallel runs.
    pub threads: Vec<usize>,
    pub run_parallel: bool,
    /// Also run the serial engine once per query/theta/overhead. Its rows
    /// carry `threads = 1`.
    pub run_serial: bool,
    /// Search parameters; `theta` is overridden by `thetas`.
    pub params: RgParams,
    pub pool: PoolOptions,
    pub warm: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            thetas: vec![1],
            overheads_pct: vec![30.0],
            threads: vec![default_worker_count()],
            run_parallel: true,
            run_serial: false,
            params: RgParams::default(),
            pool: PoolOptions::default(),
            warm: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.thetas.is_empty() || self.overheads_pct.is_empty() {
            return Err(HarnessError::Config(
                "theta and overhead lists must be non-empty".into(),
            ));
        }
        if self.run_parallel && self.threads.is_empty() {
            return Err(HarnessError::Config("thread list must be non-empty".into()));
        }
        if let Some(o) = self
            .overheads_pct
            .iter()
            .find(|o| !(o.is_finite() && **o >= 0.0))
        {
            return Err(HarnessError::Config(format!(
                "overhead must be >= 0, got {o}"
            )));
        }
        self.params
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

fn join_ids<T: std::fmt::Display>(ids: impl IntoIterator<Item = T>) -> String {
    ids.into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One result row: a query solved under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub query_id: usize,
    pub source: u32,
    pub dest: u32,
    pub hop_bucket: String,
    pub theta: u32,
    pub overhead_pct: f64,
    pub threads: usize,
    pub algorithm: Algorithm,
    pub runtime_ms: f64,
    pub runtime_warm_ms: Option<f64>,
    pub budget: f64,
    pub path_cost: f64,
    pub path_score: f64,
    pub sp_score: f64,
    pub score_gain: f64,
    /// Fraction of scored edges, for density sweeps.
    pub score_fraction: Option<f64>,
    /// Space-separated edge ids of the returned path.
    pub path_edges: String,
}

impl BenchRow {
    pub const HEADER: [&'static str; 17] = [
        "query_id",
        "source",
        "dest",
        "hop_bucket",
        "theta",
        "overhead_pct",
        "threads",
        "algorithm",
        "runtime_ms",
        "runtime_warm_ms",
        "budget",
        "path_cost",
        "path_score",
        "sp_score",
        "score_gain",
        "score_fraction",
        "path_edges",
    ];

    pub fn validate(&self) -> Result<(), String> {
        if self.path_cost > self.budget + FEASIBILITY_SLACK {
            return Err(format!(
                "path cost {} exceeds budget {}",
                self.path_cost, self.budget
            ));
        }
        let gain = self.path_score - self.sp_score;
        if (self.score_gain - gain).abs() > 1e-9 * gain.abs().max(1.0) {
            return Err(format!(
                "score_gain {} != path_score - sp_score = {gain}",
                self.score_gain
            ));
        }
        Ok(())
    }

    /// The columns that must be reproducible across runs: everything except
    /// runtimes.
    pub fn result_key(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.query_id,
            self.source,
            self.dest,
            self.hop_bucket,
            self.theta,
            self.overhead_pct,
            self.threads,
            self.budget,
            self.path_cost,
            self.path_score,
            self.sp_score,
            self.score_gain,
            self.path_edges
        )
    }

    fn from_solution(
        query: &BenchQuery,
        theta: u32,
        overhead_pct: f64,
        threads: usize,
        algorithm: Algorithm,
        sol: &CpoSolution,
        warm: Option<Duration>,
    ) -> Self {
        BenchRow {
            query_id: query.id,
            source: query.source.0,
            dest: query.dest.0,
            hop_bucket: query.hop_bucket.clone(),
            theta,
            overhead_pct,
            threads,
            algorithm,
            runtime_ms: millis(sol.runtime),
            runtime_warm_ms: warm.map(millis),
            budget: sol.budget,
            path_cost: sol.path.total_cost(),
            path_score: sol.path.total_score(),
            sp_score: sol.shortest.total_score(),
            score_gain: sol.score_gain,
            score_fraction: None,
            path_edges: join_ids(sol.path.edge_ids().iter().map(|e| e.0)),
        }
    }
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs every query under every configuration. Row order: query, theta,
/// overhead, then the serial row followed by one parallel row per worker
/// count.
pub fn run_bench(
    space: &SearchSpace,
    queries: &[BenchQuery],
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>, HarnessError> {
    cfg.validate()?;
    let pools: Vec<WorkerPool> = if cfg.run_parallel {
        cfg.threads
            .iter()
            .map(|&n| WorkerPool::with_options(n, cfg.pool))
            .collect()
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    for query in queries {
        for &theta in &cfg.thetas {
            let params = RgParams {
                theta,
                ..cfg.params
            };
            for &overhead_pct in &cfg.overheads_pct {
                let q = CpoQuery::new(query.source, query.dest, overhead_pct / 100.0);
                let fail = |err| HarnessError::Solve {
                    id: query.id,
                    source_node: query.source,
                    dest: query.dest,
                    err,
                };
                if cfg.run_serial {
                    let (sol, warm) =
                        timed(space, cfg.warm, |s| solve_query(s, &q, &params)).map_err(fail)?;
                    rows.push(BenchRow::from_solution(
                        query,
                        theta,
                        overhead_pct,
                        1,
                        Algorithm::Serial,
                        &sol,
                        warm,
                    ));
                }
                for pool in &pools {
                    let (sol, warm) = timed(space, cfg.warm, |s| {
                        parallel_solve_query(s, pool, &q, &params)
                    })
                    .map_err(fail)?;
                    rows.push(BenchRow::from_solution(
                        query,
                        theta,
                        overhead_pct,
                        pool.workers(),
                        Algorithm::Parallel,
                        &sol,
                        warm,
                    ));
                }
            }
        }
    }
    Ok(rows)
}

/// Cold solve on a fresh cache, then optionally a warm repeat on the same
/// cache.
fn timed(
    space: &SearchSpace,
    warm: bool,
    solve: impl Fn(&SearchSpace) -> Result<CpoSolution, RgError>,
) -> Result<(CpoSolution, Option<Duration>), RgError> {
    let fresh = space.with_fresh_cache();
    let sol = solve(&fresh)?;
    let warm = if warm {
        Some(solve(&fresh)?.runtime)
    } else {
        None
    };
    Ok((sol, warm))
}

/// Per-group means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketSummary {
    pub hop_bucket: String,
    pub theta: u32,
    pub overhead_pct: f64,
    pub threads: usize,
    pub algorithm: Algorithm,
    pub score_fraction: Option<f64>,
    pub queries: usize,
    pub mean_runtime_ms: f64,
    pub mean_runtime_warm_ms: Option<f64>,
    pub mean_score_gain: f64,
    pub mean_path_score: f64,
}

/// Groups rows by bucket and configuration, in first-appearance order.
pub fn summarize(rows: &[BenchRow]) -> Vec<BucketSummary> {
    struct Acc {
        summary: BucketSummary,
        runtime: f64,
        warm: Option<f64>,
        gain: f64,
        score: f64,
    }
    let mut groups: Vec<Acc> = Vec::new();
    for row in rows {
        let same = |s: &BucketSummary| {
            s.hop_bucket == row.hop_bucket
                && s.theta == row.theta
                && s.overhead_pct == row.overhead_pct
                && s.threads == row.threads
                && s.algorithm == row.algorithm
                && s.score_fraction == row.score_fraction
        };
        let idx = match groups.iter().position(|g| same(&g.summary)) {
            Some(i) => i,
            None => {
                groups.push(Acc {
                    summary: BucketSummary {
                        hop_bucket: row.hop_bucket.clone(),
                        theta: row.theta,
                        overhead_pct: row.overhead_pct,
                        threads: row.threads,
                        algorithm: row.algorithm,
                        score_fraction: row.score_fraction,
                        queries: 0,
                        mean_runtime_ms: 0.0,
                        mean_runtime_warm_ms: None,
                        mean_score_gain: 0.0,
                        mean_path_score: 0.0,
                    },
                    runtime: 0.0,
                    warm: row.runtime_warm_ms.map(|_| 0.0),
                    gain: 0.0,
                    score: 0.0,
                });
                groups.len() - 1
            }
        };
        let g = &mut groups[idx];
        g.summary.queries += 1;
        g.runtime += row.runtime_ms;
        g.warm = match (g.warm, row.runtime_warm_ms) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        g.gain += row.score_gain;
        g.score += row.path_score;
    }
    groups
        .into_iter()
        .map(|g| {
            let n = g.summary.queries as f64;
            BucketSummary {
                mean_runtime_ms: g.runtime / n,
                mean_runtime_warm_ms: g.warm.map(|w| w / n),
                mean_score_gain: g.gain / n,
                mean_path_score: g.score / n,
                ..g.summary
            }
        })
        .collect()
}

/// Writes rows as headered CSV; an empty slice yields just the header.
pub fn write_rows<W: Write>(rows: &[BenchRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(BenchRow::HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows back and re-checks the feasibility and score-gain identities.
pub fn read_rows<R: Read>(input: R) -> Result<Vec<BenchRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(BenchRow::HEADER) {
        return Err(HarnessError::InvalidRow {
            row: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<BenchRow>().enumerate() {
        let row = rec?;
        row.validate().map_err(|message| HarnessError::InvalidRow {
            row: i + 2,
            message,
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_summary<W: Write>(summary: &[BucketSummary], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for s in summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Machine-readable record for a single solved query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub source: u32,
    pub dest: u32,
    pub theta: u32,
    pub overhead_pct: f64,
    pub algorithm: Algorithm,
    pub threads: usize,
    pub nodes: Vec<u32>,
    pub edges: Vec<u32>,
    pub cost: f64,
    pub score: f64,
    pub budget: f64,
    pub sp_cost: f64,
    pub sp_score: f64,
    pub score_gain: f64,
    pub runtime_ms: f64,
}

fn ids_of(space: &SearchSpace, path: &Path) -> (Vec<u32>, Vec<u32>) {
    (
        path.node_sequence(&space.network)
            .iter()
            .map(|n| n.0)
            .collect(),
        path.edge_ids().iter().map(|e| e.0).collect(),
    )
}

/// How to run a single solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub params: RgParams,
    pub overhead_pct: f64,
    /// `None` for the serial engine.
    pub threads: Option<usize>,
    pub pool: PoolOptions,
}

pub fn solve_report(
    space: &SearchSpace,
    source: NodeId,
    dest: NodeId,
    opts: &SolveOptions,
) -> Result<SolveReport, RgError> {
    let q = CpoQuery::new(source, dest, opts.overhead_pct / 100.0);
    let (sol, algorithm, threads) = match opts.threads {
        None => (solve_query(space, &q, &opts.params)?, Algorithm::Serial, 1),
        Some(n) => {
            let pool = WorkerPool::with_options(n, opts.pool);
            (
                parallel_solve_query(space, &pool, &q, &opts.params)?,
                Algorithm::Parallel,
                n,
            )
        }
    };
    let (nodes, edges) = ids_of(space, &sol.path);
    Ok(SolveReport {
        source: source.0,
        dest: dest.0,
        theta: opts.params.theta,
        overhead_pct: opts.overhead_pct,
        algorithm,
        threads,
        nodes,
        edges,
        cost: sol.path.total_cost(),
        score: sol.path.total_score(),
        budget: sol.budget,
        sp_cost: sol.shortest.total_cost(),
        sp_score: sol.shortest.total_score(),
        score_gain: sol.score_gain,
        runtime_ms: millis(sol.runtime),
    })
}

/// Shared network and index, wrapped for a bench run.
pub fn search_space(
    network: crate::model::RoadNetwork,
    cell_size: Option<f64>,
) -> Result<SearchSpace, crate::geometry::GridError> {
    SearchSpace::new(Arc::new(network), cell_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::diamond;
    use crate::oracle::diamond_ids::*;

    fn space() -> SearchSpace {
        search_space(diamond(), Some(1.0)).unwrap()
    }

    fn diamond_query() -> Vec<BenchQuery> {
        vec![BenchQuery {
            id: 0,
            source: A,
            dest: D,
            hop_bucket: "1-2".into(),
        }]
    }

    #[test]
    fn bench_rows_for_diamond() {
        let cfg = BenchConfig {
            overheads_pct: vec![0.0, 50.0],
            threads: vec![1, 2],
            run_serial: true,
            warm: true,
            ..BenchConfig::default()
        };
        let rows = run_bench(&space(), &diamond_query(), &cfg).unwrap();
        assert_eq!(rows.len(), 6);
        let gains: Vec<f64> = rows.iter().map(|r| r.score_gain).collect();
        assert_eq!(gains, vec![0.0, 0.0, 0.0, 5.0, 5.0, 5.0]);
        assert_eq!(rows[3].algorithm, Algorithm::Serial);
        assert_eq!(rows[3].path_edges, "0 1");
        assert_eq!(rows[3].threads, 1);
        assert_eq!(rows[4].result_key(), rows[3].result_key());
        assert!(rows
            .iter()
            .all(|r| r.runtime_warm_ms.is_some() && r.validate().is_ok()));
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let rows = run_bench(&space(), &diamond_query(), &BenchConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);

        let mut bad = rows[0].clone();
        bad.score_gain += 1.0;
        let mut buf = Vec::new();
        write_rows(&[bad], &mut buf).unwrap();
        assert!(matches!(
            read_rows(buf.as_slice()),
            Err(HarnessError::InvalidRow { row: 2, .. })
        ));

        let mut bad = rows[0].clone();
        bad.path_cost = bad.budget + 1e-6;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_query_list_is_header_only() {
        let rows = run_bench(&space(), &[], &BenchConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("query_id,source,dest,hop_bucket,theta"));
        assert!(read_rows(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn summary_means() {
        let cfg = BenchConfig {
            overheads_pct: vec![0.0, 50.0],
            threads: vec![2],
            ..BenchConfig::default()
        };
        let mut queries = diamond_query();
        queries.push(BenchQuery {
            id: 1,
            ..queries[0].clone()
        });
        let rows = run_bench(&space(), &queries, &cfg).unwrap();
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].queries, 2);
        assert_eq!(summary[0].mean_score_gain, 0.0);
        assert_eq!(summary[1].mean_score_gain, 5.0);
        assert_eq!(summary[1].mean_runtime_warm_ms, None);
    }

    #[test]
    fn invalid_configs_rejected() {
        let s = space();
        let cfg = BenchConfig {
            overheads_pct: vec![-1.0],
            ..BenchConfig::default()
        };
        assert!(matches!(
            run_bench(&s, &diamond_query(), &cfg),
            Err(HarnessError::Config(_))
        ));
        let cfg = BenchConfig {
            thetas: vec![],
            ..BenchConfig::default()
        };
        assert!(run_bench(&s, &diamond_query(), &cfg).is_err());
        let mut q = diamond_query();
        q[0].source = D;
        q[0].dest = A;
        assert!(matches!(
            run_bench(&s, &q, &BenchConfig::default()),
            Err(HarnessError::Solve { id: 0, .. })
        ));
    }

    #[test]
    fn report_for_diamond() {
        let s = space();
        let opts = SolveOptions {
            params: RgParams::default(),
            overhead_pct: 50.0,
            threads: Some(2),
            pool: PoolOptions::default(),
        };
        let r = solve_report(&s, A, D, &opts).unwrap();
        assert_eq!(r.edges, vec![0, 1]);
        assert_eq!(r.nodes, vec![0, 1, 3]);
        assert_eq!(r.score_gain, 5.0);
        assert_eq!(r.budget, 3.0);
        let r = solve_report(
            &s,
            A,
            D,
            &SolveOptions {
                overhead_pct: 0.0,
                threads: None,
                ..opts
            },
        )
        .unwrap();
        assert_eq!(r.score_gain, 0.0);
        assert_eq!(r.edges, vec![E5.0]);
    }

    #[test]
    fn pairs_get_bucket_labels() {
        let s = space();
        let pairs = [(A, D), (A, B), (D, A)];
        let q = BenchQuery::from_pairs(&s, &pairs, &[HopBucket::new(1, 1)]);
        let labels: Vec<&str> = q.iter().map(|q| q.hop_bucket.as_str()).collect();
        assert_eq!(labels, vec!["1-1", "1-1", "none"]);
        assert_eq!(BenchQuery::from_pairs(&s, &pairs, &[])[0].hop_bucket, "all");
    }
}
