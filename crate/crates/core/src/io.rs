//! Dataset files, random score assignment, query sampling and synthetic
//! networks.
//!
//! File formats (headered CSV, coordinates already projected to meters):
//!
//! - `nodes.csv`: `node_id,x,y`
//! - `edges.csv`: `edge_id,src,dst,cost,score` (`score` optional on input)
//! - `queries.csv`: `source,dest`

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path as FsPath, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Edge, EdgeId, ModelError, Node, NodeId, RoadNetwork};
use crate::shortest_path::shortest_path;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid network: {0}")]
    Invalid(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not sample {wanted} queries with {lo}..={hi} hops after {attempts} attempts (found {found})")]
    SamplingExhausted {
        lo: usize,
        hi: usize,
        wanted: usize,
        found: usize,
        attempts: usize,
    },
}

/// Locations of a node/edge file pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkFiles {
    pub nodes_path: PathBuf,
    pub edges_path: PathBuf,
}

impl NetworkFiles {
    pub fn new(nodes: impl Into<PathBuf>, edges: impl Into<PathBuf>) -> Self {
        Self {
            nodes_path: nodes.into(),
            edges_path: edges.into(),
        }
    }

    /// `nodes.csv` and `edges.csv` inside `dir`.
    pub fn in_dir(dir: impl AsRef<FsPath>) -> Self {
        let dir = dir.as_ref();
        Self::new(dir.join("nodes.csv"), dir.join("edges.csv"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Raise edge costs below the straight-line length to that length instead
    /// of rejecting the file.
    pub clamp_cost: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    node_id: u32,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    edge_id: u32,
    src: u32,
    dst: u32,
    cost: f64,
    #[serde(default)]
    score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub source: u32,
    pub dest: u32,
}

fn open(path: &FsPath) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &FsPath) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_rows<T: for<'de> Deserialize<'de>, R: Read>(
    reader: R,
    file: &str,
) -> Result<Vec<(u64, T)>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        match row {
            Ok(rec) => {
                // Header is line 1; records follow in order.
                out.push((out.len() as u64 + 2, rec));
            }
            Err(err) => {
                let line = err.position().map_or(0, |p| p.line());
                return Err(IoError::Parse {
                    file: file.to_string(),
                    line,
                    message: err.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Reads a network from CSV readers. Ids in each file must cover `0..n`
/// exactly once (any order).
pub fn read_network<N: Read, E: Read>(
    nodes: N,
    edges: E,
    options: LoadOptions,
) -> Result<RoadNetwork, IoError> {
    let node_rows: Vec<(u64, NodeRecord)> = parse_rows(nodes, "nodes")?;
    let mut slots: Vec<Option<Node>> = vec![None; node_rows.len()];
    let count = slots.len();
    for (line, rec) in node_rows {
        let slot = slots
            .get_mut(rec.node_id as usize)
            .ok_or_else(|| IoError::Parse {
                file: "nodes".into(),
                line,
                message: format!("node id {} is not dense (expected < {count})", rec.node_id),
            })?;
        if slot.is_some() {
            return Err(IoError::Parse {
                file: "nodes".into(),
                line,
                message: format!("duplicate node id {}", rec.node_id),
            });
        }
        *slot = Some(Node {
            id: NodeId(rec.node_id),
            x: rec.x,
            y: rec.y,
        });
    }
    let nodes: Vec<Node> = slots.into_iter().map(|n| n.expect("dense ids")).collect();

    let edge_rows: Vec<(u64, EdgeRecord)> = parse_rows(edges, "edges")?;
    let mut slots: Vec<Option<Edge>> = vec![None; edge_rows.len()];
    let count = slots.len();
    for (line, rec) in edge_rows {
        let parse_err = |message: String| IoError::Parse {
            file: "edges".into(),
            line,
            message,
        };
        for node in [rec.src, rec.dst] {
            if node as usize >= nodes.len() {
                return Err(parse_err(format!(
                    "edge {} references unknown node {node}",
                    rec.edge_id
                )));
            }
        }
        let slot = slots.get_mut(rec.edge_id as usize).ok_or_else(|| {
            parse_err(format!(
                "edge id {} is not dense (expected < {count})",
                rec.edge_id
            ))
        })?;
        if slot.is_some() {
            return Err(parse_err(format!("duplicate edge id {}", rec.edge_id)));
        }
        let (a, b) = (&nodes[rec.src as usize], &nodes[rec.dst as usize]);
        let euclid = (a.x - b.x).hypot(a.y - b.y);
        let cost = if options.clamp_cost && rec.cost.is_finite() && rec.cost < euclid {
            euclid
        } else {
            rec.cost
        };
        *slot = Some(Edge {
            id: EdgeId(rec.edge_id),
            src: NodeId(rec.src),
            dst: NodeId(rec.dst),
            cost,
            score: rec.score.unwrap_or(0.0),
        });
    }
    let edges = slots.into_iter().map(|e| e.expect("dense ids")).collect();
    Ok(RoadNetwork::new(nodes, edges)?)
}

pub fn load_network(files: &NetworkFiles, options: LoadOptions) -> Result<RoadNetwork, IoError> {
    read_network(open(&files.nodes_path)?, open(&files.edges_path)?, options)
}

/// Writes both CSV files with the score column included.
pub fn write_network<N: Write, E: Write>(
    network: &RoadNetwork,
    nodes: N,
    edges: E,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(nodes);
    if network.node_count() == 0 {
        w.write_record(["node_id", "x", "y"])?;
    }
    for n in network.nodes() {
        w.serialize(NodeRecord {
            node_id: n.id.0,
            x: n.x,
            y: n.y,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    write_edges(network, edges)
}

pub fn write_edges<E: Write>(network: &RoadNetwork, edges: E) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(edges);
    if network.edge_count() == 0 {
        w.write_record(["edge_id", "src", "dst", "cost", "score"])?;
    }
    for e in network.edges() {
        w.serialize(EdgeRecord {
            edge_id: e.id.0,
            src: e.src.0,
            dst: e.dst.0,
            cost: e.cost,
            score: Some(e.score),
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_network(network: &RoadNetwork, files: &NetworkFiles) -> Result<(), IoError> {
    write_network(
        network,
        create(&files.nodes_path)?,
        create(&files.edges_path)?,
    )
}

pub fn read_queries<R: Read>(reader: R) -> Result<Vec<(NodeId, NodeId)>, IoError> {
    let rows: Vec<(u64, QueryRecord)> = parse_rows(reader, "queries")?;
    Ok(rows
        .into_iter()
        .map(|(_, q)| (NodeId(q.source), NodeId(q.dest)))
        .collect())
}

pub fn load_queries(path: &FsPath) -> Result<Vec<(NodeId, NodeId)>, IoError> {
    read_queries(open(path)?)
}

pub fn write_queries<W: Write>(queries: &[(NodeId, NodeId)], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    if queries.is_empty() {
        w.write_record(["source", "dest"])?;
    }
    for &(s, d) in queries {
        w.serialize(QueryRecord {
            source: s.0,
            dest: d.0,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_queries(queries: &[(NodeId, NodeId)], path: &FsPath) -> Result<(), IoError> {
    write_queries(queries, create(path)?)
}

/// Random score assignment: `floor(fraction * m)` distinct edges get an
/// integer score drawn uniformly from `min_score..=max_score`; the rest get 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub fraction: f64,
    pub min_score: u32,
    pub max_score: u32,
    pub seed: u64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            fraction: 0.4,
            min_score: 1,
            max_score: 15,
            seed: 0,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(IoError::Config(format!(
                "score fraction must be in (0, 1], got {}",
                self.fraction
            )));
        }
        if self.min_score == 0 || self.min_score > self.max_score {
            return Err(IoError::Config(format!(
                "score range must satisfy 1 <= min <= max, got {}..={}",
                self.min_score, self.max_score
            )));
        }
        Ok(())
    }

    /// Number of edges that receive a non-zero score out of `edge_count`.
    pub fn scored_edge_count(&self, edge_count: usize) -> usize {
        ((self.fraction * edge_count as f64).floor() as usize).min(edge_count)
    }
}

pub fn assign_scores(network: &RoadNetwork, cfg: &ScoreConfig) -> Result<RoadNetwork, IoError> {
    cfg.validate()?;
    let m = network.edge_count();
    let k = cfg.scored_edge_count(m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scores = vec![0.0; m];
    for i in sample(&mut rng, m, k).into_vec() {
        scores[i] = rng.gen_range(cfg.min_score..=cfg.max_score) as f64;
    }
    Ok(network.with_scores(&scores)?)
}

/// Hop-count window `lo..=hi` for query sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopBucket {
    pub lo: usize,
    pub hi: usize,
}

impl HopBucket {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, hops: usize) -> bool {
        (self.lo..=self.hi).contains(&hops)
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

impl std::str::FromStr for HopBucket {
    type Err = String;

    /// `"lo-hi"` or a single hop count.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad hop bucket {s:?}: {e}"))
        };
        let (lo, hi) = match s.split_once('-') {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => {
                let n = parse(s)?;
                (n, n)
            }
        };
        if lo > hi {
            return Err(format!("bad hop bucket {s:?}: lower bound exceeds upper"));
        }
        Ok(Self { lo, hi })
    }
}

/// A sampled query with the bucket it was drawn for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledQuery {
    pub source: NodeId,
    pub dest: NodeId,
    pub bucket: HopBucket,
    pub hops: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryGenConfig {
    pub per_bucket: usize,
    pub seed: u64,
    /// Maximum random draws per bucket before giving up.
    pub max_attempts: usize,
}

impl QueryGenConfig {
    pub fn new(per_bucket: usize, seed: u64) -> Self {
        Self {
            per_bucket,
            seed,
            max_attempts: 10_000,
        }
    }
}

/// Rejection-samples `per_bucket` source/destination pairs per bucket whose
/// min-cost path has a hop count inside the bucket.
pub fn gen_queries(
    network: &RoadNetwork,
    buckets: &[HopBucket],
    cfg: &QueryGenConfig,
) -> Result<Vec<SampledQuery>, IoError> {
    if buckets.is_empty() {
        return Err(IoError::Config(
            "at least one hop bucket is required".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(buckets.len() * cfg.per_bucket);
    for &bucket in buckets {
        if cfg.per_bucket == 0 {
            continue;
        }
        let n = network.node_count();
        let mut found = 0;
        let mut attempts = 0;
        while found < cfg.per_bucket {
            if attempts >= cfg.max_attempts || n < 2 {
                return Err(IoError::SamplingExhausted {
                    lo: bucket.lo,
                    hi: bucket.hi,
                    wanted: cfg.per_bucket,
                    found,
                    attempts,
                });
            }
            attempts += 1;
            let s = NodeId(rng.gen_range(0..n as u32));
            let d = NodeId(rng.gen_range(0..n as u32));
            if s == d {
                continue;
            }
            if let Some(p) = shortest_path(network, s, d).path() {
                if bucket.contains(p.hop_count()) {
                    out.push(SampledQuery {
                        source: s,
                        dest: d,
                        bucket,
                        hops: p.hop_count(),
                    });
                    found += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Seeded synthetic networks for benchmarks and tests.
pub mod synthetic {
    use super::*;

    /// `rows x cols` lattice with `spacing` meters between neighbours and
    /// edges in both directions between 4-neighbours. Each directed edge costs
    /// its length times a factor drawn from `[1, 1 + cost_jitter)`.
    pub fn grid(
        rows: usize,
        cols: usize,
        spacing: f64,
        cost_jitter: f64,
        seed: u64,
    ) -> RoadNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<(f64, f64)> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (c as f64 * spacing, r as f64 * spacing)))
            .collect();
        let id = |r: usize, c: usize| (r * cols + c) as u32;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let mut link = |a: u32, b: u32| {
                    let factor = if cost_jitter > 0.0 {
                        1.0 + rng.gen_range(0.0..cost_jitter)
                    } else {
                        1.0
                    };
                    edges.push((a, b, spacing * factor, 0.0));
                };
                if c + 1 < cols {
                    link(id(r, c), id(r, c + 1));
                    link(id(r, c + 1), id(r, c));
                }
                if r + 1 < rows {
                    link(id(r, c), id(r + 1, c));
                    link(id(r + 1, c), id(r, c));
                }
            }
        }
        RoadNetwork::from_parts(&coords, &edges).expect("grid satisfies model invariants")
    }

    /// `n` nodes uniform in a `side x side` square; each node links to its
    /// `k` nearest neighbours in both directions (duplicates skipped). Costs
    /// are length times `[1, 1.3)`; scores are left at 0.
    pub fn random_geometric(n: usize, k: usize, side: f64, seed: u64) -> RoadNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
            .collect();
        let mut pairs = std::collections::BTreeSet::new();
        for i in 0..n {
            let mut near: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let (a, b) = (coords[i], coords[j]);
                    ((a.0 - b.0).hypot(a.1 - b.1), j)
                })
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in near.iter().take(k) {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        for (i, j) in pairs {
            let (a, b) = (coords[i], coords[j]);
            let len = (a.0 - b.0).hypot(a.1 - b.1);
            for (s, d) in [(i, j), (j, i)] {
                let cost = (len * rng.gen_range(1.0..1.3)).max(len).max(1e-6);
                edges.push((s as u32, d as u32, cost, 0.0));
            }
        }
        RoadNetwork::from_parts(&coords, &edges).expect("geometric graph satisfies invariants")
    }
}
