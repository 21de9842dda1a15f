//! `cpo`: solve, benchmark and data-generation commands for the constrained
//! path engine.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use cpo_core::harness::{
    self, run_bench, solve_report, summarize, write_rows, write_summary, BenchConfig, BenchQuery,
    HarnessError, SolveOptions,
};
use cpo_core::io::{
    self, assign_scores, gen_queries, load_network, load_queries, save_network, save_queries,
    write_edges, HopBucket, IoError, LoadOptions, NetworkFiles, QueryGenConfig, ScoreConfig,
};
use cpo_core::oracle::diamond;
use cpo_core::rg_parallel::default_worker_count;
use cpo_core::{NodeId, Objective, PoolOptions, RgError, RgParams, RoadNetwork, SearchSpace};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const INFEASIBLE: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: DATA,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(err: IoError) -> Self {
        match err {
            IoError::Config(_) => Failure::usage(err.to_string()),
            _ => Failure::data(err.to_string()),
        }
    }
}

fn solve_exit_code(err: &RgError) -> u8 {
    match err {
        RgError::InvalidParams(_) => USAGE,
        RgError::Unreachable { .. } => INFEASIBLE,
        _ => DATA,
    }
}

impl From<RgError> for Failure {
    fn from(err: RgError) -> Self {
        Failure {
            code: solve_exit_code(&err),
            message: err.to_string(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(err: HarnessError) -> Self {
        match err {
            HarnessError::Solve { err: ref inner, .. } => Failure {
                code: solve_exit_code(inner),
                message: err.to_string(),
            },
            HarnessError::Config(m) => Failure::usage(m),
            other => Failure::data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cpo",
    version,
    about = "Score-maximizing paths under a cost budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one query and print a JSON record.
    Solve(SolveArgs),
    /// Run queries under a grid of configurations and write CSV rows.
    Bench(BenchArgs),
    /// Assign random scores to a fraction of the edges.
    GenScores(GenScoresArgs),
    /// Sample source/destination pairs by min-cost hop count.
    GenQueries(GenQueriesArgs),
    /// Write a built-in network as a nodes/edges CSV pair.
    GenFixture(GenFixtureArgs),
}

#[derive(Args)]
struct NetworkArgs {
    /// Nodes CSV (`node_id,x,y`).
    #[arg(long)]
    nodes: PathBuf,
    /// Edges CSV (`edge_id,src,dst,cost[,score]`).
    #[arg(long)]
    edges: PathBuf,
    /// Raise edge costs below the straight-line distance instead of failing.
    #[arg(long)]
    clamp_cost: bool,
}

impl NetworkArgs {
    fn load(&self) -> Result<RoadNetwork, Failure> {
        Ok(load_network(
            &NetworkFiles::new(&self.nodes, &self.edges),
            LoadOptions {
                clamp_cost: self.clamp_cost,
            },
        )?)
    }
}

#[derive(Args)]
struct SearchArgs {
    /// Split-grid spacing for budget splits, in cost units.
    #[arg(long, default_value_t = 1.0)]
    budget_step: f64,
    /// Grid cell size for the spatial index (default: derived from extent).
    #[arg(long)]
    grid_cell: Option<f64>,
    /// Use the serial engine.
    #[arg(long)]
    serial: bool,
    /// Consider every edge as a bridge instead of the ellipse range query.
    #[arg(long)]
    no_ellipse: bool,
    /// Consider zero-score edges as bridges too.
    #[arg(long)]
    all_bridges: bool,
    /// Minimize score instead of maximizing it.
    #[arg(long)]
    minimize: bool,
    /// Keep one job of every pool for the creating task.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    hold_primary_job: bool,
    /// Let a waiting task run queued jobs of pools created below it.
    #[arg(long)]
    help_while_waiting: bool,
}

impl SearchArgs {
    fn params(&self, theta: u32) -> RgParams {
        RgParams {
            theta,
            budget_step: self.budget_step,
            positive_only: !self.all_bridges,
            use_ellipse: !self.no_ellipse,
            mode: if self.minimize {
                Objective::Minimize
            } else {
                Objective::Maximize
            },
        }
    }

    fn pool(&self) -> PoolOptions {
        PoolOptions {
            hold_primary_job: self.hold_primary_job,
            help_while_waiting: self.help_while_waiting,
        }
    }

    fn space(&self, network: RoadNetwork) -> Result<SearchSpace, Failure> {
        harness::search_space(network, self.grid_cell).map_err(|e| Failure::usage(e.to_string()))
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Source node id (integer, or a letter A-Z for ids 0-25).
    #[arg(long, value_parser = parse_node)]
    source: NodeId,
    #[arg(long, value_parser = parse_node)]
    dest: NodeId,
    /// Allowed cost over the min-cost path, in percent.
    #[arg(long, default_value_t = 30.0)]
    overhead_pct: f64,
    #[arg(long, default_value_t = 1)]
    theta: u32,
    /// Worker threads (default: twice the core count).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Queries CSV (`source,dest`); otherwise queries are sampled.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Hop buckets for sampling and labelling, e.g. `1-5,6-10`.
    #[arg(long, value_delimiter = ',', value_parser = parse_bucket)]
    buckets: Vec<HopBucket>,
    /// Sampled queries per bucket.
    #[arg(long, default_value_t = 10)]
    per_bucket: usize,
    /// Seed for query sampling and score assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "30")]
    overhead_pct: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    theta: Vec<u32>,
    /// Worker counts (default: twice the core count).
    #[arg(long, value_delimiter = ',')]
    threads: Vec<usize>,
    /// With `--serial`, also run the parallel engine.
    #[arg(long)]
    with_parallel: bool,
    /// Repeat each solve on the primed cache and report it separately.
    #[arg(long)]
    warm: bool,
    /// Re-draw scores at each of these scored-edge fractions.
    #[arg(long, value_delimiter = ',')]
    score_fractions: Vec<f64>,
    /// Result rows destination (default: stdout).
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Per-bucket summary destination (default: stderr, or stdout when
    /// `--csv-out` is given).
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenScoresArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long, default_value_t = 0.4)]
    fraction: f64,
    #[arg(long, default_value_t = 1)]
    min: u32,
    #[arg(long, default_value_t = 15)]
    max: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output edges CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenQueriesArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_bucket, required = true)]
    buckets: Vec<HopBucket>,
    #[arg(long, default_value_t = 10)]
    per_bucket: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    Diamond,
    Grid,
}

#[derive(Args)]
struct GenFixtureArgs {
    #[arg(value_enum)]
    kind: Fixture,
    /// Directory receiving `nodes.csv` and `edges.csv`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    rows: usize,
    #[arg(long, default_value_t = 50)]
    cols: usize,
    /// Grid spacing in meters.
    #[arg(long, default_value_t = 10.0)]
    spacing: f64,
    /// Relative cost jitter above the spacing.
    #[arg(long, default_value_t = 0.3)]
    jitter: f64,
    /// Scored-edge fraction for the grid (0 leaves it unscored).
    #[arg(long, default_value_t = 0.4)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_node(s: &str) -> Result<NodeId, String> {
    if let Ok(n) = s.parse::<u32>() {
        return Ok(NodeId(n));
    }
    match s.as_bytes() {
        [c @ b'A'..=b'Z'] => Ok(NodeId(u32::from(c - b'A'))),
        _ => Err(format!("expected a node id, got {s:?}")),
    }
}

fn parse_bucket(s: &str) -> Result<HopBucket, String> {
    s.parse()
}

fn create(path: &FsPath) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let space = args.search.space(args.network.load()?)?;
    let opts = SolveOptions {
        params: args.search.params(args.theta),
        overhead_pct: args.overhead_pct,
        threads: if args.search.serial {
            None
        } else {
            Some(args.threads.unwrap_or_else(default_worker_count))
        },
        pool: args.search.pool(),
    };
    let report = solve_report(&space, args.source, args.dest, &opts)?;
    let json = serde_json::to_string(&report).map_err(|e| Failure::data(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let base = args.network.load()?;
    for f in &args.score_fractions {
        ScoreConfig {
            fraction: *f,
            seed: args.seed,
            ..ScoreConfig::default()
        }
        .validate()?;
    }
    let space = args.search.space(base.clone())?;
    let queries = match &args.queries {
        Some(path) => BenchQuery::from_pairs(&space, &load_queries(path)?, &args.buckets),
        None => {
            if args.buckets.is_empty() {
                return Err(Failure::usage("either --queries or --buckets is required"));
            }
            let sampled = gen_queries(
                &space.network,
                &args.buckets,
                &QueryGenConfig::new(args.per_bucket, args.seed),
            )?;
            BenchQuery::from_sampled(&sampled)
        }
    };
    let cfg = BenchConfig {
        thetas: args.theta.clone(),
        overheads_pct: args.overhead_pct.clone(),
        threads: if args.threads.is_empty() {
            vec![default_worker_count()]
        } else {
            args.threads.clone()
        },
        run_parallel: !args.search.serial || args.with_parallel,
        run_serial: args.search.serial,
        params: args.search.params(1),
        pool: args.search.pool(),
        warm: args.warm,
    };

    let rows = if args.score_fractions.is_empty() {
        run_bench(&space, &queries, &cfg)?
    } else {
        let mut rows = Vec::new();
        for &fraction in &args.score_fractions {
            let scored = assign_scores(
                &base,
                &ScoreConfig {
                    fraction,
                    seed: args.seed,
                    ..ScoreConfig::default()
                },
            )?;
            let space = args.search.space(scored)?;
            let mut batch = run_bench(&space, &queries, &cfg)?;
            for row in &mut batch {
                row.score_fraction = Some(fraction);
            }
            rows.extend(batch);
        }
        rows
    };

    let summary = summarize(&rows);
    match &args.csv_out {
        Some(path) => {
            let mut out = create(path)?;
            write_rows(&rows, &mut out)?;
            out.flush().map_err(|e| Failure::data(e.to_string()))?;
        }
        None => write_rows(&rows, std::io::stdout().lock())?,
    }
    match (&args.summary_out, &args.csv_out) {
        (Some(path), _) => {
            let mut out = create(path)?;
            write_summary(&summary, &mut out)?;
            out.flush().map_err(|e| Failure::data(e.to_string()))?;
        }
        (None, Some(_)) => write_summary(&summary, std::io::stdout().lock())?,
        (None, None) => write_summary(&summary, std::io::stderr().lock())?,
    }
    Ok(())
}

fn gen_scores(args: GenScoresArgs) -> Result<(), Failure> {
    let cfg = ScoreConfig {
        fraction: args.fraction,
        min_score: args.min,
        max_score: args.max,
        seed: args.seed,
    };
    cfg.validate()?;
    let scored = assign_scores(&args.network.load()?, &cfg)?;
    let mut out = create(&args.out)?;
    write_edges(&scored, &mut out)?;
    out.flush().map_err(|e| Failure::data(e.to_string()))
}

fn gen_queries_cmd(args: GenQueriesArgs) -> Result<(), Failure> {
    let network = args.network.load()?;
    let sampled = gen_queries(
        &network,
        &args.buckets,
        &QueryGenConfig::new(args.per_bucket, args.seed),
    )?;
    let pairs: Vec<_> = sampled.iter().map(|q| (q.source, q.dest)).collect();
    Ok(save_queries(&pairs, &args.out)?)
}

fn gen_fixture(args: GenFixtureArgs) -> Result<(), Failure> {
    let network = match args.kind {
        Fixture::Diamond => diamond(),
        Fixture::Grid => {
            if args.rows == 0
                || args.cols == 0
                || args.spacing.is_nan()
                || args.spacing <= 0.0
                || args.jitter.is_nan()
                || args.jitter < 0.0
            {
                return Err(Failure::usage(
                    "grid needs rows, cols, spacing > 0 and jitter >= 0",
                ));
            }
            let grid =
                io::synthetic::grid(args.rows, args.cols, args.spacing, args.jitter, args.seed);
            if args.fraction > 0.0 {
                assign_scores(
                    &grid,
                    &ScoreConfig {
                        fraction: args.fraction,
                        seed: args.seed,
                        ..ScoreConfig::default()
                    },
                )?
            } else {
                grid
            }
        }
    };
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::data(format!("{}: {e}", args.out_dir.display())))?;
    Ok(save_network(
        &network,
        &NetworkFiles::in_dir(&args.out_dir),
    )?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::GenScores(a) => gen_scores(a),
        Command::GenQueries(a) => gen_queries_cmd(a),
        Command::GenFixture(a) => gen_fixture(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
