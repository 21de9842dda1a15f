//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails for a reason other than the host
//! core count.

mod common;

use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{check_path, scored_geometric, scored_grid};
use cpo_core::harness::{read_rows, run_bench, write_rows, BenchConfig, BenchQuery, BenchRow};
use cpo_core::io::{assign_scores, gen_queries, synthetic, HopBucket, QueryGenConfig, ScoreConfig};
use cpo_core::oracle::{diamond, diamond_ids, dijkstra, exact_cpo, scan_candidates, OracleLimits};
use cpo_core::{
    parallel_solve_query, shortest_path, solve_query, CpoQuery, Ellipse, GridIndex, NodeId,
    Objective, PoolOptions, RgParams, RoadNetwork, SearchSpace, WorkerPool, FEASIBILITY_SLACK,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

enum Outcome {
    Pass(String),
    Fail(String),
    /// Failed, but the host cannot provide the hardware the check needs.
    HostLimited(String),
}

fn space(net: RoadNetwork) -> SearchSpace {
    SearchSpace::new(Arc::new(net), None).unwrap()
}

fn queries(
    space: &SearchSpace,
    buckets: &[HopBucket],
    per_bucket: usize,
    seed: u64,
) -> Vec<BenchQuery> {
    BenchQuery::from_sampled(
        &gen_queries(
            &space.network,
            buckets,
            &QueryGenConfig::new(per_bucket, seed),
        )
        .unwrap(),
    )
}

fn params(theta: u32, step: f64) -> RgParams {
    RgParams {
        theta,
        budget_step: step,
        ..RgParams::default()
    }
}

fn bench_grid() -> SearchSpace {
    space(scored_grid(50, 50, 10.0, 11))
}

/// Random geometric graph with edges of roughly `spacing` meters.
fn geometric(n: usize, k: usize, spacing: f64, seed: u64) -> RoadNetwork {
    let side = spacing * (n as f64).sqrt();
    let net = synthetic::random_geometric(n, k, side, seed);
    assign_scores(
        &net,
        &ScoreConfig {
            seed,
            ..ScoreConfig::default()
        },
    )
    .unwrap()
}

fn feasibility() -> Outcome {
    let started = Instant::now();
    let mut solved = 0usize;
    let mut violations = Vec::new();
    let mut max_edges = 0;
    let mut check = |space: &SearchSpace, q: &CpoQuery, theta: u32, step: f64| {
        let sol = solve_query(space, q, &params(theta, step)).unwrap();
        solved += 1;
        let mut problems = Vec::new();
        if sol.path.total_cost() > sol.budget + FEASIBILITY_SLACK {
            problems.push(format!(
                "cost {} > budget {}",
                sol.path.total_cost(),
                sol.budget
            ));
        }
        if sol.score_gain < 0.0 {
            problems.push(format!("score gain {}", sol.score_gain));
        }
        if let Err(e) = check_path(&space.network, &sol.path, q.source, q.dest) {
            problems.push(e);
        }
        if !problems.is_empty() {
            violations.push(format!("{}->{}: {}", q.source, q.dest, problems.join("; ")));
        }
    };

    let d = space(diamond());
    for u in 0..4 {
        for v in 0..4 {
            let (u, v) = (NodeId(u), NodeId(v));
            if shortest_path(&d.network, u, v).path().is_none() {
                continue;
            }
            for pct in [0.0, 10.0, 25.0, 50.0, 100.0, 200.0] {
                for theta in 0..3 {
                    check(&d, &CpoQuery::new(u, v, pct / 100.0), theta, 0.25);
                }
            }
        }
    }

    let overheads = [0.0, 0.1, 0.3, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // 40 graphs from 10 to ~1,900 nodes (the largest with ~5,000 edges).
    for g in 0..40u64 {
        let n = 10 + (g as usize * g as usize * 6) / 5;
        let net = geometric(n, 2, 10.0, 100 + g);
        max_edges = max_edges.max(net.edge_count());
        assert!(net.edge_count() <= 5_000);
        let s = space(net);
        let n = s.network.node_count() as u32;
        // Endpoints of short random walks, so paths stay within a few hops.
        for _ in 0..60 {
            let u = NodeId(rng.gen_range(0..n));
            let mut v = u;
            let hops = rng.gen_range(1..=10);
            for _ in 0..hops {
                let out = s.network.outgoing(v);
                if out.is_empty() {
                    break;
                }
                v = s.network.edge(out[rng.gen_range(0..out.len())]).dst;
            }
            if v == u {
                continue;
            }
            for &ov in &overheads {
                let theta = if hops <= 4 { rng.gen_range(1..3) } else { 1 };
                check(&s, &CpoQuery::new(u, v, ov), theta, 2.0);
            }
            let ov = rng.gen_range(0.0..0.6);
            check(&s, &CpoQuery::new(u, v, ov), 1, 2.0);
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "{solved} instances (largest graph {max_edges} edges), {} violations, {:.1}s",
        violations.len(),
        elapsed.as_secs_f64()
    );
    if solved >= 10_000 && violations.is_empty() && elapsed < Duration::from_secs(300) {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; first: {:?}", violations.first()))
    }
}

fn serial_equals_parallel() -> Outcome {
    let s = bench_grid();
    let qs = queries(&s, &[HopBucket::new(4, 10)], 50, 21);
    let pools: Vec<WorkerPool> = [1, 2, 4, 8].into_iter().map(WorkerPool::new).collect();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for theta in [1, 2] {
        let prm = params(theta, 2.0);
        for q in &qs {
            let query = CpoQuery::new(q.source, q.dest, 0.3);
            let serial = solve_query(&s, &query, &prm).unwrap();
            for pool in &pools {
                let par = parallel_solve_query(&s, pool, &query, &prm).unwrap();
                compared += 1;
                if par.path.edge_ids() != serial.path.edge_ids() {
                    mismatches.push((q.id, theta, pool.workers()));
                }
            }
        }
    }
    let detail = format!(
        "{} queries x theta {{1,2}} x workers {{1,2,4,8}}: {compared} comparisons, {} mismatches",
        qs.len(),
        mismatches.len()
    );
    if mismatches.is_empty() && qs.len() == 50 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; first: {:?}", mismatches.first()))
    }
}

fn deadlock_freedom() -> Outcome {
    let s = bench_grid();
    let qs = queries(&s, &[HopBucket::new(4, 10)], 100, 31);
    let timeout = Duration::from_secs(60);
    let mut slowest = Duration::ZERO;
    let mut violations = 0;
    for workers in [1, 2] {
        for help in [false, true] {
            let pool = WorkerPool::with_options(
                workers,
                PoolOptions {
                    hold_primary_job: true,
                    help_while_waiting: help,
                },
            );
            for q in &qs {
                let (tx, rx) = mpsc::channel();
                let (s, handle) = (s.clone(), pool.handle().clone());
                let query = CpoQuery::new(q.source, q.dest, 0.3);
                let started = Instant::now();
                std::thread::spawn(move || {
                    let _ = tx.send(parallel_solve_query(&s, &handle, &query, &params(2, 2.0)));
                });
                match rx.recv_timeout(timeout) {
                    Ok(Ok(_)) => slowest = slowest.max(started.elapsed()),
                    Ok(Err(e)) => return Outcome::Fail(format!("query {}: {e}", q.id)),
                    Err(_) => {
                        return Outcome::Fail(format!(
                            "query {} with {workers} workers (help={help}) exceeded {timeout:?}",
                            q.id
                        ))
                    }
                }
            }
            violations += pool.stats().slot_violations;
        }
    }
    let detail = format!(
        "{} queries at theta=2, workers {{1,2}}, with and without helping; slowest {:.0} ms, {violations} slot violations",
        qs.len(),
        slowest.as_secs_f64() * 1e3
    );
    if violations == 0 && qs.len() == 100 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn oracle_suite() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for g in 0..200u64 {
        let n = 4 + (g % 9) as usize;
        let s = space(scored_geometric(n, 2, 1_000 + g, 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(g);
        let (u, v) = (
            NodeId(rng.gen_range(0..n as u32)),
            NodeId(rng.gen_range(0..n as u32)),
        );
        if shortest_path(&s.network, u, v).path().is_none() {
            continue;
        }
        let q = CpoQuery::new(u, v, rng.gen_range(0.0..0.8));
        for theta in [1, 2] {
            let sol = solve_query(&s, &q, &params(theta, 1.0)).unwrap();
            let exact = exact_cpo(
                &s.network,
                u,
                v,
                sol.budget + FEASIBILITY_SLACK,
                Objective::Maximize,
                OracleLimits::default(),
            )
            .unwrap()
            .unwrap();
            checked += 1;
            let feasible = sol.path.total_cost() <= sol.budget + FEASIBILITY_SLACK
                && check_path(&s.network, &sol.path, u, v).is_ok();
            if !feasible || sol.path.total_score() > exact.score {
                bad.push((g, theta, sol.path.total_score(), exact.score));
            }
        }
    }
    let d = space(diamond());
    let sol = solve_query(
        &d,
        &CpoQuery::new(diamond_ids::A, diamond_ids::D, 0.5),
        &params(1, 1.0),
    )
    .unwrap();
    let exact = exact_cpo(
        &d.network,
        diamond_ids::A,
        diamond_ids::D,
        sol.budget,
        Objective::Maximize,
        OracleLimits::default(),
    )
    .unwrap()
    .unwrap();
    let detail = format!(
        "{checked} random-graph solves, {} above optimum or infeasible; diamond score {} (optimum {})",
        bad.len(),
        sol.path.total_score(),
        exact.score
    );
    if bad.is_empty() && sol.path.total_score() == 5.0 && exact.score == 5.0 && checked >= 200 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; first: {:?}", bad.first()))
    }
}

fn pruning_soundness() -> Outcome {
    let mut compared = 0;
    let mut diffs = 0;
    for g in 0..10u64 {
        let net = geometric(40 + 15 * g as usize, 2, 10.0, 500 + g);
        assert!(net.edge_count() <= 500);
        let s = space(net);
        for q in queries(&s, &[HopBucket::new(2, 8)], 10, g) {
            let query = CpoQuery::new(q.source, q.dest, 0.3);
            for theta in [1, 2] {
                let with = params(theta, 3.0);
                let without = RgParams {
                    use_ellipse: false,
                    ..with
                };
                let a = solve_query(&s, &query, &with).unwrap();
                let b = solve_query(&s, &query, &without).unwrap();
                compared += 1;
                if a.path != b.path {
                    diffs += 1;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut ellipse_diffs = 0;
    let nets: Vec<RoadNetwork> = (0..5).map(|i| geometric(400, 3, 10.0, 900 + i)).collect();
    for i in 0..1_000 {
        let net = &nets[i % nets.len()];
        let index = GridIndex::build(net, rng.gen_range(2.0..80.0)).unwrap();
        let n = net.node_count() as u32;
        let (u, v) = (NodeId(rng.gen_range(0..n)), NodeId(rng.gen_range(0..n)));
        let beta = net.euclid(u, v) * rng.gen_range(1.0..2.0) + rng.gen_range(0.0..50.0);
        let ell = Ellipse::new(u, v, beta);
        let positive_only = rng.gen_bool(0.5);
        if index.candidate_edges(net, &ell, positive_only)
            != scan_candidates(net, &ell, positive_only)
        {
            ellipse_diffs += 1;
        }
    }
    let detail = format!(
        "{compared} solves with/without pruning: {diffs} differ; 1000 ellipses: {ellipse_diffs} differ from scan"
    );
    if diffs == 0 && ellipse_diffs == 0 && compared >= 100 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn budget_monotonicity() -> Outcome {
    let s = bench_grid();
    let qs = queries(&s, &[HopBucket::new(4, 12)], 50, 41);
    let cfg = BenchConfig {
        overheads_pct: vec![0.0, 10.0, 30.0, 50.0],
        run_parallel: false,
        run_serial: true,
        params: params(1, 1.0),
        ..BenchConfig::default()
    };
    let rows = run_bench(&s, &qs, &cfg).unwrap();
    let mut decreases = 0;
    let mut means = [0.0; 4];
    for per_query in rows.chunks(4) {
        for (k, r) in per_query.iter().enumerate() {
            means[k] += r.score_gain / qs.len() as f64;
        }
        decreases += per_query
            .windows(2)
            .filter(|w| w[1].score_gain < w[0].score_gain)
            .count();
    }
    let mean_ok = means.windows(2).all(|w| w[0] <= w[1]);
    let detail = format!(
        "{} queries; mean gain at 0/10/30/50%: {:.2}/{:.2}/{:.2}/{:.2}; {decreases} per-query decreases",
        qs.len(),
        means[0],
        means[1],
        means[2],
        means[3]
    );
    if decreases == 0 && mean_ok && qs.len() == 50 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn scaling_trend() -> Outcome {
    let s = bench_grid();
    let prm = params(1, 1.0);
    // Query with the widest candidate set among a few long pairs.
    let (q, candidates) = queries(&s, &[HopBucket::new(18, 24)], 20, 51)
        .into_iter()
        .map(|q| {
            let budget = shortest_path(&s.network, q.source, q.dest).cost() * 1.3;
            let n = s
                .index
                .candidate_edges(&s.network, &Ellipse::new(q.source, q.dest, budget), true)
                .len();
            (q, n)
        })
        .max_by_key(|&(_, n)| n)
        .unwrap();
    let query = CpoQuery::new(q.source, q.dest, 0.3);
    let time = |workers: usize| {
        let pool = WorkerPool::new(workers);
        let runs: Vec<f64> = (0..5)
            .map(|_| {
                let fresh = s.with_fresh_cache();
                let started = Instant::now();
                parallel_solve_query(&fresh, &pool, &query, &prm).unwrap();
                started.elapsed().as_secs_f64()
            })
            .collect();
        median(runs)
    };
    let one = time(1);
    let eight = time(8);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let detail = format!(
        "{candidates} root candidates; median wall time 1 worker {:.0} ms, 8 workers {:.0} ms (ratio {:.2}, need <= 0.50); {cores} core(s) available",
        one * 1e3,
        eight * 1e3,
        eight / one
    );
    if candidates < 200 {
        Outcome::Fail(format!("{detail}; instance too small"))
    } else if eight <= 0.5 * one {
        Outcome::Pass(detail)
    } else if cores < 4 {
        Outcome::HostLimited(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn astar_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let nets: Vec<RoadNetwork> = (0..10)
        .map(|i| geometric(300 + 100 * i, 2 + i % 3, 10.0, 700 + i as u64))
        .collect();
    let mut diffs = 0;
    let mut below = 0;
    let mut reachable = 0;
    for i in 0..1_000 {
        let net = &nets[i % nets.len()];
        let n = net.node_count() as u32;
        let (u, v) = (NodeId(rng.gen_range(0..n)), NodeId(rng.gen_range(0..n)));
        let a = shortest_path(net, u, v);
        if a.cost() != dijkstra(net, u, v).cost() {
            diffs += 1;
        }
        if a.path().is_some() {
            reachable += 1;
            if a.cost() < net.euclid(u, v) {
                below += 1;
            }
        }
    }
    let detail = format!(
        "1000 pairs ({reachable} reachable): {diffs} cost mismatches vs Dijkstra, {below} below straight-line distance"
    );
    if diffs == 0 && below == 0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn depth_tradeoff() -> Outcome {
    let s = space(scored_grid(16, 16, 10.0, 71));
    let qs = queries(&s, &[HopBucket::new(6, 12)], 20, 71);
    let cfg = BenchConfig {
        thetas: vec![1, 2],
        run_parallel: false,
        run_serial: true,
        params: params(1, 1.0),
        ..BenchConfig::default()
    };
    let rows = run_bench(&s, &qs, &cfg).unwrap();
    let (mut t1, mut t2, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0);
    let mut lower = Vec::new();
    for pair in rows.chunks(2) {
        let (a, b) = (&pair[0], &pair[1]);
        t1 += a.runtime_ms;
        t2 += b.runtime_ms;
        g1 += a.score_gain;
        g2 += b.score_gain;
        if b.score_gain < a.score_gain {
            lower.push((a.query_id, a.score_gain, b.score_gain));
        }
    }
    let detail = format!(
        "{} edges, {} queries: theta=2 total runtime {:.0} ms vs theta=1 {:.0} ms (x{:.1}, need >= 4); mean gain {:.2} vs {:.2}; {} queries with lower theta=2 gain",
        s.network.edge_count(),
        qs.len(),
        t2,
        t1,
        t2 / t1,
        g2 / qs.len() as f64,
        g1 / qs.len() as f64,
        lower.len()
    );
    if t2 >= 4.0 * t1 && lower.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; {lower:?}"))
    }
}

fn determinism() -> Outcome {
    let s = space(scored_grid(20, 20, 10.0, 81));
    let qs = queries(&s, &[HopBucket::new(3, 6), HopBucket::new(7, 12)], 8, 81);
    let cfg = BenchConfig {
        thetas: vec![1, 2],
        overheads_pct: vec![10.0, 30.0],
        threads: vec![4],
        run_serial: true,
        params: params(1, 2.0),
        ..BenchConfig::default()
    };
    let columns =
        |rows: &[BenchRow]| -> Vec<String> { rows.iter().map(BenchRow::result_key).collect() };
    let mut runs = Vec::new();
    for _ in 0..3 {
        let rows = run_bench(&s, &qs, &cfg).unwrap();
        let mut csv = Vec::new();
        write_rows(&rows, &mut csv).unwrap();
        runs.push(columns(&read_rows(csv.as_slice()).unwrap()));
    }
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    let detail = format!(
        "3 runs x {} rows: score/path columns identical = {same}",
        runs[0].len()
    );
    if same && !runs[0].is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("feasibility", feasibility),
        ("serial equals parallel", serial_equals_parallel),
        ("deadlock freedom", deadlock_freedom),
        ("oracle agreement", oracle_suite),
        ("pruning soundness", pruning_soundness),
        ("budget monotonicity", budget_monotonicity),
        ("scaling trend", scaling_trend),
        ("A* kernel", astar_kernel),
        ("depth trade-off", depth_tradeoff),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("CPO_ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut hard_failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let started = Instant::now();
        let outcome = run();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("criterion {n:>2} {name}: PASS ({d}) [{secs:.1}s]"),
            Outcome::Fail(d) => {
                hard_failures += 1;
                println!("criterion {n:>2} {name}: FAIL ({d}) [{secs:.1}s]");
            }
            Outcome::HostLimited(d) => println!(
                "criterion {n:>2} {name}: FAIL, host-limited: fewer than 4 cores ({d}) [{secs:.1}s]"
            ),
        }
    }
    if hard_failures > 0 {
        eprintln!("{hard_failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
