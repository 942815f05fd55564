//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dagcast::capacity::{cut_bound_oracle, lambda_dag, multiclass_capacity, sparse_support};
use dagcast::graph::{min_in_degree, validate_topology, Interference, Network, Topology};
use dagcast::multiclass::ClassSpec;
use dagcast::policy::{
    compute_deficits, compute_weights, deficit_minimizers, max_weight_activation, policy_step,
    PolicyState,
};
use dagcast::rng::SplitMix64;
use dagcast::scenarios::scenario;
use dagcast::sim::{run_observed, ArrivalProcess, PolicySpec, RunConfig, RunMetrics};
use dagcast::trees::{count_arborescences, max_disjoint_packing, sample_arborescences, Arborescence};

use common::{min_in_degree_oracle, random_dag, random_dense_dag, TraceChecker};

// Tolerances and budgets.
const EXACT_LP_TOL: f64 = 1e-9;
const RANDOM_LP_TOL: f64 = 1e-6;
const FIG5_BUDGET: Duration = Duration::from_millis(1);
const K4_CAPACITY_BUDGET: Duration = Duration::from_secs(1);
const LP_PROPERTY_BUDGET: Duration = Duration::from_secs(60);
const PACKING_PROPERTY_BUDGET: Duration = Duration::from_secs(120);
const SPARSE_SUPPORT_MAX: usize = 7;
const RANDOM_INSTANCES: usize = 200;
const HORIZON: u64 = 100_000;
const SEED: u64 = 1;
const K4_STABLE_RATE: f64 = 0.45;
const K4_STABLE_MIN_THROUGHPUT: f64 = 0.44;
const K4_STABLE_MAX_SLOPE: f64 = 0.001;
const K4_UNSTABLE_RATE: f64 = 0.55;
const UNSTABLE_MIN_SLOPE: f64 = 0.01;
const CYCLE4_RATE: f64 = 1.9;
const CYCLE4_MIN_THROUGHPUT: f64 = 1.85;
const MESH_HIGH_RATE: f64 = 2.7;
const MESH_MAX_DELAY: f64 = 100.0;
const MESH_TREE_RATE: f64 = 0.9;
const MESH_COMPARE_RATE: f64 = 1.9;
const MESH_TREE_COUNT: usize = 5;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

/// Simulation runs shared by criteria 7, 9 and 10.
struct Runs {
    k4_stable: (RunMetrics, TraceChecker),
    k4_unstable: (RunMetrics, TraceChecker),
    cycle4: (RunMetrics, TraceChecker),
    mesh_high: (RunMetrics, TraceChecker),
    mesh_chain: (RunMetrics, TraceChecker),
    mesh_star: (RunMetrics, TraceChecker),
    mesh_trees: (RunMetrics, TraceChecker),
}

fn simulate(net: &Network, policy: PolicySpec, rate: f64) -> Result<(RunMetrics, TraceChecker), String> {
    let cfg = RunConfig {
        arrivals: ArrivalProcess::bernoulli_batch(rate).map_err(|e| e.to_string())?,
        horizon: HORIZON,
        seed: SEED,
    };
    let mut checker = TraceChecker::new();
    let m = run_observed(net, &policy, &cfg, |ev| {
        checker.observe(net, ev);
        Ok(())
    })
    .map_err(|e| format!("{policy} at λ={rate}: {e}"))?;
    Ok((m, checker))
}

fn simulate_all() -> Result<Runs, String> {
    let k4 = scenario("k4").unwrap();
    let cycle4 = scenario("cycle4").unwrap();
    let mesh = scenario("mesh10").unwrap();
    let classes = vec![
        ClassSpec::from_permutation(&cycle4, vec![0, 1, 2, 3]).unwrap(),
        ClassSpec::from_permutation(&cycle4, vec![0, 3, 1, 2]).unwrap(),
    ];
    // The chain 0 → 1 → … → 9 as the single arbitrary tree.
    let chain: Vec<usize> = (0..9).map(|i| mesh.find_edge(i, i + 1).unwrap()).collect();
    let chain = Arborescence::new(&mesh, chain).unwrap();
    let trees = sample_arborescences(&mesh, MESH_TREE_COUNT, SEED).map_err(|e| e.to_string())?;
    Ok(Runs {
        k4_stable: simulate(&k4, PolicySpec::PiStar, K4_STABLE_RATE)?,
        k4_unstable: simulate(&k4, PolicySpec::PiStar, K4_UNSTABLE_RATE)?,
        cycle4: simulate(&cycle4, PolicySpec::MulticlassWith(classes), CYCLE4_RATE)?,
        mesh_high: simulate(&mesh, PolicySpec::PiStar, MESH_HIGH_RATE)?,
        mesh_chain: simulate(&mesh, PolicySpec::TreeWith(vec![chain]), MESH_TREE_RATE)?,
        mesh_star: simulate(&mesh, PolicySpec::PiStar, MESH_COMPARE_RATE)?,
        mesh_trees: simulate(&mesh, PolicySpec::TreeWith(trees), MESH_COMPARE_RATE)?,
    })
}

/// One slot on k4 from counters r=10, a=3, b=3, c=2 (ids r=0, b=1, a=2, c=3;
/// edges ra, rb, rc, ab, ac, bc).
fn fig5_slot() -> Outcome {
    let net = scenario("k4").unwrap();
    let (r, b, a, c) = (0, 1, 2, 3);
    let start = PolicyState::from_counts(&net, &[10, 3, 3, 2]).unwrap();

    let q = compute_deficits(&start, &net).map_err(|e| e.to_string())?;
    check(q == vec![7, 7, 8, 0, 1, 1], format!("Q = {q:?}"))?;
    let m = deficit_minimizers(&q, &net).map_err(|e| e.to_string())?;
    check(m.minimizer_sets[r] == vec![a], format!("K_r = {:?}", m.minimizer_sets[r]))?;
    check(m.minimizer_sets[a] == vec![b, c], format!("K_a = {:?}", m.minimizer_sets[a]))?;
    check(m.minimizer_sets[b].is_empty() && m.minimizer_sets[c].is_empty(), "K_b, K_c not empty")?;
    let x = (m.min_deficits[a], m.min_deficits[b], m.min_deficits[c]);
    check(x == (7, 0, 1), format!("X_a, X_b, X_c = {x:?}"))?;
    let w = compute_weights(&m, &net);
    check(w == vec![6, 0, 1, 0, 1, 1], format!("W = {w:?}"))?;
    let s = max_weight_activation(&w, &net);
    check(s.edge_ids() == vec![0, 5], format!("activation {:?}", s.edge_ids()))?;
    check(s.weight(&net, &w) == 7, "activation weight != 7")?;

    let mut state = start.clone();
    let out = policy_step(&mut state, &net, 1, 0).map_err(|e| e.to_string())?;
    check(state.counts() == [11, 3, 4, 3], format!("R' = {:?}", state.counts()))?;
    let t = &out.decision.transfers;
    check(
        t.len() == 2 && (t[0].edge, t[0].first, t[0].last) == (0, 4, 4) && (t[1].edge, t[1].first, t[1].last) == (5, 3, 3),
        format!("transfers {t:?}"),
    )?;

    let mut fastest = Duration::MAX;
    for _ in 0..50 {
        let mut s = start.clone();
        let t0 = Instant::now();
        policy_step(&mut s, &net, 1, 0).unwrap();
        fastest = fastest.min(t0.elapsed());
    }
    check(fastest < FIG5_BUDGET, format!("slot took {fastest:?}"))?;
    Ok(format!("exact match, slot in {fastest:?}"))
}

fn fig3_minimizer() -> Outcome {
    // s=0 feeds a=1, b=2, c=3, which all feed j=4.
    let net = Network::from_triples(
        5,
        0,
        Interference::Primary,
        &[(0, 1, 1), (0, 2, 1), (0, 3, 1), (1, 4, 1), (2, 4, 1), (3, 4, 1)],
    )
    .unwrap();
    let state = PolicyState::from_counts(&net, &[20, 18, 15, 14, 10]).unwrap();
    let q = compute_deficits(&state, &net).map_err(|e| e.to_string())?;
    check(q[3..] == [8, 5, 4], format!("Q into j = {:?}", &q[3..]))?;
    let m = deficit_minimizers(&q, &net).map_err(|e| e.to_string())?;
    check(m.min_deficits[4] == 4, format!("X_j = {}", m.min_deficits[4]))?;
    check(m.istar[4] == Some(3), format!("i* = {:?}", m.istar[4]))?;
    Ok("X_j = 4, i* = c".into())
}

fn k4_capacity() -> Outcome {
    let t0 = Instant::now();
    let net = scenario("k4").unwrap();
    let dag = lambda_dag(&net).map_err(|e| e.to_string())?;
    let cuts = cut_bound_oracle(&net).map_err(|e| e.to_string())?;
    let sparse = sparse_support(&net, &dag).map_err(|e| e.to_string())?;
    let took = t0.elapsed();
    check((dag.lambda - 0.5).abs() < EXACT_LP_TOL, format!("lambda_dag = {}", dag.lambda))?;
    check((cuts - 0.5).abs() < EXACT_LP_TOL, format!("cut bound = {cuts}"))?;
    check(
        sparse.support_size() <= SPARSE_SUPPORT_MAX,
        format!("support size {}", sparse.support_size()),
    )?;
    check(took < K4_CAPACITY_BUDGET, format!("took {took:?}"))?;
    Ok(format!("λ = 0.5, support {} in {took:?}", sparse.support_size()))
}

fn lp_equality_property() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(0xDA6);
    let mut worst = 0.0f64;
    for i in 0..RANDOM_INSTANCES {
        let net = random_dag(&mut rng, 6, 10, &[1, 2, 3], Interference::Primary);
        let dag = lambda_dag(&net).map_err(|e| format!("instance {i}: {e}"))?.lambda;
        let cuts = cut_bound_oracle(&net).map_err(|e| format!("instance {i}: {e}"))?;
        worst = worst.max((dag - cuts).abs());
        check((dag - cuts).abs() <= RANDOM_LP_TOL, format!("instance {i}: {dag} vs {cuts}"))?;
    }
    let took = t0.elapsed();
    check(took < LP_PROPERTY_BUDGET, format!("took {took:?}"))?;
    Ok(format!("{RANDOM_INSTANCES} DAGs, max gap {worst:.1e}, {took:?}"))
}

fn packing_property() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(0x7EE5);
    let mut sizes = [0usize; 13];
    for i in 0..RANDOM_INSTANCES {
        // Alternate sparse and dense instances so packings larger than one occur.
        let net = if i % 2 == 0 {
            random_dag(&mut rng, 6, 12, &[1], Interference::Primary)
        } else {
            random_dense_dag(&mut rng, 6, 12)
        };
        let packing = max_disjoint_packing(&net).map_err(|e| format!("instance {i}: {e}"))?;
        let want = min_in_degree_oracle(&net);
        check(packing.len() == want, format!("instance {i}: packing {} vs in-degree {want}", packing.len()))?;
        let (k, _) = min_in_degree(&net).map_err(|e| e.to_string())?;
        check(k == want, format!("instance {i}: min_in_degree {k} vs {want}"))?;
        sizes[want] += 1;
    }
    let took = t0.elapsed();
    check(took < PACKING_PROPERTY_BUDGET, format!("took {took:?}"))?;
    let histogram: Vec<String> = (0..sizes.len())
        .filter(|&k| sizes[k] > 0)
        .map(|k| format!("{k}:{}", sizes[k]))
        .collect();
    Ok(format!("{RANDOM_INSTANCES} DAGs (size:count {}) in {took:?}", histogram.join(" ")))
}

fn cycle4_suite() -> Outcome {
    let net = scenario("cycle4").unwrap();
    check(
        matches!(validate_topology(&net), Topology::Cyclic(ref c) if c == &vec![1, 2, 3, 1]),
        "cycle a→b→c→a not reported",
    )?;
    let cuts = cut_bound_oracle(&net).map_err(|e| e.to_string())?;
    check(cuts == 2.0, format!("cut bound = {cuts}"))?;
    let packing = max_disjoint_packing(&net).map_err(|e| e.to_string())?;
    check(packing.len() == 2, format!("packing size {}", packing.len()))?;
    let class = |p: Vec<usize>| ClassSpec::from_permutation(&net, p).unwrap().edges().to_vec();
    let pair = multiclass_capacity(&net, &[class(vec![0, 1, 2, 3]), class(vec![0, 3, 1, 2])])
        .map_err(|e| e.to_string())?;
    check((pair.total - 2.0).abs() < EXACT_LP_TOL, format!("two-class rate {}", pair.total))?;
    let mut best_single = 0.0f64;
    for perm in [[1, 2, 3], [1, 3, 2], [2, 1, 3], [2, 3, 1], [3, 1, 2], [3, 2, 1]] {
        let mut p = vec![0];
        p.extend(perm);
        let one = multiclass_capacity(&net, &[class(p.clone())]).map_err(|e| e.to_string())?;
        best_single = best_single.max(one.total);
        check(one.total <= 5.0 / 3.0 + EXACT_LP_TOL, format!("class {p:?} rate {}", one.total))?;
    }
    Ok(format!("λ* = 2, two classes reach 2, best single class {best_single:.4}"))
}

fn throughput_optimality(runs: &Runs) -> Outcome {
    let (s, _) = &runs.k4_stable;
    let (u, _) = &runs.k4_unstable;
    let (c, _) = &runs.cycle4;
    check(s.throughput >= K4_STABLE_MIN_THROUGHPUT, format!("k4 λ=0.45 throughput {}", s.throughput))?;
    check(s.instability_slope < K4_STABLE_MAX_SLOPE, format!("k4 λ=0.45 slope {}", s.instability_slope))?;
    check(u.instability_slope > UNSTABLE_MIN_SLOPE, format!("k4 λ=0.55 slope {}", u.instability_slope))?;
    check(c.throughput >= CYCLE4_MIN_THROUGHPUT, format!("cycle4 throughput {}", c.throughput))?;
    Ok(format!(
        "k4 0.45: thr {:.4} slope {:.1e}; k4 0.55: slope {:.4}; cycle4 1.9: thr {:.4}",
        s.throughput, s.instability_slope, u.instability_slope, c.throughput
    ))
}

fn mesh_tree_count() -> Outcome {
    let n = count_arborescences(&scenario("mesh10").unwrap()).map_err(|e| e.to_string())?;
    check(n == 362_880, format!("count {n}"))?;
    Ok("362880".into())
}

fn mesh_table(runs: &Runs) -> Outcome {
    let (high, _) = &runs.mesh_high;
    let (chain, _) = &runs.mesh_chain;
    let (star, _) = &runs.mesh_star;
    let (trees, _) = &runs.mesh_trees;
    let delay = |m: &RunMetrics| m.mean_delay.unwrap_or(f64::INFINITY);
    check(delay(high) < MESH_MAX_DELAY, format!("π* delay at 2.7 = {}", delay(high)))?;
    check(chain.instability_slope > UNSTABLE_MIN_SLOPE, format!("single-tree slope {}", chain.instability_slope))?;
    check(delay(star) < delay(trees), format!("π* {} vs trees {}", delay(star), delay(trees)))?;
    Ok(format!(
        "π* delay {:.2} at 2.7; one tree slope {:.3} at 0.9; at 1.9 π* {:.2} vs {MESH_TREE_COUNT} trees {:.2}",
        delay(high),
        chain.instability_slope,
        delay(star),
        delay(trees)
    ))
}

fn invariant_suite(runs: &Runs) -> Outcome {
    let all = [
        ("k4 0.45", &runs.k4_stable.1),
        ("k4 0.55", &runs.k4_unstable.1),
        ("cycle4 1.9", &runs.cycle4.1),
        ("mesh10 2.7", &runs.mesh_high.1),
        ("mesh10 tree 0.9", &runs.mesh_chain.1),
        ("mesh10 1.9", &runs.mesh_star.1),
        ("mesh10 trees 1.9", &runs.mesh_trees.1),
    ];
    let mut slots = 0;
    for (name, c) in all {
        check(c.ok(), format!("{name}: {} violations, e.g. {:?}", c.violations, c.messages))?;
        slots += c.slots;
    }
    Ok(format!("{slots} slots checked across {} traces", all.len()))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let t0 = Instant::now();
        let outcome = f();
        let took = t0.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    };
    report(1, "golden k4 slot", &fig5_slot);
    report(2, "star minimizer", &fig3_minimizer);
    report(3, "k4 capacity", &k4_capacity);
    report(4, "DAG program equals cut bound", &lp_equality_property);
    report(5, "packing equals min in-degree", &packing_property);
    report(6, "cycle4 suite", &cycle4_suite);

    let t0 = Instant::now();
    let runs = simulate_all();
    println!("simulations finished in {:.2?}", t0.elapsed());
    match &runs {
        Ok(runs) => {
            report(7, "throughput optimality", &|| throughput_optimality(runs));
            report(8, "mesh10 tree count", &mesh_tree_count);
            report(9, "mesh10 delay and stability trends", &|| mesh_table(runs));
            report(10, "trace invariants", &|| invariant_suite(runs));
        }
        Err(e) => {
            report(7, "throughput optimality", &|| Err(e.clone()));
            report(8, "mesh10 tree count", &mesh_tree_count);
            report(9, "mesh10 delay and stability trends", &|| Err(e.clone()));
            report(10, "trace invariants", &|| Err(e.clone()));
        }
    }
    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
