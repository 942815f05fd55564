use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dagcast::capacity::{cut_bound_result, lambda_dag, sparse_support, CapacityResult};
use dagcast::policy::{policy_step, PolicyState, TraceRecord};
use dagcast::rng::SplitMix64;
use dagcast::scenarios::{resolve_network, scenario_info, scenario_names};
use dagcast::sim::{
    multiclass_fraction_curve, run, sweep, threads_from_env, write_fraction_csv, write_sweep_csv,
    ArrivalKind, ArrivalProcess, PolicySpec, RunConfig,
};
use dagcast::trees::{count_arborescences, max_disjoint_packing};
use dagcast::{Error, Network};

/// Broadcast capacity, spanning trees and policy simulation for wireless
/// networks with link interference.
///
/// NET is a built-in scenario name (k4, mesh10, cycle4, diamond) or the path
/// of a JSON network file.
#[derive(Parser)]
#[command(name = "dagcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Broadcast capacity and an activation schedule achieving it.
    Capacity {
        net: String,
        /// Use the all-cuts program even on acyclic networks.
        #[arg(long)]
        cuts: bool,
        /// Reduce the schedule to at most |E|+1 activations.
        #[arg(long)]
        sparse: bool,
        #[arg(long)]
        json: bool,
    },
    /// Maximum set of edge-disjoint spanning arborescences (capacities are
    /// split into unit edges; printed ids refer to the original edges).
    Treepack { net: String },
    /// Number of spanning arborescences rooted at the source.
    Treecount { net: String },
    /// Run one simulation and print a summary.
    Simulate {
        net: String,
        /// pi_star, multiclass:K or tree:N.
        #[arg(long, default_value = "pi_star", value_parser = parse_policy)]
        policy: PolicySpec,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 100_000)]
        slots: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// bernoulli-batch or poisson.
        #[arg(long, default_value = "bernoulli-batch", value_parser = parse_arrivals)]
        arrivals: ArrivalKind,
        #[arg(long)]
        json: bool,
    },
    /// Run every policy × λ × seed combination and write a CSV.
    Sweep {
        net: String,
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_policy)]
        policies: Vec<PolicySpec>,
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        slots: u64,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "bernoulli-batch", value_parser = parse_arrivals)]
        arrivals: ArrivalKind,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean multiclass rate relative to capacity for K = 1..=kmax.
    MulticlassCurve {
        net: String,
        #[arg(long)]
        kmax: usize,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-slot JSON-lines trace of the DAG policy.
    Trace {
        net: String,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 100)]
        slots: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "bernoulli-batch", value_parser = parse_arrivals)]
        arrivals: ArrivalKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in scenarios.
    Scenarios,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn parse_policy(s: &str) -> Result<PolicySpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_arrivals(s: &str) -> Result<ArrivalKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Capacity {
            net,
            cuts,
            sparse,
            json,
        } => {
            let net = resolve_network(&net)?;
            let mut result = if cuts || !net.is_dag() {
                cut_bound_result(&net)?
            } else {
                lambda_dag(&net)?
            };
            if sparse {
                result = sparse_support(&net, &result)?;
            }
            if json {
                println!("{}", result.to_json());
            } else {
                print_capacity(&result);
            }
        }
        Command::Treepack { net } => {
            let net = resolve_network(&net)?;
            let (unit, origin) = net.expand_unit_edges();
            let packing = max_disjoint_packing(&unit)?;
            println!("trees: {}", packing.len());
            for t in packing.trees() {
                let ids: Vec<usize> = t.edges().iter().map(|&u| origin[u]).collect();
                println!("{}", serde_json::to_string(&ids).expect("serializable"));
            }
        }
        Command::Treecount { net } => {
            println!("{}", count_arborescences(&resolve_network(&net)?)?);
        }
        Command::Simulate {
            net,
            policy,
            lambda,
            slots,
            seed,
            arrivals,
            json,
        } => {
            let net = resolve_network(&net)?;
            let cfg = RunConfig {
                arrivals: ArrivalProcess::new(arrivals, lambda)?,
                horizon: slots,
                seed,
            };
            let m = run(&net, &policy, &cfg)?;
            if json {
                println!("{}", serde_json::to_string(&m).expect("serializable"));
            } else {
                println!("policy: {}", m.policy);
                println!("lambda: {}", m.lambda);
                println!("slots: {}", m.horizon);
                println!("seed: {}", m.seed);
                println!("arrivals: {}", m.arrivals);
                println!("throughput: {:.6}", m.throughput);
                match m.mean_delay {
                    Some(d) => println!("mean_delay: {d:.6}"),
                    None => println!("mean_delay: none"),
                }
                println!("undelivered: {}", m.undelivered);
                println!("instability_slope: {:.6}", m.instability_slope);
                println!("status: {}", if m.is_unstable() { "unstable" } else { "stable" });
                if !m.dead_classes.is_empty() {
                    println!("classes without full reach: {:?}", m.dead_classes);
                }
            }
        }
        Command::Sweep {
            net,
            policies,
            lambdas,
            slots,
            seeds,
            arrivals,
            out,
        } => {
            let net = resolve_network(&net)?;
            let rows = sweep(&net, &policies, &lambdas, arrivals, slots, &seeds, threads_from_env())?;
            for r in &rows {
                if let Err(e) = &r.outcome {
                    eprintln!("warning: {} λ={} seed={}: {e}", r.policy, r.lambda, r.seed);
                }
            }
            let mut w = output(&out)?;
            write_sweep_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Command::MulticlassCurve {
            net,
            kmax,
            seeds,
            out,
        } => {
            let name = network_label(&net);
            let net = resolve_network(&net)?;
            if kmax == 0 {
                return Err(Error::Domain("--kmax must be at least 1".into()));
            }
            let ks: Vec<usize> = (1..=kmax).collect();
            let points = multiclass_fraction_curve(&net, &ks, &seeds)?;
            let mut w = output(&out)?;
            write_fraction_csv(&name, &points, &mut w)?;
            w.flush()?;
        }
        Command::Trace {
            net,
            lambda,
            slots,
            seed,
            arrivals,
            out,
        } => {
            let net = resolve_network(&net)?;
            trace(&net, lambda, slots, seed, arrivals, &out)?;
        }
        Command::Scenarios => {
            for name in scenario_names() {
                let s = scenario_info(name)?;
                let tag = if s.experimental { " (experimental)" } else { "" };
                println!("{name}{tag}: {}", s.notes);
            }
        }
    }
    Ok(())
}

fn print_capacity(result: &CapacityResult) {
    println!("lambda = {}", round9(result.lambda));
    let beta: Vec<f64> = result.beta.iter().map(|&b| round9(b)).collect();
    println!("beta = {beta:?}");
    println!("support:");
    for (s, p) in &result.support {
        println!("  p = {:<12} edges = {:?}", round9(*p), s.edge_ids());
    }
}

fn round9(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Scenario name, or the file stem of a network path.
fn network_label(arg: &str) -> String {
    if scenario_names().contains(&arg) {
        return arg.to_string();
    }
    std::path::Path::new(arg)
        .file_stem()
        .map(|s| s.to_string_lossy().replace(',', "_"))
        .unwrap_or_else(|| arg.to_string())
}

fn trace(
    net: &Network,
    lambda: f64,
    slots: u64,
    seed: u64,
    kind: ArrivalKind,
    out: &Option<PathBuf>,
) -> Result<(), Error> {
    if !net.is_dag() {
        return Err(Error::Domain("trace runs the DAG policy and needs an acyclic network".into()));
    }
    // Same arrival stream as `simulate` with this seed.
    let mut stream = ArrivalProcess::new(kind, lambda)?.stream(SplitMix64::new(seed).next());
    let mut state = PolicyState::new(net);
    let mut w = output(out)?;
    for slot in 0..slots {
        let counts = state.counts().to_vec();
        let outcome = policy_step(&mut state, net, stream.next_slot(), slot)?;
        let record = TraceRecord {
            slot,
            counts: &counts,
            min_deficits: &outcome.view.min_deficits,
            weights: &outcome.view.weights,
            activation: &outcome.decision.activation,
            transfers: &outcome.decision.transfers,
        };
        writeln!(w, "{}", serde_json::to_string(&record).expect("serializable"))?;
    }
    w.flush()?;
    Ok(())
}
