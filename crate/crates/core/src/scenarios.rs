//! Built-in networks used by the examples, the CLI and the test suites.

use crate::error::{Error, Result};
use crate::graph::{Interference, Network};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub network: Network,
    /// Where the instance comes from and how it is labeled.
    pub notes: &'static str,
    /// Topology inferred rather than fully specified.
    pub experimental: bool,
}

const NAMES: [&str; 4] = ["k4", "mesh10", "cycle4", "diamond"];

pub fn scenario_names() -> &'static [&'static str] {
    &NAMES
}

pub fn scenario(name: &str) -> Result<Network> {
    Ok(scenario_info(name)?.network)
}

pub fn scenario_info(name: &str) -> Result<Scenario> {
    match name {
        "k4" => Ok(Scenario {
            name: "k4",
            network: k4(),
            notes: "Complete unit-capacity DAG on r, a, b, c under primary interference. \
                    Ids: r=0, b=1, a=2, c=3, so ties toward the highest id pick a as the \
                    minimizer of c. Edges: ra, rb, rc, ab, ac, bc.",
            experimental: false,
        }),
        "mesh10" => Ok(Scenario {
            name: "mesh10",
            network: mesh10(),
            notes: "Ten nodes; node i links to every j > i with capacity 9 - i (0-based ids), \
                    primary interference, source 0. Edges ordered by tail, then head.",
            experimental: false,
        }),
        "cycle4" => Ok(Scenario {
            name: "cycle4",
            network: cycle4(),
            notes: "Wired four-node network r=0, a=1, b=2, c=3 with edges ra, rb, rc, ab, bc, ca \
                    and unit capacities. Contains the directed cycle a -> b -> c -> a. \
                    Topology inferred; checked by a cut bound of 2 and two disjoint trees.",
            experimental: false,
        }),
        "diamond" => Ok(Scenario {
            name: "diamond",
            network: diamond(),
            notes: "Experimental reconstruction of a four-node primary-interference DAG with \
                    capacities ra=3, rb=1, rc=1, ab=2, ac=1, bc=1 (r=0, a=1, b=2, c=3). \
                    Expected capacity 1 is a best-effort check only.",
            experimental: true,
        }),
        _ => Err(Error::UnknownScenario {
            name: name.to_string(),
            known: NAMES.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

pub fn all_scenarios() -> Vec<Scenario> {
    NAMES
        .iter()
        .map(|n| scenario_info(n).expect("registered"))
        .collect()
}

/// Loads a scenario by name, or a network file if no scenario matches and the
/// argument names an existing path.
pub fn resolve_network(arg: &str) -> Result<Network> {
    match scenario(arg) {
        Ok(net) => Ok(net),
        Err(e) => {
            if std::path::Path::new(arg).exists() {
                Network::load(arg)
            } else {
                Err(e)
            }
        }
    }
}

fn k4() -> Network {
    Network::from_triples(
        4,
        0,
        Interference::Primary,
        &[(0, 2, 1), (0, 1, 1), (0, 3, 1), (2, 1, 1), (2, 3, 1), (1, 3, 1)],
    )
    .expect("valid scenario")
}

fn mesh10() -> Network {
    let mut edges = Vec::new();
    for i in 0..10 {
        for j in i + 1..10 {
            edges.push((i, j, 9 - i as u64));
        }
    }
    Network::from_triples(10, 0, Interference::Primary, &edges).expect("valid scenario")
}

fn cycle4() -> Network {
    Network::from_triples(
        4,
        0,
        Interference::Wired,
        &[(0, 1, 1), (0, 2, 1), (0, 3, 1), (1, 2, 1), (2, 3, 1), (3, 1, 1)],
    )
    .expect("valid scenario")
}

fn diamond() -> Network {
    Network::from_triples(
        4,
        0,
        Interference::Primary,
        &[(0, 1, 3), (0, 2, 1), (0, 3, 1), (1, 2, 2), (1, 3, 1), (2, 3, 1)],
    )
    .expect("valid scenario")
}
