//! Broadcast scheduling for wireless networks with link interference.
//!
//! The crate models a directed multigraph with integer link capacities, a
//! source node and an interference regime, and provides:
//!
//! - [`graph`]: the network model, topology checks, cuts and feasible
//!   activation enumeration;
//! - [`capacity`]: broadcast capacity via linear programs over activations;
//! - [`policy`]: the deficit-based max-weight broadcast policy for DAGs;
//! - [`multiclass`]: its extension to arbitrary topologies through random
//!   source-first node orders;
//! - [`trees`]: spanning arborescences and a tree-based baseline policy;
//! - [`sim`]: slotted simulation, metrics and parameter sweeps;
//! - [`scenarios`]: the built-in example networks.
//!
//! ```
//! use dagcast::{capacity::lambda_dag, scenarios::scenario};
//!
//! let k4 = scenario("k4")?;
//! let cap = lambda_dag(&k4)?;
//! assert!((cap.lambda - 0.5).abs() < 1e-9);
//! # Ok::<(), dagcast::Error>(())
//! ```

pub mod capacity;
mod error;
pub mod graph;
pub mod lp;
pub mod multiclass;
pub mod policy;
pub mod rng;
pub mod scenarios;
pub mod sim;
pub mod trees;

pub use error::{Error, Result};
pub use graph::{ActivationVector, Edge, EdgeId, Interference, Network, NodeId};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/capacity.md")]
    mod capacity {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/multiclass.md")]
    mod multiclass {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
