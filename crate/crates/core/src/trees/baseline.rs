//! Tree-based baseline: packets are spread over a fixed set of spanning
//! arborescences and forwarded with per-tree backpressure.
//!
//! - An arriving packet joins the tree with the smallest total backlog (ties
//!   to the lowest tree index) and is queued on that tree's root out-edges.
//! - The weight of an edge is the sum over trees of its differential backlog:
//!   its queue minus the queues on the tree's child edges below it, floored
//!   at zero.
//! - The max-weight activation is chosen exactly as for the deficit policy.
//! - An activated edge splits its capacity among trees in proportion to their
//!   differential backlog (largest remainder, ties to the lowest tree index),
//!   never sending more than a queue holds.
//!
//! A packet is delivered once it has crossed every edge of its tree.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{ActivationVector, EdgeId, Network, NodeId};
use crate::policy::max_weight_activation;

use super::Arborescence;

#[derive(Debug, Clone)]
pub struct TreePolicyState {
    trees: Vec<Arborescence>,
    /// Per tree, per node: child edges.
    children: Vec<Vec<Vec<EdgeId>>>,
    /// Per tree, per edge: queued packet ids in FIFO order.
    queues: Vec<Vec<VecDeque<u64>>>,
    backlog: Vec<u64>,
    admitted: Vec<u64>,
    arrival_slot: Vec<u64>,
    remaining: Vec<u32>,
    received: Vec<u64>,
    delays: Vec<u64>,
    edges_per_tree: u32,
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeSlot {
    pub weights: Vec<u64>,
    pub activation: ActivationVector,
    /// `(tree, edge, packets)` moved this slot.
    pub moves: Vec<(usize, EdgeId, u64)>,
    /// Tree chosen for each arrival, in order.
    pub admitted_to: Vec<usize>,
}

impl TreePolicyState {
    pub fn new(net: &Network, trees: Vec<Arborescence>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Precondition("tree policy needs at least one tree".into()));
        }
        for (k, t) in trees.iter().enumerate() {
            if !super::is_arborescence(net, t.edges()) {
                return Err(Error::Domain(format!("tree {k} is not an arborescence of this network")));
            }
        }
        let children = trees.iter().map(|t| t.child_edges(net)).collect();
        let k = trees.len();
        Ok(TreePolicyState {
            children,
            queues: vec![vec![VecDeque::new(); net.edge_count()]; k],
            backlog: vec![0; k],
            admitted: vec![0; k],
            arrival_slot: Vec::new(),
            remaining: Vec::new(),
            received: vec![0; net.node_count()],
            delays: Vec::new(),
            edges_per_tree: (net.node_count() - 1) as u32,
            trees,
        })
    }

    pub fn trees(&self) -> &[Arborescence] {
        &self.trees
    }

    pub fn queue_len(&self, tree: usize, edge: EdgeId) -> u64 {
        self.queues[tree][edge].len() as u64
    }

    /// Packets queued anywhere in tree `k`.
    pub fn backlog(&self, tree: usize) -> u64 {
        self.backlog[tree]
    }

    pub fn total_backlog(&self) -> u64 {
        self.backlog.iter().sum()
    }

    pub fn admitted(&self) -> &[u64] {
        &self.admitted
    }

    /// Distinct packets received per node (the source counts arrivals).
    pub fn received(&self) -> &[u64] {
        &self.received
    }

    /// Delay of every fully delivered packet, in completion order.
    pub fn delays(&self) -> &[u64] {
        &self.delays
    }

    pub fn arrivals(&self) -> u64 {
        self.arrival_slot.len() as u64
    }

    /// Per tree, per edge differential backlog.
    pub fn differential_backlogs(&self, net: &Network) -> Vec<Vec<u64>> {
        self.trees
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut d = vec![0u64; net.edge_count()];
                for &id in t.edges() {
                    let head = net.edge(id).head;
                    let below: u64 = self.children[k][head]
                        .iter()
                        .map(|&f| self.queues[k][f].len() as u64)
                        .sum();
                    d[id] = (self.queues[k][id].len() as u64).saturating_sub(below);
                }
                d
            })
            .collect()
    }

    /// Index of the tree with the smallest backlog.
    pub fn lightest_tree(&self) -> usize {
        self.backlog
            .iter()
            .enumerate()
            .min_by_key(|&(k, &b)| (b, k))
            .map(|(k, _)| k)
            .expect("at least one tree")
    }

    pub fn step(&mut self, net: &Network, arrivals: u64, slot: u64) -> Result<TreeSlot> {
        let diff = self.differential_backlogs(net);
        let mut weights = vec![0u64; net.edge_count()];
        for d in &diff {
            for (w, x) in weights.iter_mut().zip(d) {
                *w += x;
            }
        }
        let activation = max_weight_activation(&weights, net);

        let mut moves = Vec::new();
        for id in activation.active_edges() {
            let shares: Vec<u64> = diff.iter().map(|d| d[id]).collect();
            for (k, n) in split_capacity(net.edge(id).capacity, &shares)
                .into_iter()
                .enumerate()
            {
                let n = n.min(self.queues[k][id].len() as u64);
                if n > 0 {
                    moves.push((k, id, n));
                }
            }
        }
        for &(k, id, n) in &moves {
            let head = net.edge(id).head;
            for _ in 0..n {
                let p = self.queues[k][id].pop_front().expect("move bounded by queue");
                self.backlog[k] -= 1;
                self.received[head] += 1;
                let left = &mut self.remaining[p as usize];
                *left -= 1;
                if *left == 0 {
                    self.delays.push(slot - self.arrival_slot[p as usize]);
                }
                for &f in &self.children[k][head] {
                    self.queues[k][f].push_back(p);
                    self.backlog[k] += 1;
                }
            }
        }

        let root = net.source();
        let mut admitted_to = Vec::with_capacity(arrivals as usize);
        for _ in 0..arrivals {
            let k = self.lightest_tree();
            let p = self.arrival_slot.len() as u64;
            self.arrival_slot.push(slot);
            self.remaining.push(self.edges_per_tree);
            self.received[root] += 1;
            self.admitted[k] += 1;
            if self.edges_per_tree == 0 {
                self.delays.push(0);
            }
            for &f in &self.children[k][root] {
                self.queues[k][f].push_back(p);
                self.backlog[k] += 1;
            }
            admitted_to.push(k);
        }
        Ok(TreeSlot {
            weights,
            activation,
            moves,
            admitted_to,
        })
    }

    /// Packets that have not reached every node.
    pub fn undelivered(&self) -> u64 {
        self.arrivals() - self.delays.len() as u64
    }

    pub fn node_received(&self, v: NodeId) -> u64 {
        self.received[v]
    }
}

/// Splits `capacity` among trees proportionally to `shares` with the largest
/// remainder method; ties go to the lowest index.
fn split_capacity(capacity: u64, shares: &[u64]) -> Vec<u64> {
    let total: u128 = shares.iter().map(|&s| s as u128).sum();
    if total == 0 {
        return vec![0; shares.len()];
    }
    let cap = capacity as u128;
    let mut out: Vec<u64> = shares
        .iter()
        .map(|&s| (cap * s as u128 / total) as u64)
        .collect();
    let mut left = capacity - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..shares.len()).filter(|&k| shares[k] > 0).collect();
    order.sort_by(|&a, &b| {
        let ra = cap * shares[a] as u128 % total;
        let rb = cap * shares[b] as u128 % total;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    for k in order {
        if left == 0 {
            break;
        }
        out[k] += 1;
        left -= 1;
    }
    out
}
