//! The deficit-based max-weight broadcast policy for DAGs.
//!
//! Each slot the controller looks only at the received-packet counters
//! `R_j(t)`:
//!
//! 1. deficits `Q_ij = R_i − R_j` on every edge;
//! 2. for every non-source node its minimizing in-neighbor `i*` (ties go to
//!    the highest node id), the minimum deficit `X_j = Q_{i* j}`, and the sets
//!    `K_j` of nodes whose minimizer is `j`;
//! 3. link weights `W_ij = (X_j − Σ_{k∈K_j} X_k)^+`;
//! 4. an activation maximizing `Σ_e c_e s_e W_e`;
//! 5. every non-source node pulls the next `min(Σ_i c_ij s_ij, X_j)` packets
//!    in order; the source absorbs the slot's arrivals.
//!
//! Packets are identified by index: in-order delivery makes the counter the
//! packet identity.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ActivationVector, EdgeId, Interference, Network, NodeId};

/// Per-node packet counters plus the slot bookkeeping needed for delays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyState {
    counts: Vec<u64>,
    /// Arrival slot of packet `p` at index `p - 1`.
    arrival_slots: Vec<u64>,
    /// Per node, the slot packet `p` was received at index `p - 1`.
    delivery_slots: Vec<Vec<u64>>,
    source: NodeId,
}

impl PolicyState {
    pub fn new(net: &Network) -> Self {
        PolicyState {
            counts: vec![0; net.node_count()],
            arrival_slots: Vec::new(),
            delivery_slots: vec![Vec::new(); net.node_count()],
            source: net.source(),
        }
    }

    /// A state with the given counters, as if every packet arrived and was
    /// delivered in slot 0. Rejects counters violating `R_j ≤ R_i` on an edge.
    pub fn from_counts(net: &Network, counts: &[u64]) -> Result<Self> {
        if counts.len() != net.node_count() {
            return Err(Error::Structural(format!(
                "{} counters for {} nodes",
                counts.len(),
                net.node_count()
            )));
        }
        for (id, e) in net.edges().iter().enumerate() {
            if counts[e.head] > counts[e.tail] {
                return Err(Error::Invariant(format!(
                    "edge {id}: R_{} = {} exceeds R_{} = {}",
                    e.head, counts[e.head], e.tail, counts[e.tail]
                )));
            }
        }
        let r = counts[net.source()];
        if let Some(j) = net.nodes().find(|&j| counts[j] > r) {
            return Err(Error::Invariant(format!("node {j} is ahead of the source")));
        }
        Ok(PolicyState {
            counts: counts.to_vec(),
            arrival_slots: vec![0; r as usize],
            delivery_slots: counts.iter().map(|&c| vec![0; c as usize]).collect(),
            source: net.source(),
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, v: NodeId) -> u64 {
        self.counts[v]
    }

    pub fn arrival_slots(&self) -> &[u64] {
        &self.arrival_slots
    }

    pub fn delivery_slots(&self, v: NodeId) -> &[u64] {
        &self.delivery_slots[v]
    }

    /// Packets received by every node.
    pub fn delivered_everywhere(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    /// Slot in which packet `p` (1-based) reached its last node.
    pub fn completion_slot(&self, p: u64) -> Option<u64> {
        let idx = (p - 1) as usize;
        self.delivery_slots
            .iter()
            .map(|d| d.get(idx).copied())
            .try_fold(0, |acc, s| s.map(|s| acc.max(s)))
    }

    pub(crate) fn admit(&mut self, arrivals: u64, slot: u64) {
        let r = self.source;
        self.counts[r] += arrivals;
        for _ in 0..arrivals {
            self.arrival_slots.push(slot);
            self.delivery_slots[r].push(slot);
        }
    }
}

/// Which edges a policy instance sees: the whole network, or one class's
/// embedded DAG.
#[derive(Debug, Clone)]
pub struct EdgeScope {
    in_edges: Vec<Vec<EdgeId>>,
    member: Vec<bool>,
}

impl EdgeScope {
    pub fn full(net: &Network) -> Self {
        EdgeScope {
            in_edges: net.in_edges(),
            member: vec![true; net.edge_count()],
        }
    }

    pub fn subset(net: &Network, edges: &[EdgeId]) -> Self {
        let mut member = vec![false; net.edge_count()];
        for &id in edges {
            member[id] = true;
        }
        let in_edges = net
            .in_edges()
            .into_iter()
            .map(|list| list.into_iter().filter(|&id| member[id]).collect())
            .collect();
        EdgeScope { in_edges, member }
    }

    pub fn contains(&self, id: EdgeId) -> bool {
        self.member[id]
    }

    pub fn in_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.in_edges[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.member
            .iter()
            .enumerate()
            .filter_map(|(id, &m)| m.then_some(id))
    }
}

/// Everything derived from the counters at the start of a slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeficitView {
    /// `Q_e` per edge; zero for edges outside the scope.
    pub deficits: Vec<u64>,
    /// Minimizing in-neighbor per node; `None` for the source and for nodes
    /// with no in-edge in scope.
    pub istar: Vec<Option<NodeId>>,
    /// `K_j`: nodes whose minimizer is `j`.
    pub minimizer_sets: Vec<Vec<NodeId>>,
    /// `X_j`; zero for the source.
    pub min_deficits: Vec<u64>,
    /// `W_e` per edge; zero outside the scope.
    pub weights: Vec<u64>,
}

/// `Q_ij = R_i − R_j` for every edge in scope.
pub fn compute_deficits(state: &PolicyState, net: &Network) -> Result<Vec<u64>> {
    deficits_in_scope(state.counts(), net, &EdgeScope::full(net))
}

pub(crate) fn deficits_in_scope(
    counts: &[u64],
    net: &Network,
    scope: &EdgeScope,
) -> Result<Vec<u64>> {
    let mut q = vec![0u64; net.edge_count()];
    for id in scope.edges() {
        let e = net.edge(id);
        q[id] = counts[e.tail].checked_sub(counts[e.head]).ok_or_else(|| {
            Error::Invariant(format!(
                "negative deficit on edge {id}: R_{} = {} < R_{} = {}",
                e.tail, counts[e.tail], e.head, counts[e.head]
            ))
        })?;
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minimizers {
    pub istar: Vec<Option<NodeId>>,
    pub minimizer_sets: Vec<Vec<NodeId>>,
    pub min_deficits: Vec<u64>,
}

/// `i*(j) = argmin_{i∈In(j)} Q_ij` with ties to the highest node id, the
/// sets `K_j`, and `X_j`. Every non-source node needs an in-edge.
pub fn deficit_minimizers(deficits: &[u64], net: &Network) -> Result<Minimizers> {
    let m = minimizers_in_scope(deficits, net, &EdgeScope::full(net));
    if let Some(j) = net.non_source_nodes().find(|&j| m.istar[j].is_none()) {
        return Err(Error::Structural(format!(
            "node {j} has no in-edge; the network is not rooted at {}",
            net.source()
        )));
    }
    Ok(m)
}

pub(crate) fn minimizers_in_scope(deficits: &[u64], net: &Network, scope: &EdgeScope) -> Minimizers {
    let n = net.node_count();
    let mut istar = vec![None; n];
    let mut sets = vec![Vec::new(); n];
    let mut x = vec![0u64; n];
    for j in net.non_source_nodes() {
        let best = scope
            .in_edges(j)
            .iter()
            .map(|&id| (deficits[id], net.edge(id).tail))
            // Smallest deficit, then largest node id.
            .min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((q, i)) = best {
            istar[j] = Some(i);
            x[j] = q;
            sets[i].push(j);
        }
    }
    Minimizers {
        istar,
        minimizer_sets: sets,
        min_deficits: x,
    }
}

/// `W_ij = (X_j − Σ_{k∈K_j} X_k)^+`, shared by all in-edges of `j`.
pub fn compute_weights(min: &Minimizers, net: &Network) -> Vec<u64> {
    weights_in_scope(min, net, &EdgeScope::full(net))
}

pub(crate) fn weights_in_scope(min: &Minimizers, net: &Network, scope: &EdgeScope) -> Vec<u64> {
    let node_weight: Vec<u64> = net
        .nodes()
        .map(|j| {
            let downstream: u64 = min.minimizer_sets[j]
                .iter()
                .map(|&k| min.min_deficits[k])
                .sum();
            min.min_deficits[j].saturating_sub(downstream)
        })
        .collect();
    let mut w = vec![0u64; net.edge_count()];
    for id in scope.edges() {
        w[id] = node_weight[net.edge(id).head];
    }
    w
}

impl DeficitView {
    pub fn compute(state: &PolicyState, net: &Network) -> Result<Self> {
        let deficits = compute_deficits(state, net)?;
        let min = deficit_minimizers(&deficits, net)?;
        let weights = compute_weights(&min, net);
        Ok(DeficitView {
            deficits,
            istar: min.istar,
            minimizer_sets: min.minimizer_sets,
            min_deficits: min.min_deficits,
            weights,
        })
    }

    /// Like [`DeficitView::compute`] but restricted to `scope`; nodes the scope
    /// leaves without in-edges get `X = 0` and no minimizer.
    pub fn compute_in_scope(counts: &[u64], net: &Network, scope: &EdgeScope) -> Result<Self> {
        let deficits = deficits_in_scope(counts, net, scope)?;
        let min = minimizers_in_scope(&deficits, net, scope);
        let weights = weights_in_scope(&min, net, scope);
        Ok(DeficitView {
            deficits,
            istar: min.istar,
            minimizer_sets: min.minimizer_sets,
            min_deficits: min.min_deficits,
            weights,
        })
    }
}

/// An activation maximizing `Σ_e c_e s_e W_e`.
///
/// The result is the first maximizer in the order of
/// [`crate::graph::enumerate_activations`], but it is found without
/// enumerating: under primary interference a memoized search over sets of
/// free nodes (lowest node first, "leave unmatched" before "match through
/// edge e" in ascending id) returns the same vector. Edges of zero weight
/// never appear in that first maximizer, so only positive-weight edges enter
/// the search.
pub fn max_weight_activation(weights: &[u64], net: &Network) -> ActivationVector {
    let m = net.edge_count();
    let value = |id: EdgeId| net.edge(id).capacity as u128 * weights[id] as u128;
    match net.interference() {
        Interference::Wired => {
            if (0..m).any(|id| value(id) > 0) {
                ActivationVector::all(m)
            } else {
                ActivationVector::empty(m)
            }
        }
        Interference::Primary => {
            let positive: Vec<EdgeId> = (0..m).filter(|&id| value(id) > 0).collect();
            if positive.is_empty() {
                return ActivationVector::empty(m);
            }
            let mut nodes: Vec<NodeId> = positive
                .iter()
                .flat_map(|&id| [net.edge(id).tail, net.edge(id).head])
                .collect();
            nodes.sort_unstable();
            nodes.dedup();
            assert!(nodes.len() <= 64, "max-weight search supports at most 64 active nodes");
            let slot_of: HashMap<NodeId, usize> =
                nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            // Options per compact node: (edge, other endpoint), ascending edge id.
            let mut options = vec![Vec::new(); nodes.len()];
            for &id in &positive {
                let e = net.edge(id);
                let (t, h) = (slot_of[&e.tail], slot_of[&e.head]);
                options[t].push((id, h, value(id)));
                options[h].push((id, t, value(id)));
            }
            let mut search = MatchingSearch {
                options,
                memo: HashMap::new(),
            };
            let full = if nodes.len() == 64 {
                u64::MAX
            } else {
                (1u64 << nodes.len()) - 1
            };
            search.best(full);
            let mut chosen = Vec::new();
            let mut mask = full;
            while mask != 0 {
                let v = mask.trailing_zeros() as usize;
                let rest = mask & !(1u64 << v);
                let target = search.best(mask);
                if search.best(rest) == target {
                    mask = rest;
                    continue;
                }
                let (id, u) = search.options[v]
                    .clone()
                    .into_iter()
                    .find(|&(_, u, w)| rest >> u & 1 == 1 && w + search.best(rest & !(1u64 << u)) == target)
                    .map(|(id, u, _)| (id, u))
                    .expect("optimal option exists");
                chosen.push(id);
                mask = rest & !(1u64 << u);
            }
            ActivationVector::from_edges(m, &chosen)
        }
    }
}

struct MatchingSearch {
    options: Vec<Vec<(EdgeId, usize, u128)>>,
    memo: HashMap<u64, u128>,
}

impl MatchingSearch {
    fn best(&mut self, mask: u64) -> u128 {
        if mask == 0 {
            return 0;
        }
        if let Some(&v) = self.memo.get(&mask) {
            return v;
        }
        let v = mask.trailing_zeros() as usize;
        let rest = mask & !(1u64 << v);
        let mut best = self.best(rest);
        for i in 0..self.options[v].len() {
            let (_, u, w) = self.options[v][i];
            if rest >> u & 1 == 1 {
                best = best.max(w + self.best(rest & !(1u64 << u)));
            }
        }
        self.memo.insert(mask, best);
        best
    }
}

/// Packets `first..=last` (1-based indices) crossed `edge` this slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub edge: EdgeId,
    pub first: u64,
    pub last: u64,
}

impl Transfer {
    pub fn packets(&self) -> u64 {
        self.last + 1 - self.first
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotDecision {
    pub activation: ActivationVector,
    pub transfers: Vec<Transfer>,
    pub arrivals: u64,
}

/// Pulls packets over the activated in-edges of every node in scope and
/// assigns each edge a disjoint, contiguous range. Returns the transfers and
/// per-node receive counts; counters are not modified.
pub(crate) fn plan_pulls(
    counts: &[u64],
    net: &Network,
    scope: &EdgeScope,
    min_deficits: &[u64],
    active: impl Fn(EdgeId) -> bool,
) -> (Vec<Transfer>, Vec<u64>) {
    let mut transfers = Vec::new();
    let mut gained = vec![0u64; net.node_count()];
    for j in net.non_source_nodes() {
        let mut budget = min_deficits[j];
        let mut next = counts[j] + 1;
        for &id in scope.in_edges(j) {
            if budget == 0 {
                break;
            }
            if !active(id) {
                continue;
            }
            let take = net.edge(id).capacity.min(budget);
            if take == 0 {
                continue;
            }
            transfers.push(Transfer {
                edge: id,
                first: next,
                last: next + take - 1,
            });
            next += take;
            budget -= take;
            gained[j] += take;
        }
    }
    (transfers, gained)
}

/// Forwarding and counter update for one slot.
pub fn apply_forwarding(
    state: &mut PolicyState,
    net: &Network,
    view: &DeficitView,
    activation: &ActivationVector,
    arrivals: u64,
    slot: u64,
) -> Result<SlotDecision> {
    if activation.len() != net.edge_count() || !crate::graph::is_feasible(net, activation) {
        return Err(Error::Domain(format!(
            "activation {:?} is not feasible",
            activation.edge_ids()
        )));
    }
    let scope = EdgeScope::full(net);
    let (transfers, gained) = plan_pulls(
        &state.counts,
        net,
        &scope,
        &view.min_deficits,
        |id| activation.is_active(id),
    );
    commit(state, net, &gained, slot)?;
    state.admit(arrivals, slot);
    Ok(SlotDecision {
        activation: activation.clone(),
        transfers,
        arrivals,
    })
}

/// Applies receive counts and re-checks `R_j ≤ R_i` on every edge.
pub(crate) fn commit(state: &mut PolicyState, net: &Network, gained: &[u64], slot: u64) -> Result<()> {
    for j in net.non_source_nodes() {
        if gained[j] == 0 {
            continue;
        }
        state.counts[j] += gained[j];
        if state.counts[j] > state.counts[state.source] {
            return Err(Error::Invariant(format!(
                "node {j} would hold packet {} before the source",
                state.counts[j]
            )));
        }
        let d = &mut state.delivery_slots[j];
        d.extend(std::iter::repeat_n(slot, gained[j] as usize));
        if d.len() as u64 != state.counts[j] {
            return Err(Error::Invariant(format!("duplicate delivery at node {j}")));
        }
    }
    Ok(())
}

/// Checks `R_j ≤ R_i` for every edge in scope.
pub(crate) fn check_order(counts: &[u64], net: &Network, scope: &EdgeScope) -> Result<()> {
    deficits_in_scope(counts, net, scope).map(|_| ())
}

/// Everything one slot produced, for tracing and invariant checks.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    pub view: DeficitView,
    pub decision: SlotDecision,
}

/// One full slot of the policy.
pub fn policy_step(
    state: &mut PolicyState,
    net: &Network,
    arrivals: u64,
    slot: u64,
) -> Result<SlotOutcome> {
    let view = DeficitView::compute(state, net)?;
    let activation = max_weight_activation(&view.weights, net);
    let decision = apply_forwarding(state, net, &view, &activation, arrivals, slot)?;
    check_order(&state.counts, net, &EdgeScope::full(net))?;
    Ok(SlotOutcome { view, decision })
}

/// Verifies the one-slot bound on the minimum deficits:
/// `X_j(t+1) ≤ (X_j(t) − Σ_k μ_kj)^+ + Σ_m μ_{m i*}`, reading the inflow of
/// the source as the slot's arrivals. `service[e]` is `c_e` if edge `e` was
/// activated (for this scope) and 0 otherwise.
pub fn check_drift_bound(
    net: &Network,
    scope: &EdgeScope,
    before: &DeficitView,
    after: &DeficitView,
    service: &[u64],
    arrivals: u64,
) -> Result<()> {
    let inflow = |v: NodeId| -> u64 {
        if v == net.source() {
            arrivals
        } else {
            scope.in_edges(v).iter().map(|&id| service[id]).sum()
        }
    };
    for j in net.non_source_nodes() {
        let Some(i) = before.istar[j] else { continue };
        let bound = before.min_deficits[j].saturating_sub(inflow(j)) + inflow(i);
        if after.min_deficits[j] > bound {
            return Err(Error::Invariant(format!(
                "node {j}: X(t+1) = {} exceeds drift bound {bound}",
                after.min_deficits[j]
            )));
        }
    }
    Ok(())
}

/// JSON-lines trace record for one slot.
#[derive(Debug, Serialize)]
pub struct TraceRecord<'a> {
    pub slot: u64,
    #[serde(rename = "R")]
    pub counts: &'a [u64],
    #[serde(rename = "X")]
    pub min_deficits: &'a [u64],
    #[serde(rename = "W")]
    pub weights: &'a [u64],
    pub activation: &'a ActivationVector,
    pub transfers: &'a [Transfer],
}
