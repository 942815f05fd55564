//! Independent oracles and trace checkers shared by the integration tests.
#![allow(dead_code)]

use dagcast::graph::{ActivationVector, Interference, Network};
use dagcast::multiclass::{MulticlassSlot, MulticlassState};
use dagcast::policy::{check_drift_bound, DeficitView, EdgeScope, PolicyState, SlotOutcome, Transfer};
use dagcast::rng::SplitMix64;
use dagcast::sim::SlotEvent;
use dagcast::trees::{TreePolicyState, TreeSlot};

/// Random DAG on `2..=max_nodes` nodes with ids in topological order. Every
/// non-source node gets one in-edge from a lower id, then extra forward edges
/// (parallel edges allowed) up to `max_edges`.
pub fn random_dag(
    rng: &mut SplitMix64,
    max_nodes: usize,
    max_edges: usize,
    caps: &[u64],
    interference: Interference,
) -> Network {
    let n = 2 + rng.below(max_nodes as u64 - 1) as usize;
    let cap = |rng: &mut SplitMix64| caps[rng.below(caps.len() as u64) as usize];
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.below(v as u64) as usize;
        edges.push((u, v, cap(rng)));
    }
    let target = edges.len() + rng.below((max_edges - edges.len()) as u64 + 1) as usize;
    while edges.len() < target {
        let a = rng.below(n as u64) as usize;
        let b = rng.below(n as u64) as usize;
        if a == b {
            continue;
        }
        let (u, v) = (a.min(b), a.max(b));
        edges.push((u, v, cap(rng)));
    }
    Network::from_triples(n, 0, interference, &edges).unwrap()
}

/// Like [`random_dag`] but always fills up to `edges` edges, giving larger
/// in-degrees.
pub fn random_dense_dag(rng: &mut SplitMix64, max_nodes: usize, edges: usize) -> Network {
    let n = 2 + rng.below(max_nodes as u64 - 1) as usize;
    let mut list = Vec::new();
    for v in 1..n {
        let u = rng.below(v as u64) as usize;
        list.push((u, v, 1));
    }
    while list.len() < edges {
        let v = 1 + rng.below(n as u64 - 1) as usize;
        let u = rng.below(v as u64) as usize;
        list.push((u, v, 1));
    }
    Network::from_triples(n, 0, Interference::Primary, &list).unwrap()
}

/// Every edge subset that is a matching (or every subset if wired).
pub fn brute_force_activations(net: &Network) -> Vec<Vec<bool>> {
    let m = net.edge_count();
    assert!(m <= 20, "subset scan too large");
    let mut out = Vec::new();
    for mask in 0u32..(1 << m) {
        let bits: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
        if net.interference() == Interference::Primary {
            let mut used = vec![false; net.node_count()];
            let mut ok = true;
            for (id, &on) in bits.iter().enumerate() {
                if on {
                    let e = net.edge(id);
                    if used[e.tail] || used[e.head] {
                        ok = false;
                        break;
                    }
                    used[e.tail] = true;
                    used[e.head] = true;
                }
            }
            if !ok {
                continue;
            }
        }
        out.push(bits);
    }
    out
}

fn value(net: &Network, weights: &[u64], id: usize) -> u128 {
    net.edge(id).capacity as u128 * weights[id] as u128
}

/// Maximum of `Σ c_e s_e W_e` over all feasible activations, by a bitmask DP
/// over node sets (primary) or by summing everything (wired).
pub fn max_weight_value(net: &Network, weights: &[u64]) -> u128 {
    if net.interference() == Interference::Wired {
        return (0..net.edge_count()).map(|id| value(net, weights, id)).sum();
    }
    let n = net.node_count();
    assert!(n <= 20);
    // Best single edge value per unordered pair.
    let mut pair = vec![0u128; n * n];
    for id in 0..net.edge_count() {
        let e = net.edge(id);
        let v = value(net, weights, id);
        for (a, b) in [(e.tail, e.head), (e.head, e.tail)] {
            pair[a * n + b] = pair[a * n + b].max(v);
        }
    }
    let mut best = vec![0u128; 1 << n];
    for mask in 1usize..(1 << n) {
        let v = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << v);
        let mut b = best[rest];
        let mut others = rest;
        while others != 0 {
            let u = others.trailing_zeros() as usize;
            others &= others - 1;
            let w = pair[v * n + u];
            if w > 0 {
                b = b.max(w + best[rest & !(1 << u)]);
            }
        }
        best[mask] = b;
    }
    best[(1 << n) - 1]
}

/// Maximum weight by scanning every feasible edge subset.
pub fn max_weight_brute_force(net: &Network, weights: &[u64]) -> u128 {
    brute_force_activations(net)
        .iter()
        .map(|bits| {
            bits.iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(id, _)| value(net, weights, id))
                .sum()
        })
        .max()
        .unwrap_or(0)
}

pub fn activation_value(net: &Network, s: &ActivationVector, weights: &[u64]) -> u128 {
    s.active_edges().map(|id| value(net, weights, id)).sum()
}

/// Minimum in-degree over non-source nodes, counting parallel edges.
pub fn min_in_degree_oracle(net: &Network) -> usize {
    let mut deg = vec![0usize; net.node_count()];
    for e in net.edges() {
        deg[e.head] += 1;
    }
    (0..net.node_count())
        .filter(|&v| v != net.source())
        .map(|v| deg[v])
        .min()
        .unwrap()
}

/// Per-slot invariant checks on simulation traces. Violations are counted and
/// the first few messages kept.
#[derive(Default)]
pub struct TraceChecker {
    pub slots: u64,
    pub violations: u64,
    pub messages: Vec<String>,
    prev_counts: Vec<Vec<u64>>,
}

impl TraceChecker {
    pub fn new() -> Self {
        Self::default()
    }

    fn fail(&mut self, msg: String) {
        self.violations += 1;
        if self.messages.len() < 5 {
            self.messages.push(msg);
        }
    }

    pub fn ok(&self) -> bool {
        self.violations == 0 && self.slots > 0
    }

    pub fn observe(&mut self, net: &Network, event: SlotEvent<'_>) {
        self.slots += 1;
        match event {
            SlotEvent::PiStar { slot, outcome, state } => self.pi_star(net, slot, outcome, state),
            SlotEvent::Multiclass { slot, outcome, state } => {
                self.multiclass(net, slot, outcome, state)
            }
            SlotEvent::Tree { slot, outcome, state } => self.tree(net, slot, outcome, state),
        }
    }

    fn weight_is_maximal(&mut self, net: &Network, slot: u64, s: &ActivationVector, w: &[u64]) {
        let chosen = activation_value(net, s, w);
        let best = if net.edge_count() <= 12 {
            max_weight_brute_force(net, w)
        } else {
            max_weight_value(net, w)
        };
        if chosen != best {
            self.fail(format!("slot {slot}: activation weight {chosen} < optimum {best}"));
        }
    }

    /// Checks one class (or the whole DAG): deficits, drift bound, in-order
    /// contiguous transfers and delivery bookkeeping.
    #[allow(clippy::too_many_arguments)]
    fn class_slot(
        &mut self,
        net: &Network,
        slot: u64,
        class: usize,
        scope: &EdgeScope,
        before: &DeficitView,
        state: &PolicyState,
        transfers: &[Transfer],
        carried: impl Fn(usize) -> bool,
        arrivals: u64,
    ) {
        let counts = state.counts();
        let prev = self.prev_counts[class].clone();
        for id in scope.edges() {
            let e = net.edge(id);
            if counts[e.head] > counts[e.tail] {
                self.fail(format!("slot {slot} class {class}: negative deficit on edge {id}"));
            }
        }
        match DeficitView::compute_in_scope(counts, net, scope) {
            Ok(after) => {
                let service: Vec<u64> = (0..net.edge_count())
                    .map(|id| if carried(id) { net.edge(id).capacity } else { 0 })
                    .collect();
                if let Err(e) = check_drift_bound(net, scope, before, &after, &service, arrivals) {
                    self.fail(format!("slot {slot} class {class}: {e}"));
                }
            }
            Err(e) => self.fail(format!("slot {slot} class {class}: {e}")),
        }
        for j in net.nodes() {
            if j == net.source() {
                if counts[j] != prev[j] + arrivals {
                    self.fail(format!("slot {slot} class {class}: source count mismatch"));
                }
                continue;
            }
            let mut next = prev[j] + 1;
            for t in transfers.iter().filter(|t| net.edge(t.edge).head == j) {
                if !carried(t.edge) || t.first != next || t.last < t.first {
                    self.fail(format!("slot {slot} class {class}: bad transfer {t:?} into {j}"));
                }
                if t.packets() > net.edge(t.edge).capacity {
                    self.fail(format!("slot {slot} class {class}: transfer over capacity"));
                }
                next = t.last + 1;
            }
            if next - 1 != counts[j] {
                self.fail(format!(
                    "slot {slot} class {class}: node {j} holds {} but transfers end at {}",
                    counts[j],
                    next - 1
                ));
            }
            if state.delivery_slots(j).len() as u64 != counts[j] {
                self.fail(format!("slot {slot} class {class}: delivery log mismatch at {j}"));
            }
        }
        self.prev_counts[class] = counts.to_vec();
    }

    fn pi_star(&mut self, net: &Network, slot: u64, outcome: &SlotOutcome, state: &PolicyState) {
        if self.prev_counts.is_empty() {
            self.prev_counts = vec![vec![0; net.node_count()]];
        }
        let scope = EdgeScope::full(net);
        let active = &outcome.decision.activation;
        self.class_slot(
            net,
            slot,
            0,
            &scope,
            &outcome.view,
            state,
            &outcome.decision.transfers,
            |id| active.is_active(id),
            outcome.decision.arrivals,
        );
        self.weight_is_maximal(net, slot, active, &outcome.view.weights);
    }

    fn multiclass(
        &mut self,
        net: &Network,
        slot: u64,
        outcome: &MulticlassSlot,
        state: &MulticlassState,
    ) {
        let k = state.classes().len();
        if self.prev_counts.is_empty() {
            self.prev_counts = vec![vec![0; net.node_count()]; k];
        }
        for class in 0..k {
            let transfers: Vec<Transfer> = outcome
                .transfers
                .iter()
                .filter(|(c, _)| *c == class)
                .map(|&(_, t)| t)
                .collect();
            let admitted = outcome.admitted_to.iter().filter(|&&c| c == class).count() as u64;
            self.class_slot(
                net,
                slot,
                class,
                state.scope(class),
                &outcome.views[class],
                state.class_state(class),
                &transfers,
                |id| outcome.activation.is_active(id) && outcome.combined[id].1 == Some(class),
                admitted,
            );
        }
        let w: Vec<u64> = outcome.combined.iter().map(|&(w, _)| w).collect();
        self.weight_is_maximal(net, slot, &outcome.activation, &w);
        for v in net.nodes() {
            if state.received(v) > state.arrivals() {
                self.fail(format!("slot {slot}: node {v} holds more packets than arrived"));
            }
        }
    }

    fn tree(&mut self, net: &Network, slot: u64, outcome: &TreeSlot, state: &TreePolicyState) {
        self.weight_is_maximal(net, slot, &outcome.activation, &outcome.weights);
        for &(_, id, n) in &outcome.moves {
            if !outcome.activation.is_active(id) {
                self.fail(format!("slot {slot}: packets moved on inactive edge {id}"));
            }
            if n > net.edge(id).capacity {
                self.fail(format!("slot {slot}: edge {id} moved {n} packets"));
            }
        }
        let moved_on = |id: usize| -> u64 {
            outcome.moves.iter().filter(|m| m.1 == id).map(|m| m.2).sum()
        };
        for id in 0..net.edge_count() {
            if moved_on(id) > net.edge(id).capacity {
                self.fail(format!("slot {slot}: edge {id} over capacity"));
            }
        }
        for v in net.nodes() {
            if state.received()[v] > state.arrivals() {
                self.fail(format!("slot {slot}: node {v} received more than arrived"));
            }
        }
    }
}
