//! Multiclass broadcast for arbitrary topologies.
//!
//! Each class is a source-first node permutation; its edges are those that go
//! forward in the permutation, so every class sees a DAG. Every class runs its
//! own copy of the deficit policy on its DAG. Per slot:
//!
//! - each edge takes the largest class weight among classes containing it
//!   (ties to the lowest class index) and remembers the winning class;
//! - one activation maximizes the combined weights;
//! - an activated edge carries packets of its winning class only;
//! - arrivals join, one at a time, the class whose source minimizer set has
//!   the smallest summed minimum deficit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ActivationVector, EdgeId, Network, NodeId};
use crate::policy::{
    commit, check_order, max_weight_activation, plan_pulls, DeficitView, EdgeScope, PolicyState,
    Transfer,
};
use crate::rng::SplitMix64;

/// A source-first permutation and the edges it orients forward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ClassSpec {
    permutation: Vec<NodeId>,
    #[serde(skip)]
    edges: Vec<EdgeId>,
}

impl ClassSpec {
    pub fn from_permutation(net: &Network, permutation: Vec<NodeId>) -> Result<Self> {
        let n = net.node_count();
        let mut rank = vec![usize::MAX; n];
        for (pos, &v) in permutation.iter().enumerate() {
            if v >= n || rank[v] != usize::MAX {
                return Err(Error::Domain(format!(
                    "{permutation:?} is not a permutation of 0..{n}"
                )));
            }
            rank[v] = pos;
        }
        if permutation.len() != n {
            return Err(Error::Domain(format!(
                "{permutation:?} is not a permutation of 0..{n}"
            )));
        }
        if permutation[0] != net.source() {
            return Err(Error::Domain(format!(
                "class permutation must start with the source {}",
                net.source()
            )));
        }
        let edges = net
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| rank[e.tail] < rank[e.head])
            .map(|(id, _)| id)
            .collect();
        Ok(ClassSpec { permutation, edges })
    }

    pub fn permutation(&self) -> &[NodeId] {
        &self.permutation
    }

    /// Edge ids of the class DAG, ascending.
    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    /// Non-source nodes the class cannot reach because no class edge enters them.
    pub fn unreachable_nodes(&self, net: &Network) -> Vec<NodeId> {
        let mut entered = vec![false; net.node_count()];
        for &id in &self.edges {
            entered[net.edge(id).head] = true;
        }
        net.non_source_nodes().filter(|&v| !entered[v]).collect()
    }
}

/// `k` permutations with the source first and the rest uniformly shuffled.
///
/// All classes come from one seeded stream, so the list for `k` is a prefix of
/// the list for `k + 1`.
pub fn make_classes(net: &Network, k: usize, seed: u64) -> Result<Vec<ClassSpec>> {
    if k == 0 {
        return Err(Error::Domain("number of classes must be at least 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    (0..k)
        .map(|_| {
            let mut rest: Vec<NodeId> = net.non_source_nodes().collect();
            rng.shuffle(&mut rest);
            let mut perm = vec![net.source()];
            perm.extend(rest);
            ClassSpec::from_permutation(net, perm)
        })
        .collect()
}

/// Index of the smallest admission sum, ties to the lowest index. `None`
/// marks a class that cannot take packets. Returns `None` if no class can.
pub fn admit_packet(sums: &[Option<u64>]) -> Option<usize> {
    sums.iter()
        .enumerate()
        .filter_map(|(l, s)| s.map(|s| (s, l)))
        .min()
        .map(|(_, l)| l)
}

/// Per-edge maximum weight over the classes containing the edge, with the
/// winning class (ties to the lowest index). Edges in no class get `(0, None)`.
pub fn combined_weights(
    views: &[DeficitView],
    classes: &[ClassSpec],
    net: &Network,
) -> Vec<(u64, Option<usize>)> {
    let mut out = vec![(0u64, None); net.edge_count()];
    for (k, (view, class)) in views.iter().zip(classes).enumerate() {
        for &id in class.edges() {
            let w = view.weights[id];
            match out[id] {
                (_, None) => out[id] = (w, Some(k)),
                (best, Some(_)) if w > best => out[id] = (w, Some(k)),
                _ => {}
            }
        }
    }
    out
}

/// Per-class counters for the multiclass policy.
#[derive(Debug, Clone)]
pub struct MulticlassState {
    classes: Vec<ClassSpec>,
    scopes: Vec<EdgeScope>,
    states: Vec<PolicyState>,
    admitted: Vec<u64>,
    /// Classes that leave some node without an in-edge; they receive no arrivals.
    dead: Vec<bool>,
}

/// Everything one multiclass slot produced.
#[derive(Debug, Clone)]
pub struct MulticlassSlot {
    /// Per-class views at the start of the slot.
    pub views: Vec<DeficitView>,
    pub combined: Vec<(u64, Option<usize>)>,
    pub activation: ActivationVector,
    /// `(class, transfer)` pairs.
    pub transfers: Vec<(usize, Transfer)>,
    /// Class chosen for each arrival, in order.
    pub admitted_to: Vec<usize>,
}

impl MulticlassState {
    pub fn new(net: &Network, classes: Vec<ClassSpec>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Domain("multiclass policy needs at least one class".into()));
        }
        let dead: Vec<bool> = classes
            .iter()
            .map(|c| !c.unreachable_nodes(net).is_empty())
            .collect();
        if dead.iter().all(|&d| d) {
            return Err(Error::Domain(
                "every class leaves some node without an in-edge".into(),
            ));
        }
        Ok(MulticlassState {
            scopes: classes.iter().map(|c| EdgeScope::subset(net, c.edges())).collect(),
            states: classes.iter().map(|_| PolicyState::new(net)).collect(),
            admitted: vec![0; classes.len()],
            dead,
            classes,
        })
    }

    pub fn classes(&self) -> &[ClassSpec] {
        &self.classes
    }

    pub fn class_state(&self, k: usize) -> &PolicyState {
        &self.states[k]
    }

    pub fn scope(&self, k: usize) -> &EdgeScope {
        &self.scopes[k]
    }

    pub fn admitted(&self) -> &[u64] {
        &self.admitted
    }

    /// Indices of classes excluded from admission.
    pub fn dead_classes(&self) -> Vec<usize> {
        (0..self.dead.len()).filter(|&k| self.dead[k]).collect()
    }

    /// Total distinct packets held by `v` across classes.
    pub fn received(&self, v: NodeId) -> u64 {
        self.states.iter().map(|s| s.count(v)).sum()
    }

    pub fn views(&self, net: &Network) -> Result<Vec<DeficitView>> {
        self.states
            .iter()
            .zip(&self.scopes)
            .map(|(s, scope)| DeficitView::compute_in_scope(s.counts(), net, scope))
            .collect()
    }

    /// `Σ_{j∈K_r} X_j` per class, `None` for dead classes.
    pub fn admission_sums(&self, net: &Network, views: &[DeficitView]) -> Vec<Option<u64>> {
        let r = net.source();
        views
            .iter()
            .zip(&self.dead)
            .map(|(v, &dead)| {
                (!dead).then(|| v.minimizer_sets[r].iter().map(|&j| v.min_deficits[j]).sum())
            })
            .collect()
    }

    /// Delays of packets every node holds, over all classes.
    pub fn delays(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for s in &self.states {
            for p in 1..=s.delivered_everywhere() {
                let done = s.completion_slot(p).expect("delivered everywhere");
                out.push(done - s.arrival_slots()[p as usize - 1]);
            }
        }
        out
    }

    pub fn arrivals(&self) -> u64 {
        self.admitted.iter().sum()
    }

    pub fn step(&mut self, net: &Network, arrivals: u64, slot: u64) -> Result<MulticlassSlot> {
        let views = self.views(net)?;
        let combined = combined_weights(&views, &self.classes, net);
        let weights: Vec<u64> = combined.iter().map(|&(w, _)| w).collect();
        let activation = max_weight_activation(&weights, net);

        let mut transfers = Vec::new();
        #[allow(clippy::needless_range_loop)]
        for k in 0..self.classes.len() {
            let (planned, gained) = plan_pulls(
                self.states[k].counts(),
                net,
                &self.scopes[k],
                &views[k].min_deficits,
                |id| activation.is_active(id) && combined[id].1 == Some(k),
            );
            commit(&mut self.states[k], net, &gained, slot)?;
            transfers.extend(planned.into_iter().map(|t| (k, t)));
        }

        let mut sums = self.admission_sums(net, &views);
        let r = net.source();
        let mut admitted_to = Vec::with_capacity(arrivals as usize);
        for _ in 0..arrivals {
            let l = admit_packet(&sums).expect("at least one live class");
            self.states[l].admit(1, slot);
            self.admitted[l] += 1;
            if let Some(s) = sums[l].as_mut() {
                *s += views[l].minimizer_sets[r].len() as u64;
            }
            admitted_to.push(l);
        }
        for (s, scope) in self.states.iter().zip(&self.scopes) {
            check_order(s.counts(), net, scope)?;
        }
        Ok(MulticlassSlot {
            views,
            combined,
            activation,
            transfers,
            admitted_to,
        })
    }
}
