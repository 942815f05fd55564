//! Spanning arborescences: enumeration, counting, edge-disjoint packing, the
//! two-tree edge exchange, capacity restricted to a tree set, and a
//! tree-based baseline policy.

mod baseline;

pub use baseline::{TreePolicyState, TreeSlot};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{enumerate_activations_with_cap, EdgeId, Network, NodeId};
use crate::lp::LinearProgram;
use crate::rng::SplitMix64;

/// Size limits for the exhaustive packing search.
pub const PACKING_NODE_LIMIT: usize = 8;
pub const PACKING_EDGE_LIMIT: usize = 16;
/// Edge limit for activation enumeration on the union of a tree set.
pub const TREE_UNION_EDGE_LIMIT: usize = 48;

/// A spanning arborescence rooted at the network source, stored as sorted
/// edge ids. Serializes as that array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Arborescence {
    edges: Vec<EdgeId>,
}

impl Arborescence {
    /// Validates that `edges` form a spanning arborescence rooted at the source.
    pub fn new(net: &Network, mut edges: Vec<EdgeId>) -> Result<Self> {
        edges.sort_unstable();
        edges.dedup();
        if !is_arborescence(net, &edges) {
            return Err(Error::Domain(format!(
                "edges {edges:?} do not form a spanning arborescence rooted at {}",
                net.source()
            )));
        }
        Ok(Arborescence { edges })
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn contains(&self, id: EdgeId) -> bool {
        self.edges.binary_search(&id).is_ok()
    }

    /// The in-edge of every node (`None` for the root).
    pub fn parent_edges(&self, net: &Network) -> Vec<Option<EdgeId>> {
        let mut parent = vec![None; net.node_count()];
        for &id in &self.edges {
            parent[net.edge(id).head] = Some(id);
        }
        parent
    }

    /// Out-edges of every node inside the tree.
    pub fn child_edges(&self, net: &Network) -> Vec<Vec<EdgeId>> {
        let mut children = vec![Vec::new(); net.node_count()];
        for &id in &self.edges {
            children[net.edge(id).tail].push(id);
        }
        children
    }
}

/// One in-edge per non-root node, none into the root, and every node reachable
/// from the root.
pub fn is_arborescence(net: &Network, edges: &[EdgeId]) -> bool {
    let n = net.node_count();
    if edges.len() != n - 1 || edges.iter().any(|&id| id >= net.edge_count()) {
        return false;
    }
    let mut parent = vec![None; n];
    for &id in edges {
        let h = net.edge(id).head;
        if h == net.source() || parent[h].is_some() {
            return false;
        }
        parent[h] = Some(net.edge(id).tail);
    }
    // n - 1 distinct heads, none the root: every other node has a parent.
    (0..n).all(|v| {
        let mut u = v;
        for _ in 0..n {
            match parent[u] {
                None => return u == net.source(),
                Some(p) => u = p,
            }
        }
        false
    })
}

/// Pairwise edge-disjoint arborescences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct TreePacking {
    trees: Vec<Arborescence>,
}

impl TreePacking {
    pub fn new(trees: Vec<Arborescence>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (k, t) in trees.iter().enumerate() {
            for &id in t.edges() {
                if !seen.insert(id) {
                    return Err(Error::Domain(format!(
                        "edge {id} appears in tree {k} and an earlier tree"
                    )));
                }
            }
        }
        Ok(TreePacking { trees })
    }

    pub fn trees(&self) -> &[Arborescence] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }
}

/// Would giving `v` the parent `u` in a tree described by `parent` close a
/// cycle?
fn closes_cycle(parent: &[Option<NodeId>], v: NodeId, u: NodeId) -> bool {
    let mut w = u;
    loop {
        if w == v {
            return true;
        }
        match parent[w] {
            Some(p) => w = p,
            None => return false,
        }
    }
}

/// All spanning arborescences rooted at the source, choosing in-edges for
/// nodes in ascending id order and edges in ascending id order. Fails once
/// more than `cap` trees are found.
pub fn enumerate_arborescences(net: &Network, cap: usize) -> Result<Vec<Arborescence>> {
    let in_edges = net.in_edges();
    let order: Vec<NodeId> = net.non_source_nodes().collect();
    let mut parent = vec![None; net.node_count()];
    let mut chosen = Vec::with_capacity(order.len());
    let mut out = Vec::new();
    enumerate_rec(net, &in_edges, &order, 0, &mut parent, &mut chosen, &mut out, cap)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_rec(
    net: &Network,
    in_edges: &[Vec<EdgeId>],
    order: &[NodeId],
    depth: usize,
    parent: &mut [Option<NodeId>],
    chosen: &mut Vec<EdgeId>,
    out: &mut Vec<Arborescence>,
    cap: usize,
) -> Result<()> {
    let Some(&v) = order.get(depth) else {
        if out.len() == cap {
            return Err(Error::limit(
                "arborescence enumeration",
                cap,
                Some(out.len() as u128 + 1),
            ));
        }
        let mut edges = chosen.clone();
        edges.sort_unstable();
        out.push(Arborescence { edges });
        return Ok(());
    };
    for &id in &in_edges[v] {
        let u = net.edge(id).tail;
        if closes_cycle(parent, v, u) {
            continue;
        }
        parent[v] = Some(u);
        chosen.push(id);
        enumerate_rec(net, in_edges, order, depth + 1, parent, chosen, out, cap)?;
        chosen.pop();
        parent[v] = None;
    }
    Ok(())
}

/// Number of spanning arborescences rooted at the source: the determinant of
/// the in-degree Laplacian with the root's row and column removed.
pub fn count_arborescences(net: &Network) -> Result<u128> {
    let n = net.node_count();
    let others: Vec<NodeId> = net.non_source_nodes().collect();
    if others.is_empty() {
        return Ok(1);
    }
    let mut index = vec![usize::MAX; n];
    for (i, &v) in others.iter().enumerate() {
        index[v] = i;
    }
    let k = others.len();
    let mut lap = vec![vec![0i128; k]; k];
    for e in net.edges() {
        if e.head == net.source() {
            continue;
        }
        let h = index[e.head];
        lap[h][h] += 1;
        if e.tail != net.source() {
            lap[index[e.tail]][h] -= 1;
        }
    }
    let det = bareiss_determinant(lap)?;
    u128::try_from(det).map_err(|_| Error::Invariant(format!("negative tree count {det}")))
}

/// Fraction-free Gaussian elimination; exact for integer matrices.
fn bareiss_determinant(mut a: Vec<Vec<i128>>) -> Result<i128> {
    let n = a.len();
    let overflow = || Error::limit("arborescence count exceeds 128-bit range", 128, None);
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            let Some(swap) = (k + 1..n).find(|&i| a[i][k] != 0) else {
                return Ok(0);
            };
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = a[i][j]
                    .checked_mul(a[k][k])
                    .and_then(|x| a[i][k].checked_mul(a[k][j]).and_then(|y| x.checked_sub(y)))
                    .ok_or_else(overflow)?;
                a[i][j] = num / prev;
            }
        }
        prev = a[k][k];
    }
    Ok(sign * a[n - 1][n - 1])
}

/// A maximum set of edge-disjoint spanning arborescences, found by exhaustive
/// backtracking over in-edge assignments. Edges must have unit capacity
/// (split larger capacities with [`Network::expand_unit_edges`] first).
pub fn max_disjoint_packing(net: &Network) -> Result<TreePacking> {
    if net.node_count() > PACKING_NODE_LIMIT {
        return Err(Error::limit(
            "packing search node count",
            PACKING_NODE_LIMIT,
            Some(net.node_count() as u128),
        ));
    }
    if net.edge_count() > PACKING_EDGE_LIMIT {
        return Err(Error::limit(
            "packing search edge count",
            PACKING_EDGE_LIMIT,
            Some(net.edge_count() as u128),
        ));
    }
    if let Some(id) = net.edges().iter().position(|e| e.capacity != 1) {
        return Err(Error::Precondition(format!(
            "edge {id} has capacity {}; packing expects unit edges",
            net.edge(id).capacity
        )));
    }
    if net.node_count() == 1 {
        return TreePacking::new(Vec::new());
    }
    let in_edges = net.in_edges();
    let mut order: Vec<NodeId> = net.non_source_nodes().collect();
    order.sort_by_key(|&v| (in_edges[v].len(), v));
    let upper = order.iter().map(|&v| in_edges[v].len()).min().unwrap_or(0);

    for k in (1..=upper).rev() {
        let mut search = PackingSearch {
            net,
            in_edges: &in_edges,
            order: &order,
            k,
            parents: vec![vec![None; net.node_count()]; k],
            assigned: vec![vec![None; net.node_count()]; k],
        };
        if search.run(0) {
            let trees = (0..k)
                .map(|t| {
                    let edges: Vec<EdgeId> = search.assigned[t].iter().flatten().copied().collect();
                    Arborescence::new(net, edges)
                })
                .collect::<Result<Vec<_>>>()?;
            return TreePacking::new(trees);
        }
    }
    TreePacking::new(Vec::new())
}

struct PackingSearch<'a> {
    net: &'a Network,
    in_edges: &'a [Vec<EdgeId>],
    order: &'a [NodeId],
    k: usize,
    /// Per tree, per node: parent node.
    parents: Vec<Vec<Option<NodeId>>>,
    /// Per tree, per node: chosen in-edge.
    assigned: Vec<Vec<Option<EdgeId>>>,
}

impl PackingSearch<'_> {
    fn run(&mut self, depth: usize) -> bool {
        let Some(&v) = self.order.get(depth) else {
            return true;
        };
        let mut used = vec![false; self.in_edges[v].len()];
        // Trees are interchangeable until the first node is placed, so the
        // first node only tries increasing edge assignments.
        self.assign(v, depth, 0, &mut used, depth == 0, 0)
    }

    fn assign(
        &mut self,
        v: NodeId,
        depth: usize,
        tree: usize,
        used: &mut [bool],
        canonical: bool,
        min_slot: usize,
    ) -> bool {
        if tree == self.k {
            return self.run(depth + 1);
        }
        let start = if canonical { min_slot } else { 0 };
        for slot in start..self.in_edges[v].len() {
            if used[slot] {
                continue;
            }
            let id = self.in_edges[v][slot];
            let u = self.net.edge(id).tail;
            if closes_cycle(&self.parents[tree], v, u) {
                continue;
            }
            used[slot] = true;
            self.parents[tree][v] = Some(u);
            self.assigned[tree][v] = Some(id);
            if self.assign(v, depth, tree + 1, used, canonical, slot + 1) {
                return true;
            }
            self.parents[tree][v] = None;
            self.assigned[tree][v] = None;
            used[slot] = false;
        }
        false
    }
}

/// Makes sure no tree uses both `(a, b)` and `(b, c)`.
///
/// If a tree `t1` holds both, another tree `t2` reaches `b` through some
/// `(d, b)`; the two trees trade `(a, b)` and `(d, b)`. Each candidate `t2` is
/// tried in order and the first exchange that leaves two valid arborescences
/// is kept.
pub fn exchange_packing_edges(
    net: &Network,
    packing: &TreePacking,
    a: NodeId,
    b: NodeId,
    c: NodeId,
) -> Result<TreePacking> {
    if packing.len() < 2 {
        return Err(Error::Precondition(format!(
            "edge exchange needs at least two trees, got {}",
            packing.len()
        )));
    }
    let holds = |t: &Arborescence, tail: NodeId, head: NodeId| {
        t.edges()
            .iter()
            .copied()
            .find(|&id| net.edge(id).tail == tail && net.edge(id).head == head)
    };
    let Some((t1, ab)) = packing.trees().iter().enumerate().find_map(|(k, t)| {
        let ab = holds(t, a, b)?;
        holds(t, b, c)?;
        Some((k, ab))
    }) else {
        return Ok(packing.clone());
    };
    for (t2, tree) in packing.trees().iter().enumerate() {
        if t2 == t1 {
            continue;
        }
        let Some(db) = tree
            .edges()
            .iter()
            .copied()
            .find(|&id| net.edge(id).head == b)
        else {
            continue;
        };
        let d = net.edge(db).tail;
        if d == a || d == c {
            continue;
        }
        let swap = |edges: &[EdgeId], out: EdgeId, inn: EdgeId| -> Vec<EdgeId> {
            edges
                .iter()
                .map(|&id| if id == out { inn } else { id })
                .collect()
        };
        let new1 = swap(packing.trees()[t1].edges(), ab, db);
        let new2 = swap(tree.edges(), db, ab);
        let (Ok(n1), Ok(n2)) = (Arborescence::new(net, new1), Arborescence::new(net, new2)) else {
            continue;
        };
        let mut trees = packing.trees().to_vec();
        trees[t1] = n1;
        trees[t2] = n2;
        return TreePacking::new(trees);
    }
    Err(Error::Domain(format!(
        "no tree offers an in-edge of {b} that can be exchanged with ({a}, {b})"
    )))
}

/// Best total rate when packets may only follow `trees`:
/// `max Σ_k λ_k` with `Σ_{k: e∈T_k} λ_k ≤ c_e β_e` on every tree edge and `β`
/// in the convex hull of feasible activations. Only edges used by some tree
/// matter, so activations are enumerated on that subgraph (at most
/// [`TREE_UNION_EDGE_LIMIT`] edges).
pub fn tree_restricted_capacity(net: &Network, trees: &[Arborescence]) -> Result<f64> {
    Ok(tree_restricted_rates(net, trees)?.iter().sum())
}

/// Per-tree rates of the optimal tree-restricted schedule.
pub fn tree_restricted_rates(net: &Network, trees: &[Arborescence]) -> Result<Vec<f64>> {
    if trees.is_empty() {
        return Ok(Vec::new());
    }
    let mut union: Vec<EdgeId> = trees.iter().flat_map(|t| t.edges().iter().copied()).collect();
    union.sort_unstable();
    union.dedup();
    let sub = net.restrict_edges(&union);
    let activations = enumerate_activations_with_cap(&sub, TREE_UNION_EDGE_LIMIT)?;
    let k = trees.len();
    let mut lp = LinearProgram::new(k + activations.len());
    for t in 0..k {
        lp.set_objective(t, 1.0);
    }
    for (local, &id) in union.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = trees
            .iter()
            .enumerate()
            .filter(|(_, t)| t.contains(id))
            .map(|(t, _)| (t, 1.0))
            .collect();
        let cap = net.edge(id).capacity as f64;
        for (l, s) in activations.iter().enumerate() {
            if s.is_active(local) {
                coeffs.push((k + l, -cap));
            }
        }
        lp.add_le(coeffs, 0.0);
    }
    lp.add_le((0..activations.len()).map(|l| (k + l, 1.0)).collect(), 1.0);
    let sol = lp.solve()?;
    Ok(sol.x[..k].to_vec())
}

/// `count` distinct arborescences drawn by giving every non-root node a
/// uniformly random in-edge and rejecting choices that close a cycle.
pub fn sample_arborescences(net: &Network, count: usize, seed: u64) -> Result<Vec<Arborescence>> {
    let in_edges = net.in_edges();
    if let Some(v) = net.non_source_nodes().find(|&v| in_edges[v].is_empty()) {
        return Err(Error::Structural(format!("node {v} has no in-edge")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut found: Vec<Arborescence> = Vec::new();
    let attempts = 1000 * count.max(1);
    for _ in 0..attempts {
        if found.len() == count {
            break;
        }
        let edges: Vec<EdgeId> = net
            .non_source_nodes()
            .map(|v| in_edges[v][rng.below(in_edges[v].len() as u64) as usize])
            .collect();
        if let Ok(t) = Arborescence::new(net, edges) {
            if !found.contains(&t) {
                found.push(t);
            }
        }
    }
    if found.len() < count {
        return Err(Error::Domain(format!(
            "found only {} distinct arborescences after {attempts} draws",
            found.len()
        )));
    }
    Ok(found)
}
