//! Directed multigraph model, topological validation, proper cuts, and
//! interference-feasible link activations.

use std::fmt;
use std::path::Path;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

/// Largest edge count for which primary-interference activations are
/// enumerated explicitly.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interference {
    /// Activated links must form a matching of the undirected multigraph.
    Primary,
    /// Every subset of links can be active at once.
    Wired,
}

impl fmt::Display for Interference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interference::Primary => f.write_str("primary"),
            Interference::Wired => f.write_str("wired"),
        }
    }
}

/// A directed link carrying `capacity` packets per slot when activated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub tail: NodeId,
    pub head: NodeId,
    pub capacity: u64,
}

impl Edge {
    pub fn new(tail: NodeId, head: NodeId, capacity: u64) -> Self {
        Edge {
            tail,
            head,
            capacity,
        }
    }

    pub fn touches(&self, v: NodeId) -> bool {
        self.tail == v || self.head == v
    }

    pub fn other(&self, v: NodeId) -> NodeId {
        if self.tail == v {
            self.head
        } else {
            self.tail
        }
    }
}

/// A rooted directed multigraph with integer capacities. Edge ids are
/// positions in [`Network::edges`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    node_count: usize,
    source: NodeId,
    interference: Interference,
    edges: Vec<Edge>,
}

impl Network {
    pub fn new(
        node_count: usize,
        source: NodeId,
        interference: Interference,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Structural("network needs at least one node".into()));
        }
        if source >= node_count {
            return Err(Error::Structural(format!(
                "source {source} is not a node (node count {node_count})"
            )));
        }
        for (id, e) in edges.iter().enumerate() {
            if e.tail >= node_count || e.head >= node_count {
                return Err(Error::Structural(format!(
                    "edge {id} ({}, {}) references a node outside 0..{node_count}",
                    e.tail, e.head
                )));
            }
            if e.tail == e.head {
                return Err(Error::Structural(format!(
                    "edge {id} is a self-loop on node {}",
                    e.tail
                )));
            }
        }
        Ok(Network {
            node_count,
            source,
            interference,
            edges,
        })
    }

    /// Builds a network from `(tail, head, capacity)` triples.
    pub fn from_triples(
        node_count: usize,
        source: NodeId,
        interference: Interference,
        triples: &[(NodeId, NodeId, u64)],
    ) -> Result<Self> {
        let edges = triples
            .iter()
            .map(|&(t, h, c)| Edge::new(t, h, c))
            .collect();
        Network::new(node_count, source, interference, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn interference(&self) -> Interference {
        self.interference
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        0..self.node_count
    }

    pub fn non_source_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count).filter(move |&v| v != self.source)
    }

    pub fn with_interference(&self, interference: Interference) -> Network {
        Network {
            interference,
            ..self.clone()
        }
    }

    /// Incoming edge ids per node, ascending.
    pub fn in_edges(&self) -> Vec<Vec<EdgeId>> {
        let mut lists = vec![Vec::new(); self.node_count];
        for (id, e) in self.edges.iter().enumerate() {
            lists[e.head].push(id);
        }
        lists
    }

    /// Outgoing edge ids per node, ascending.
    pub fn out_edges(&self) -> Vec<Vec<EdgeId>> {
        let mut lists = vec![Vec::new(); self.node_count];
        for (id, e) in self.edges.iter().enumerate() {
            lists[e.tail].push(id);
        }
        lists
    }

    /// Edge ids incident to each node (either direction), ascending.
    pub fn incident_edges(&self) -> Vec<Vec<EdgeId>> {
        let mut lists = vec![Vec::new(); self.node_count];
        for (id, e) in self.edges.iter().enumerate() {
            lists[e.tail].push(id);
            lists[e.head].push(id);
        }
        lists
    }

    pub fn find_edge(&self, tail: NodeId, head: NodeId) -> Option<EdgeId> {
        self.edges
            .iter()
            .position(|e| e.tail == tail && e.head == head)
    }

    /// Replaces each edge of capacity `w` by `w` parallel unit edges. The
    /// returned map sends every new edge id to the edge it was split from.
    pub fn expand_unit_edges(&self) -> (Network, Vec<EdgeId>) {
        let mut edges = Vec::new();
        let mut origin = Vec::new();
        for (id, e) in self.edges.iter().enumerate() {
            for _ in 0..e.capacity {
                edges.push(Edge::new(e.tail, e.head, 1));
                origin.push(id);
            }
        }
        let net = Network {
            edges,
            ..self.clone()
        };
        (net, origin)
    }

    /// Subnetwork keeping only the listed edges (renumbered in the given
    /// order).
    pub fn restrict_edges(&self, keep: &[EdgeId]) -> Network {
        Network {
            edges: keep.iter().map(|&id| self.edges[id]).collect(),
            ..self.clone()
        }
    }

    pub fn is_dag(&self) -> bool {
        matches!(validate_topology(self), Topology::Acyclic(_))
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Network, serde_json::Error> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.into_network().map_err(de::Error::custom)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from(self)).expect("network serializes")
    }

    /// Reads the JSON network format; errors carry the path and the offending
    /// field (with line and column when the problem is inside the document).
    pub fn load(path: impl AsRef<Path>) -> Result<Network> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Network::from_json_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }
}

/// On-disk form: `{"nodes", "source", "interference", "edges": [[t, h, c], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    nodes: usize,
    source: NodeId,
    interference: Interference,
    edges: Vec<EdgeRecord>,
}

impl NetworkFile {
    fn into_network(self) -> std::result::Result<Network, String> {
        if self.nodes == 0 {
            return Err("field `nodes`: must be positive".into());
        }
        if self.source >= self.nodes {
            return Err(format!(
                "field `source`: node {} outside 0..{}",
                self.source, self.nodes
            ));
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.0.tail >= self.nodes || e.0.head >= self.nodes {
                return Err(format!(
                    "field `edges[{i}]`: endpoint outside 0..{} in [{}, {}, {}]",
                    self.nodes, e.0.tail, e.0.head, e.0.capacity
                ));
            }
        }
        Network::new(
            self.nodes,
            self.source,
            self.interference,
            self.edges.into_iter().map(|e| e.0).collect(),
        )
        .map_err(|e| e.to_string())
    }
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        NetworkFile {
            nodes: net.node_count,
            source: net.source,
            interference: net.interference,
            edges: net.edges.iter().copied().map(EdgeRecord).collect(),
        }
    }
}

#[derive(Debug)]
struct EdgeRecord(Edge);

impl Serialize for EdgeRecord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(3))?;
        seq.serialize_element(&self.0.tail)?;
        seq.serialize_element(&self.0.head)?;
        seq.serialize_element(&self.0.capacity)?;
        seq.end()
    }
}

// Checked while parsing so serde_json can attach the line and column.
impl<'de> Deserialize<'de> for EdgeRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EdgeVisitor;

        impl<'de> Visitor<'de> for EdgeVisitor {
            type Value = EdgeRecord;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an edge [tail, head, capacity]")
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<EdgeRecord, A::Error> {
                let tail: i64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let head: i64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let capacity: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(2, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(4, &self));
                }
                if tail < 0 || head < 0 {
                    return Err(de::Error::custom(format!(
                        "field `edges`: negative node id in [{tail}, {head}, {capacity}]"
                    )));
                }
                if tail == head {
                    return Err(de::Error::custom(format!(
                        "field `edges`: self-loop on node {tail}"
                    )));
                }
                if capacity < 0.0 {
                    return Err(de::Error::custom(format!(
                        "field `edges`: negative capacity {capacity} on ({tail}, {head})"
                    )));
                }
                if capacity.fract() != 0.0 || capacity > u32::MAX as f64 {
                    return Err(de::Error::custom(format!(
                        "field `edges`: capacity {capacity} on ({tail}, {head}) must be a whole number of packets"
                    )));
                }
                Ok(EdgeRecord(Edge::new(
                    tail as usize,
                    head as usize,
                    capacity as u64,
                )))
            }
        }

        d.deserialize_seq(EdgeVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    /// Every edge goes forward in this order.
    Acyclic(Vec<NodeId>),
    /// A directed cycle, first node repeated at the end.
    Cyclic(Vec<NodeId>),
}

/// Kahn's algorithm, lowest ready node first. On failure, walks the
/// remaining subgraph to report one directed cycle.
pub fn validate_topology(net: &Network) -> Topology {
    let n = net.node_count();
    let out = net.out_edges();
    let mut indeg = vec![0usize; n];
    for e in net.edges() {
        indeg[e.head] += 1;
    }
    let mut ready: std::collections::BTreeSet<NodeId> =
        (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &id in &out[v] {
            let h = net.edge(id).head;
            indeg[h] -= 1;
            if indeg[h] == 0 {
                ready.insert(h);
            }
        }
    }
    if order.len() == n {
        return Topology::Acyclic(order);
    }

    // Every leftover node keeps an in-edge from another leftover node, so
    // walking predecessors must revisit a node.
    let leftover: Vec<bool> = (0..n).map(|v| indeg[v] > 0).collect();
    let in_edges = net.in_edges();
    let start = (0..n).find(|&v| leftover[v]).expect("cycle exists");
    let mut seen = vec![usize::MAX; n];
    let mut walk = Vec::new();
    let mut v = start;
    while seen[v] == usize::MAX {
        seen[v] = walk.len();
        walk.push(v);
        v = in_edges[v]
            .iter()
            .map(|&id| net.edge(id).tail)
            .find(|&u| leftover[u])
            .expect("leftover node has a leftover predecessor");
    }
    // walk[seen[v]..] traced backwards along edges; reverse for forward order.
    let mut cycle: Vec<NodeId> = walk[seen[v]..].to_vec();
    cycle.reverse();
    // Rotate so the smallest id leads, then close the loop.
    let min_pos = cycle
        .iter()
        .enumerate()
        .min_by_key(|&(_, &u)| u)
        .map(|(i, _)| i)
        .unwrap_or(0);
    cycle.rotate_left(min_pos);
    cycle.push(cycle[0]);
    Topology::Cyclic(cycle)
}

/// A binary edge-activation vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationVector {
    active: Vec<bool>,
}

impl ActivationVector {
    pub fn empty(edge_count: usize) -> Self {
        ActivationVector {
            active: vec![false; edge_count],
        }
    }

    pub fn all(edge_count: usize) -> Self {
        ActivationVector {
            active: vec![true; edge_count],
        }
    }

    pub fn from_edges(edge_count: usize, ids: &[EdgeId]) -> Self {
        let mut v = Self::empty(edge_count);
        for &id in ids {
            v.active[id] = true;
        }
        v
    }

    pub fn from_bits(active: Vec<bool>) -> Self {
        ActivationVector { active }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn is_active(&self, id: EdgeId) -> bool {
        self.active[id]
    }

    pub fn bits(&self) -> &[bool] {
        &self.active
    }

    pub fn active_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
    }

    pub fn edge_ids(&self) -> Vec<EdgeId> {
        self.active_edges().collect()
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&b| b).count()
    }

    /// `Σ_e c_e s_e w_e`.
    pub fn weight(&self, net: &Network, weights: &[u64]) -> u128 {
        self.active_edges()
            .map(|id| net.edge(id).capacity as u128 * weights[id] as u128)
            .sum()
    }
}

impl Serialize for ActivationVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.active_edges())
    }
}

/// True when no two listed edges share an endpoint (directions ignored).
pub fn is_matching(net: &Network, ids: impl IntoIterator<Item = EdgeId>) -> bool {
    let mut used = vec![false; net.node_count()];
    for id in ids {
        let e = net.edge(id);
        if used[e.tail] || used[e.head] {
            return false;
        }
        used[e.tail] = true;
        used[e.head] = true;
    }
    true
}

pub fn is_feasible(net: &Network, s: &ActivationVector) -> bool {
    match net.interference() {
        Interference::Wired => true,
        Interference::Primary => is_matching(net, s.active_edges()),
    }
}

pub fn enumerate_activations(net: &Network) -> Result<Vec<ActivationVector>> {
    enumerate_activations_with_cap(net, DEFAULT_ENUMERATION_CAP)
}

/// All feasible activations, without duplicates.
///
/// Wired networks yield `{∅, all-ones}`. Under primary interference every
/// matching is produced by a depth-first walk over nodes in ascending id:
/// the lowest undecided node is first left unmatched, then matched through
/// each of its edges to an undecided node in ascending edge id. That order is
/// the tie-breaking order of [`crate::policy::max_weight_activation`].
pub fn enumerate_activations_with_cap(
    net: &Network,
    cap: usize,
) -> Result<Vec<ActivationVector>> {
    let m = net.edge_count();
    match net.interference() {
        Interference::Wired => {
            let mut out = vec![ActivationVector::empty(m)];
            if m > 0 {
                out.push(ActivationVector::all(m));
            }
            Ok(out)
        }
        Interference::Primary => {
            if m > cap {
                return Err(Error::limit(
                    "activation enumeration edge count",
                    cap,
                    Some(m as u128),
                ));
            }
            let incident = net.incident_edges();
            let mut out = Vec::new();
            let mut taken = vec![false; net.node_count()];
            let mut chosen = Vec::new();
            enumerate_matchings(net, &incident, 0, &mut taken, &mut chosen, &mut out);
            Ok(out)
        }
    }
}

fn enumerate_matchings(
    net: &Network,
    incident: &[Vec<EdgeId>],
    from: NodeId,
    taken: &mut [bool],
    chosen: &mut Vec<EdgeId>,
    out: &mut Vec<ActivationVector>,
) {
    let Some(v) = (from..net.node_count()).find(|&v| !taken[v]) else {
        out.push(ActivationVector::from_edges(net.edge_count(), chosen));
        return;
    };
    taken[v] = true;
    enumerate_matchings(net, incident, v + 1, taken, chosen, out);
    for &id in &incident[v] {
        let u = net.edge(id).other(v);
        if taken[u] {
            continue;
        }
        taken[u] = true;
        chosen.push(id);
        enumerate_matchings(net, incident, v + 1, taken, chosen, out);
        chosen.pop();
        taken[u] = false;
    }
    taken[v] = false;
}

/// A node set containing the source and missing at least one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProperCut {
    members: Vec<bool>,
}

impl ProperCut {
    pub fn new(net: &Network, nodes: &[NodeId]) -> Result<Self> {
        let mut members = vec![false; net.node_count()];
        for &v in nodes {
            if v >= net.node_count() {
                return Err(Error::Structural(format!("cut node {v} is not in the network")));
            }
            members[v] = true;
        }
        Self::from_members(net, members)
    }

    pub fn from_members(net: &Network, members: Vec<bool>) -> Result<Self> {
        if members.len() != net.node_count() {
            return Err(Error::Structural("cut membership length mismatch".into()));
        }
        if !members[net.source()] {
            return Err(Error::Domain("a proper cut must contain the source".into()));
        }
        if members.iter().all(|&b| b) {
            return Err(Error::Domain("a proper cut must omit at least one node".into()));
        }
        Ok(ProperCut { members })
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.members[v]
    }

    /// `E_U`: edges leaving the cut.
    pub fn crossing_edges<'a>(&'a self, net: &'a Network) -> impl Iterator<Item = EdgeId> + 'a {
        net.edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| self.members[e.tail] && !self.members[e.head])
            .map(|(id, _)| id)
    }

    /// Every proper cut of `net`, enumerated by bitmask over the non-source
    /// nodes. There are `2^(n-1) - 1` of them.
    pub fn all(net: &Network) -> Vec<ProperCut> {
        let others: Vec<NodeId> = net.non_source_nodes().collect();
        let k = others.len();
        let mut cuts = Vec::with_capacity((1usize << k).saturating_sub(1));
        for mask in 0..(1usize << k) - 1 {
            let mut members = vec![false; net.node_count()];
            members[net.source()] = true;
            for (bit, &v) in others.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    members[v] = true;
                }
            }
            cuts.push(ProperCut { members });
        }
        cuts
    }
}

/// `Σ_{e ∈ E_U} c_e β_e`.
pub fn cut_value(net: &Network, beta: &[f64], cut: &ProperCut) -> Result<f64> {
    if beta.len() != net.edge_count() {
        return Err(Error::Domain(format!(
            "time-share vector has {} entries for {} edges",
            beta.len(),
            net.edge_count()
        )));
    }
    if let Some((id, b)) = beta
        .iter()
        .enumerate()
        .find(|(_, &b)| !(0.0..=1.0).contains(&b))
    {
        return Err(Error::Domain(format!("time share β[{id}] = {b} outside [0, 1]")));
    }
    Ok(cut
        .crossing_edges(net)
        .map(|id| net.edge(id).capacity as f64 * beta[id])
        .sum())
}

/// Minimum in-degree over non-source nodes (parallel edges counted), with the
/// lowest-id node attaining it.
pub fn min_in_degree(net: &Network) -> Result<(usize, NodeId)> {
    if net.node_count() < 2 {
        return Err(Error::Domain(
            "minimum in-degree needs at least one non-source node".into(),
        ));
    }
    let mut indeg = vec![0usize; net.node_count()];
    for e in net.edges() {
        indeg[e.head] += 1;
    }
    let (v, d) = net
        .non_source_nodes()
        .map(|v| (v, indeg[v]))
        .min_by_key(|&(v, d)| (d, v))
        .expect("at least one non-source node");
    Ok((d, v))
}
