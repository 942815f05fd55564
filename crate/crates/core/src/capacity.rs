//! Broadcast-capacity linear programs over explicitly enumerated activations.
//!
//! The convex hull of feasible activations is represented by its vertices:
//! every program carries one probability variable per activation vector, and
//! the link time-shares are `β = Σ_l p_l s_l`. Wired networks enumerate to
//! `{∅, all-ones}`, which gives the same optimum as letting `β` range over the
//! unit cube because every constraint is monotone in `β`.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{
    enumerate_activations, validate_topology, ActivationVector, EdgeId, Network, ProperCut,
    Topology,
};
use crate::lp::{LinearProgram, TOLERANCE};

/// Largest network accepted by [`cut_bound_oracle`].
pub const CUT_ORACLE_NODE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub lambda: f64,
    /// Long-run fraction of slots each edge is active.
    pub beta: Vec<f64>,
    /// Distribution over activation vectors realizing `beta`.
    pub support: Vec<(ActivationVector, f64)>,
}

impl CapacityResult {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("capacity result serializes")
    }
}

impl Serialize for CapacityResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry<'a> {
            edges: &'a ActivationVector,
            p: f64,
        }
        let support: Vec<Entry> = self
            .support
            .iter()
            .map(|(edges, p)| Entry { edges, p: *p })
            .collect();
        let mut st = s.serialize_struct("CapacityResult", 3)?;
        st.serialize_field("lambda", &self.lambda)?;
        st.serialize_field("beta", &self.beta)?;
        st.serialize_field("support", &support)?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRate {
    pub rate: f64,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MulticlassCapacityResult {
    pub total: f64,
    pub per_class: Vec<ClassRate>,
}

/// `c_e` summed over the active in-edges of each node.
fn in_capacity(net: &Network, s: &ActivationVector) -> Vec<f64> {
    let mut cap = vec![0.0; net.node_count()];
    for id in s.active_edges() {
        let e = net.edge(id);
        cap[e.head] += e.capacity as f64;
    }
    cap
}

/// Converts LP probability values into a normalized support. Any slack in
/// `Σ p ≤ 1` is assigned to the empty activation, which is always enumerated
/// first.
fn build_support(activations: &[ActivationVector], p: &[f64]) -> Vec<(ActivationVector, f64)> {
    let mut weights = p.to_vec();
    let total: f64 = weights.iter().sum();
    if total < 1.0 - TOLERANCE && !activations.is_empty() {
        weights[0] += 1.0 - total;
    }
    let norm: f64 = weights.iter().sum();
    activations
        .iter()
        .zip(weights)
        .filter(|(_, w)| *w > TOLERANCE)
        .map(|(a, w)| (a.clone(), w / norm))
        .collect()
}

fn beta_from_support(edge_count: usize, support: &[(ActivationVector, f64)]) -> Vec<f64> {
    let mut beta = vec![0.0; edge_count];
    for (s, p) in support {
        for id in s.active_edges() {
            beta[id] += p;
        }
    }
    for b in &mut beta {
        *b = b.clamp(0.0, 1.0);
    }
    beta
}

fn require_dag(net: &Network) -> Result<()> {
    match validate_topology(net) {
        Topology::Acyclic(_) => Ok(()),
        Topology::Cyclic(cycle) => Err(Error::Domain(format!(
            "network is not a DAG (cycle {cycle:?})"
        ))),
    }
}

/// Solves `max λ` subject to `λ ≤ Σ_{e∈δin(v)} c_e β_e` for every non-source
/// node, with `β` in the convex hull of feasible activations.
pub fn lambda_dag(net: &Network) -> Result<CapacityResult> {
    require_dag(net)?;
    if net.node_count() < 2 {
        return Err(Error::Domain("capacity needs at least one non-source node".into()));
    }
    let activations = enumerate_activations(net)?;
    let rows: Vec<Vec<f64>> = net
        .non_source_nodes()
        .map(|v| activations.iter().map(|s| in_capacity(net, s)[v]).collect())
        .collect();
    solve_rate_program(net, &activations, &rows)
}

/// Upper bound from all proper cuts: `max λ` subject to
/// `λ ≤ Σ_{e∈E_U} c_e β_e` for every proper cut `U`. Valid for any topology.
pub fn cut_bound_oracle(net: &Network) -> Result<f64> {
    Ok(cut_bound_result(net)?.lambda)
}

/// [`cut_bound_oracle`] with the optimal time-shares.
pub fn cut_bound_result(net: &Network) -> Result<CapacityResult> {
    if net.node_count() > CUT_ORACLE_NODE_LIMIT {
        return Err(Error::limit(
            "cut oracle node count",
            CUT_ORACLE_NODE_LIMIT,
            Some(net.node_count() as u128),
        ));
    }
    if net.node_count() < 2 {
        return Err(Error::Domain("a single-node network has no proper cuts".into()));
    }
    let activations = enumerate_activations(net)?;
    let cuts = ProperCut::all(net);
    let rows: Vec<Vec<f64>> = cuts
        .iter()
        .map(|cut| {
            activations
                .iter()
                .map(|s| {
                    cut.crossing_edges(net)
                        .filter(|&id| s.is_active(id))
                        .map(|id| net.edge(id).capacity as f64)
                        .sum()
                })
                .collect()
        })
        .collect();
    solve_rate_program(net, &activations, &rows)
}

/// `max λ` s.t. `λ ≤ Σ_l p_l rows[k][l]` for each k and `Σ p ≤ 1`.
fn solve_rate_program(
    net: &Network,
    activations: &[ActivationVector],
    rows: &[Vec<f64>],
) -> Result<CapacityResult> {
    let l = activations.len();
    let mut lp = LinearProgram::new(1 + l);
    lp.set_objective(0, 1.0);
    for row in rows {
        let mut coeffs = vec![(0, 1.0)];
        coeffs.extend(
            row.iter()
                .enumerate()
                .filter(|(_, &a)| a != 0.0)
                .map(|(j, &a)| (1 + j, -a)),
        );
        lp.add_le(coeffs, 0.0);
    }
    lp.add_le((1..=l).map(|j| (j, 1.0)).collect(), 1.0);
    let sol = lp.solve()?;
    let support = build_support(activations, &sol.x[1..]);
    let beta = beta_from_support(net.edge_count(), &support);
    Ok(CapacityResult {
        lambda: sol.x[0],
        beta,
        support,
    })
}

/// Checks that `result` is a feasible point of the capacity program.
pub fn check_feasible(net: &Network, result: &CapacityResult, tol: f64) -> Result<()> {
    if result.beta.len() != net.edge_count() {
        return Err(Error::Domain("β length does not match edge count".into()));
    }
    let total: f64 = result.support.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::Domain(format!("support probabilities sum to {total}")));
    }
    if let Some((_, p)) = result.support.iter().find(|(_, p)| *p < -tol) {
        return Err(Error::Domain(format!("negative support probability {p}")));
    }
    for (s, _) in &result.support {
        if s.len() != net.edge_count() || !crate::graph::is_feasible(net, s) {
            return Err(Error::Domain(format!(
                "support vector {:?} is not a feasible activation",
                s.edge_ids()
            )));
        }
    }
    let beta = beta_from_support(net.edge_count(), &result.support);
    for (id, (b, r)) in beta.iter().zip(&result.beta).enumerate() {
        if (b - r).abs() > tol {
            return Err(Error::Domain(format!(
                "β[{id}] = {r} but the support gives {b}"
            )));
        }
    }
    let in_edges = net.in_edges();
    for v in net.non_source_nodes() {
        let cap: f64 = in_edges[v]
            .iter()
            .map(|&id| net.edge(id).capacity as f64 * result.beta[id])
            .sum();
        if result.lambda > cap + tol {
            return Err(Error::Domain(format!(
                "λ = {} exceeds node {v}'s in-capacity {cap}",
                result.lambda
            )));
        }
    }
    Ok(())
}

/// Rewrites the support of a feasible result onto affinely independent
/// activations (at most `|E| + 1` of them) without changing `λ` or `β`.
///
/// Carathéodory reduction: while the lifted vectors `(s_l, 1)` are linearly
/// dependent, move the weights along a null-space direction until one hits
/// zero.
pub fn sparse_support(net: &Network, result: &CapacityResult) -> Result<CapacityResult> {
    check_feasible(net, result, 1e-6)?;
    let dim = net.edge_count() + 1;
    let mut support: Vec<(ActivationVector, f64)> = result
        .support
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .cloned()
        .collect();
    while let Some(alpha) = null_vector(&support, dim) {
        let (hit, step) = support
            .iter()
            .zip(&alpha)
            .enumerate()
            .filter(|(_, (_, &a))| a > 1e-12)
            .map(|(i, ((_, p), &a))| (i, p / a))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("a null vector summing to zero has a positive entry");
        let next: Vec<(ActivationVector, f64)> = support
            .iter()
            .zip(&alpha)
            .enumerate()
            .filter(|&(i, _)| i != hit)
            .map(|(_, ((s, p), &a))| (s.clone(), p - step * a))
            .filter(|(_, q)| *q > 1e-12)
            .collect();
        support = next;
    }
    let norm: f64 = support.iter().map(|(_, p)| p).sum();
    for (_, p) in &mut support {
        *p /= norm;
    }
    Ok(CapacityResult {
        lambda: result.lambda,
        beta: result.beta.clone(),
        support,
    })
}

/// A nonzero `α` with `Σ_l α_l (s_l, 1) = 0`, if the columns are dependent.
fn null_vector(support: &[(ActivationVector, f64)], dim: usize) -> Option<Vec<f64>> {
    let cols = support.len();
    if cols == 0 {
        return None;
    }
    // Row-major dim × cols matrix; reduce to row echelon form.
    let mut a = vec![0.0f64; dim * cols];
    for (j, (s, _)) in support.iter().enumerate() {
        for id in s.active_edges() {
            a[id * cols + j] = 1.0;
        }
        a[(dim - 1) * cols + j] = 1.0;
    }
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == dim {
            break;
        }
        let Some(p) = (row..dim)
            .filter(|&r| a[r * cols + col].abs() > 1e-9)
            .max_by(|&x, &y| a[x * cols + col].abs().total_cmp(&a[y * cols + col].abs()))
        else {
            continue;
        };
        for j in 0..cols {
            a.swap(p * cols + j, row * cols + j);
        }
        let pv = a[row * cols + col];
        for j in 0..cols {
            a[row * cols + j] /= pv;
        }
        for r in 0..dim {
            if r != row {
                let f = a[r * cols + col];
                if f != 0.0 {
                    for j in 0..cols {
                        a[r * cols + j] -= f * a[row * cols + j];
                    }
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let free = (0..cols).find(|c| !pivot_cols.contains(c))?;
    let mut alpha = vec![0.0; cols];
    alpha[free] = 1.0;
    for (r, &pc) in pivot_cols.iter().enumerate() {
        alpha[pc] = -a[r * cols + free];
    }
    Some(alpha)
}

/// Total rate of `classes` (edge sets `E^k`, each acyclic):
/// `max Σ_k λ^k` with `λ^k ≤ Σ_{e∈δin(v)∩E^k} c_e β^k_e` for every non-source
/// `v` and `Σ_k β^k` in the convex hull of feasible activations.
pub fn multiclass_capacity(
    net: &Network,
    classes: &[Vec<EdgeId>],
) -> Result<MulticlassCapacityResult> {
    if classes.is_empty() {
        return Ok(MulticlassCapacityResult {
            total: 0.0,
            per_class: Vec::new(),
        });
    }
    for (k, class) in classes.iter().enumerate() {
        if let Some(&bad) = class.iter().find(|&&id| id >= net.edge_count()) {
            return Err(Error::Structural(format!("class {k} names edge {bad}")));
        }
        if let Topology::Cyclic(cycle) = validate_topology(&net.restrict_edges(class)) {
            return Err(Error::Domain(format!(
                "class {k} induces the cycle {cycle:?}"
            )));
        }
    }
    let activations = enumerate_activations(net)?;
    let kc = classes.len();
    let m = net.edge_count();

    // Layout: λ^k, then β^k_e for e ∈ E^k in class order, then p_l.
    let mut beta_var: Vec<Vec<Option<usize>>> = vec![vec![None; m]; kc];
    let mut next = kc;
    for (k, class) in classes.iter().enumerate() {
        for &id in class {
            if beta_var[k][id].is_none() {
                beta_var[k][id] = Some(next);
                next += 1;
            }
        }
    }
    let p0 = next;
    let mut lp = LinearProgram::new(p0 + activations.len());
    for k in 0..kc {
        lp.set_objective(k, 1.0);
    }
    let in_edges = net.in_edges();
    for (k, vars) in beta_var.iter().enumerate() {
        for v in net.non_source_nodes() {
            let mut coeffs = vec![(k, 1.0)];
            for &id in &in_edges[v] {
                if let Some(var) = vars[id] {
                    coeffs.push((var, -(net.edge(id).capacity as f64)));
                }
            }
            lp.add_le(coeffs, 0.0);
        }
    }
    for id in 0..m {
        let mut coeffs: Vec<(usize, f64)> =
            beta_var.iter().filter_map(|vars| vars[id]).map(|v| (v, 1.0)).collect();
        if coeffs.is_empty() {
            continue;
        }
        for (l, s) in activations.iter().enumerate() {
            if s.is_active(id) {
                coeffs.push((p0 + l, -1.0));
            }
        }
        lp.add_le(coeffs, 0.0);
    }
    lp.add_le((0..activations.len()).map(|l| (p0 + l, 1.0)).collect(), 1.0);

    let sol = lp.solve()?;
    let per_class: Vec<ClassRate> = beta_var
        .iter()
        .enumerate()
        .map(|(k, vars)| ClassRate {
            rate: sol.x[k],
            beta: vars
                .iter()
                .map(|v| v.map(|var| sol.x[var]).unwrap_or(0.0))
                .collect(),
        })
        .collect();
    Ok(MulticlassCapacityResult {
        total: per_class.iter().map(|c| c.rate).sum(),
        per_class,
    })
}
