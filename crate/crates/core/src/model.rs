//! Instances, fractional clusterings and balance predicates.
//!
//! A clustering is stored column-sparse: every unit keeps the short list of
//! clusters it is (fractionally) assigned to. Vertex solutions of the
//! transportation program carry at most `m + k - 1` nonzeros, so this is
//! much smaller than a dense `k x m` table.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Numerical tolerances shared by all modules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Allowed deviation of a unit's column sum from one.
    pub column_sum: f64,
    /// Hybrid absolute/relative tolerance for cluster weights vs. capacities.
    pub balance: f64,
    /// Distance from {0, 1} below which an entry counts as integral.
    pub integrality: f64,
    /// Absolute tolerance on f-value ties at cell boundaries.
    pub tie: f64,
    /// Relative capacity-sum mismatch that is silently normalized away.
    pub capacity_normalization: f64,
    /// Relative tolerance on primal/dual objective agreement.
    pub duality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            column_sum: 1e-9,
            balance: 1e-9,
            integrality: 1e-12,
            tie: 1e-9,
            capacity_normalization: 1e-6,
            duality: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Unit {
    pub id: String,
    pub position: Point,
    pub weight: f64,
}

impl Unit {
    pub fn new(id: impl Into<String>, x: f64, y: f64, weight: f64) -> Self {
        Unit {
            id: id.into(),
            position: Point::new(x, y),
            weight,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Undirected graph over unit indices with positive edge lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyGraph {
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl AdjacencyGraph {
    /// Builds the graph; parallel edges collapse to the shortest one.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (a, b, length) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) references a unit outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at unit {a}")));
            }
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) has non-positive length {length}"
                )));
            }
            match adjacency[a].iter_mut().find(|(v, _)| *v == b) {
                Some(entry) => {
                    if length < entry.1 {
                        entry.1 = length;
                        if let Some(back) = adjacency[b].iter_mut().find(|(v, _)| *v == a) {
                            back.1 = length;
                        }
                    }
                }
                None => {
                    adjacency[a].push((b, length));
                    adjacency[b].push((a, length));
                }
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|x| x.0);
        }
        let mut edges = Vec::new();
        for (a, list) in adjacency.iter().enumerate() {
            for &(b, length) in list {
                if a < b {
                    edges.push(Edge { a, b, length });
                }
            }
        }
        Ok(AdjacencyGraph { edges, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `u` sorted by index, with edge lengths.
    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adjacency[u]
    }

    pub fn length(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency[a]
            .iter()
            .find(|(v, _)| *v == b)
            .map(|&(_, l)| l)
    }

    /// Connected components as a label per node, labels in order of first appearance.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let n = self.node_count();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() == 0 || self.components().0 == 1
    }

    /// Whether the subgraph induced by `members` is connected (empty counts as connected).
    pub fn induced_connected(&self, members: &[bool]) -> bool {
        let Some(start) = members.iter().position(|&b| b) else {
            return true;
        };
        let total = members.iter().filter(|&&b| b).count();
        let mut seen = vec![false; members.len()];
        seen[start] = true;
        let mut reached = 1;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if members[v] && !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == total
    }
}

/// Problems found by [`validate_instance`].
#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    NoClusters,
    TooFewUnits { units: usize, clusters: usize },
    CapacityCount { expected: usize, found: usize },
    NonPositiveWeight { unit: usize, weight: f64 },
    NonPositiveCapacity { cluster: usize, capacity: f64 },
    /// Mismatch above the normalization threshold; the instance is rejected.
    CapacitySumMismatch { capacities: f64, weights: f64 },
    /// Mismatch small enough to be absorbed by rescaling the capacities.
    CapacitiesRescaled { capacities: f64, weights: f64 },
    DuplicateId { id: String },
    InvalidEdge { a: usize, b: usize, reason: String },
    Disconnected { components: usize, isolated: Vec<usize> },
}

impl Diagnostic {
    /// Warnings do not prevent building the instance.
    pub fn is_error(&self) -> bool {
        !matches!(self, Diagnostic::CapacitiesRescaled { .. })
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NoClusters => write!(f, "cluster count k must be at least 1"),
            Diagnostic::TooFewUnits { units, clusters } => {
                write!(f, "{units} unit(s) cannot fill {clusters} cluster(s)")
            }
            Diagnostic::CapacityCount { expected, found } => {
                write!(f, "expected {expected} capacities, found {found}")
            }
            Diagnostic::NonPositiveWeight { unit, weight } => {
                write!(f, "unit {unit} has non-positive weight {weight}")
            }
            Diagnostic::NonPositiveCapacity { cluster, capacity } => {
                write!(f, "cluster {cluster} has non-positive capacity {capacity}")
            }
            Diagnostic::CapacitySumMismatch {
                capacities,
                weights,
            } => write!(
                f,
                "capacities sum to {capacities} but unit weights sum to {weights}"
            ),
            Diagnostic::CapacitiesRescaled {
                capacities,
                weights,
            } => write!(
                f,
                "capacities (sum {capacities}) rescaled to match weight sum {weights}"
            ),
            Diagnostic::DuplicateId { id } => write!(f, "duplicate unit id {id:?}"),
            Diagnostic::InvalidEdge { a, b, reason } => write!(f, "edge ({a}, {b}): {reason}"),
            Diagnostic::Disconnected {
                components,
                isolated,
            } => write!(
                f,
                "graph has {components} components; units outside the first: {isolated:?}"
            ),
        }
    }
}

/// Unvalidated instance data, as read from a file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawInstance {
    pub units: Vec<Unit>,
    pub edges: Option<Vec<(usize, usize, f64)>>,
    pub k: usize,
    /// `None` means uniform capacities `sum(weights) / k`.
    pub capacities: Option<Vec<f64>>,
}

/// Checks every instance invariant and reports all violations at once.
pub fn validate_instance(raw: &RawInstance, tol: &Tolerances) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let m = raw.units.len();
    if raw.k == 0 {
        out.push(Diagnostic::NoClusters);
    } else if m < raw.k {
        out.push(Diagnostic::TooFewUnits {
            units: m,
            clusters: raw.k,
        });
    }
    for (j, u) in raw.units.iter().enumerate() {
        if !(u.weight > 0.0 && u.weight.is_finite()) {
            out.push(Diagnostic::NonPositiveWeight {
                unit: j,
                weight: u.weight,
            });
        }
    }
    let mut ids: Vec<&str> = raw.units.iter().map(|u| u.id.as_str()).collect();
    ids.sort_unstable();
    for pair in ids.windows(2) {
        if pair[0] == pair[1] && !out.iter().any(|d| matches!(d, Diagnostic::DuplicateId { id } if id == pair[0])) {
            out.push(Diagnostic::DuplicateId {
                id: String::from(pair[0]),
            });
        }
    }
    if let Some(caps) = &raw.capacities {
        if caps.len() != raw.k {
            out.push(Diagnostic::CapacityCount {
                expected: raw.k,
                found: caps.len(),
            });
        }
        for (i, &c) in caps.iter().enumerate() {
            if !(c > 0.0 && c.is_finite()) {
                out.push(Diagnostic::NonPositiveCapacity {
                    cluster: i,
                    capacity: c,
                });
            }
        }
        let cap_sum: f64 = caps.iter().sum();
        let weight_sum: f64 = raw.units.iter().map(|u| u.weight).sum();
        let rel = (cap_sum - weight_sum).abs() / weight_sum.abs().max(f64::MIN_POSITIVE);
        if rel > tol.capacity_normalization {
            out.push(Diagnostic::CapacitySumMismatch {
                capacities: cap_sum,
                weights: weight_sum,
            });
        } else if rel > 0.0 {
            out.push(Diagnostic::CapacitiesRescaled {
                capacities: cap_sum,
                weights: weight_sum,
            });
        }
    }
    if let Some(edges) = &raw.edges {
        let mut valid = Vec::with_capacity(edges.len());
        for &(a, b, length) in edges {
            let reason = if a >= m || b >= m {
                Some("unit index out of range")
            } else if a == b {
                Some("self-loop")
            } else if !(length > 0.0 && length.is_finite()) {
                Some("length must be positive")
            } else {
                None
            };
            match reason {
                Some(r) => out.push(Diagnostic::InvalidEdge {
                    a,
                    b,
                    reason: String::from(r),
                }),
                None => valid.push((a, b, length)),
            }
        }
        if let Ok(g) = AdjacencyGraph::new(m, valid) {
            let (count, label) = g.components();
            if count > 1 {
                let isolated = (0..m).filter(|&j| label[j] != 0).collect();
                out.push(Diagnostic::Disconnected {
                    components: count,
                    isolated,
                });
            }
        }
    }
    out
}

/// A validated instance: units, optional graph, cluster count and capacities.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    units: Vec<Unit>,
    graph: Option<AdjacencyGraph>,
    k: usize,
    capacities: Vec<f64>,
}

impl Instance {
    /// Validates and normalizes: capacities within the normalization threshold
    /// are rescaled so that their sum equals the weight sum exactly.
    pub fn from_raw(raw: RawInstance, tol: &Tolerances) -> Result<Self> {
        let diagnostics = validate_instance(&raw, tol);
        if diagnostics.iter().any(Diagnostic::is_error) {
            return Err(Error::InvalidInstance(
                diagnostics.into_iter().filter(Diagnostic::is_error).collect(),
            ));
        }
        let weight_sum: f64 = raw.units.iter().map(|u| u.weight).sum();
        let capacities = match raw.capacities {
            Some(caps) => {
                let cap_sum: f64 = caps.iter().sum();
                if cap_sum == weight_sum {
                    caps
                } else {
                    let scale = weight_sum / cap_sum;
                    caps.iter().map(|c| c * scale).collect()
                }
            }
            None => vec![weight_sum / raw.k as f64; raw.k],
        };
        let graph = match raw.edges {
            Some(edges) => Some(AdjacencyGraph::new(raw.units.len(), edges)?),
            None => None,
        };
        Ok(Instance {
            units: raw.units,
            graph,
            k: raw.k,
            capacities,
        })
    }

    /// Convenience constructor with default tolerances.
    pub fn new(
        units: Vec<Unit>,
        edges: Option<Vec<(usize, usize, f64)>>,
        k: usize,
        capacities: Option<Vec<f64>>,
    ) -> Result<Self> {
        Instance::from_raw(
            RawInstance {
                units,
                edges,
                k,
                capacities,
            },
            &Tolerances::default(),
        )
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn m(&self) -> usize {
        self.units.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn graph(&self) -> Option<&AdjacencyGraph> {
        self.graph.as_ref()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.weight).collect()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.units.iter().map(|u| u.position).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.units.iter().map(|u| u.weight).sum()
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.units.iter().position(|u| u.id == id)
    }

    /// Largest pairwise extent of the unit positions (bounding-box diagonal).
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = crate::geometry::bounding_box(self.units.iter().map(|u| u.position));
        (hi - lo).norm()
    }

    /// The same instance with different capacities (sum must match).
    pub fn with_capacities(&self, capacities: Vec<f64>) -> Result<Self> {
        Instance::from_raw(
            RawInstance {
                units: self.units.clone(),
                edges: self
                    .graph
                    .as_ref()
                    .map(|g| g.edges().iter().map(|e| (e.a, e.b, e.length)).collect()),
                k: capacities.len(),
                capacities: Some(capacities),
            },
            &Tolerances::default(),
        )
    }
}

/// Sparse `k x m` fractional assignment with unit column sums.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalClustering {
    k: usize,
    columns: Vec<Vec<(usize, f64)>>,
}

impl FractionalClustering {
    /// Integer clustering from one cluster index per unit.
    pub fn from_assignment(k: usize, assignment: &[usize]) -> Result<Self> {
        let mut columns = Vec::with_capacity(assignment.len());
        for (j, &i) in assignment.iter().enumerate() {
            if i >= k {
                return Err(Error::InvalidClustering(format!(
                    "unit {j} assigned to cluster {i} >= k = {k}"
                )));
            }
            columns.push(vec![(i, 1.0)]);
        }
        Ok(FractionalClustering { k, columns })
    }

    /// Builds from `(cluster, unit, value)` triples. Values at or below zero are
    /// dropped; duplicate pairs are summed; every column must sum to one.
    pub fn from_entries(
        k: usize,
        m: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for (i, j, v) in entries {
            if i >= k || j >= m {
                return Err(Error::InvalidClustering(format!(
                    "entry ({i}, {j}) outside {k} x {m}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidClustering(format!("entry ({i}, {j}) is {v}")));
            }
            if v <= 0.0 {
                continue;
            }
            match columns[j].iter_mut().find(|(c, _)| *c == i) {
                Some(e) => e.1 += v,
                None => columns[j].push((i, v)),
            }
        }
        for (j, col) in columns.iter_mut().enumerate() {
            col.sort_by_key(|a| a.0);
            let sum: f64 = col.iter().map(|e| e.1).sum();
            if (sum - 1.0).abs() > tol.column_sum {
                return Err(Error::InvalidClustering(format!(
                    "column of unit {j} sums to {sum}"
                )));
            }
        }
        Ok(FractionalClustering { k, columns })
    }

    /// Dense rows (`rows[i][j]`), mainly for tests and fixtures.
    pub fn from_rows(rows: &[Vec<f64>], tol: &Tolerances) -> Result<Self> {
        let k = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension(String::from("ragged rows")));
        }
        let entries = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)));
        FractionalClustering::from_entries(k, m, entries, tol)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// Nonzero entries of unit `j`, sorted by cluster.
    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j]
            .iter()
            .find(|(c, _)| *c == i)
            .map_or(0.0, |e| e.1)
    }

    /// All nonzero entries as `(cluster, unit, value)`, ordered by unit then cluster.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(j, col)| col.iter().map(move |&(i, v)| (i, j, v)))
    }

    pub fn nonzero_count(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// Units with a positive share in cluster `i`.
    pub fn support(&self, i: usize) -> Vec<usize> {
        (0..self.m())
            .filter(|&j| self.columns[j].iter().any(|(c, _)| *c == i))
            .collect()
    }

    /// Membership mask of supp(C_i).
    pub fn support_mask(&self, i: usize) -> Vec<bool> {
        self.columns
            .iter()
            .map(|col| col.iter().any(|(c, _)| *c == i))
            .collect()
    }

    pub fn is_integer(&self, tol: &Tolerances) -> bool {
        self.columns.iter().all(|col| {
            col.iter()
                .all(|&(_, v)| v.abs() <= tol.integrality || (v - 1.0).abs() <= tol.integrality)
        })
    }

    /// Units split between two or more clusters.
    pub fn fractional_units(&self) -> Vec<usize> {
        (0..self.m()).filter(|&j| self.columns[j].len() > 1).collect()
    }

    /// Number of entries strictly between zero and one.
    pub fn fractional_entry_count(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.len() > 1)
            .map(Vec::len)
            .sum()
    }

    /// Cluster of every unit, if the clustering is integral.
    pub fn assignment(&self) -> Option<Vec<usize>> {
        self.columns
            .iter()
            .map(|col| match col.as_slice() {
                [(i, _)] => Some(*i),
                _ => None,
            })
            .collect()
    }

    /// Edges `(cluster, unit)` of the bipartite assignment graph.
    pub fn assignment_edges(&self) -> Vec<(usize, usize)> {
        self.entries().map(|(i, j, _)| (i, j)).collect()
    }

    /// Whether the bipartite assignment graph is a forest, i.e. the clustering
    /// is a vertex of the transportation polytope.
    pub fn is_extremal(&self) -> bool {
        let mut dsu = crate::util::DisjointSets::new(self.k + self.m());
        for (i, j, _) in self.entries() {
            if !dsu.union(i, self.k + j) {
                return false;
            }
        }
        true
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.m()]; self.k];
        for (i, j, v) in self.entries() {
            rows[i][j] = v;
        }
        rows
    }

    pub(crate) fn from_columns_unchecked(k: usize, columns: Vec<Vec<(usize, f64)>>) -> Self {
        FractionalClustering { k, columns }
    }
}

fn check_dims(clustering: &FractionalClustering, instance: &Instance) -> Result<()> {
    if clustering.k() != instance.k() || clustering.m() != instance.m() {
        return Err(Error::Dimension(format!(
            "clustering is {} x {}, instance is {} x {}",
            clustering.k(),
            clustering.m(),
            instance.k(),
            instance.m()
        )));
    }
    Ok(())
}

/// ω(C_i) for every cluster; an empty cluster is an error.
pub fn cluster_weights(clustering: &FractionalClustering, instance: &Instance) -> Result<Vec<f64>> {
    let w = raw_cluster_weights(clustering, instance)?;
    if let Some(i) = (0..clustering.k()).find(|&i| !clustering.columns.iter().any(|c| c.iter().any(|e| e.0 == i))) {
        return Err(Error::EmptyCluster(i));
    }
    Ok(w)
}

/// Like [`cluster_weights`] but tolerates empty clusters.
pub fn raw_cluster_weights(
    clustering: &FractionalClustering,
    instance: &Instance,
) -> Result<Vec<f64>> {
    check_dims(clustering, instance)?;
    let mut w = vec![0.0; clustering.k()];
    for (i, j, v) in clustering.entries() {
        w[i] += v * instance.units[j].weight;
    }
    Ok(w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalanceReport {
    pub cluster_weights: Vec<f64>,
    pub max_rel_deviation: f64,
    pub avg_rel_deviation: f64,
}

impl BalanceReport {
    pub fn from_weights(weights: Vec<f64>, capacities: &[f64]) -> Self {
        let devs: Vec<f64> = weights
            .iter()
            .zip(capacities)
            .map(|(w, c)| (w - c).abs() / c)
            .collect();
        let max = devs.iter().copied().fold(0.0, f64::max);
        let avg = if devs.is_empty() {
            0.0
        } else {
            devs.iter().sum::<f64>() / devs.len() as f64
        };
        BalanceReport {
            cluster_weights: weights,
            max_rel_deviation: max,
            avg_rel_deviation: avg,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalanceCheck {
    pub report: BalanceReport,
    pub strong: bool,
    pub epsilon_balanced: bool,
    pub integer: bool,
}

/// Strong / ε-balance and integrality verdicts for a clustering.
pub fn check_balance(
    clustering: &FractionalClustering,
    instance: &Instance,
    epsilon: f64,
    tol: &Tolerances,
) -> Result<BalanceCheck> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} < 0")));
    }
    let weights = raw_cluster_weights(clustering, instance)?;
    let caps = instance.capacities();
    let slack = |c: f64| tol.balance * c.abs().max(1.0);
    let strong = weights
        .iter()
        .zip(caps)
        .all(|(&w, &c)| (w - c).abs() <= slack(c));
    let epsilon_balanced = weights
        .iter()
        .zip(caps)
        .all(|(&w, &c)| w >= (1.0 - epsilon) * c - slack(c) && w <= (1.0 + epsilon) * c + slack(c));
    Ok(BalanceCheck {
        report: BalanceReport::from_weights(weights, caps),
        strong,
        epsilon_balanced,
        integer: clustering.is_integer(tol),
    })
}

/// `max_{j,i} ω_j / κ_i`, the rounding error bound.
pub fn rounding_epsilon_bound(instance: &Instance) -> f64 {
    let wmax = instance.units.iter().map(|u| u.weight).fold(0.0, f64::max);
    let cmin = instance
        .capacities
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    wmax / cmin
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(weights: [f64; 4], caps: Vec<f64>) -> Instance {
        let units = (0..4)
            .map(|j| Unit::new(format!("x{}", j + 1), j as f64, 0.0, weights[j]))
            .collect();
        Instance::new(
            units,
            Some(vec![(0, 1, 1.0), (1, 2, 1.0), (1, 3, 2.0)]),
            2,
            Some(caps),
        )
        .unwrap()
    }

    #[test]
    fn weights_with_heavy_third_unit() {
        // ω_3 = 3 as in the non-affine counterexample instance
        let inst = star([1.0, 1.0, 3.0, 1.0], vec![3.0, 3.0]);
        let c = FractionalClustering::from_assignment(2, &[0, 1, 0, 1]).unwrap();
        assert_eq!(cluster_weights(&c, &inst).unwrap(), vec![4.0, 2.0]);
    }

    #[test]
    fn half_split_clustering_is_strongly_balanced() {
        let inst = star([1.0; 4], vec![2.0, 2.0]);
        let tol = Tolerances::default();
        let c = FractionalClustering::from_rows(
            &[vec![1.0, 0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5, 1.0]],
            &tol,
        )
        .unwrap();
        assert_eq!(cluster_weights(&c, &inst).unwrap(), vec![2.0, 2.0]);
        let check = check_balance(&c, &inst, 0.0, &tol).unwrap();
        assert!(check.strong && check.epsilon_balanced && !check.integer);
    }

    #[test]
    fn empty_cluster_is_an_error() {
        let inst = star([1.0; 4], vec![2.0, 2.0]);
        let c = FractionalClustering::from_assignment(2, &[0, 0, 0, 0]).unwrap();
        assert_eq!(cluster_weights(&c, &inst), Err(Error::EmptyCluster(1)));
    }

    #[test]
    fn epsilon_balance_without_strong_balance() {
        let units = (0..5).map(|j| Unit::new(format!("{j}"), 0.0, 0.0, if j == 0 { 0.2 } else { 1.0 })).collect();
        let inst = Instance::new(units, None, 2, Some(vec![2.0, 2.2])).unwrap();
        let c = FractionalClustering::from_assignment(2, &[0, 0, 0, 1, 1]).unwrap();
        let check = check_balance(&c, &inst, 0.15, &Tolerances::default()).unwrap();
        assert!((check.report.cluster_weights[0] - 2.2).abs() < 1e-12);
        assert!(check.epsilon_balanced);
        assert!(!check.strong);
    }

    #[test]
    fn capacity_mismatch_is_diagnosed() {
        let raw = RawInstance {
            units: (0..3).map(|j| Unit::new(format!("{j}"), 0.0, 0.0, 1.0)).collect(),
            edges: None,
            k: 2,
            capacities: Some(vec![1.0, 1.0]),
        };
        let d = validate_instance(&raw, &Tolerances::default());
        assert!(matches!(d.as_slice(), [Diagnostic::CapacitySumMismatch { .. }]));
        assert!(Instance::from_raw(raw, &Tolerances::default()).is_err());
    }

    #[test]
    fn small_mismatch_is_rescaled() {
        let raw = RawInstance {
            units: (0..2).map(|j| Unit::new(format!("{j}"), 0.0, 0.0, 1.0)).collect(),
            edges: None,
            k: 2,
            capacities: Some(vec![1.0, 1.0 + 1e-8]),
        };
        let inst = Instance::from_raw(raw, &Tolerances::default()).unwrap();
        let s: f64 = inst.capacities().iter().sum();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_unit_is_diagnosed() {
        let raw = RawInstance {
            units: (0..3).map(|j| Unit::new(format!("{j}"), 0.0, 0.0, 1.0)).collect(),
            edges: Some(vec![(0, 1, 1.0)]),
            k: 1,
            capacities: None,
        };
        let d = validate_instance(&raw, &Tolerances::default());
        assert_eq!(
            d,
            vec![Diagnostic::Disconnected {
                components: 2,
                isolated: vec![2]
            }]
        );
    }

    #[test]
    fn nonpositive_weight_and_bad_edges_reported_together() {
        let raw = RawInstance {
            units: vec![Unit::new("a", 0.0, 0.0, -1.0), Unit::new("a", 1.0, 0.0, 1.0)],
            edges: Some(vec![(0, 0, 1.0), (0, 1, 0.0)]),
            k: 1,
            capacities: None,
        };
        let d = validate_instance(&raw, &Tolerances::default());
        assert!(d.iter().any(|x| matches!(x, Diagnostic::NonPositiveWeight { unit: 0, .. })));
        assert!(d.iter().any(|x| matches!(x, Diagnostic::DuplicateId { .. })));
        assert_eq!(d.iter().filter(|x| matches!(x, Diagnostic::InvalidEdge { .. })).count(), 2);
    }

    #[test]
    fn column_sums_are_enforced() {
        let tol = Tolerances::default();
        assert!(FractionalClustering::from_rows(&[vec![0.5], vec![0.4]], &tol).is_err());
        let c = FractionalClustering::from_rows(&[vec![0.5, 1.0], vec![0.5, 0.0]], &tol).unwrap();
        assert_eq!(c.nonzero_count(), 3);
        assert_eq!(c.fractional_units(), vec![0]);
        assert_eq!(c.support(1), vec![0]);
    }

    #[test]
    fn extremality_detects_cycles() {
        let tol = Tolerances::default();
        let cyc = FractionalClustering::from_rows(
            &[vec![1.0, 0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5, 1.0]],
            &tol,
        )
        .unwrap();
        assert!(!cyc.is_extremal());
        let tree = FractionalClustering::from_rows(
            &[vec![1.0, 0.5, 1.0, 0.0], vec![0.0, 0.5, 0.0, 1.0]],
            &tol,
        )
        .unwrap();
        assert!(tree.is_extremal());
    }
}
