//! The balanced transportation program and its dual.
//!
//! Primal: minimize `Σ ξ_ij ω_j c_ij` over fractional clusterings with
//! cluster weights equal to the capacities. Dual: maximize
//! `Σ ω_j η_j - Σ κ_i μ_i` subject to `η_j <= c_ij + μ_i`. The additive
//! weights `μ` of a supporting diagram are exactly the dual prices.

mod centering;
mod network_simplex;
mod oracle;
mod perturb;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use oracle::{brute_force_oracle, OracleResult};
pub use perturb::{jitter_edge_lengths, perturb_sites};

use crate::distance::{cost_matrix, DistanceModel};
use crate::error::{Error, Result};
use crate::model::{FractionalClustering, Instance, Tolerances};
use centering::{center, CenteringInput};
use network_simplex::{min_cost_flow, Arc};

/// Transportation program with operator constraints. Pins and exclusions are
/// `(cluster, unit)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportProblem {
    /// `costs[i][j] = h(d_i(s_i, x_j))`.
    pub costs: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub capacities: Vec<f64>,
    pub pins: Vec<(usize, usize)>,
    pub exclusions: Vec<(usize, usize)>,
}

impl TransportProblem {
    pub fn new(costs: Vec<Vec<f64>>, weights: Vec<f64>, capacities: Vec<f64>) -> Self {
        TransportProblem {
            costs,
            weights,
            capacities,
            pins: Vec::new(),
            exclusions: Vec::new(),
        }
    }

    pub fn from_instance(instance: &Instance, model: &DistanceModel) -> Result<Self> {
        Ok(TransportProblem::new(
            cost_matrix(instance, model)?,
            instance.weights(),
            instance.capacities().to_vec(),
        ))
    }

    pub fn with_constraints(mut self, pins: Vec<(usize, usize)>, exclusions: Vec<(usize, usize)>) -> Self {
        self.pins = pins;
        self.exclusions = exclusions;
        self
    }

    pub fn k(&self) -> usize {
        self.capacities.len()
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn is_excluded(&self, i: usize, j: usize) -> bool {
        self.exclusions.contains(&(i, j))
    }

    /// Structural checks; see [`Error`] variants for what is rejected.
    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        let (k, m) = (self.k(), self.m());
        if k == 0 {
            return Err(Error::InvalidArgument(String::from("no clusters")));
        }
        if self.costs.len() != k || self.costs.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension(format!("cost matrix must be {k} x {m}")));
        }
        if self.costs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(String::from("costs must be finite")));
        }
        if let Some(j) = self.weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("weight of unit {j} must be positive")));
        }
        if let Some(i) = self.capacities.iter().position(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument(format!("capacity of cluster {i} must be non-negative")));
        }
        let ws: f64 = self.weights.iter().sum();
        let cs: f64 = self.capacities.iter().sum();
        if (ws - cs).abs() > tol.balance * ws.max(cs).max(1.0) {
            return Err(Error::CapacityMismatch {
                capacities: cs,
                weights: ws,
            });
        }
        for &(i, j) in self.pins.iter().chain(&self.exclusions) {
            if i >= k || j >= m {
                return Err(Error::InvalidArgument(format!("constraint ({i}, {j}) out of range")));
            }
        }
        for &p in &self.pins {
            if self.exclusions.contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "unit {} is both pinned to and excluded from cluster {}",
                    p.1, p.0
                )));
            }
        }
        let mut pinned = vec![usize::MAX; m];
        for &(i, j) in &self.pins {
            if pinned[j] != usize::MAX && pinned[j] != i {
                return Err(Error::InvalidArgument(format!("unit {j} is pinned twice")));
            }
            pinned[j] = i;
        }
        Ok(())
    }

    fn pinned_cluster(&self) -> Vec<Option<usize>> {
        let mut pinned = vec![None; self.m()];
        for &(i, j) in &self.pins {
            pinned[j] = Some(i);
        }
        pinned
    }

    /// Primal objective `Σ ξ_ij ω_j c_ij`, summed unit by unit.
    pub fn objective(&self, clustering: &FractionalClustering) -> f64 {
        clustering
            .entries()
            .map(|(i, j, v)| v * self.weights[j] * self.costs[i][j])
            .sum()
    }

    /// Dual objective `Σ ω_j η_j - Σ κ_i μ_i`.
    pub fn dual_objective(&self, duals: &Duals) -> f64 {
        let a: f64 = self.weights.iter().zip(&duals.eta).map(|(w, e)| w * e).sum();
        let b: f64 = self.capacities.iter().zip(&duals.mu).map(|(c, m)| c * m).sum();
        a - b
    }
}

/// Dual prices, normalized so that `min μ = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Duals {
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Duals {
    /// Largest violation of `η_j <= c_ij + μ_i` over arcs that are neither
    /// excluded nor belong to a pinned unit.
    pub fn max_violation(&self, problem: &TransportProblem) -> f64 {
        let pinned = problem.pinned_cluster();
        let mut worst: f64 = 0.0;
        for j in 0..problem.m() {
            if pinned[j].is_some() {
                continue;
            }
            for i in 0..problem.k() {
                if !problem.is_excluded(i, j) {
                    worst = worst.max(self.eta[j] - problem.costs[i][j] - self.mu[i]);
                }
            }
        }
        worst
    }

    /// `c_ij + μ_i - η_j`.
    pub fn slack(&self, problem: &TransportProblem, i: usize, j: usize) -> f64 {
        problem.costs[i][j] + self.mu[i] - self.eta[j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub clustering: FractionalClustering,
    pub duals: Duals,
    pub objective: f64,
    pub dual_objective: f64,
    /// Smallest dual slack outside the support; positive means the duals
    /// are strictly complementary to this solution.
    pub min_slack: f64,
    pub is_vertex: bool,
    /// Edges `(cluster, unit)` with positive assignment.
    pub assignment_forest: Vec<(usize, usize)>,
}

impl SolveResult {
    /// `|primal - dual| / max(1, |primal|)`.
    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs() / self.objective.abs().max(1.0)
    }
}

struct Reduced {
    free: Vec<usize>,
    residual: Vec<f64>,
    pinned: Vec<Option<usize>>,
}

fn reduce(problem: &TransportProblem, tol: &Tolerances) -> Result<Reduced> {
    problem.validate(tol)?;
    let pinned = problem.pinned_cluster();
    let mut residual = problem.capacities.clone();
    for (j, p) in pinned.iter().enumerate() {
        if let Some(i) = *p {
            residual[i] -= problem.weights[j];
        }
    }
    for (i, r) in residual.iter_mut().enumerate() {
        let slack = tol.balance * problem.capacities[i].max(1.0);
        if *r < -slack {
            return Err(Error::Infeasible(format!(
                "pinned weight exceeds capacity of cluster {i} by {}",
                -*r
            )));
        }
        if *r < 0.0 {
            *r = 0.0;
        }
    }
    let free: Vec<usize> = (0..problem.m()).filter(|&j| pinned[j].is_none()).collect();
    let free_weight: f64 = free.iter().map(|&j| problem.weights[j]).sum();
    let res_sum: f64 = residual.iter().sum();
    if res_sum > 0.0 && free_weight > 0.0 {
        let scale = free_weight / res_sum;
        for r in &mut residual {
            *r *= scale;
        }
    } else if free_weight > 0.0 {
        return Err(Error::Infeasible(String::from("pins exhaust all capacity")));
    }
    for &j in &free {
        if (0..problem.k()).all(|i| problem.is_excluded(i, j)) {
            return Err(Error::Infeasible(format!("unit {j} is excluded from every cluster")));
        }
    }
    Ok(Reduced {
        free,
        residual,
        pinned,
    })
}

/// Runs the flow solver on the free units with per-arc `costs` over `arcs`
/// (`(cluster, unit)` of the original problem) and returns the columns.
fn flow_columns(
    problem: &TransportProblem,
    reduced: &Reduced,
    arcs: &[(usize, usize)],
    cost: impl Fn(usize, usize) -> f64,
    tol: &Tolerances,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let mut local = vec![usize::MAX; problem.m()];
    for (x, &j) in reduced.free.iter().enumerate() {
        local[j] = x;
    }
    let flow_arcs: Vec<Arc> = arcs
        .iter()
        .map(|&(i, j)| Arc {
            unit: local[j],
            cluster: i,
            cost: cost(i, j),
        })
        .collect();
    let supply: Vec<f64> = reduced.free.iter().map(|&j| problem.weights[j]).collect();
    let sol = min_cost_flow(&supply, &reduced.residual, &flow_arcs)?;
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); problem.m()];
    for (x, &(i, j)) in arcs.iter().enumerate() {
        if sol.flow[x] > 0.0 {
            columns[j].push((i, sol.flow[x]));
        }
    }
    for (j, p) in reduced.pinned.iter().enumerate() {
        if let Some(i) = *p {
            columns[j].push((i, problem.weights[j]));
        }
    }
    for (j, col) in columns.iter_mut().enumerate() {
        normalize_column(col, tol);
        if col.is_empty() {
            return Err(Error::Numerical(format!("unit {j} received no flow")));
        }
    }
    Ok(columns)
}

/// Turns flows into fractions summing to one; drops negligible entries.
fn normalize_column(col: &mut Vec<(usize, f64)>, tol: &Tolerances) {
    col.sort_by_key(|a| a.0);
    let total: f64 = col.iter().map(|e| e.1).sum();
    if total <= 0.0 {
        col.clear();
        return;
    }
    col.retain(|e| e.1 / total > tol.integrality);
    let total: f64 = col.iter().map(|e| e.1).sum();
    for e in col.iter_mut() {
        e.1 /= total;
    }
    if col.len() == 1 {
        col[0].1 = 1.0;
    }
}

fn allowed_arcs(problem: &TransportProblem, reduced: &Reduced) -> Vec<(usize, usize)> {
    let mut arcs = Vec::new();
    for &j in &reduced.free {
        for i in 0..problem.k() {
            if !problem.is_excluded(i, j) {
                arcs.push((i, j));
            }
        }
    }
    arcs
}

fn centered_duals(
    problem: &TransportProblem,
    reduced: &Reduced,
    columns: &[Vec<(usize, f64)>],
    tol: &Tolerances,
) -> Result<(Duals, f64)> {
    let support: Vec<Vec<usize>> = columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            if reduced.pinned[j].is_some() {
                Vec::new()
            } else {
                col.iter().map(|e| e.0).collect()
            }
        })
        .collect();
    let allowed = |i: usize, j: usize| !problem.is_excluded(i, j);
    let centered = center(&CenteringInput {
        costs: &problem.costs,
        allowed: &allowed,
        support: &support,
        k: problem.k(),
        tol: tol.duality,
    })?;
    let mu = centered.mu;
    let eta = (0..problem.m())
        .map(|j| match reduced.pinned[j] {
            Some(i) => problem.costs[i][j] + mu[i],
            None => (0..problem.k())
                .filter(|&i| allowed(i, j))
                .map(|i| problem.costs[i][j] + mu[i])
                .fold(f64::INFINITY, f64::min),
        })
        .collect();
    Ok((Duals { mu, eta }, centered.min_slack))
}

fn finish(
    problem: &TransportProblem,
    reduced: &Reduced,
    columns: Vec<Vec<(usize, f64)>>,
    tol: &Tolerances,
) -> Result<SolveResult> {
    let (duals, min_slack) = centered_duals(problem, reduced, &columns, tol)?;
    let clustering = FractionalClustering::from_columns_unchecked(problem.k(), columns);
    let objective = problem.objective(&clustering);
    let dual_objective = problem.dual_objective(&duals);
    Ok(SolveResult {
        is_vertex: clustering.is_extremal(),
        assignment_forest: clustering.assignment_edges(),
        clustering,
        duals,
        objective,
        dual_objective,
        min_slack,
    })
}

/// Optimal vertex of the (restricted) transportation polytope with centered duals.
pub fn solve(problem: &TransportProblem) -> Result<SolveResult> {
    solve_with(problem, &Tolerances::default())
}

pub fn solve_with(problem: &TransportProblem, tol: &Tolerances) -> Result<SolveResult> {
    let reduced = reduce(problem, tol)?;
    let arcs = allowed_arcs(problem, &reduced);
    let columns = flow_columns(problem, &reduced, &arcs, |i, j| problem.costs[i][j], tol)?;
    finish(problem, &reduced, columns, tol)
}

/// An optimal solution whose support is the whole optimal face, so that the
/// diagram built from its duals supports it.
///
/// The zero-slack arcs of the centered duals span the optimal face. Vertices
/// of that face are collected by repeatedly maximizing the number of
/// not-yet-covered arcs, and their average is returned.
pub fn relative_interior_solution(problem: &TransportProblem) -> Result<SolveResult> {
    relative_interior_with(problem, &Tolerances::default())
}

pub fn relative_interior_with(problem: &TransportProblem, tol: &Tolerances) -> Result<SolveResult> {
    let reduced = reduce(problem, tol)?;
    let arcs = allowed_arcs(problem, &reduced);
    let first = flow_columns(problem, &reduced, &arcs, |i, j| problem.costs[i][j], tol)?;
    let (duals, _) = centered_duals(problem, &reduced, &first, tol)?;
    let face: Vec<(usize, usize)> = arcs
        .iter()
        .copied()
        .filter(|&(i, j)| {
            let c = problem.costs[i][j];
            duals.slack(problem, i, j) <= tol.tie * c.abs().max(duals.mu[i].abs()).max(1.0)
        })
        .collect();
    let k = problem.k();
    let mut covered = vec![false; face.len()];
    let mark = |cols: &[Vec<(usize, f64)>], covered: &mut [bool]| -> usize {
        let mut fresh = 0;
        for (x, &(i, j)) in face.iter().enumerate() {
            if !covered[x] && cols[j].iter().any(|e| e.0 == i) {
                covered[x] = true;
                fresh += 1;
            }
        }
        fresh
    };
    mark(&first, &mut covered);
    let mut vertices = vec![first];
    while covered.iter().any(|c| !c) {
        let mut uncovered: Vec<(usize, usize)> =
            face.iter().zip(&covered).filter(|(_, c)| !**c).map(|(a, _)| *a).collect();
        uncovered.sort_unstable();
        let cols = flow_columns(
            problem,
            &reduced,
            &face,
            |i, j| if uncovered.binary_search(&(i, j)).is_ok() { -1.0 } else { 0.0 },
            tol,
        )?;
        if mark(&cols, &mut covered) == 0 {
            break;
        }
        vertices.push(cols);
    }
    let share = 1.0 / vertices.len() as f64;
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); problem.m()];
    for cols in &vertices {
        for (j, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                match columns[j].iter_mut().find(|e| e.0 == i) {
                    Some(e) => e.1 += share * v,
                    None => columns[j].push((i, share * v)),
                }
            }
        }
    }
    for col in columns.iter_mut() {
        normalize_column(col, tol);
    }
    debug_assert!(columns.iter().all(|c| c.iter().all(|e| e.0 < k)));
    finish(problem, &reduced, columns, tol)
}
