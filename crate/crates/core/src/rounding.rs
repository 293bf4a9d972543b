//! From fractional to integer clusterings.
//!
//! [`round_tree`] walks the assignment forest of a vertex solution and never
//! moves a cluster's weight by more than the heaviest unit. [`round_connected`]
//! grows connected regions from the sites of a shortest-path diagram.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::distance::{DistanceModel, Metric};
use crate::error::{Error, Result};
use crate::model::{raw_cluster_weights, rounding_epsilon_bound, FractionalClustering, Instance, Tolerances};
use crate::util::DisjointSets;

#[derive(Clone, Debug, PartialEq)]
pub struct MovedUnit {
    pub unit: usize,
    /// The unit's column before rounding.
    pub from: Vec<(usize, f64)>,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundingOutcome {
    pub clustering: FractionalClustering,
    /// `max_i |ω(C_i) - κ_i| / κ_i`.
    pub epsilon_achieved: f64,
    /// `max_{j,i} ω_j / κ_i`.
    pub epsilon_bound: f64,
    pub moved_units: Vec<MovedUnit>,
    /// Cyclic exchanges applied before rounding a non-vertex input.
    pub cancelled_cycles: usize,
}

/// Order in which a cluster takes its remaining fractional units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TakeOrder {
    #[default]
    UnitIndex,
    /// Heaviest first, ties by index.
    HeaviestFirst,
}

fn deviation(weights: &[f64], caps: &[f64]) -> f64 {
    weights
        .iter()
        .zip(caps)
        .map(|(w, c)| (w - c).abs() / c)
        .fold(0.0, f64::max)
}

fn check_input(instance: &Instance, clustering: &FractionalClustering, tol: &Tolerances) -> Result<Vec<Vec<f64>>> {
    let w = raw_cluster_weights(clustering, instance)?;
    for (i, (&wi, &ci)) in w.iter().zip(instance.capacities()).enumerate() {
        if (wi - ci).abs() > tol.balance * ci.max(1.0) * 1e3 {
            return Err(Error::InvalidClustering(format!(
                "cluster {i} has weight {wi}, expected {ci}"
            )));
        }
    }
    let mut flows = vec![vec![0.0; instance.m()]; clustering.k()];
    for (i, j, v) in clustering.entries() {
        flows[i][j] = v * instance.units()[j].weight;
    }
    Ok(flows)
}

/// Cancels one cycle of the assignment graph; returns false if it is a forest.
///
/// The cycle is rotated to start at its smallest cluster and walked towards
/// the smaller of that cluster's two unit neighbours. Edges alternate between
/// gaining and losing weight; the step is the smallest losing flow.
fn cancel_one_cycle(flows: &mut [Vec<f64>], k: usize, m: usize, tol: f64) -> bool {
    let mut dsu = DisjointSets::new(k + m);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); k + m];
    for i in 0..k {
        for j in 0..m {
            if flows[i][j] <= 0.0 {
                continue;
            }
            let (a, b) = (i, k + j);
            if dsu.union(a, b) {
                adj[a].push(b);
                adj[b].push(a);
                continue;
            }
            // path from b back to a in the forest closes the cycle
            let mut prev = vec![usize::MAX; k + m];
            prev[b] = b;
            let mut queue = VecDeque::from([b]);
            while let Some(x) = queue.pop_front() {
                if x == a {
                    break;
                }
                for &y in &adj[x] {
                    if prev[y] == usize::MAX {
                        prev[y] = x;
                        queue.push_back(y);
                    }
                }
            }
            let mut cycle = vec![a];
            let mut x = a;
            while x != b {
                x = prev[x];
                cycle.push(x);
            }
            // cycle = a, ..., b; the edge (b, a) closes it
            let start = (0..cycle.len())
                .filter(|&p| cycle[p] < k)
                .min_by_key(|&p| cycle[p])
                .expect("cycle has a cluster");
            let len = cycle.len();
            let next = cycle[(start + 1) % len];
            let prev_node = cycle[(start + len - 1) % len];
            let forward = next <= prev_node;
            let walk: Vec<usize> = (0..len)
                .map(|s| {
                    if forward {
                        cycle[(start + s) % len]
                    } else {
                        cycle[(start + len - s) % len]
                    }
                })
                .collect();
            let edge = |s: usize| {
                let (x, y) = (walk[s], walk[(s + 1) % len]);
                if x < k {
                    (x, y - k)
                } else {
                    (y, x - k)
                }
            };
            let step = (0..len)
                .filter(|s| s % 2 == 1)
                .map(|s| {
                    let (ci, uj) = edge(s);
                    flows[ci][uj]
                })
                .fold(f64::INFINITY, f64::min);
            for s in 0..len {
                let (ci, uj) = edge(s);
                if s % 2 == 0 {
                    flows[ci][uj] += step;
                } else {
                    flows[ci][uj] -= step;
                    if flows[ci][uj] <= tol {
                        flows[ci][uj] = 0.0;
                    }
                }
            }
            return true;
        }
    }
    false
}

pub fn round_tree(instance: &Instance, fractional: &FractionalClustering) -> Result<RoundingOutcome> {
    round_tree_with(instance, fractional, TakeOrder::UnitIndex, &Tolerances::default())
}

/// Rounds a strongly balanced clustering. Non-vertex inputs first go through
/// cyclic exchanges that keep all cluster weights and only shrink supports.
///
/// Each tree of the assignment forest is rooted at its smallest cluster and
/// clusters are visited by hop distance. A cluster keeps the unit above it iff
/// no earlier cluster took that unit, then takes the longest run of its
/// remaining fractional units that still fits under its capacity.
pub fn round_tree_with(
    instance: &Instance,
    fractional: &FractionalClustering,
    order: TakeOrder,
    tol: &Tolerances,
) -> Result<RoundingOutcome> {
    let mut flows = check_input(instance, fractional, tol)?;
    let (k, m) = (fractional.k(), fractional.m());
    let flow_tol = 1e-12 * instance.total_weight().max(1.0);
    let mut cancelled = 0;
    while cancel_one_cycle(&mut flows, k, m, flow_tol) {
        cancelled += 1;
        if cancelled > k * m + 1 {
            return Err(Error::Numerical(String::from("cycle cancelling does not terminate")));
        }
    }
    let weights = instance.weights();
    let caps = instance.capacities();
    let clusters_of = |j: usize, flows: &[Vec<f64>]| -> Vec<usize> { (0..k).filter(|&i| flows[i][j] > 0.0).collect() };
    let mut assigned = vec![usize::MAX; m];
    let mut integral_load = vec![0.0; k];
    let mut fractional_units = Vec::new();
    for j in 0..m {
        let cs = clusters_of(j, &flows);
        if cs.len() == 1 {
            assigned[j] = cs[0];
            integral_load[cs[0]] += weights[j];
        } else {
            fractional_units.push(j);
        }
    }
    // bipartite forest over clusters and fractional units
    let mut unit_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut cluster_adj: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &j in &fractional_units {
        for i in clusters_of(j, &flows) {
            unit_adj[j].push(i);
            cluster_adj[i].push(j);
        }
    }
    let mut load = integral_load.clone();
    let mut visited = vec![false; k];
    let mut unit_seen = vec![false; m];
    for root in 0..k {
        if visited[root] || cluster_adj[root].is_empty() {
            continue;
        }
        // BFS over clusters; parent_unit[i] is the unit above cluster i
        let mut parent_unit = vec![usize::MAX; k];
        let mut depth = vec![usize::MAX; k];
        let mut members = vec![root];
        depth[root] = 0;
        visited[root] = true;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for &j in &cluster_adj[i] {
                if unit_seen[j] {
                    continue;
                }
                unit_seen[j] = true;
                for &l in &unit_adj[j] {
                    if !visited[l] {
                        visited[l] = true;
                        parent_unit[l] = j;
                        depth[l] = depth[i] + 1;
                        members.push(l);
                    }
                }
            }
        }
        members.sort_by_key(|&i| (depth[i], i));
        for &i0 in &members {
            let j0 = parent_unit[i0];
            let mut cap = caps[i0] - load[i0];
            if j0 != usize::MAX && assigned[j0] == usize::MAX {
                assigned[j0] = i0;
                load[i0] += weights[j0];
                cap -= weights[j0];
            }
            let mut rest: Vec<usize> = cluster_adj[i0]
                .iter()
                .copied()
                .filter(|&j| j != j0 && assigned[j] == usize::MAX)
                .collect();
            match order {
                TakeOrder::UnitIndex => rest.sort_unstable(),
                TakeOrder::HeaviestFirst => rest.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b))),
            }
            let slack = tol.balance * caps[i0].max(1.0);
            for j in rest {
                if weights[j] > cap + slack {
                    break;
                }
                assigned[j] = i0;
                load[i0] += weights[j];
                cap -= weights[j];
            }
        }
    }
    if let Some(j) = assigned.iter().position(|&a| a == usize::MAX) {
        return Err(Error::Numerical(format!("unit {j} left unassigned")));
    }
    let moved_units = fractional_units
        .iter()
        .map(|&j| MovedUnit {
            unit: j,
            from: fractional.column(j).to_vec(),
            to: assigned[j],
        })
        .collect();
    let clustering = FractionalClustering::from_assignment(k, &assigned)?;
    let final_weights = raw_cluster_weights(&clustering, instance)?;
    Ok(RoundingOutcome {
        epsilon_achieved: deviation(&final_weights, caps),
        epsilon_bound: rounding_epsilon_bound(instance),
        clustering,
        moved_units,
        cancelled_cycles: cancelled,
    })
}

/// Iterative rounding for shortest-path diagrams that keeps every cluster
/// connected.
///
/// Regions grow from the sites. A fractional unit may join cluster `i` only
/// if it touches the current region of `i` and no other supporting cluster
/// loses the connection to its remaining units. Among such moves the one with
/// the smallest resulting maximum deviation wins, then the shorter connecting
/// edge, then the lower cluster index.
pub fn round_connected(instance: &Instance, fractional: &FractionalClustering, model: &DistanceModel) -> Result<RoundingOutcome> {
    let graph = instance
        .graph()
        .ok_or_else(|| Error::InvalidModel(String::from("connected rounding needs a graph")))?;
    if !model.metrics.iter().all(|m| *m == Metric::Graph) || !model.transform.is_affine() {
        return Err(Error::InvalidModel(String::from(
            "connected rounding needs graph metrics with an affine transform",
        )));
    }
    model.validate_for(instance)?;
    let (k, m) = (fractional.k(), fractional.m());
    if k != instance.k() || m != instance.m() {
        return Err(Error::Dimension(String::from("clustering does not match instance")));
    }
    let weights = instance.weights();
    let caps = instance.capacities();
    let sites: Vec<usize> = (0..k).map(|i| model.site_unit(i).expect("validated")).collect();
    for (a, &s) in sites.iter().enumerate() {
        if sites[..a].contains(&s) {
            return Err(Error::InvalidModel(format!("site unit {s} is shared by two clusters")));
        }
    }

    const FREE: usize = usize::MAX;
    let mut owner = vec![FREE; m]; // final cluster once decided
    let mut in_region = vec![false; m];
    let mut support: Vec<Vec<usize>> = (0..m).map(|j| fractional.column(j).iter().map(|e| e.0).collect()).collect();
    let mut moved_units = Vec::new();
    for (i, &s) in sites.iter().enumerate() {
        if support[s] != [i] {
            moved_units.push(MovedUnit {
                unit: s,
                from: fractional.column(s).to_vec(),
                to: i,
            });
            support[s] = vec![i];
        }
    }
    for j in 0..m {
        if support[j].len() == 1 {
            owner[j] = support[j][0];
        }
    }
    let mut projected = vec![0.0; k];
    for j in 0..m {
        if owner[j] != FREE {
            projected[owner[j]] += weights[j];
        } else {
            for &(i, v) in fractional.column(j) {
                projected[i] += v * weights[j];
            }
        }
    }

    // grows region i from `start` through units already owned by i
    let absorb = |start: usize, i: usize, owner: &[usize], in_region: &mut [bool]| {
        let mut stack = vec![start];
        in_region[start] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in graph.neighbors(u) {
                if !in_region[v] && owner[v] == i {
                    in_region[v] = true;
                    stack.push(v);
                }
            }
        }
    };
    for (i, &s) in sites.iter().enumerate() {
        absorb(s, i, &owner, &mut in_region);
    }

    // can cluster l still reach all its owned units from its region if `blocked` is removed?
    let reachable_without = |l: usize, blocked: usize, owner: &[usize], in_region: &[bool]| -> bool {
        let mut seen = vec![false; m];
        let mut stack: Vec<usize> = (0..m).filter(|&u| in_region[u] && owner[u] == l).collect();
        for &u in &stack {
            seen[u] = true;
        }
        while let Some(u) = stack.pop() {
            for &(v, _) in graph.neighbors(u) {
                if seen[v] || v == blocked {
                    continue;
                }
                let passable = owner[v] == l || (owner[v] == FREE && support[v].contains(&l));
                if passable {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        (0..m).all(|u| owner[u] != l || seen[u])
    };

    loop {
        let pending: Vec<usize> = (0..m).filter(|&j| owner[j] == FREE).collect();
        if pending.is_empty() {
            break;
        }
        // (deviation, edge length, cluster, unit)
        let mut best: Option<(f64, f64, usize, usize)> = None;
        for &j in &pending {
            for &i in &support[j] {
                let edge = graph
                    .neighbors(j)
                    .iter()
                    .filter(|&&(u, _)| in_region[u] && owner[u] == i)
                    .map(|&(_, len)| len)
                    .fold(f64::INFINITY, f64::min);
                if edge == f64::INFINITY {
                    continue;
                }
                let mut owner_try = owner.clone();
                owner_try[j] = i;
                let keeps = support[j]
                    .iter()
                    .filter(|&&l| l != i)
                    .all(|&l| reachable_without(l, j, &owner_try, &in_region));
                if !keeps {
                    continue;
                }
                let mut loads = projected.clone();
                for &(l, v) in fractional.column(j) {
                    loads[l] -= v * weights[j];
                }
                loads[i] += weights[j];
                let dev = deviation(&loads, caps);
                let key = (dev, edge, i, j);
                let better = match best {
                    None => true,
                    Some(b) => {
                        let dev_tol = 1e-12;
                        if key.0 < b.0 - dev_tol {
                            true
                        } else if key.0 > b.0 + dev_tol {
                            false
                        } else {
                            (key.1, key.2, key.3) < (b.1, b.2, b.3)
                        }
                    }
                };
                if better {
                    best = Some(key);
                }
            }
        }
        let Some((_, _, i, j)) = best else {
            return Err(Error::RoundingBlocked { units: pending });
        };
        for &(l, v) in fractional.column(j) {
            projected[l] -= v * weights[j];
        }
        projected[i] += weights[j];
        owner[j] = i;
        absorb(j, i, &owner, &mut in_region);
        moved_units.push(MovedUnit {
            unit: j,
            from: fractional.column(j).to_vec(),
            to: i,
        });
    }
    let clustering = FractionalClustering::from_assignment(k, &owner)?;
    let detached = crate::diagram::detached_parts(instance, &clustering);
    if !detached.is_empty() {
        return Err(Error::RoundingBlocked {
            units: detached.into_iter().flat_map(|d| d.units).collect(),
        });
    }
    let final_weights = raw_cluster_weights(&clustering, instance)?;
    Ok(RoundingOutcome {
        epsilon_achieved: deviation(&final_weights, caps),
        epsilon_bound: rounding_epsilon_bound(instance),
        clustering,
        moved_units,
        cancelled_cycles: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::{Site, Transform};
    use crate::model::{cluster_weights, Unit};

    fn golden(k: usize, caps: Vec<f64>) -> Instance {
        let units = (0..4).map(|j| Unit::new(format!("x{}", j + 1), j as f64, 0.0, 1.0)).collect();
        Instance::new(units, Some(vec![(0, 1, 1.0), (1, 2, 1.0), (1, 3, 2.0)]), k, Some(caps)).unwrap()
    }

    #[test]
    fn half_split_rounds_to_balanced_halves() {
        let inst = golden(2, vec![2.0, 2.0]);
        let tol = Tolerances::default();
        let ca = FractionalClustering::from_rows(&[vec![1.0, 0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5, 1.0]], &tol).unwrap();
        let out = round_tree(&inst, &ca).unwrap();
        assert_eq!(out.cancelled_cycles, 1);
        assert_eq!(out.clustering.assignment(), Some(vec![0, 0, 1, 1]));
        assert_eq!(cluster_weights(&out.clustering, &inst).unwrap(), vec![2.0, 2.0]);
        assert_eq!(out.epsilon_achieved, 0.0);
    }

    #[test]
    fn integer_input_is_a_fixed_point() {
        let inst = golden(2, vec![2.0, 2.0]);
        let c = FractionalClustering::from_assignment(2, &[0, 1, 0, 1]).unwrap();
        let out = round_tree(&inst, &c).unwrap();
        assert_eq!(out.clustering, c);
        assert!(out.moved_units.is_empty());
        assert_eq!(out.epsilon_achieved, 0.0);
    }

    #[test]
    fn heavy_split_unit_stays_within_bound() {
        let units = vec![Unit::new("a", 0.0, 0.0, 2.0), Unit::new("b", 1.0, 0.0, 1.0)];
        let inst = Instance::new(units, None, 2, Some(vec![1.5, 1.5])).unwrap();
        let c = FractionalClustering::from_rows(&[vec![0.75, 0.0], vec![0.25, 1.0]], &Tolerances::default()).unwrap();
        let out = round_tree(&inst, &c).unwrap();
        assert_eq!(out.clustering.assignment(), Some(vec![1, 1]));
        assert_eq!(out.epsilon_achieved, 1.0);
        assert!((out.epsilon_bound - 2.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn unbalanced_input_rejected() {
        let inst = golden(2, vec![2.0, 2.0]);
        let c = FractionalClustering::from_assignment(2, &[0, 0, 0, 1]).unwrap();
        assert!(matches!(round_tree(&inst, &c), Err(Error::InvalidClustering(_))));
    }

    fn path5() -> Instance {
        let units = (0..5).map(|j| Unit::new(format!("p{j}"), j as f64, 0.0, 1.0)).collect();
        let edges = (0..4).map(|j| (j, j + 1, 1.0)).collect();
        Instance::new(units, Some(edges), 2, Some(vec![2.5, 2.5])).unwrap()
    }

    fn ends_model() -> DistanceModel {
        DistanceModel::new(vec![Metric::Graph; 2], Transform::Identity, vec![Site::Unit(0), Site::Unit(4)], vec![0.0; 2]).unwrap()
    }

    #[test]
    fn path_middle_goes_to_one_side() {
        let inst = path5();
        let tol = Tolerances::default();
        let c = FractionalClustering::from_rows(
            &[vec![1.0, 1.0, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 1.0, 1.0]],
            &tol,
        )
        .unwrap();
        let out = round_connected(&inst, &c, &ends_model()).unwrap();
        assert_eq!(out.clustering.assignment(), Some(vec![0, 0, 0, 1, 1]));
        assert!((out.epsilon_achieved - 0.2).abs() < 1e-12);
        assert!(inst.graph().unwrap().induced_connected(&out.clustering.support_mask(1)));
    }

    #[test]
    fn connected_rounding_without_fractions_is_identity() {
        let inst = path5();
        let c = FractionalClustering::from_assignment(2, &[0, 0, 0, 1, 1]).unwrap();
        let out = round_connected(&inst, &c, &ends_model()).unwrap();
        assert_eq!(out.clustering, c);
        assert!(out.moved_units.is_empty());
    }

    #[test]
    fn whole_branch_goes_to_one_cluster() {
        // hub 0 - 1 - 2 - 3 - 4 with a branch 2 - 5 - 6 shared by both clusters
        let units = (0..7).map(|j| Unit::new(format!("b{j}"), j as f64, 0.0, 1.0)).collect();
        let edges = vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (2, 5, 1.0), (5, 6, 1.0)];
        let inst = Instance::new(units, Some(edges), 2, Some(vec![3.5, 3.5])).unwrap();
        let tol = Tolerances::default();
        let c = FractionalClustering::from_rows(
            &[
                vec![1.0, 1.0, 0.5, 0.0, 0.0, 0.5, 0.5],
                vec![0.0, 0.0, 0.5, 1.0, 1.0, 0.5, 0.5],
            ],
            &tol,
        )
        .unwrap();
        let model = DistanceModel::new(vec![Metric::Graph; 2], Transform::Identity, vec![Site::Unit(0), Site::Unit(4)], vec![0.0; 2]).unwrap();
        let out = round_connected(&inst, &c, &model).unwrap();
        let a = out.clustering.assignment().unwrap();
        assert_eq!(a[5], a[6]);
        assert_eq!(a[2], a[5]);
        for i in 0..2 {
            assert!(inst.graph().unwrap().induced_connected(&out.clustering.support_mask(i)));
        }
    }
}
