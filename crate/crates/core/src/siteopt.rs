//! Choosing the structural parameters: sites for power and anisotropic
//! diagrams by balanced k-means, sites for shortest-path diagrams by local
//! search.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::diagram::centroids;
use crate::distance::{dijkstra, DistanceModel, Metric, Site, Transform};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::model::{raw_cluster_weights, FractionalClustering, Instance};
use crate::rounding::round_connected;
use crate::solver::{relative_interior_solution, solve, TransportProblem};
use crate::util::SeededRng;

/// `Σ_i κ_i ‖c(C_i)‖²` with `κ_i = ω(C_i)`.
pub fn compute_phi(instance: &Instance, clustering: &FractionalClustering) -> Result<f64> {
    let c = centroids(instance, clustering)?;
    let w = raw_cluster_weights(clustering, instance)?;
    Ok(c.iter().zip(&w).map(|(p, w)| w * p.norm_sq()).sum())
}

/// Moment of inertia measured in each cluster's own norm; equals the plain
/// moment of inertia for Euclidean metrics.
fn objective(instance: &Instance, metrics: &[Metric], clustering: &FractionalClustering) -> Result<f64> {
    let c = centroids(instance, clustering)?;
    Ok(clustering
        .entries()
        .map(|(i, j, v)| {
            let u = &instance.units()[j];
            let d = u.position - c[i];
            let sq = match &metrics[i] {
                Metric::Ellipsoidal(m) => m.quad(d),
                _ => d.norm_sq(),
            };
            v * u.weight * sq
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansIteration {
    /// Sites used by this iteration's solve.
    pub sites: Vec<Point>,
    /// Moment of inertia of the resulting clustering.
    pub objective: f64,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansTrace {
    pub iterations: Vec<KMeansIteration>,
    pub converged: bool,
    /// Some centroid step produced coinciding sites that had to be separated.
    pub jittered: bool,
    /// Last sites with the additive weights of the last solve.
    pub model: DistanceModel,
    pub clustering: FractionalClustering,
}

impl KMeansTrace {
    pub fn final_objective(&self) -> f64 {
        self.iterations.last().map_or(f64::INFINITY, |it| it.objective)
    }
}

fn check_kmeans_metrics(metrics: &[Metric], k: usize) -> Result<()> {
    if metrics.len() != k {
        return Err(Error::Dimension(format!("{} metrics for {k} clusters", metrics.len())));
    }
    if metrics.contains(&Metric::Graph) {
        return Err(Error::InvalidModel(String::from("balanced k-means needs Euclidean or ellipsoidal metrics")));
    }
    Ok(())
}

fn separate(sites: &mut [Point], scale: f64) -> bool {
    let mut moved = false;
    for a in 1..sites.len() {
        let mut step = 0;
        while (0..a).any(|b| sites[a].dist(sites[b]) <= 1e-9 * scale) {
            step += 1;
            let angle = a as f64 + step as f64;
            sites[a] += Point::new(libm::cos(angle), libm::sin(angle)) * (1e-6 * scale);
            moved = true;
        }
    }
    moved
}

/// Alternates an optimal balanced assignment at fixed sites with moving each
/// site to its cluster's centroid. Stops once no site moves by more than
/// `tol · diameter`.
pub fn balanced_kmeans(
    instance: &Instance,
    initial_sites: &[Point],
    metrics: &[Metric],
    max_iter: usize,
    tol: f64,
) -> Result<KMeansTrace> {
    let k = instance.k();
    if initial_sites.len() != k {
        return Err(Error::Dimension(format!("{} sites for {k} clusters", initial_sites.len())));
    }
    check_kmeans_metrics(metrics, k)?;
    let scale = instance.diameter().max(1e-300);
    for a in 0..k {
        for b in 0..a {
            if initial_sites[a] == initial_sites[b] {
                return Err(Error::InvalidArgument(format!("initial sites {b} and {a} coincide")));
            }
        }
    }
    let mut sites = initial_sites.to_vec();
    let mut iterations = Vec::new();
    let mut jittered = false;
    let mut converged = false;
    let mut last = None;
    for _ in 0..max_iter.max(1) {
        let model = DistanceModel::new(
            metrics.to_vec(),
            Transform::Square,
            sites.iter().map(|&p| Site::Point(p)).collect(),
            vec![0.0; k],
        )?;
        let problem = TransportProblem::from_instance(instance, &model)?;
        let sol = solve(&problem)?;
        let obj = objective(instance, metrics, &sol.clustering)?;
        let phi = compute_phi(instance, &sol.clustering)?;
        iterations.push(KMeansIteration {
            sites: sites.clone(),
            objective: obj,
            phi,
        });
        let mut next = centroids(instance, &sol.clustering)?;
        let movement = next
            .iter()
            .zip(&sites)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max);
        last = Some((model.with_mu(sol.duals.mu.clone()), sol.clustering));
        if movement <= tol * scale {
            converged = true;
            break;
        }
        jittered |= separate(&mut next, scale);
        sites = next;
    }
    let (model, clustering) = last.expect("at least one iteration");
    Ok(KMeansTrace {
        iterations,
        converged,
        jittered,
        model,
        clustering,
    })
}

/// k-means++ seeding on unit positions: first site by weight, the rest by
/// weight times squared distance to the nearest chosen site.
pub fn kmeans_plus_plus(instance: &Instance, k: usize, rng: &mut SeededRng) -> Result<Vec<Point>> {
    let pos = instance.positions();
    let w = instance.weights();
    let mut sites = vec![pos[rng.weighted_index(&w)]];
    let mut d2: Vec<f64> = pos.iter().map(|p| (*p - sites[0]).norm_sq()).collect();
    while sites.len() < k {
        let score: Vec<f64> = d2.iter().zip(&w).map(|(d, w)| d * w).collect();
        if !score.iter().any(|&s| s > 0.0) {
            return Err(Error::InvalidArgument(format!("fewer than {k} distinct unit positions")));
        }
        let p = pos[rng.weighted_index(&score)];
        sites.push(p);
        for (d, q) in d2.iter_mut().zip(&pos) {
            *d = d.min((*q - p).norm_sq());
        }
    }
    Ok(sites)
}

/// Runs [`balanced_kmeans`] from `restarts` seeded k-means++ starts and keeps
/// the run with the smallest final moment of inertia.
pub fn multi_start_kmeans(
    instance: &Instance,
    metrics: &[Metric],
    restarts: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansTrace> {
    let mut rng = SeededRng::new(seed);
    let mut best: Option<KMeansTrace> = None;
    for _ in 0..restarts.max(1) {
        let init = kmeans_plus_plus(instance, instance.k(), &mut rng)?;
        let trace = balanced_kmeans(instance, &init, metrics, max_iter, tol)?;
        if best.as_ref().is_none_or(|b| trace.final_objective() < b.final_objective()) {
            best = Some(trace);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalSearchConfig {
    /// Each site may move to one of its `neighborhood` closest units
    /// (itself included).
    pub neighborhood: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        LocalSearchConfig {
            neighborhood: 50,
            max_iterations: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSearchOutcome {
    pub sites: Vec<usize>,
    /// Maximum relative deviation after connected rounding; infinite if the
    /// rounding was blocked.
    pub deviation: f64,
    pub initial_deviation: f64,
    pub improvements: usize,
    pub evaluations: usize,
}

struct SiteEvaluator<'a> {
    instance: &'a Instance,
    pins: &'a [(usize, usize)],
    exclusions: &'a [(usize, usize)],
    cache: BTreeMap<usize, Vec<f64>>,
    evaluations: usize,
}

impl SiteEvaluator<'_> {
    fn distances(&mut self, s: usize) -> &[f64] {
        let graph = self.instance.graph().expect("checked");
        self.cache.entry(s).or_insert_with(|| dijkstra(graph, &[s]))
    }

    fn deviation(&mut self, sites: &[usize]) -> f64 {
        self.evaluations += 1;
        let costs: Vec<Vec<f64>> = sites.iter().map(|&s| self.distances(s).to_vec()).collect();
        let problem = TransportProblem::new(costs, self.instance.weights(), self.instance.capacities().to_vec())
            .with_constraints(self.pins.to_vec(), self.exclusions.to_vec());
        let Ok(model) = DistanceModel::uniform(Metric::Graph, Transform::Identity, sites.iter().map(|&s| Site::Unit(s)).collect()) else {
            return f64::INFINITY;
        };
        let Ok(sol) = relative_interior_solution(&problem) else {
            return f64::INFINITY;
        };
        match round_connected(self.instance, &sol.clustering, &model) {
            Ok(out) => out.epsilon_achieved,
            Err(_) => f64::INFINITY,
        }
    }
}

/// First-improvement hill climbing over single-site moves, scoring each
/// candidate by the deviation of its connected rounding.
pub fn local_search_sites(instance: &Instance, initial_sites: &[usize], config: &LocalSearchConfig) -> Result<LocalSearchOutcome> {
    local_search_sites_constrained(instance, initial_sites, config, &[], &[])
}

/// Whether unit `u` may serve as the site of cluster `i` under the given
/// `(cluster, unit)` pins and exclusions.
pub fn site_allowed(i: usize, u: usize, pins: &[(usize, usize)], exclusions: &[(usize, usize)]) -> bool {
    !exclusions.contains(&(i, u)) && pins.iter().all(|&(c, v)| v != u || c == i)
}

/// [`local_search_sites`] with operator constraints. Sites never move onto a
/// unit that is excluded from their cluster or pinned to another one.
pub fn local_search_sites_constrained(
    instance: &Instance,
    initial_sites: &[usize],
    config: &LocalSearchConfig,
    pins: &[(usize, usize)],
    exclusions: &[(usize, usize)],
) -> Result<LocalSearchOutcome> {
    let k = instance.k();
    if initial_sites.len() != k {
        return Err(Error::Dimension(format!("{} sites for {k} clusters", initial_sites.len())));
    }
    if instance.graph().is_none() {
        return Err(Error::InvalidModel(String::from("local search needs a graph")));
    }
    DistanceModel::uniform(Metric::Graph, Transform::Identity, initial_sites.iter().map(|&s| Site::Unit(s)).collect())?
        .validate_for(instance)?;
    for (a, s) in initial_sites.iter().enumerate() {
        if initial_sites[..a].contains(s) {
            return Err(Error::InvalidArgument(format!("site unit {s} is used twice")));
        }
    }
    let r = config.neighborhood.clamp(1, instance.m());
    let mut eval = SiteEvaluator {
        instance,
        pins,
        exclusions,
        cache: BTreeMap::new(),
        evaluations: 0,
    };
    let mut rng = SeededRng::new(config.seed);
    let mut sites = initial_sites.to_vec();
    let initial_deviation = eval.deviation(&sites);
    let mut best = initial_deviation;
    let mut improvements = 0;
    for _ in 0..config.max_iterations {
        let mut moves = Vec::new();
        for i in 0..k {
            let d = eval.distances(sites[i]).to_vec();
            let mut order: Vec<usize> = (0..instance.m()).filter(|&u| d[u].is_finite()).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
            for &u in order.iter().take(r) {
                if !sites.contains(&u) && site_allowed(i, u, pins, exclusions) {
                    moves.push((i, u));
                }
            }
        }
        rng.shuffle(&mut moves);
        let mut improved = false;
        for (i, u) in moves {
            let mut trial = sites.clone();
            trial[i] = u;
            let dev = eval.deviation(&trial);
            if dev < best - 1e-12 {
                best = dev;
                sites = trial;
                improvements += 1;
                improved = true;
                break;
            }
        }
        if !improved || best == 0.0 {
            break;
        }
    }
    Ok(LocalSearchOutcome {
        sites,
        deviation: best,
        initial_deviation,
        improvements,
        evaluations: eval.evaluations,
    })
}

/// For each cluster, the unit closest to its centroid that no earlier
/// cluster has taken.
pub fn units_closest_to_centroids(instance: &Instance, clustering: &FractionalClustering) -> Result<Vec<usize>> {
    let c = centroids(instance, clustering)?;
    let pos = instance.positions();
    let mut taken = vec![false; instance.m()];
    let mut out = Vec::with_capacity(c.len());
    for p in c {
        let j = (0..pos.len())
            .filter(|&j| !taken[j])
            .min_by(|&a, &b| pos[a].dist(p).total_cmp(&pos[b].dist(p)).then(a.cmp(&b)))
            .ok_or_else(|| Error::InvalidArgument(String::from("more clusters than units")))?;
        taken[j] = true;
        out.push(j);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::moment_of_inertia;
    use crate::model::Unit;

    fn path(m: usize, caps: Vec<f64>) -> Instance {
        let units = (0..m).map(|j| Unit::new(format!("x{}", j + 1), j as f64, 0.0, 1.0)).collect();
        let edges = (0..m - 1).map(|j| (j, j + 1, 1.0)).collect();
        Instance::new(units, Some(edges), caps.len(), Some(caps)).unwrap()
    }

    #[test]
    fn phi_of_two_singletons() {
        let units = vec![Unit::new("a", 0.0, 0.0, 1.0), Unit::new("b", 2.0, 0.0, 1.0)];
        let inst = Instance::new(units, None, 2, Some(vec![1.0, 1.0])).unwrap();
        let c = FractionalClustering::from_assignment(2, &[0, 1]).unwrap();
        assert_eq!(compute_phi(&inst, &c).unwrap(), 4.0);
        let one = Instance::new(
            vec![Unit::new("a", -1.0, 0.0, 1.0), Unit::new("b", 1.0, 0.0, 1.0)],
            None,
            1,
            Some(vec![2.0]),
        )
        .unwrap();
        assert_eq!(compute_phi(&one, &FractionalClustering::from_assignment(1, &[0, 0]).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn centroidal_start_is_a_fixed_point() {
        let units = vec![
            Unit::new("a", 0.0, 0.0, 1.0),
            Unit::new("b", 0.0, 1.0, 1.0),
            Unit::new("c", 10.0, 0.0, 1.0),
            Unit::new("d", 10.0, 1.0, 1.0),
        ];
        let inst = Instance::new(units, None, 2, Some(vec![2.0, 2.0])).unwrap();
        let sites = [Point::new(0.0, 0.5), Point::new(10.0, 0.5)];
        let t = balanced_kmeans(&inst, &sites, &[Metric::Euclidean; 2], 20, 1e-9).unwrap();
        assert!(t.converged);
        assert_eq!(t.iterations.len(), 1);
        assert_eq!(t.clustering.assignment(), Some(vec![0, 0, 1, 1]));
        assert_eq!(t.final_objective(), moment_of_inertia(&inst, &t.clustering).unwrap());
    }

    #[test]
    fn coincident_start_rejected() {
        let inst = path(4, vec![2.0, 2.0]);
        let p = Point::new(1.0, 0.0);
        assert!(balanced_kmeans(&inst, &[p, p], &[Metric::Euclidean; 2], 5, 1e-9).is_err());
    }

    #[test]
    fn local_search_balances_a_path() {
        let inst = path(4, vec![2.0, 2.0]);
        let out = local_search_sites(&inst, &[0, 1], &LocalSearchConfig::default()).unwrap();
        assert_eq!(out.initial_deviation, 0.5);
        assert_eq!(out.deviation, 0.0);
        assert_ne!(out.sites, vec![0, 1]);
    }

    #[test]
    fn local_search_keeps_good_sites() {
        let inst = path(4, vec![2.0, 2.0]);
        let out = local_search_sites(&inst, &[0, 3], &LocalSearchConfig::default()).unwrap();
        assert_eq!(out.sites, vec![0, 3]);
        assert_eq!(out.deviation, 0.0);
        assert_eq!(out.improvements, 0);
    }

    #[test]
    fn unit_neighborhood_stops_at_once() {
        let inst = path(4, vec![2.0, 2.0]);
        let cfg = LocalSearchConfig {
            neighborhood: 1,
            ..LocalSearchConfig::default()
        };
        let out = local_search_sites(&inst, &[0, 1], &cfg).unwrap();
        assert_eq!(out.sites, vec![0, 1]);
        assert_eq!(out.evaluations, 1);
    }
}
