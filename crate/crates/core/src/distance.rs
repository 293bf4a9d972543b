//! Distance functions `f_i(x) = h(d_i(s_i, x)) + μ_i` and their ingredients.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Point};
use crate::model::{AdjacencyGraph, FractionalClustering, Instance, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Euclidean,
    /// `‖x‖ = sqrt(xᵀ M x)` with `M` symmetric positive definite.
    Ellipsoidal(Mat2),
    /// Shortest-path distance in the instance graph.
    Graph,
}

impl Metric {
    /// Point-to-point distance; `None` for the graph metric.
    pub fn point_distance(&self, a: Point, b: Point) -> Option<f64> {
        match self {
            Metric::Euclidean => Some(a.dist(b)),
            Metric::Ellipsoidal(m) => Some(ellipsoidal_norm(m, a - b)),
            Metric::Graph => None,
        }
    }
}

/// Monotone transformation applied to all distances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    Identity,
    Square,
    Affine { alpha: f64, beta: f64 },
}

impl Transform {
    pub fn apply(&self, d: f64) -> f64 {
        match *self {
            Transform::Identity => d,
            Transform::Square => d * d,
            Transform::Affine { alpha, beta } => alpha * d + beta,
        }
    }

    pub fn is_affine(&self) -> bool {
        !matches!(self, Transform::Square)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Transform::Affine { alpha, beta } if !(alpha >= 0.0 && alpha.is_finite() && beta.is_finite()) => {
                Err(Error::InvalidModel(format!("affine transform needs alpha >= 0, got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Site {
    Point(Point),
    /// A unit index; under point metrics it stands for that unit's position.
    Unit(usize),
}

/// Evaluation target for [`eval_f`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Unit(usize),
    Point(Point),
}

/// Per-cluster metrics, a shared transform, sites and additive weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceModel {
    pub metrics: Vec<Metric>,
    pub transform: Transform,
    pub sites: Vec<Site>,
    pub mu: Vec<f64>,
}

impl DistanceModel {
    pub fn new(metrics: Vec<Metric>, transform: Transform, sites: Vec<Site>, mu: Vec<f64>) -> Result<Self> {
        let model = DistanceModel {
            metrics,
            transform,
            sites,
            mu,
        };
        model.validate_shape()?;
        Ok(model)
    }

    /// Same metric for every cluster, `μ = 0`.
    pub fn uniform(metric: Metric, transform: Transform, sites: Vec<Site>) -> Result<Self> {
        let k = sites.len();
        DistanceModel::new(vec![metric; k], transform, sites, vec![0.0; k])
    }

    /// Euclidean power model (`h = Square`) at the given points.
    pub fn power(sites: &[Point], mu: Vec<f64>) -> Result<Self> {
        DistanceModel::new(
            vec![Metric::Euclidean; sites.len()],
            Transform::Square,
            sites.iter().map(|&p| Site::Point(p)).collect(),
            mu,
        )
    }

    pub fn k(&self) -> usize {
        self.sites.len()
    }

    pub fn with_mu(mut self, mu: Vec<f64>) -> Self {
        self.mu = mu;
        self
    }

    pub fn uses_graph(&self) -> bool {
        self.metrics.iter().any(|m| matches!(m, Metric::Graph))
    }

    fn validate_shape(&self) -> Result<()> {
        let k = self.sites.len();
        if self.metrics.len() != k || self.mu.len() != k {
            return Err(Error::InvalidModel(format!(
                "{} metrics, {} sites, {} additive weights",
                self.metrics.len(),
                k,
                self.mu.len()
            )));
        }
        self.transform.validate()?;
        for (i, m) in self.metrics.iter().enumerate() {
            match m {
                Metric::Ellipsoidal(mat) if !mat.is_positive_definite() => {
                    return Err(Error::InvalidModel(format!("metric {i} is not positive definite")));
                }
                Metric::Graph if matches!(self.sites[i], Site::Point(_)) => {
                    return Err(Error::InvalidModel(format!(
                        "graph metric {i} needs a unit as site"
                    )));
                }
                _ => {}
            }
        }
        if let Some(i) = self.mu.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("additive weight {i} is not finite")));
        }
        Ok(())
    }

    /// Checks the model against an instance (cluster count, unit sites, graph presence).
    pub fn validate_for(&self, instance: &Instance) -> Result<()> {
        self.validate_shape()?;
        if self.k() != instance.k() {
            return Err(Error::Dimension(format!(
                "model has {} clusters, instance has {}",
                self.k(),
                instance.k()
            )));
        }
        for (i, s) in self.sites.iter().enumerate() {
            match *s {
                Site::Unit(j) if j >= instance.m() => {
                    return Err(Error::InvalidModel(format!("site {i} is unit {j}, out of range")));
                }
                Site::Point(p) if !p.is_finite() => {
                    return Err(Error::InvalidModel(format!("site {i} is not finite")));
                }
                _ => {}
            }
        }
        if self.uses_graph() && instance.graph().is_none() {
            return Err(Error::InvalidModel(String::from("graph metric on an instance without edges")));
        }
        Ok(())
    }

    /// Position of site `i`.
    pub fn site_point(&self, instance: &Instance, i: usize) -> Point {
        match self.sites[i] {
            Site::Point(p) => p,
            Site::Unit(j) => instance.units()[j].position,
        }
    }

    /// Unit index of site `i`, if it is given as a unit.
    pub fn site_unit(&self, i: usize) -> Option<usize> {
        match self.sites[i] {
            Site::Unit(j) => Some(j),
            Site::Point(_) => None,
        }
    }
}

/// `sqrt(xᵀ M x)`.
pub fn ellipsoidal_norm(m: &Mat2, x: Point) -> f64 {
    libm::sqrt(m.quad(x).max(0.0))
}

/// `f_i(x)` for a single cluster and target. Graph metrics run one
/// shortest-path search; use [`cost_matrix`] for bulk evaluation.
pub fn eval_f(instance: &Instance, model: &DistanceModel, i: usize, target: Target) -> Result<f64> {
    model.validate_for(instance)?;
    if i >= model.k() {
        return Err(Error::InvalidArgument(format!("cluster {i} out of range")));
    }
    let d = match (model.metrics[i], target) {
        (Metric::Graph, Target::Point(_)) => {
            return Err(Error::InvalidArgument(String::from(
                "graph metric can only be evaluated at units",
            )))
        }
        (Metric::Graph, Target::Unit(j)) => {
            let graph = instance.graph().expect("validated");
            let s = model.site_unit(i).expect("validated");
            check_unit(instance, j)?;
            shortest_paths(graph, s)?.dist[j]
        }
        (metric, t) => {
            let x = match t {
                Target::Point(p) => p,
                Target::Unit(j) => {
                    check_unit(instance, j)?;
                    instance.units()[j].position
                }
            };
            return Ok(point_cost(&metric, model.transform, model.site_point(instance, i), x) + model.mu[i]);
        }
    };
    Ok(model.transform.apply(d) + model.mu[i])
}

fn check_unit(instance: &Instance, j: usize) -> Result<()> {
    if j >= instance.m() {
        return Err(Error::InvalidArgument(format!("unit {j} out of range")));
    }
    Ok(())
}

/// Untransformed distances `d_i(s_i, x_j)`, one row per cluster.
pub fn site_distances(instance: &Instance, model: &DistanceModel) -> Result<Vec<Vec<f64>>> {
    model.validate_for(instance)?;
    let mut rows = Vec::with_capacity(model.k());
    let mut graph_cache: Vec<(usize, Vec<f64>)> = Vec::new();
    for i in 0..model.k() {
        let row = match model.metrics[i] {
            Metric::Graph => {
                let s = model.site_unit(i).expect("validated");
                match graph_cache.iter().find(|(u, _)| *u == s) {
                    Some((_, d)) => d.clone(),
                    None => {
                        let d = shortest_paths(instance.graph().expect("validated"), s)?.dist;
                        graph_cache.push((s, d.clone()));
                        d
                    }
                }
            }
            metric => {
                let s = model.site_point(instance, i);
                instance
                    .units()
                    .iter()
                    .map(|u| metric.point_distance(s, u.position).expect("point metric"))
                    .collect()
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// `h(d(a, b))` for a point metric. Squares are taken of the quadratic form
/// directly rather than of its square root, so integer inputs stay exact.
fn point_cost(metric: &Metric, transform: Transform, a: Point, b: Point) -> f64 {
    match (metric, transform) {
        (Metric::Euclidean, Transform::Square) => (a - b).norm_sq(),
        (Metric::Ellipsoidal(m), Transform::Square) => m.quad(a - b).max(0.0),
        _ => transform.apply(metric.point_distance(a, b).expect("point metric")),
    }
}

/// `h(d_i(s_i, x_j))` for every cluster `i` and unit `j` (no weights, no `μ`).
pub fn cost_matrix(instance: &Instance, model: &DistanceModel) -> Result<Vec<Vec<f64>>> {
    let mut rows = site_distances(instance, model)?;
    for (i, row) in rows.iter_mut().enumerate() {
        match model.metrics[i] {
            Metric::Graph => {
                for v in row.iter_mut() {
                    *v = model.transform.apply(*v);
                }
            }
            metric => {
                let s = model.site_point(instance, i);
                for (v, u) in row.iter_mut().zip(instance.units()) {
                    *v = point_cost(&metric, model.transform, s, u.position);
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances from one source and a shortest-path tree.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    /// Predecessor on a shortest path; `None` only at the source.
    pub pred: Vec<Option<usize>>,
}

/// Plain Dijkstra; unreachable nodes keep `f64::INFINITY`.
pub fn dijkstra(graph: &AdjacencyGraph, sources: &[usize]) -> Vec<f64> {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(HeapEntry(0.0, s));
    }
    while let Some(HeapEntry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, len) in graph.neighbors(u) {
            let nd = d + len;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapEntry(nd, v));
            }
        }
    }
    dist
}

fn tight(du: f64, len: f64, dv: f64) -> bool {
    du < dv && (du + len - dv).abs() <= 1e-12 * dv.abs().max(1.0)
}

/// Single-source shortest paths. Among equally short predecessors the one
/// with the smallest unit index is chosen.
pub fn shortest_paths(graph: &AdjacencyGraph, source: usize) -> Result<ShortestPaths> {
    if source >= graph.node_count() {
        return Err(Error::InvalidArgument(format!("source {source} out of range")));
    }
    let dist = dijkstra(graph, &[source]);
    if let Some(j) = dist.iter().position(|d| d.is_infinite()) {
        return Err(Error::Disconnected(j));
    }
    let pred = (0..graph.node_count())
        .map(|v| {
            if v == source {
                return None;
            }
            graph
                .neighbors(v)
                .iter()
                .filter(|&&(u, len)| tight(dist[u], len, dist[v]))
                .map(|&(u, _)| u)
                .min()
        })
        .collect::<Vec<_>>();
    if let Some(v) = (0..pred.len()).find(|&v| v != source && pred[v].is_none()) {
        return Err(Error::Numerical(format!("no shortest-path predecessor for unit {v}")));
    }
    Ok(ShortestPaths { source, dist, pred })
}

/// Every shortest path from a source, as predecessor lists.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortestPathDag {
    pub source: usize,
    pub dist: Vec<f64>,
    /// All `u` adjacent to `v` with `d(u) + δ(u, v) = d(v)`, sorted.
    pub preds: Vec<Vec<usize>>,
}

impl ShortestPathDag {
    /// Whether `v` lies on some shortest source-`x` path.
    pub fn on_shortest_path(&self, v: usize, x: usize) -> bool {
        let mut seen = vec![false; self.dist.len()];
        let mut stack = vec![x];
        seen[x] = true;
        while let Some(u) = stack.pop() {
            if u == v {
                return true;
            }
            for &p in &self.preds[u] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        false
    }
}

/// All-shortest-path DAG, with ties decided at `tol` (absolute, scaled by the distance).
pub fn shortest_path_dag(graph: &AdjacencyGraph, source: usize, tol: &Tolerances) -> Result<ShortestPathDag> {
    let sp = shortest_paths(graph, source)?;
    let dist = sp.dist;
    let preds = (0..graph.node_count())
        .map(|v| {
            graph
                .neighbors(v)
                .iter()
                .filter(|&&(u, len)| dist[u] < dist[v] && (dist[u] + len - dist[v]).abs() <= tol.tie * dist[v].max(1.0))
                .map(|&(u, _)| u)
                .collect()
        })
        .collect();
    Ok(ShortestPathDag { source, dist, preds })
}

/// Per-cluster anisotropy estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anisotropy {
    pub matrix: Mat2,
    pub covariance: Mat2,
    pub centroid: Point,
    /// An eigenvalue was clamped before inversion.
    pub regularized: bool,
}

/// Principal-axis norms from an integer reference clustering: the weighted
/// covariance of each cluster is eigendecomposed and its eigenvalues inverted.
pub fn estimate_anisotropy(instance: &Instance, reference: &FractionalClustering) -> Result<Vec<Anisotropy>> {
    let tol = Tolerances::default();
    if reference.m() != instance.m() || reference.k() != instance.k() {
        return Err(Error::Dimension(String::from("reference does not match instance")));
    }
    if !reference.is_integer(&tol) {
        return Err(Error::InvalidClustering(String::from("reference must be integer")));
    }
    let k = reference.k();
    let mut weight = vec![0.0; k];
    let mut sum = vec![Point::ORIGIN; k];
    for (i, j, v) in reference.entries() {
        let u = &instance.units()[j];
        weight[i] += v * u.weight;
        sum[i] += u.position * (v * u.weight);
    }
    if let Some(i) = weight.iter().position(|&w| w <= 0.0) {
        return Err(Error::EmptyCluster(i));
    }
    let centroid: Vec<Point> = (0..k).map(|i| sum[i] * (1.0 / weight[i])).collect();
    let mut cov = vec![Mat2::new(0.0, 0.0, 0.0); k];
    for (i, j, v) in reference.entries() {
        let u = &instance.units()[j];
        let d = u.position - centroid[i];
        let w = v * u.weight / weight[i];
        cov[i].a += w * d.x * d.x;
        cov[i].b += w * d.x * d.y;
        cov[i].c += w * d.y * d.y;
    }
    Ok((0..k)
        .map(|i| {
            let e = cov[i].eigen();
            let floor = (1e-10 * e.values[1]).max(1e-10);
            let mut regularized = false;
            let inv = e.values.map(|l| {
                if l < floor {
                    regularized = true;
                    1.0 / floor
                } else {
                    1.0 / l
                }
            });
            Anisotropy {
                matrix: Mat2::from_eigen(inv, e.vectors),
                covariance: cov[i],
                centroid: centroid[i],
                regularized,
            }
        })
        .collect())
}
