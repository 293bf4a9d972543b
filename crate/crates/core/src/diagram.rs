//! Diagram cells, feasibility and support checks, star-shapedness,
//! centroidality and polygonal power cells.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::distance::{cost_matrix, shortest_path_dag, DistanceModel, Metric, Transform};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::model::{FractionalClustering, Instance, Tolerances};

/// Units grouped by the clusters whose `f_i` is minimal (within the tie band).
#[derive(Clone, Debug, PartialEq)]
pub struct Cells {
    /// For every unit, the clusters whose cell contains it.
    pub membership: Vec<Vec<usize>>,
    /// `η_j = min_i f_i(x_j)`.
    pub eta: Vec<f64>,
    /// `f_i(x_j)` as `values[i][j]`.
    pub values: Vec<Vec<f64>>,
    pub tolerance: f64,
}

impl Cells {
    /// Units of cell `i`.
    pub fn cell(&self, i: usize) -> Vec<usize> {
        (0..self.membership.len())
            .filter(|&j| self.membership[j].contains(&i))
            .collect()
    }
}

pub fn compute_cells(instance: &Instance, model: &DistanceModel) -> Result<Cells> {
    compute_cells_with(instance, model, &Tolerances::default())
}

/// Ties are decided with `tol.tie`, scaled by `max(1, |η_j|)`.
pub fn compute_cells_with(instance: &Instance, model: &DistanceModel, tol: &Tolerances) -> Result<Cells> {
    let mut values = cost_matrix(instance, model)?;
    for (i, row) in values.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v += model.mu[i];
        }
    }
    let m = instance.m();
    let k = model.k();
    let mut eta = vec![f64::INFINITY; m];
    for row in &values {
        for (j, &v) in row.iter().enumerate() {
            eta[j] = eta[j].min(v);
        }
    }
    let membership = (0..m)
        .map(|j| {
            let band = tol.tie * eta[j].abs().max(1.0);
            (0..k).filter(|&i| values[i][j] <= eta[j] + band).collect()
        })
        .collect();
    Ok(Cells {
        membership,
        eta,
        values,
        tolerance: tol.tie,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// The unit is assigned to the cluster but lies outside its cell.
    OutsideCell,
    /// The unit lies in the cell but is not assigned to the cluster.
    UnassignedCellMember,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub cluster: usize,
    pub unit: usize,
    pub kind: ViolationKind,
    /// `f_i(x_j) - η_j`.
    pub excess: f64,
}

/// A unit `unit` of cluster `cluster` whose shortest path from the site
/// passes through `via`, which is not in the cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StarWitness {
    pub cluster: usize,
    pub unit: usize,
    pub via: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StarShapedness {
    pub star_shaped: bool,
    pub witness: Option<StarWitness>,
}

/// Units of a cluster that are cut off from the rest of it.
#[derive(Clone, Debug, PartialEq)]
pub struct Detached {
    pub cluster: usize,
    pub units: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagramReport {
    /// `supp(C_i) ⊆ P_i` for every cluster.
    pub feasible: bool,
    /// `supp(C_i) = P_i ∩ X` for every cluster.
    pub supports: bool,
    /// Evaluated for graph metrics.
    pub star_shaped: Option<bool>,
    pub star_witness: Option<StarWitness>,
    /// Connectivity of `G[supp(C_i)]`, when the instance has a graph.
    pub connected: Option<Vec<bool>>,
    pub detached: Vec<Detached>,
    pub violations: Vec<Violation>,
    pub tolerance: f64,
}

pub fn verify(instance: &Instance, model: &DistanceModel, clustering: &FractionalClustering) -> Result<DiagramReport> {
    verify_with(instance, model, clustering, &Tolerances::default())
}

pub fn verify_with(
    instance: &Instance,
    model: &DistanceModel,
    clustering: &FractionalClustering,
    tol: &Tolerances,
) -> Result<DiagramReport> {
    if clustering.k() != model.k() || clustering.m() != instance.m() {
        return Err(Error::Dimension(format!(
            "clustering is {} x {}, model has {} clusters and instance {} units",
            clustering.k(),
            clustering.m(),
            model.k(),
            instance.m()
        )));
    }
    let cells = compute_cells_with(instance, model, tol)?;
    let mut violations = Vec::new();
    for j in 0..instance.m() {
        let col = clustering.column(j);
        for &(i, _) in col {
            if !cells.membership[j].contains(&i) {
                violations.push(Violation {
                    cluster: i,
                    unit: j,
                    kind: ViolationKind::OutsideCell,
                    excess: cells.values[i][j] - cells.eta[j],
                });
            }
        }
        for &i in &cells.membership[j] {
            if !col.iter().any(|e| e.0 == i) {
                violations.push(Violation {
                    cluster: i,
                    unit: j,
                    kind: ViolationKind::UnassignedCellMember,
                    excess: cells.values[i][j] - cells.eta[j],
                });
            }
        }
    }
    let feasible = !violations.iter().any(|v| v.kind == ViolationKind::OutsideCell);
    let supports = violations.is_empty();
    let (star_shaped, star_witness) = if model.metrics.iter().all(|m| matches!(m, Metric::Graph)) {
        let sites: Vec<usize> = (0..model.k()).map(|i| model.site_unit(i).expect("validated")).collect();
        let s = check_star_shaped_with(instance, clustering, &sites, tol)?;
        (Some(s.star_shaped), s.witness)
    } else {
        (None, None)
    };
    let (connected, detached) = match instance.graph() {
        Some(_) => {
            let d = detached_parts(instance, clustering);
            let connected = (0..clustering.k())
                .map(|i| !d.iter().any(|x| x.cluster == i))
                .collect();
            (Some(connected), d)
        }
        None => (None, Vec::new()),
    };
    Ok(DiagramReport {
        feasible,
        supports,
        star_shaped,
        star_witness,
        connected,
        detached,
        violations,
        tolerance: tol.tie,
    })
}

/// For every cluster with a disconnected induced subgraph, the units outside
/// the component of its lowest-index unit.
pub fn detached_parts(instance: &Instance, clustering: &FractionalClustering) -> Vec<Detached> {
    let Some(graph) = instance.graph() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for i in 0..clustering.k() {
        let mask = clustering.support_mask(i);
        let Some(start) = mask.iter().position(|&b| b) else { continue };
        let mut seen = vec![false; mask.len()];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(v, _) in graph.neighbors(u) {
                if mask[v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        let units: Vec<usize> = (0..mask.len()).filter(|&j| mask[j] && !seen[j]).collect();
        if !units.is_empty() {
            out.push(Detached { cluster: i, units });
        }
    }
    out
}

pub fn check_star_shaped(instance: &Instance, clustering: &FractionalClustering, sites: &[usize]) -> Result<StarShapedness> {
    check_star_shaped_with(instance, clustering, sites, &Tolerances::default())
}

/// Whether every shortest path from `s_i` to a unit of cluster `i` stays
/// inside the cluster. All shortest paths are considered, not one tree.
pub fn check_star_shaped_with(
    instance: &Instance,
    clustering: &FractionalClustering,
    sites: &[usize],
    tol: &Tolerances,
) -> Result<StarShapedness> {
    let graph = instance
        .graph()
        .ok_or_else(|| Error::InvalidModel(String::from("star-shapedness needs a graph")))?;
    if sites.len() != clustering.k() || clustering.m() != instance.m() {
        return Err(Error::Dimension(String::from("sites, clustering and instance disagree")));
    }
    if let Some(&s) = sites.iter().find(|&&s| s >= instance.m()) {
        return Err(Error::InvalidArgument(format!("site {s} is not a unit")));
    }
    for (i, &s) in sites.iter().enumerate() {
        let mask = clustering.support_mask(i);
        let Some(first) = mask.iter().position(|&b| b) else { continue };
        if !mask[s] {
            return Ok(StarShapedness {
                star_shaped: false,
                witness: Some(StarWitness {
                    cluster: i,
                    unit: first,
                    via: s,
                }),
            });
        }
        let dag = shortest_path_dag(graph, s, tol)?;
        let mut order: Vec<usize> = (0..mask.len()).collect();
        order.sort_by(|&a, &b| dag.dist[a].total_cmp(&dag.dist[b]).then(a.cmp(&b)));
        // good[v]: v is in the cluster and so is every vertex on its shortest paths
        let mut good = vec![false; mask.len()];
        for &v in &order {
            good[v] = mask[v] && dag.preds[v].iter().all(|&p| good[p]);
        }
        if let Some(x) = (0..mask.len()).find(|&x| mask[x] && !good[x]) {
            let mut v = x;
            let via = loop {
                if let Some(&p) = dag.preds[v].iter().find(|&&p| !mask[p]) {
                    break p;
                }
                v = *dag.preds[v].iter().find(|&&p| !good[p]).expect("a bad predecessor exists");
            };
            return Ok(StarShapedness {
                star_shaped: false,
                witness: Some(StarWitness {
                    cluster: i,
                    unit: x,
                    via,
                }),
            });
        }
    }
    Ok(StarShapedness {
        star_shaped: true,
        witness: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentroidalCheck {
    pub centroidal: bool,
    /// `‖s_i - c(C_i)‖` per cluster.
    pub gaps: Vec<f64>,
    pub threshold: f64,
}

/// Weighted centroids `c(C_i)`; empty clusters are an error.
pub fn centroids(instance: &Instance, clustering: &FractionalClustering) -> Result<Vec<Point>> {
    let weights = crate::model::cluster_weights(clustering, instance)?;
    let mut sum = vec![Point::ORIGIN; clustering.k()];
    for (i, j, v) in clustering.entries() {
        let u = &instance.units()[j];
        sum[i] += u.position * (v * u.weight);
    }
    Ok(sum.iter().zip(&weights).map(|(&s, &w)| s * (1.0 / w)).collect())
}

/// Sites within `1e-6 · diameter` of their cluster centroids.
pub fn check_centroidal(instance: &Instance, model: &DistanceModel, clustering: &FractionalClustering) -> Result<CentroidalCheck> {
    if model.uses_graph() {
        return Err(Error::InvalidModel(String::from("centroids are undefined for graph metrics")));
    }
    model.validate_for(instance)?;
    let c = centroids(instance, clustering)?;
    let gaps: Vec<f64> = (0..model.k()).map(|i| model.site_point(instance, i).dist(c[i])).collect();
    let threshold = 1e-6 * instance.diameter();
    Ok(CentroidalCheck {
        centroidal: gaps.iter().all(|&g| g <= threshold),
        gaps,
        threshold,
    })
}

/// Clips a convex polygon to `a · x <= b`.
fn clip(poly: &[Point], a: Point, b: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for idx in 0..poly.len() {
        let p = poly[idx];
        let q = poly[(idx + 1) % poly.len()];
        let fp = a.dot(p) - b;
        let fq = a.dot(q) - b;
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let t = fp / (fp - fq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Convex power cells clipped to the box `[lo, hi]`, counter-clockwise.
/// Needs Euclidean metrics and `h = Square`.
pub fn power_cells_2d(instance: &Instance, model: &DistanceModel, lo: Point, hi: Point) -> Result<Vec<Vec<Point>>> {
    if model.transform != Transform::Square || model.metrics.iter().any(|m| *m != Metric::Euclidean) {
        return Err(Error::InvalidModel(String::from(
            "polygonal cells need Euclidean metrics with squared distances",
        )));
    }
    model.validate_for(instance)?;
    if !(lo.x < hi.x && lo.y < hi.y) {
        return Err(Error::InvalidArgument(String::from("empty bounding box")));
    }
    let sites: Vec<Point> = (0..model.k()).map(|i| model.site_point(instance, i)).collect();
    let boxed = vec![lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)];
    Ok((0..model.k())
        .map(|i| {
            let mut poly = boxed.clone();
            for l in 0..model.k() {
                if l == i || poly.is_empty() {
                    continue;
                }
                let a = (sites[l] - sites[i]) * 2.0;
                let b = sites[l].norm_sq() - sites[i].norm_sq() + model.mu[l] - model.mu[i];
                if a.x == 0.0 && a.y == 0.0 {
                    // coincident sites: the smaller weight wins everywhere, ties go to the lower index
                    if b < 0.0 || (b == 0.0 && l < i) {
                        poly.clear();
                    }
                    continue;
                }
                poly = clip(&poly, a, b);
            }
            if poly.len() < 3 {
                poly.clear();
            }
            poly
        })
        .collect())
}

/// Signed area of a polygon (positive when counter-clockwise).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|x| poly[x].cross(poly[(x + 1) % n])).sum::<f64>() * 0.5
}
