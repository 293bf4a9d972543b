//! Small random perturbations of structural parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::distance::{DistanceModel, Site};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::model::{AdjacencyGraph, Instance};
use crate::util::SeededRng;

/// Moves every site by an independent uniform offset. The total movement
/// `Σ ‖s_i - s̃_i‖` stays below `epsilon`. For strictly convex norms almost
/// every perturbation makes the optimum unique.
pub fn perturb_sites(instance: &Instance, model: &DistanceModel, epsilon: f64, seed: u64) -> Result<DistanceModel> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if model.uses_graph() {
        return Err(Error::InvalidModel(String::from(
            "site perturbation is undefined for graph metrics",
        )));
    }
    model.validate_for(instance)?;
    let mut rng = SeededRng::new(seed);
    // each offset lies in a square of half-width r, so its norm is below r * sqrt(2)
    let r = epsilon / (2.0 * model.k() as f64);
    let sites: Vec<Site> = (0..model.k())
        .map(|i| {
            let p = model.site_point(instance, i);
            Site::Point(p + Point::new(rng.range(-r, r), rng.range(-r, r)))
        })
        .collect();
    DistanceModel::new(model.metrics.clone(), model.transform, sites, model.mu.clone())
}

/// Scales every edge length by an independent factor in `[1, 1 + epsilon)`.
///
/// This is a heuristic with no uniqueness guarantee: graph metrics are not
/// strictly convex and ties can survive any such jitter.
pub fn jitter_edge_lengths(graph: &AdjacencyGraph, epsilon: f64, seed: u64) -> Result<AdjacencyGraph> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut rng = SeededRng::new(seed);
    let edges: Vec<(usize, usize, f64)> = graph
        .edges()
        .iter()
        .map(|e| (e.a, e.b, e.length * (1.0 + epsilon * rng.uniform())))
        .collect();
    AdjacencyGraph::new(graph.node_count(), edges)
}
