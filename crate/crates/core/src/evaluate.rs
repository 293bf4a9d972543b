//! Quality measures for a districting plan.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::diagram::{centroids, check_star_shaped};
use crate::distance::{DistanceModel, Metric};
use crate::error::{Error, Result};
use crate::model::{raw_cluster_weights, BalanceReport, FractionalClustering, Instance, Tolerances};

/// `Σ_i Σ_j ξ_ij ω_j ‖x_j - c(C_i)‖²`.
pub fn moment_of_inertia(instance: &Instance, clustering: &FractionalClustering) -> Result<f64> {
    let c = centroids(instance, clustering)?;
    Ok(clustering
        .entries()
        .map(|(i, j, v)| {
            let u = &instance.units()[j];
            v * u.weight * (u.position - c[i]).norm_sq()
        })
        .sum())
}

/// Weighted share of unit pairs that share a reference district but are
/// separated by the candidate.
///
/// The denominator is `Σ_i w_i (w_i - 1) / 2` over reference weights `w_i`,
/// taken literally for real weights. With weights below one the ratio is not
/// confined to `[0, 1]`.
pub fn changed_pairs(instance: &Instance, reference: &FractionalClustering, candidate: &FractionalClustering) -> Result<f64> {
    let (Some(r), Some(c)) = (reference.assignment(), candidate.assignment()) else {
        return Err(Error::InvalidClustering(String::from("changed pairs need integer clusterings")));
    };
    if r.len() != instance.m() || c.len() != instance.m() {
        return Err(Error::Dimension(String::from("clusterings do not match the instance")));
    }
    let weights = instance.weights();
    let kr = reference.k();
    let kc = candidate.k();
    let mut district = vec![0.0; kr];
    let mut split = vec![vec![0.0; kc]; kr];
    for j in 0..weights.len() {
        district[r[j]] += weights[j];
        split[r[j]][c[j]] += weights[j];
    }
    // pairs inside district R split by the candidate: (W_R² - Σ_c S_c²) / 2
    let separated: f64 = (0..kr)
        .map(|i| (district[i] * district[i] - split[i].iter().map(|s| s * s).sum::<f64>()) / 2.0)
        .sum();
    let total: f64 = district.iter().map(|w| w * (w - 1.0) / 2.0).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(format!("reference has no unit pairs (denominator {total})")));
    }
    Ok(separated.max(0.0) / total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationSummary {
    pub cluster_weights: Vec<f64>,
    /// Relative to each cluster's own capacity.
    pub avg_deviation: f64,
    pub max_deviation: f64,
    /// `None` if some cluster is empty.
    pub moment_of_inertia: Option<f64>,
    pub changed_pairs_ratio: Option<f64>,
    /// Per-cluster connectivity when the instance has a graph.
    pub connectivity: Option<Vec<bool>>,
    /// Evaluated for graph metrics with unit sites.
    pub star_shaped: Option<bool>,
    pub strongly_balanced: bool,
    pub integer: bool,
}

pub fn summarize(
    instance: &Instance,
    model: Option<&DistanceModel>,
    clustering: &FractionalClustering,
    reference: Option<&FractionalClustering>,
) -> Result<EvaluationSummary> {
    let tol = Tolerances::default();
    let weights = raw_cluster_weights(clustering, instance)?;
    let report = BalanceReport::from_weights(weights, instance.capacities());
    let strongly_balanced = report
        .cluster_weights
        .iter()
        .zip(instance.capacities())
        .all(|(&w, &c)| (w - c).abs() <= tol.balance * c.max(1.0));
    let changed_pairs_ratio = match reference {
        Some(r) if clustering.assignment().is_some() => Some(changed_pairs(instance, r, clustering)?),
        _ => None,
    };
    let connectivity = instance
        .graph()
        .map(|g| (0..clustering.k()).map(|i| g.induced_connected(&clustering.support_mask(i))).collect());
    let star_shaped = match model {
        Some(m) if instance.graph().is_some() && m.metrics.iter().all(|x| *x == Metric::Graph) => {
            let sites: Option<Vec<usize>> = (0..m.k()).map(|i| m.site_unit(i)).collect();
            match sites {
                Some(s) => Some(check_star_shaped(instance, clustering, &s)?.star_shaped),
                None => None,
            }
        }
        _ => None,
    };
    Ok(EvaluationSummary {
        avg_deviation: report.avg_rel_deviation,
        max_deviation: report.max_rel_deviation,
        moment_of_inertia: moment_of_inertia(instance, clustering).ok(),
        changed_pairs_ratio,
        connectivity,
        star_shaped,
        strongly_balanced,
        integer: clustering.is_integer(&tol),
        cluster_weights: report.cluster_weights,
    })
}
