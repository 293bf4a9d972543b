//! End-to-end workflows: choose sites, solve, round, evaluate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::diagram::{verify, DiagramReport};
use crate::distance::{estimate_anisotropy, DistanceModel, Metric, Site, Transform};
use crate::error::{Error, Result};
use crate::evaluate::{summarize, EvaluationSummary};
use crate::geometry::Point;
use crate::model::{FractionalClustering, Instance};
use crate::rounding::{round_connected, round_tree, RoundingOutcome};
use crate::siteopt::{
    balanced_kmeans, kmeans_plus_plus, local_search_sites_constrained, multi_start_kmeans, site_allowed,
    units_closest_to_centroids, KMeansTrace, LocalSearchConfig, LocalSearchOutcome,
};
use crate::solver::{relative_interior_solution, solve, SolveResult, TransportProblem};
use crate::util::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Approach {
    /// Squared Euclidean distances, sites by balanced k-means.
    Power,
    /// Squared ellipsoidal distances estimated from a reference clustering.
    Anisotropic,
    /// Graph distances, sites by local search, connected rounding.
    ShortestPath,
    /// Plain Euclidean distances at seeded sites.
    AdditivelyWeighted,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::Power,
        Approach::Anisotropic,
        Approach::ShortestPath,
        Approach::AdditivelyWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Power => "power",
            Approach::Anisotropic => "anisotropic",
            Approach::ShortestPath => "shortest-path",
            Approach::AdditivelyWeighted => "awvd",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown approach {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub seed: u64,
    /// Balanced k-means iterations.
    pub max_iter: usize,
    /// k-means restarts for the power approach and for seeding the
    /// shortest-path sites.
    pub restarts: usize,
    pub neighborhood: usize,
    pub local_search_iterations: usize,
    /// `(cluster, unit)` pairs.
    pub pins: Vec<(usize, usize)>,
    pub exclusions: Vec<(usize, usize)>,
    /// Fixed sites; skips site optimization when given.
    pub sites: Option<Vec<Site>>,
    pub reference: Option<FractionalClustering>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            seed: 0,
            max_iter: 100,
            restarts: 8,
            neighborhood: 50,
            local_search_iterations: 100,
            pins: Vec::new(),
            exclusions: Vec::new(),
            sites: None,
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub approach: Approach,
    /// Final structural parameters with the additive weights of the solve.
    pub model: DistanceModel,
    pub fractional: SolveResult,
    pub rounding: RoundingOutcome,
    pub summary: EvaluationSummary,
    pub report: DiagramReport,
    pub kmeans: Option<KMeansTrace>,
    pub local_search: Option<LocalSearchOutcome>,
}

impl PipelineOutput {
    pub fn clustering(&self) -> &FractionalClustering {
        &self.rounding.clustering
    }
}

fn point_sites(instance: &Instance, sites: &[Site]) -> Vec<Point> {
    sites
        .iter()
        .map(|s| match *s {
            Site::Point(p) => p,
            Site::Unit(j) => instance.units()[j].position,
        })
        .collect()
}

/// Structural parameters chosen for an approach, before the final solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub model: DistanceModel,
    pub kmeans: Option<KMeansTrace>,
    pub local_search: Option<LocalSearchOutcome>,
}

/// The fractional solution the approach rounds: a relative-interior point
/// for shortest-path diagrams, an optimal vertex otherwise. Operator
/// constraints from `options` apply.
pub fn solve_fractional(instance: &Instance, approach: Approach, model: &DistanceModel, options: &PipelineOptions) -> Result<SolveResult> {
    let problem = TransportProblem::from_instance(instance, model)?.with_constraints(options.pins.clone(), options.exclusions.clone());
    if approach == Approach::ShortestPath {
        relative_interior_solution(&problem)
    } else {
        solve(&problem)
    }
}

/// Connected rounding for graph models, tree rounding otherwise.
pub fn round_for(instance: &Instance, model: &DistanceModel, fractional: &FractionalClustering) -> Result<RoundingOutcome> {
    if model.uses_graph() {
        round_connected(instance, fractional, model)
    } else {
        round_tree(instance, fractional)
    }
}

/// Runs one approach end to end. Every step is seeded by `options.seed`.
pub fn run_pipeline(instance: &Instance, approach: Approach, options: &PipelineOptions) -> Result<PipelineOutput> {
    let prepared = prepare(instance, approach, options)?;
    let fractional = solve_fractional(instance, approach, &prepared.model, options)?;
    let model = prepared.model.with_mu(fractional.duals.mu.clone());
    let rounding = round_for(instance, &model, &fractional.clustering)?;
    let report = verify(instance, &model, &rounding.clustering)?;
    let summary = summarize(instance, Some(&model), &rounding.clustering, options.reference.as_ref())?;
    Ok(PipelineOutput {
        approach,
        model,
        fractional,
        rounding,
        summary,
        report,
        kmeans: prepared.kmeans,
        local_search: prepared.local_search,
    })
}

/// Chooses sites (and norms) for an approach.
pub fn prepare(instance: &Instance, approach: Approach, options: &PipelineOptions) -> Result<Prepared> {
    let k = instance.k();
    if let Some(s) = &options.sites {
        if s.len() != k {
            return Err(Error::Dimension(format!("{} sites for {k} clusters", s.len())));
        }
    }
    let tol = 1e-9;
    let plain = |model| Prepared {
        model,
        kmeans: None,
        local_search: None,
    };
    match approach {
        Approach::Power => {
            let metrics = alloc::vec![Metric::Euclidean; k];
            let trace = match &options.sites {
                Some(s) => balanced_kmeans(instance, &point_sites(instance, s), &metrics, options.max_iter, tol)?,
                None => multi_start_kmeans(instance, &metrics, options.restarts, options.seed, options.max_iter, tol)?,
            };
            Ok(Prepared {
                model: trace.model.clone(),
                kmeans: Some(trace),
                local_search: None,
            })
        }
        Approach::Anisotropic => {
            let reference = options.reference.as_ref().ok_or_else(|| {
                Error::InvalidArgument(String::from("the anisotropic approach needs a reference clustering"))
            })?;
            let norms = estimate_anisotropy(instance, reference)?;
            let metrics: Vec<Metric> = norms.iter().map(|a| Metric::Ellipsoidal(a.matrix)).collect();
            let init: Vec<Point> = match &options.sites {
                Some(s) => point_sites(instance, s),
                None => norms.iter().map(|a| a.centroid).collect(),
            };
            let trace = balanced_kmeans(instance, &init, &metrics, options.max_iter, tol)?;
            Ok(Prepared {
                model: trace.model.clone(),
                kmeans: Some(trace),
                local_search: None,
            })
        }
        Approach::AdditivelyWeighted => {
            let sites = match &options.sites {
                Some(s) => s.clone(),
                None => {
                    let mut rng = SeededRng::new(options.seed);
                    kmeans_plus_plus(instance, k, &mut rng)?.into_iter().map(Site::Point).collect()
                }
            };
            Ok(plain(DistanceModel::uniform(Metric::Euclidean, Transform::Identity, sites)?))
        }
        Approach::ShortestPath => {
            if instance.graph().is_none() {
                return Err(Error::InvalidArgument(String::from("the shortest-path approach needs a graph")));
            }
            let (sites, search) = match &options.sites {
                Some(s) => {
                    let units = s
                        .iter()
                        .map(|site| match *site {
                            Site::Unit(j) => Ok(j),
                            Site::Point(_) => Err(Error::InvalidArgument(String::from("graph sites must be units"))),
                        })
                        .collect::<Result<Vec<usize>>>()?;
                    (units, None)
                }
                None => {
                    let seed_clustering = match &options.reference {
                        Some(r) => r.clone(),
                        None => {
                            let metrics = alloc::vec![Metric::Euclidean; k];
                            multi_start_kmeans(instance, &metrics, options.restarts, options.seed, options.max_iter, tol)?.clustering
                        }
                    };
                    let init = allowed_sites(instance, &seed_clustering, options)?;
                    let config = LocalSearchConfig {
                        neighborhood: options.neighborhood,
                        max_iterations: options.local_search_iterations,
                        seed: options.seed,
                    };
                    let out = local_search_sites_constrained(instance, &init, &config, &options.pins, &options.exclusions)?;
                    (out.sites.clone(), Some(out))
                }
            };
            for (i, &s) in sites.iter().enumerate() {
                if !site_allowed(i, s, &options.pins, &options.exclusions) {
                    return Err(Error::InvalidArgument(format!("site unit {s} of cluster {i} conflicts with a constraint")));
                }
            }
            let model = DistanceModel::uniform(Metric::Graph, Transform::Identity, sites.into_iter().map(Site::Unit).collect())?;
            Ok(Prepared {
                model,
                kmeans: None,
                local_search: search,
            })
        }
    }
}

/// Units nearest to the seed clustering's centroids, skipping any that a
/// constraint forbids as a site.
fn allowed_sites(instance: &Instance, seed: &FractionalClustering, options: &PipelineOptions) -> Result<Vec<usize>> {
    let first = units_closest_to_centroids(instance, seed)?;
    if first
        .iter()
        .enumerate()
        .all(|(i, &u)| site_allowed(i, u, &options.pins, &options.exclusions))
    {
        return Ok(first);
    }
    let c = crate::diagram::centroids(instance, seed)?;
    let pos = instance.positions();
    let mut taken = alloc::vec![false; instance.m()];
    let mut out = Vec::with_capacity(c.len());
    for (i, p) in c.into_iter().enumerate() {
        let j = (0..pos.len())
            .filter(|&j| !taken[j] && site_allowed(i, j, &options.pins, &options.exclusions))
            .min_by(|&a, &b| pos[a].dist(p).total_cmp(&pos[b].dist(p)).then(a.cmp(&b)))
            .ok_or_else(|| Error::Infeasible(format!("no unit may serve as site of cluster {i}")))?;
        taken[j] = true;
        out.push(j);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Unit;

    fn golden() -> Instance {
        let units = (0..4).map(|j| Unit::new(format!("x{}", j + 1), 0.0, 0.0, 1.0)).collect::<Vec<_>>();
        let pos = [(0.0, 0.0), (1.0, 0.0), (2.0, 1.0), (2.0, -1.0)];
        let units = units
            .into_iter()
            .zip(pos)
            .map(|(mut u, (x, y))| {
                u.position = Point::new(x, y);
                u
            })
            .collect();
        Instance::new(units, Some(alloc::vec![(0, 1, 1.0), (1, 2, 1.0), (1, 3, 2.0)]), 2, None).unwrap()
    }

    #[test]
    fn approach_names_round_trip() {
        for a in Approach::ALL {
            assert_eq!(a.name().parse::<Approach>().unwrap(), a);
        }
        assert!("voronoi".parse::<Approach>().is_err());
    }

    #[test]
    fn shortest_path_on_golden_is_connected() {
        // the star around x2 has no connected 2 + 2 split
        let out = run_pipeline(&golden(), Approach::ShortestPath, &PipelineOptions::default()).unwrap();
        assert_eq!(out.summary.connectivity, Some(alloc::vec![true, true]));
        assert!(out.summary.max_deviation <= out.rounding.epsilon_bound);
        assert!(out.report.feasible);
    }

    #[test]
    fn shortest_path_with_heavy_x3_is_balanced() {
        let g = golden();
        let mut units = g.units().to_vec();
        units[2].weight = 3.0;
        let inst = Instance::new(units, Some(alloc::vec![(0, 1, 1.0), (1, 2, 1.0), (1, 3, 2.0)]), 2, Some(alloc::vec![3.0, 3.0])).unwrap();
        let out = run_pipeline(&inst, Approach::ShortestPath, &PipelineOptions::default()).unwrap();
        assert_eq!(out.summary.connectivity, Some(alloc::vec![true, true]));
        assert_eq!(out.summary.max_deviation, 0.0);
    }

    #[test]
    fn anisotropic_needs_reference() {
        assert!(matches!(
            run_pipeline(&golden(), Approach::Anisotropic, &PipelineOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn every_approach_is_deterministic() {
        let inst = golden();
        let opts = PipelineOptions {
            reference: Some(FractionalClustering::from_assignment(2, &[0, 0, 1, 1]).unwrap()),
            seed: 3,
            ..PipelineOptions::default()
        };
        for a in Approach::ALL {
            let x = run_pipeline(&inst, a, &opts).unwrap();
            let y = run_pipeline(&inst, a, &opts).unwrap();
            assert_eq!(x, y, "{a}");
            assert!(x.summary.integer, "{a}");
        }
    }
}
