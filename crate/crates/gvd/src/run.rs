//! Pipeline stages over loaded files, producing result files.

use gvd_core::diagram::{compute_cells, verify, DiagramReport, ViolationKind};
use gvd_core::distance::{DistanceModel, Metric};
use gvd_core::evaluate::summarize;
use gvd_core::model::{check_balance, rounding_epsilon_bound, FractionalClustering, Tolerances};
use gvd_core::pipeline::{self, Approach, PipelineOptions};
use gvd_core::Error;
use serde::{Deserialize, Serialize};

use crate::io::{assignments, norm_rows, power_polygons, site_records, FormatError, LoadedInstance, Membership, Parameters, ResultFile, Summary, UnitId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct RunOptions {
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
    pub neighborhood: usize,
    pub local_search_iterations: usize,
    /// Balance tolerance to report against; defaults to the file's
    /// `epsilon-target`, then to the rounding bound.
    pub epsilon: Option<f64>,
    pub pins: Vec<Membership>,
    pub exclusions: Vec<Membership>,
}

impl Default for RunOptions {
    fn default() -> Self {
        let d = PipelineOptions::default();
        RunOptions {
            seed: d.seed,
            max_iter: d.max_iter,
            restarts: d.restarts,
            neighborhood: d.neighborhood,
            local_search_iterations: d.local_search_iterations,
            epsilon: None,
            pins: Vec::new(),
            exclusions: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Format(#[from] FormatError),
    /// Constraints that contradict each other.
    #[error("conflicting constraints: {0}")]
    Conflict(String),
    /// Well-formed input the engine cannot serve: missing prerequisites,
    /// infeasible constraints, blocked rounding.
    #[error("{0}")]
    Unprocessable(Error),
    #[error("internal error: {0}")]
    Internal(Error),
}

impl RunError {
    /// 1 validation, 2 infeasible, 3 internal.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Format(_) | RunError::Conflict(_) => 1,
            RunError::Unprocessable(_) => 2,
            RunError::Internal(_) => 3,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInstance(_) => RunError::Format(FormatError::Invalid {
                origin: "instance".to_string(),
                problems: vec![e.to_string()],
            }),
            Error::Numerical(_) | Error::Dimension(_) => RunError::Internal(e),
            other => RunError::Unprocessable(other),
        }
    }
}

fn resolve(loaded: &LoadedInstance, list: &[Membership], what: &str) -> Result<Pairs, RunError> {
    let k = loaded.instance.k();
    let mut out = Vec::with_capacity(list.len());
    let mut problems = Vec::new();
    for c in list {
        match loaded.unit_index(&c.unit) {
            None => problems.push(format!("{what}: unknown unit id {}", c.unit)),
            Some(_) if c.cluster >= k => problems.push(format!("{what}: cluster {} out of range for k = {k}", c.cluster)),
            Some(j) => out.push((c.cluster, j)),
        }
    }
    if !problems.is_empty() {
        return Err(FormatError::Invalid {
            origin: "constraints".to_string(),
            problems,
        }
        .into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// `(cluster, unit)` index pairs.
pub type Pairs = Vec<(usize, usize)>;

/// Pins and exclusions as index pairs, sorted.
pub fn resolve_constraints(loaded: &LoadedInstance, options: &RunOptions) -> Result<(Pairs, Pairs), RunError> {
    let pins = resolve(loaded, &options.pins, "pin")?;
    let exclusions = resolve(loaded, &options.exclusions, "exclude")?;
    let id = |j: usize| &loaded.ids[j];
    let mut by_unit = pins.clone();
    by_unit.sort_unstable_by_key(|&(i, j)| (j, i));
    for w in by_unit.windows(2) {
        if w[0].1 == w[1].1 {
            return Err(RunError::Conflict(format!("unit {} is pinned to clusters {} and {}", id(w[0].1), w[0].0, w[1].0)));
        }
    }
    if let Some(&(i, j)) = pins.iter().find(|p| exclusions.contains(p)) {
        return Err(RunError::Conflict(format!("unit {} is both pinned to and excluded from cluster {i}", id(j))));
    }
    Ok((pins, exclusions))
}

fn pipeline_options(loaded: &LoadedInstance, options: &RunOptions) -> Result<PipelineOptions, RunError> {
    if let Some(e) = options.epsilon {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(FormatError::Invalid {
                origin: "options".to_string(),
                problems: vec![format!("epsilon must be a non-negative number, got {e}")],
            }
            .into());
        }
    }
    let (pins, exclusions) = resolve_constraints(loaded, options)?;
    Ok(PipelineOptions {
        seed: options.seed,
        max_iter: options.max_iter,
        restarts: options.restarts,
        neighborhood: options.neighborhood,
        local_search_iterations: options.local_search_iterations,
        pins,
        exclusions,
        sites: None,
        reference: loaded.reference.clone(),
    })
}

fn parameters(loaded: &LoadedInstance, approach: Approach, options: &RunOptions, pipeline: &PipelineOptions, model: &DistanceModel) -> Parameters {
    let members = |list: &[(usize, usize)]| {
        list.iter()
            .map(|&(i, j)| Membership {
                unit: loaded.ids[j].clone(),
                cluster: i,
            })
            .collect()
    };
    let norms = match approach {
        Approach::Anisotropic => Some(
            model
                .metrics
                .iter()
                .filter_map(|m| match m {
                    Metric::Ellipsoidal(mat) => Some(norm_rows(mat)),
                    _ => None,
                })
                .collect(),
        ),
        _ => None,
    };
    Parameters {
        approach,
        seed: options.seed,
        max_iter: options.max_iter,
        restarts: options.restarts,
        neighborhood: options.neighborhood,
        local_search_iterations: options.local_search_iterations,
        epsilon: options.epsilon,
        pins: members(&pipeline.pins),
        exclusions: members(&pipeline.exclusions),
        norms,
    }
}

/// Evaluation summary of any clustering, with balance checked at `epsilon`
/// (default: the file's target, then the rounding bound).
pub fn build_summary(
    loaded: &LoadedInstance,
    model: Option<&DistanceModel>,
    clustering: &FractionalClustering,
    epsilon: Option<f64>,
) -> Result<Summary, RunError> {
    let instance = &loaded.instance;
    let s = summarize(instance, model, clustering, loaded.reference.as_ref())?;
    let bound = rounding_epsilon_bound(instance);
    let eps = epsilon.or(loaded.epsilon_target).unwrap_or(bound);
    let check = check_balance(clustering, instance, eps, &Tolerances::default())?;
    Ok(Summary {
        capacities: instance.capacities().to_vec(),
        avg_deviation: s.avg_deviation,
        max_deviation: s.max_deviation,
        moment_of_inertia: s.moment_of_inertia,
        changed_pairs_ratio: s.changed_pairs_ratio,
        connectivity: s.connectivity,
        star_shaped: s.star_shaped,
        strongly_balanced: s.strongly_balanced,
        integer: s.integer,
        epsilon_achieved: s.max_deviation,
        epsilon_bound: bound,
        epsilon: eps,
        epsilon_balanced: check.epsilon_balanced,
        cluster_weights: s.cluster_weights,
    })
}

fn result_file(
    loaded: &LoadedInstance,
    model: &DistanceModel,
    clustering: &FractionalClustering,
    summary: Summary,
    parameters: Parameters,
) -> ResultFile {
    ResultFile {
        assignments: assignments(loaded, clustering),
        mu: model.mu.clone(),
        sites: site_records(loaded, model),
        summary,
        parameters,
    }
}

/// Site choice, solve, rounding and evaluation.
pub fn run_pipeline(loaded: &LoadedInstance, approach: Approach, options: &RunOptions) -> Result<ResultFile, RunError> {
    let popts = pipeline_options(loaded, options)?;
    let out = pipeline::run_pipeline(&loaded.instance, approach, &popts)?;
    let summary = build_summary(loaded, Some(&out.model), out.clustering(), options.epsilon)?;
    let params = parameters(loaded, approach, options, &popts, &out.model);
    Ok(result_file(loaded, &out.model, out.clustering(), summary, params))
}

/// Site choice and the fractional solve, without rounding.
pub fn run_solve(loaded: &LoadedInstance, approach: Approach, options: &RunOptions) -> Result<ResultFile, RunError> {
    let popts = pipeline_options(loaded, options)?;
    let prepared = pipeline::prepare(&loaded.instance, approach, &popts)?;
    let fractional = pipeline::solve_fractional(&loaded.instance, approach, &prepared.model, &popts)?;
    let model = prepared.model.with_mu(fractional.duals.mu.clone());
    let summary = build_summary(loaded, Some(&model), &fractional.clustering, options.epsilon)?;
    let params = parameters(loaded, approach, options, &popts, &model);
    Ok(result_file(loaded, &model, &fractional.clustering, summary, params))
}

/// Rounds the assignments of an earlier result, keeping its diagram.
pub fn run_round(loaded: &LoadedInstance, previous: &ResultFile) -> Result<ResultFile, RunError> {
    let model = previous.model(loaded)?;
    let clustering = previous.clustering(loaded)?;
    let outcome = pipeline::round_for(&loaded.instance, &model, &clustering)?;
    let summary = build_summary(loaded, Some(&model), &outcome.clustering, previous.parameters.epsilon)?;
    Ok(result_file(loaded, &model, &outcome.clustering, summary, previous.parameters.clone()))
}

/// Recomputes the summary of a result against its instance.
pub fn evaluate(loaded: &LoadedInstance, result: &ResultFile, epsilon: Option<f64>) -> Result<Summary, RunError> {
    let model = result.model(loaded)?;
    let clustering = result.clustering(loaded)?;
    build_summary(loaded, Some(&model), &clustering, epsilon.or(result.parameters.epsilon))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StarWitnessRecord {
    pub cluster: usize,
    pub unit: UnitId,
    pub via: UnitId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetachedRecord {
    pub cluster: usize,
    pub units: Vec<UnitId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViolationRecord {
    pub cluster: usize,
    pub unit: UnitId,
    /// `outside-cell` or `unassigned-cell-member`.
    pub kind: String,
    pub excess: f64,
}

/// Diagram verification with unit ids in place of indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticsRecord {
    pub feasible: bool,
    pub supports: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub star_shaped: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub star_witness: Option<StarWitnessRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connected: Option<Vec<bool>>,
    pub detached: Vec<DetachedRecord>,
    pub violations: Vec<ViolationRecord>,
    pub tolerance: f64,
}

fn diagnostics_record(loaded: &LoadedInstance, r: DiagramReport) -> DiagnosticsRecord {
    let id = |j: usize| loaded.ids[j].clone();
    DiagnosticsRecord {
        feasible: r.feasible,
        supports: r.supports,
        star_shaped: r.star_shaped,
        star_witness: r.star_witness.map(|w| StarWitnessRecord {
            cluster: w.cluster,
            unit: id(w.unit),
            via: id(w.via),
        }),
        connected: r.connected,
        detached: r
            .detached
            .into_iter()
            .map(|d| DetachedRecord {
                cluster: d.cluster,
                units: d.units.into_iter().map(id).collect(),
            })
            .collect(),
        violations: r
            .violations
            .into_iter()
            .map(|v| ViolationRecord {
                cluster: v.cluster,
                unit: id(v.unit),
                kind: match v.kind {
                    ViolationKind::OutsideCell => "outside-cell",
                    ViolationKind::UnassignedCellMember => "unassigned-cell-member",
                }
                .to_string(),
                excess: v.excess,
            })
            .collect(),
        tolerance: r.tolerance,
    }
}

/// Full diagram verification of a result.
pub fn diagnostics(loaded: &LoadedInstance, result: &ResultFile) -> Result<DiagnosticsRecord, RunError> {
    let model = result.model(loaded)?;
    let clustering = result.clustering(loaded)?;
    let report = verify(&loaded.instance, &model, &clustering)?;
    Ok(diagnostics_record(loaded, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellMembership {
    pub unit: UnitId,
    pub clusters: Vec<usize>,
}

/// Cells for rendering: polygons for power diagrams, per-unit membership otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CellsRecord {
    /// `[x, y]` rings, counter-clockwise, not closed; empty for an empty cell.
    Polygons { polygons: Vec<Vec<[f64; 2]>> },
    Membership { membership: Vec<CellMembership> },
}

pub fn cells(loaded: &LoadedInstance, result: &ResultFile) -> Result<CellsRecord, RunError> {
    let model = result.model(loaded)?;
    if let Some(polys) = power_polygons(loaded, &model) {
        return Ok(CellsRecord::Polygons {
            polygons: polys
                .into_iter()
                .map(|p| p.into_iter().map(|q| [q.x, q.y]).collect())
                .collect(),
        });
    }
    let cells = compute_cells(&loaded.instance, &model)?;
    Ok(CellsRecord::Membership {
        membership: cells
            .membership
            .into_iter()
            .enumerate()
            .map(|(j, clusters)| CellMembership {
                unit: loaded.ids[j].clone(),
                clusters,
            })
            .collect(),
    })
}
