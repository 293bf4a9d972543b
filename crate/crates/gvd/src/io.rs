//! Instance files, result files and exports.
//!
//! JSON is canonical. Clusters are numbered from 0; units are referred to by
//! their `id`, which may be a JSON number or string.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use gvd_core::diagram::power_cells_2d;
use gvd_core::distance::{DistanceModel, Metric, Site, Transform};
use gvd_core::geometry::{bounding_box, Mat2, Point};
use gvd_core::model::{validate_instance, Diagnostic, FractionalClustering, Instance, RawInstance, Tolerances, Unit};
use gvd_core::pipeline::Approach;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UnitId {
    Number(i64),
    Text(String),
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitId::Number(n) => write!(f, "{n}"),
            UnitId::Text(s) => f.write_str(s),
        }
    }
}

impl From<&str> for UnitId {
    fn from(s: &str) -> Self {
        UnitId::Text(s.to_string())
    }
}

impl From<i64> for UnitId {
    fn from(n: i64) -> Self {
        UnitId::Number(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitRecord {
    pub id: UnitId,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub a: UnitId,
    pub b: UnitId,
    pub length: f64,
}

/// A `(unit, cluster)` pair: reference memberships, pins and exclusions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Membership {
    pub unit: UnitId,
    pub cluster: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub units: Vec<UnitRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeRecord>>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<f64>>,
    /// Balance tolerance reported against; capacities are then uniform.
    #[serde(rename = "epsilon-target", default, skip_serializing_if = "Option::is_none")]
    pub epsilon_target: Option<f64>,
    /// An existing integer plan, one entry per unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<Membership>>,
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{origin}: {source}")]
    Io {
        origin: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: at `{field}`: {message}")]
    Parse {
        origin: String,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: {}", problems.join("; "))]
    Invalid { origin: String, problems: Vec<String> },
    #[error("{0}")]
    Export(String),
}

impl FormatError {
    /// Human-readable problems, one per line.
    pub fn problems(&self) -> Vec<String> {
        match self {
            FormatError::Invalid { problems, .. } => problems.clone(),
            other => vec![other.to_string()],
        }
    }
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        origin: path.display().to_string(),
        source,
    })
}

/// Deserializes with the JSON path of the offending field in the error.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, FormatError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = match e.path().to_string().as_str() {
            "." => "(root)".to_string(),
            p => p.to_string(),
        };
        let inner = e.into_inner();
        FormatError::Parse {
            origin: origin.to_string(),
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

/// Pretty JSON with a trailing newline; the byte layout is stable.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// An instance file together with the validated instance built from it.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedInstance {
    pub file: InstanceFile,
    pub instance: Instance,
    pub ids: Vec<UnitId>,
    pub reference: Option<FractionalClustering>,
    pub epsilon_target: Option<f64>,
    /// Non-fatal findings such as rescaled capacities.
    pub warnings: Vec<String>,
    index: HashMap<UnitId, usize>,
}

impl LoadedInstance {
    pub fn from_file(file: InstanceFile, origin: &str) -> Result<Self, FormatError> {
        let mut problems = Vec::new();
        let ids: Vec<UnitId> = file.units.iter().map(|u| u.id.clone()).collect();
        let mut index = HashMap::with_capacity(ids.len());
        for (j, id) in ids.iter().enumerate() {
            index.entry(id.clone()).or_insert(j);
        }
        if file.capacities.is_some() && file.epsilon_target.is_some() {
            problems.push("give either `capacities` or `epsilon-target`, not both".to_string());
        }
        if let Some(e) = file.epsilon_target {
            if !(e >= 0.0 && e.is_finite()) {
                problems.push(format!("epsilon-target must be a non-negative number, got {e}"));
            }
        }
        let lookup = |id: &UnitId, what: &str, problems: &mut Vec<String>| {
            let j = index.get(id).copied();
            if j.is_none() {
                problems.push(format!("{what}: unknown unit id {id}"));
            }
            j
        };
        let edges = file.edges.as_ref().map(|edges| {
            edges
                .iter()
                .enumerate()
                .filter_map(|(n, e)| {
                    let a = lookup(&e.a, &format!("edges[{n}]"), &mut problems);
                    let b = lookup(&e.b, &format!("edges[{n}]"), &mut problems);
                    Some((a?, b?, e.length))
                })
                .collect::<Vec<_>>()
        });
        let mut reference_entries = None;
        if let Some(reference) = &file.reference {
            let mut seen = vec![false; ids.len()];
            let mut entries = Vec::with_capacity(reference.len());
            for (n, r) in reference.iter().enumerate() {
                let Some(j) = lookup(&r.unit, &format!("reference[{n}]"), &mut problems) else {
                    continue;
                };
                if r.cluster >= file.k {
                    problems.push(format!("reference[{n}]: cluster {} out of range for k = {}", r.cluster, file.k));
                } else if seen[j] {
                    problems.push(format!("reference[{n}]: unit {} listed twice", r.unit));
                } else {
                    seen[j] = true;
                    entries.push((r.cluster, j, 1.0));
                }
            }
            if let Some(j) = seen.iter().position(|s| !s) {
                problems.push(format!("reference: unit {} has no cluster", ids[j]));
            }
            reference_entries = Some(entries);
        }
        let raw = RawInstance {
            units: file
                .units
                .iter()
                .map(|u| Unit::new(u.id.to_string(), u.x, u.y, u.weight))
                .collect(),
            edges,
            k: file.k,
            capacities: file.capacities.clone(),
        };
        let tol = Tolerances::default();
        let mut warnings = Vec::new();
        for d in validate_instance(&raw, &tol) {
            let text = describe(&d, &ids);
            if d.is_error() {
                problems.push(text);
            } else {
                warnings.push(text);
            }
        }
        for (j, u) in file.units.iter().enumerate() {
            if !(u.x.is_finite() && u.y.is_finite()) {
                problems.push(format!("unit {}: coordinates must be finite", ids[j]));
            }
        }
        if !problems.is_empty() {
            return Err(FormatError::Invalid {
                origin: origin.to_string(),
                problems,
            });
        }
        let invalid = |e: gvd_core::Error| FormatError::Invalid {
            origin: origin.to_string(),
            problems: vec![e.to_string()],
        };
        let instance = Instance::from_raw(raw, &tol).map_err(invalid)?;
        let reference = match reference_entries {
            Some(entries) => Some(FractionalClustering::from_entries(file.k, ids.len(), entries, &tol).map_err(invalid)?),
            None => None,
        };
        Ok(LoadedInstance {
            epsilon_target: file.epsilon_target,
            file,
            instance,
            ids,
            reference,
            warnings,
            index,
        })
    }

    pub fn unit_index(&self, id: &UnitId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Resolves a unit id, accepting a number written as text (as on the command line).
    pub fn resolve_unit(&self, text: &str) -> Option<usize> {
        self.unit_index(&UnitId::from(text))
            .or_else(|| text.parse::<i64>().ok().and_then(|n| self.unit_index(&UnitId::Number(n))))
    }
}

fn describe(d: &Diagnostic, ids: &[UnitId]) -> String {
    let id = |j: usize| ids.get(j).map_or_else(|| j.to_string(), |x| x.to_string());
    match d {
        Diagnostic::NonPositiveWeight { unit, weight } => {
            format!("unit {}: weight must be positive, got {weight}", id(*unit))
        }
        Diagnostic::InvalidEdge { a, b, reason } => format!("edge ({}, {}): {reason}", id(*a), id(*b)),
        Diagnostic::Disconnected { components, isolated } => {
            let shown: Vec<String> = isolated.iter().take(10).map(|&j| id(j)).collect();
            format!(
                "graph has {components} components; units outside the first include {}",
                shown.join(", ")
            )
        }
        other => other.to_string(),
    }
}

pub fn parse_instance(text: &str, origin: &str) -> Result<LoadedInstance, FormatError> {
    LoadedInstance::from_file(parse_json(text, origin)?, origin)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<LoadedInstance, FormatError> {
    let path = path.as_ref();
    parse_instance(&read(path)?, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub unit: UnitId,
    pub cluster: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SiteRecord {
    Unit { unit: UnitId },
    Point { x: f64, y: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Summary {
    pub cluster_weights: Vec<f64>,
    pub capacities: Vec<f64>,
    pub avg_deviation: f64,
    pub max_deviation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_of_inertia: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changed_pairs_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connectivity: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub star_shaped: Option<bool>,
    pub strongly_balanced: bool,
    pub integer: bool,
    /// Largest relative deviation from a capacity.
    pub epsilon_achieved: f64,
    /// `max ω_j / min κ_i`.
    pub epsilon_bound: f64,
    /// The tolerance balance is checked against.
    pub epsilon: f64,
    pub epsilon_balanced: bool,
}

mod approach_name {
    use gvd_core::pipeline::Approach;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Approach, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(a.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Approach, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Parameters {
    #[serde(with = "approach_name")]
    pub approach: Approach,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
    pub neighborhood: usize,
    pub local_search_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub pins: Vec<Membership>,
    pub exclusions: Vec<Membership>,
    /// Per-cluster norm matrices of the anisotropic approach.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norms: Option<Vec<[[f64; 2]; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub assignments: Vec<Assignment>,
    pub mu: Vec<f64>,
    pub sites: Vec<SiteRecord>,
    pub summary: Summary,
    pub parameters: Parameters,
}

pub fn parse_result(text: &str, origin: &str) -> Result<ResultFile, FormatError> {
    parse_json(text, origin)
}

pub fn load_result(path: impl AsRef<Path>) -> Result<ResultFile, FormatError> {
    let path = path.as_ref();
    parse_result(&read(path)?, &path.display().to_string())
}

/// Assignment rows sorted by unit, then cluster.
pub fn assignments(loaded: &LoadedInstance, clustering: &FractionalClustering) -> Vec<Assignment> {
    (0..clustering.m())
        .flat_map(|j| {
            clustering.column(j).iter().map(move |&(i, v)| Assignment {
                unit: loaded.ids[j].clone(),
                cluster: i,
                fraction: v,
            })
        })
        .collect()
}

pub fn site_records(loaded: &LoadedInstance, model: &DistanceModel) -> Vec<SiteRecord> {
    model
        .sites
        .iter()
        .map(|s| match *s {
            Site::Unit(j) => SiteRecord::Unit {
                unit: loaded.ids[j].clone(),
            },
            Site::Point(p) => SiteRecord::Point { x: p.x, y: p.y },
        })
        .collect()
}

pub fn norm_rows(m: &Mat2) -> [[f64; 2]; 2] {
    [[m.a, m.b], [m.b, m.c]]
}

impl ResultFile {
    fn invalid(&self, problem: String) -> FormatError {
        FormatError::Invalid {
            origin: "result".to_string(),
            problems: vec![problem],
        }
    }

    /// The clustering the assignments describe, checked against `loaded`.
    pub fn clustering(&self, loaded: &LoadedInstance) -> Result<FractionalClustering, FormatError> {
        let mut entries = Vec::with_capacity(self.assignments.len());
        for a in &self.assignments {
            let j = loaded
                .unit_index(&a.unit)
                .ok_or_else(|| self.invalid(format!("assignment for unknown unit {}", a.unit)))?;
            entries.push((a.cluster, j, a.fraction));
        }
        let k = loaded.instance.k();
        FractionalClustering::from_entries(k, loaded.instance.m(), entries, &Tolerances::default())
            .map_err(|e| self.invalid(e.to_string()))
    }

    /// The distance model (sites, norms and additive weights) behind the result.
    pub fn model(&self, loaded: &LoadedInstance) -> Result<DistanceModel, FormatError> {
        let k = loaded.instance.k();
        if self.sites.len() != k || self.mu.len() != k {
            return Err(self.invalid(format!(
                "{} sites and {} additive weights for {k} clusters",
                self.sites.len(),
                self.mu.len()
            )));
        }
        let mut sites = Vec::with_capacity(k);
        for s in &self.sites {
            sites.push(match s {
                SiteRecord::Unit { unit } => Site::Unit(
                    loaded
                        .unit_index(unit)
                        .ok_or_else(|| self.invalid(format!("site at unknown unit {unit}")))?,
                ),
                SiteRecord::Point { x, y } => Site::Point(Point::new(*x, *y)),
            });
        }
        let (metrics, transform) = match self.parameters.approach {
            Approach::Power => (vec![Metric::Euclidean; k], Transform::Square),
            Approach::AdditivelyWeighted => (vec![Metric::Euclidean; k], Transform::Identity),
            Approach::ShortestPath => (vec![Metric::Graph; k], Transform::Identity),
            Approach::Anisotropic => {
                let norms = self
                    .parameters
                    .norms
                    .as_ref()
                    .filter(|n| n.len() == k)
                    .ok_or_else(|| self.invalid(format!("anisotropic result needs {k} norms")))?;
                let metrics = norms
                    .iter()
                    .map(|rows| Mat2::from_rows(*rows).map(Metric::Ellipsoidal))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| self.invalid("norm matrices must be symmetric".to_string()))?;
                (metrics, Transform::Square)
            }
        };
        let model = DistanceModel::new(metrics, transform, sites, self.mu.clone()).map_err(|e| self.invalid(e.to_string()))?;
        model.validate_for(&loaded.instance).map_err(|e| self.invalid(e.to_string()))?;
        Ok(model)
    }
}

/// One `unit,cluster,fraction` row per assignment.
pub fn to_csv(result: &ResultFile) -> Result<String, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| FormatError::Export(e.to_string());
    w.write_record(["unit", "cluster", "fraction"]).map_err(err)?;
    for a in &result.assignments {
        w.write_record([a.unit.to_string(), a.cluster.to_string(), a.fraction.to_string()])
            .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::Export(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| FormatError::Export(e.to_string()))
}

/// Per-cluster balance table.
pub fn summary_csv(summary: &Summary) -> Result<String, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| FormatError::Export(e.to_string());
    w.write_record(["cluster", "weight", "capacity", "deviation", "connected"]).map_err(err)?;
    for (i, (wt, cap)) in summary.cluster_weights.iter().zip(&summary.capacities).enumerate() {
        let connected = summary
            .connectivity
            .as_ref()
            .map_or(String::new(), |c| c[i].to_string());
        w.write_record([
            i.to_string(),
            wt.to_string(),
            cap.to_string(),
            ((wt - cap).abs() / cap).to_string(),
            connected,
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::Export(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| FormatError::Export(e.to_string()))
}

/// Box around units and sites, padded by a tenth of its extent (at least 1).
pub fn cell_bounds(instance: &Instance, model: &DistanceModel) -> (Point, Point) {
    let points = instance
        .positions()
        .into_iter()
        .chain((0..model.k()).map(|i| model.site_point(instance, i)));
    let (lo, hi) = bounding_box(points);
    let pad = ((hi.x - lo.x).max(hi.y - lo.y) * 0.1).max(1.0);
    (Point::new(lo.x - pad, lo.y - pad), Point::new(hi.x + pad, hi.y + pad))
}

/// Power-cell polygons when the model is a Euclidean power diagram.
pub fn power_polygons(loaded: &LoadedInstance, model: &DistanceModel) -> Option<Vec<Vec<Point>>> {
    let (lo, hi) = cell_bounds(&loaded.instance, model);
    power_cells_2d(&loaded.instance, model, lo, hi).ok()
}

/// Unit points coloured by their largest cluster, plus power cells when the
/// model has them. Empty cells are left out.
pub fn to_geojson(loaded: &LoadedInstance, result: &ResultFile) -> Result<Value, FormatError> {
    if result.parameters.approach == Approach::ShortestPath {
        return Err(FormatError::Export(
            "geojson needs planar point metrics; shortest-path results have none".to_string(),
        ));
    }
    let model = result.model(loaded)?;
    let clustering = result.clustering(loaded)?;
    let mut features = Vec::new();
    for (j, u) in loaded.instance.units().iter().enumerate() {
        let column = clustering.column(j);
        let main = column
            .iter()
            .fold(None::<(usize, f64)>, |best, &(i, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            })
            .map(|e| e.0);
        let fractions: Vec<Value> = column.iter().map(|&(i, v)| json!({"cluster": i, "fraction": v})).collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [u.position.x, u.position.y]},
            "properties": {"unit": loaded.ids[j], "weight": u.weight, "cluster": main, "fractions": fractions},
        }));
    }
    if let Some(polys) = power_polygons(loaded, &model) {
        for (i, poly) in polys.iter().enumerate().filter(|(_, p)| !p.is_empty()) {
            let mut ring: Vec<[f64; 2]> = poly.iter().map(|p| [p.x, p.y]).collect();
            ring.push(ring[0]);
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {"cluster": i, "mu": model.mu[i]},
            }));
        }
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}
