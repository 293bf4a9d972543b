//! Seeded random instances shared by the integration tests.
#![allow(dead_code)]

use gvd_core::distance::{DistanceModel, Metric, Site, Transform};
use gvd_core::geometry::Point;
use gvd_core::model::{Instance, Unit};
use gvd_core::synthetic::knn_graph;
use gvd_core::util::SeededRng;

pub fn random_caps(rng: &mut SeededRng, k: usize, total: f64) -> Vec<f64> {
    let p: Vec<f64> = (0..k).map(|_| rng.range(0.5, 1.5)).collect();
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x * total / s).collect()
}

/// Random planar instance with a Euclidean model. About a third of the
/// instances live on an integer grid so that ties show up.
pub fn random_euclidean(rng: &mut SeededRng, max_m: usize, max_k: usize) -> (Instance, DistanceModel) {
    let k = 2 + rng.below(max_k - 1);
    let m = k + rng.below(max_m - k + 1);
    let grid = rng.below(3) == 0;
    let coord = |rng: &mut SeededRng| {
        let v = rng.range(0.0, 10.0);
        if grid {
            libm::round(v)
        } else {
            v
        }
    };
    let units: Vec<Unit> = (0..m)
        .map(|j| {
            let x = coord(rng);
            let y = coord(rng);
            Unit::new(format!("u{j}"), x, y, rng.range(0.2, 5.0))
        })
        .collect();
    let total: f64 = units.iter().map(|u| u.weight).sum();
    let caps = random_caps(rng, k, total);
    let inst = Instance::new(units, None, k, Some(caps)).unwrap();
    let transform = if rng.below(2) == 0 { Transform::Identity } else { Transform::Square };
    let sites = (0..k).map(|_| Site::Point(Point::new(coord(rng), coord(rng)))).collect();
    let model = DistanceModel::uniform(Metric::Euclidean, transform, sites).unwrap();
    (inst, model)
}

/// Unit weights, integer capacities, integer coordinates and squared
/// distances, so that every cost is an integer.
pub fn random_integral(rng: &mut SeededRng, max_m: usize, max_k: usize) -> (Instance, DistanceModel) {
    let k = 2 + rng.below(max_k - 1);
    let m = k + rng.below(max_m - k + 1);
    let units: Vec<Unit> = (0..m)
        .map(|j| Unit::new(format!("u{j}"), rng.below(6) as f64, rng.below(6) as f64, 1.0))
        .collect();
    let mut caps = vec![1.0; k];
    for _ in 0..m - k {
        caps[rng.below(k)] += 1.0;
    }
    let inst = Instance::new(units, None, k, Some(caps)).unwrap();
    let sites = (0..k)
        .map(|_| Site::Point(Point::new(rng.below(6) as f64, rng.below(6) as f64)))
        .collect();
    let model = DistanceModel::uniform(Metric::Euclidean, Transform::Square, sites).unwrap();
    (inst, model)
}

/// Random connected graph on at most `max_n` nodes: a 3-nearest-neighbour
/// graph whose lengths are rounded to small integers to create ties.
/// Sites are distinct random units.
pub fn random_graph(rng: &mut SeededRng, max_n: usize, max_k: usize) -> (Instance, Vec<usize>) {
    let k = 2 + rng.below(max_k - 1);
    let n = (k + 2).max(4) + rng.below(max_n - (k + 2).max(4) + 1);
    let points: Vec<Point> = (0..n).map(|_| Point::new(rng.range(0.0, 10.0), rng.range(0.0, 10.0))).collect();
    let edges: Vec<(usize, usize, f64)> = knn_graph(&points, 3)
        .into_iter()
        .map(|(a, b, l)| (a, b, libm::ceil(l).max(1.0)))
        .collect();
    let units: Vec<Unit> = points
        .iter()
        .enumerate()
        .map(|(j, p)| Unit::new(format!("v{j}"), p.x, p.y, if rng.below(2) == 0 { 1.0 } else { rng.range(0.5, 3.0) }))
        .collect();
    let total: f64 = units.iter().map(|u| u.weight).sum();
    let caps = random_caps(rng, k, total);
    let inst = Instance::new(units, Some(edges), k, Some(caps)).unwrap();
    let mut ids: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut ids);
    ids.truncate(k);
    (inst, ids)
}
