//! Seeded synthetic instances for tests, demos and benchmarks.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Result;
use crate::geometry::Point;
use crate::model::{Instance, Unit};
use crate::util::{DisjointSets, SeededRng};

/// A Gaussian cloud of `count` points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub center: Point,
    pub spread: f64,
    pub count: usize,
}

/// Symmetric `nn`-nearest-neighbour graph with Euclidean lengths, made
/// connected by repeatedly adding the shortest edge between two components.
/// Coincident points are joined by an edge of length `1e-9`.
pub fn knn_graph(points: &[Point], nn: usize) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let len = |a: usize, b: usize| points[a].dist(points[b]).max(1e-9);
    let mut edges = Vec::new();
    for a in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| len(a, x).total_cmp(&len(a, y)).then(x.cmp(&y)));
        for &b in others.iter().take(nn) {
            edges.push((a.min(b), a.max(b), len(a, b)));
        }
    }
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    edges.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
    let mut dsu = DisjointSets::new(n);
    let mut parts = n;
    for &(a, b, _) in &edges {
        if dsu.union(a, b) {
            parts -= 1;
        }
    }
    while parts > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..n {
            for b in a + 1..n {
                if dsu.find(a) != dsu.find(b) && len(a, b) < best.0 {
                    best = (len(a, b), a, b);
                }
            }
        }
        dsu.union(best.1, best.2);
        edges.push((best.1, best.2, best.0));
        parts -= 1;
    }
    edges
}

fn unit_instance(points: Vec<Point>, edges: Option<Vec<(usize, usize, f64)>>, k: usize) -> Result<Instance> {
    let units = points
        .iter()
        .enumerate()
        .map(|(j, p)| Unit::new(format!("u{j}"), p.x, p.y, 1.0))
        .collect();
    Instance::new(units, edges, k, None)
}

/// Unit-weight Gaussian blobs without a graph; capacities are uniform.
pub fn blobs(specs: &[Blob], k: usize, seed: u64) -> Result<Instance> {
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::new();
    for b in specs {
        for _ in 0..b.count {
            points.push(b.center + Point::new(rng.normal(), rng.normal()) * b.spread);
        }
    }
    unit_instance(points, None, k)
}

/// `m` unit-weight points spread uniformly over a U-shaped region of the
/// square `[0, 10]²` (the slot `[3.5, 6.5] × [3, 10]` is left empty), joined
/// by a 6-nearest-neighbour graph. Capacities are uniform.
pub fn u_shape(m: usize, k: usize, seed: u64) -> Result<Instance> {
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::with_capacity(m);
    while points.len() < m {
        let p = Point::new(rng.range(0.0, 10.0), rng.range(0.0, 10.0));
        if (3.5..=6.5).contains(&p.x) && p.y >= 3.0 {
            continue;
        }
        points.push(p);
    }
    let edges = knn_graph(&points, 6);
    unit_instance(points, Some(edges), k)
}
