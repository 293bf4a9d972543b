//! Dual centering: among all optimal duals compatible with a primal support,
//! pick the one that lexicographically maximizes the smallest slack of the
//! constraints outside the support.
//!
//! With the support fixed, every constraint is a difference constraint on the
//! additive weights, so the problem lives on a graph over clusters. The best
//! achievable minimum slack is the minimum cycle mean (Karp). Cycles attaining
//! it are frozen by contracting their strongly connected component, and the
//! procedure repeats on the contracted graph. The result is strictly
//! complementary to the relative interior of the optimal face, which is what
//! makes the resulting diagram *support* a clustering rather than just be
//! feasible for it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Union-find that also tracks `μ_x - μ_root(x)`.
struct OffsetSets {
    parent: Vec<usize>,
    offset: Vec<f64>,
}

impl OffsetSets {
    fn new(n: usize) -> Self {
        OffsetSets {
            parent: (0..n).collect(),
            offset: vec![0.0; n],
        }
    }

    fn find(&mut self, x: usize) -> (usize, f64) {
        let p = self.parent[x];
        if p == x {
            return (x, 0.0);
        }
        let (r, off_p) = self.find(p);
        self.offset[x] += off_p;
        self.parent[x] = r;
        (r, self.offset[x])
    }

    /// Imposes `μ_a - μ_b = diff`; returns the inconsistency if already joined.
    fn union(&mut self, a: usize, b: usize, diff: f64) -> f64 {
        let (ra, oa) = self.find(a);
        let (rb, ob) = self.find(b);
        if ra == rb {
            return (oa - ob - diff).abs();
        }
        // μ_ra = μ_a - oa, μ_rb = μ_b - ob = μ_a - diff - ob
        let lo = ra.min(rb);
        let hi = ra.max(rb);
        self.parent[hi] = lo;
        let ra_minus_rb = diff + ob - oa;
        self.offset[hi] = if hi == ra { ra_minus_rb } else { -ra_minus_rb };
        0.0
    }
}

/// Input of the centering step. Costs and allowed arcs are indexed `[i][j]`.
pub(crate) struct CenteringInput<'a> {
    pub costs: &'a [Vec<f64>],
    pub allowed: &'a dyn Fn(usize, usize) -> bool,
    /// Support clusters of each free unit, sorted; empty for pinned units.
    pub support: &'a [Vec<usize>],
    pub k: usize,
    pub tol: f64,
}

pub(crate) struct Centered {
    pub mu: Vec<f64>,
    /// Smallest slack over constraints outside the support (can be
    /// slightly negative from roundoff; infinite if there are none).
    pub min_slack: f64,
}

/// Minimum cycle mean over a dense graph given as `w[b][a]` for edges `b -> a`.
/// `None` if the graph is acyclic.
fn min_cycle_mean(w: &[Vec<f64>]) -> Option<f64> {
    let n = w.len();
    let inf = f64::INFINITY;
    let mut d = vec![vec![inf; n]; n + 1];
    for v in 0..n {
        d[0][v] = 0.0;
    }
    for s in 1..=n {
        for b in 0..n {
            let db = d[s - 1][b];
            if db == inf {
                continue;
            }
            for a in 0..n {
                let wb = w[b][a];
                if wb < inf && db + wb < d[s][a] {
                    d[s][a] = db + wb;
                }
            }
        }
    }
    let mut best: Option<f64> = None;
    for v in 0..n {
        if d[n][v] == inf {
            continue;
        }
        let mut worst = f64::NEG_INFINITY;
        for s in 0..n {
            if d[s][v] < inf {
                worst = worst.max((d[n][v] - d[s][v]) / (n - s) as f64);
            }
        }
        best = Some(best.map_or(worst, |b: f64| b.min(worst)));
    }
    best
}

/// Bellman-Ford from a virtual source joined to every node by a zero edge.
fn potentials(w: &[Vec<f64>], shift: f64) -> Vec<f64> {
    let n = w.len();
    let mut d = vec![0.0; n];
    for _ in 0..n {
        let mut changed = false;
        for b in 0..n {
            for a in 0..n {
                if w[b][a] < f64::INFINITY {
                    let cand = d[b] + w[b][a] - shift;
                    if cand < d[a] {
                        d[a] = cand;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    d
}

/// Strongly connected components (Kosaraju) of the graph `adj[b]` = successors.
fn components(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![(s, 0usize)];
        while let Some(&mut (v, ref mut idx)) = stack.last_mut() {
            if *idx < adj[v].len() {
                let u = adj[v][*idx];
                *idx += 1;
                if !seen[u] {
                    seen[u] = true;
                    stack.push((u, 0));
                }
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }
    let mut radj = vec![Vec::new(); n];
    for (b, list) in adj.iter().enumerate() {
        for &a in list {
            radj[a].push(b);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut c = 0;
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = c;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &u in &radj[v] {
                if comp[u] == usize::MAX {
                    comp[u] = c;
                    stack.push(u);
                }
            }
        }
        c += 1;
    }
    comp
}

pub(crate) fn center(input: &CenteringInput<'_>) -> Result<Centered> {
    let k = input.k;
    let mut sets = OffsetSets::new(k);
    let mut consistency_error: f64 = 0.0;
    // (from, to, weight): μ_to - μ_from <= weight - slack
    let mut constraints: Vec<(usize, usize, f64)> = Vec::new();
    for (j, supp) in input.support.iter().enumerate() {
        let Some(&i0) = supp.first() else { continue };
        let c0 = input.costs[i0][j];
        for &i in &supp[1..] {
            consistency_error = consistency_error.max(sets.union(i, i0, c0 - input.costs[i][j]));
        }
        for l in 0..k {
            if supp.binary_search(&l).is_err() && (input.allowed)(l, j) {
                constraints.push((l, i0, input.costs[l][j] - c0));
            }
        }
    }
    let scale = input
        .costs
        .iter()
        .flatten()
        .fold(1.0_f64, |m, c| m.max(c.abs()));
    if consistency_error > input.tol * scale * 1e3 {
        return Err(Error::Numerical(format!(
            "support equalities inconsistent by {consistency_error}"
        )));
    }

    let mut level = f64::NEG_INFINITY;
    loop {
        let mut reps: Vec<usize> = (0..k).filter(|&i| sets.find(i).0 == i).collect();
        reps.sort_unstable();
        if reps.len() <= 1 {
            break;
        }
        let index: BTreeMap<usize, usize> = reps.iter().enumerate().map(|(x, &r)| (r, x)).collect();
        let n = reps.len();
        let mut w = vec![vec![f64::INFINITY; n]; n];
        for &(from, to, weight) in &constraints {
            let (rf, of) = sets.find(from);
            let (rt, ot) = sets.find(to);
            let adjusted = weight - ot + of;
            if rf == rt {
                continue;
            }
            let (b, a) = (index[&rf], index[&rt]);
            if adjusted < w[b][a] {
                w[b][a] = adjusted;
            }
        }
        match min_cycle_mean(&w) {
            None => {
                let wmax = w
                    .iter()
                    .flatten()
                    .filter(|v| v.is_finite())
                    .fold(0.0_f64, |m, v| m.max(v.abs()));
                let shift = level.max(0.0) + wmax + 1.0;
                let d = potentials(&w, shift);
                for x in 1..n {
                    sets.union(reps[x], reps[0], d[x] - d[0]);
                }
                break;
            }
            Some(t) => {
                if t < -input.tol * scale * 1e3 {
                    return Err(Error::Numerical(format!("negative minimum slack {t}")));
                }
                let d = potentials(&w, t);
                let mut merged = false;
                let mut band = input.tol * scale;
                for _ in 0..8 {
                    let adj: Vec<Vec<usize>> = (0..n)
                        .map(|b| {
                            (0..n)
                                .filter(|&a| w[b][a].is_finite() && w[b][a] - t + d[b] - d[a] <= band)
                                .collect()
                        })
                        .collect();
                    let comp = components(&adj);
                    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
                    let mut sizes = vec![0usize; n];
                    for x in 0..n {
                        sizes[comp[x]] += 1;
                    }
                    for x in 0..n {
                        if sizes[comp[x]] < 2 {
                            continue;
                        }
                        match first.get(&comp[x]) {
                            None => {
                                first.insert(comp[x], x);
                            }
                            Some(&y) => {
                                sets.union(reps[x], reps[y], d[x] - d[y]);
                                merged = true;
                            }
                        }
                    }
                    if merged {
                        break;
                    }
                    band *= 10.0;
                }
                if !merged {
                    return Err(Error::Numerical(format!("no critical cycle at slack {t}")));
                }
                level = t;
            }
        }
    }
    let mut mu: Vec<f64> = (0..k).map(|i| sets.find(i).1).collect();
    let lo = mu.iter().copied().fold(f64::INFINITY, f64::min);
    for v in &mut mu {
        *v -= lo;
    }
    let min_slack = constraints
        .iter()
        .map(|&(from, to, weight)| weight - mu[to] + mu[from])
        .fold(f64::INFINITY, f64::min);
    Ok(Centered {
        mu,
        min_slack,
    })
}
