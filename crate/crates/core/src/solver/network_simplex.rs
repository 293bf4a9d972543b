//! Primal network simplex for the bipartite transportation problem.
//!
//! Units are supply nodes, clusters demand nodes, and an extra root carries
//! big-M artificial arcs that form the starting basis. The basis is kept
//! strongly feasible (zero-flow tree arcs point away from the root), which
//! rules out cycling under degeneracy. After every pivot the tree is rebuilt
//! by BFS and flows are recomputed from subtree supplies, so no error is
//! accumulated across pivots.

use alloc::vec;
use alloc::vec::Vec;
use alloc::format;

use crate::error::{Error, Result};

/// A real arc from unit `unit` to cluster `cluster`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Arc {
    pub unit: usize,
    pub cluster: usize,
    pub cost: f64,
}

pub(crate) struct FlowSolution {
    /// Flow on every input arc, in input order.
    pub flow: Vec<f64>,
}

struct Simplex {
    src: Vec<usize>,
    tgt: Vec<usize>,
    cost: Vec<f64>,
    supply: Vec<f64>,
    root: usize,
    tree: Vec<usize>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    order: Vec<usize>,
    pi: Vec<f64>,
    flow: Vec<f64>,
    flow_tol: f64,
    adj: Vec<Vec<usize>>,
}

impl Simplex {
    fn rebuild(&mut self) -> Result<()> {
        let n = self.supply.len();
        for list in &mut self.adj {
            list.clear();
        }
        for &a in &self.tree {
            self.adj[self.src[a]].push(a);
            self.adj[self.tgt[a]].push(a);
        }
        self.order.clear();
        self.order.push(self.root);
        self.parent[self.root] = usize::MAX;
        self.depth[self.root] = 0;
        self.pi[self.root] = 0.0;
        let mut seen = vec![false; n];
        seen[self.root] = true;
        let mut head = 0;
        while head < self.order.len() {
            let x = self.order[head];
            head += 1;
            for idx in 0..self.adj[x].len() {
                let a = self.adj[x][idx];
                let y = if self.src[a] == x { self.tgt[a] } else { self.src[a] };
                if seen[y] {
                    continue;
                }
                seen[y] = true;
                self.parent[y] = x;
                self.pred[y] = a;
                self.up[y] = self.src[a] == y;
                self.depth[y] = self.depth[x] + 1;
                self.pi[y] = if self.up[y] {
                    self.pi[x] - self.cost[a]
                } else {
                    self.pi[x] + self.cost[a]
                };
                self.order.push(y);
            }
        }
        if self.order.len() != n {
            return Err(Error::Numerical(format!(
                "basis is not spanning ({} of {n} nodes)",
                self.order.len()
            )));
        }
        for f in &mut self.flow {
            *f = 0.0;
        }
        let mut sub = self.supply.clone();
        for idx in (1..n).rev() {
            let y = self.order[idx];
            let s = sub[y];
            let f = if self.up[y] { s } else { -s };
            if f < -self.flow_tol {
                return Err(Error::Numerical(format!("negative basic flow {f}")));
            }
            self.flow[self.pred[y]] = if f <= self.flow_tol { 0.0 } else { f };
            sub[self.parent[y]] += s;
        }
        Ok(())
    }

    fn reduced(&self, a: usize) -> f64 {
        self.cost[a] + self.pi[self.src[a]] - self.pi[self.tgt[a]]
    }

    fn pivot(&mut self, e: usize) -> Result<()> {
        let (u, v) = (self.src[e], self.tgt[e]);
        let (mut a, mut b) = (u, v);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;
        let mut delta = f64::INFINITY;
        let mut leave = usize::MAX;
        let mut x = u;
        while x != join {
            if self.up[x] && self.flow[self.pred[x]] < delta {
                delta = self.flow[self.pred[x]];
                leave = x;
            }
            x = self.parent[x];
        }
        x = v;
        while x != join {
            if !self.up[x] && self.flow[self.pred[x]] <= delta {
                delta = self.flow[self.pred[x]];
                leave = x;
            }
            x = self.parent[x];
        }
        if leave == usize::MAX {
            return Err(Error::Numerical(format!("unbounded pivot on arc {e}")));
        }
        let out = self.pred[leave];
        let pos = self.tree.iter().position(|&t| t == out).expect("leaving arc is basic");
        self.tree[pos] = e;
        self.in_tree[out] = false;
        self.in_tree[e] = true;
        self.rebuild()
    }
}

/// Minimum-cost flow sending `supply[j]` out of every unit and `demand[i]`
/// into every cluster along `arcs`. Supplies and demands must balance.
pub(crate) fn min_cost_flow(supply: &[f64], demand: &[f64], arcs: &[Arc]) -> Result<FlowSolution> {
    let nu = supply.len();
    let nc = demand.len();
    let n = nu + nc + 1;
    let root = n - 1;
    let real = arcs.len();
    let max_cost = arcs.iter().fold(0.0_f64, |m, a| m.max(a.cost.abs()));
    let big = (max_cost + 1.0) * (n as f64 + 1.0);
    let total: f64 = supply.iter().sum();

    let mut src = Vec::with_capacity(real + n - 1);
    let mut tgt = Vec::with_capacity(real + n - 1);
    let mut cost = Vec::with_capacity(real + n - 1);
    for a in arcs {
        src.push(a.unit);
        tgt.push(nu + a.cluster);
        cost.push(a.cost);
    }
    let mut tree = Vec::with_capacity(n - 1);
    for j in 0..nu {
        tree.push(src.len());
        src.push(j);
        tgt.push(root);
        cost.push(big);
    }
    for i in 0..nc {
        tree.push(src.len());
        src.push(root);
        tgt.push(nu + i);
        cost.push(big);
    }
    let m_arcs = src.len();
    let mut in_tree = vec![false; m_arcs];
    for &a in &tree {
        in_tree[a] = true;
    }
    let mut node_supply = Vec::with_capacity(n);
    node_supply.extend_from_slice(supply);
    node_supply.extend(demand.iter().map(|d| -d));
    node_supply.push(demand.iter().sum::<f64>() - total);

    let mut s = Simplex {
        src,
        tgt,
        cost,
        supply: node_supply,
        root,
        tree,
        in_tree,
        parent: vec![usize::MAX; n],
        pred: vec![usize::MAX; n],
        up: vec![false; n],
        depth: vec![0; n],
        order: Vec::with_capacity(n),
        pi: vec![0.0; n],
        flow: vec![0.0; m_arcs],
        flow_tol: 1e-12 * total.max(1.0),
        adj: vec![Vec::new(); n],
    };
    s.rebuild()?;

    let eps = 1e-11 * (max_cost.max(1.0));
    let block = (libm::sqrt(m_arcs as f64) as usize).max(10).min(m_arcs.max(1));
    let mut next = 0usize;
    let max_pivots = 50 * m_arcs + 1000;
    let mut pivots = 0;
    loop {
        let mut best = usize::MAX;
        let mut best_r = -eps;
        let mut scanned = 0;
        let mut found = usize::MAX;
        for step in 0..m_arcs {
            let a = (next + step) % m_arcs;
            if !s.in_tree[a] {
                let r = s.reduced(a);
                if r < best_r {
                    best_r = r;
                    best = a;
                }
            }
            scanned += 1;
            if scanned == block || step + 1 == m_arcs {
                scanned = 0;
                if best != usize::MAX {
                    found = best;
                    next = (a + 1) % m_arcs;
                    break;
                }
            }
        }
        if found == usize::MAX {
            break;
        }
        s.pivot(found)?;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Numerical(format!("no convergence after {pivots} pivots")));
        }
    }
    if let Some(a) = (real..m_arcs).find(|&a| s.flow[a] > s.flow_tol.max(1e-9 * total.max(1.0))) {
        let what = if s.src[a] == root {
            format!("cluster {} cannot be filled", s.tgt[a] - nu)
        } else {
            format!("unit {} cannot be placed", s.src[a])
        };
        return Err(Error::Infeasible(what));
    }
    s.flow.truncate(real);
    Ok(FlowSolution { flow: s.flow })
}
