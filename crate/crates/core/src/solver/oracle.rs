//! Exhaustive search over integer assignments, for small unit-weight problems.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::TransportProblem;
use crate::error::{Error, Result};
use crate::model::Tolerances;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    /// Every optimal assignment, as a cluster index per unit, in lexicographic order.
    pub minimizers: Vec<Vec<usize>>,
}

const LIMIT: f64 = 1e7;

/// Minimum over all integer assignments meeting the capacities exactly.
/// Requires unit weights, integral capacities and `k^m <= 10^7`.
pub fn brute_force_oracle(problem: &TransportProblem) -> Result<OracleResult> {
    problem.validate(&Tolerances::default())?;
    let (k, m) = (problem.k(), problem.m());
    if problem.weights.iter().any(|&w| w != 1.0) {
        return Err(Error::InvalidArgument(String::from("oracle needs unit weights")));
    }
    let mut remaining = Vec::with_capacity(k);
    for (i, &c) in problem.capacities.iter().enumerate() {
        if libm::trunc(c) != c {
            return Err(Error::InvalidArgument(format!("capacity {i} is not integral")));
        }
        remaining.push(c as usize);
    }
    let size = libm::pow(k as f64, m as f64);
    if size > LIMIT {
        return Err(Error::TooLarge(size));
    }
    let allowed: Vec<Vec<usize>> = (0..m)
        .map(|j| {
            match problem.pins.iter().find(|p| p.1 == j) {
                Some(&(i, _)) => vec![i],
                None => (0..k).filter(|&i| !problem.is_excluded(i, j)).collect(),
            }
        })
        .collect();
    let mut state = Search {
        problem,
        allowed: &allowed,
        remaining,
        current: vec![0; m],
        best: f64::INFINITY,
        found: Vec::new(),
    };
    state.go(0, 0.0);
    if state.found.is_empty() {
        return Err(Error::Infeasible(String::from("no assignment meets the capacities")));
    }
    let best = state.best;
    let close = |v: f64| (v - best).abs() <= 1e-12 * best.abs().max(1.0);
    let minimizers = state
        .found
        .into_iter()
        .filter(|(v, _)| close(*v))
        .map(|(_, a)| a)
        .collect();
    Ok(OracleResult {
        objective: best,
        minimizers,
    })
}

struct Search<'a> {
    problem: &'a TransportProblem,
    allowed: &'a [Vec<usize>],
    remaining: Vec<usize>,
    current: Vec<usize>,
    best: f64,
    found: Vec<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn go(&mut self, j: usize, partial: f64) {
        if j == self.current.len() {
            if partial <= self.best + 1e-12 * self.best.abs().max(1.0) {
                self.best = self.best.min(partial);
                self.found.push((partial, self.current.clone()));
            }
            return;
        }
        for x in 0..self.allowed[j].len() {
            let i = self.allowed[j][x];
            if self.remaining[i] == 0 {
                continue;
            }
            self.remaining[i] -= 1;
            self.current[j] = i;
            let c = self.problem.costs[i][j];
            self.go(j + 1, partial + c);
            self.remaining[i] += 1;
        }
    }
}
