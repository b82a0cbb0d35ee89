//! Greedy coupling solvers.
//!
//! [`greedy_coupling`] repeats a single update step until every marginal is
//! exhausted: take the largest remaining mass of each marginal, assign the
//! smallest of those to the joint cell they index, subtract it everywhere.
//! Each step exhausts at least one (axis, state) pair, and the last step
//! exhausts `m` of them, so a run takes at most `n*m - m + 1` steps.
//!
//! [`greedy_coupling_two_phase`] first makes one pass in which the `t`-th
//! round pairs up the `t`-th largest state of every marginal, then finishes
//! with the plain update step on whatever is left.
//!
//! Ties in every argmax go to the lowest state index, so both solvers are
//! deterministic. The dense `n^m` tensor is never built.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::dist::{common_len, decreasing_order, Marginal, SparseCoupling};
use crate::tol::{EPS_MARG, EPS_ZERO};
use crate::{Error, Result};

/// Which greedy variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    /// Plain iteration of the update step.
    Greedy,
    /// One pass over sorted positions, then the plain update step.
    TwoPhase,
}

impl Solver {
    pub fn run(self, marginals: &[Marginal]) -> Result<(SparseCoupling, GreedyTrace)> {
        match self {
            Solver::Greedy => greedy_coupling(marginals),
            Solver::TwoPhase => greedy_coupling_two_phase(marginals),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based step counter.
    pub iteration: usize,
    /// Chosen state on each axis (0-based).
    pub cell: Vec<usize>,
    pub mass: f64,
    /// `(axis, state)` pairs whose residual is zero after this step.
    pub saturated: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub steps: Vec<TraceStep>,
    /// Number of first-phase rounds (the index of the first second-phase
    /// step). Only set by the two-phase solver.
    pub phase_boundary: Option<usize>,
}

impl GreedyTrace {
    /// Steps that actually placed mass.
    pub fn positive_steps(&self) -> impl Iterator<Item = &TraceStep> {
        self.steps.iter().filter(|s| s.mass > 0.0)
    }
}

/// Upper bound on the number of greedy steps for `m` marginals on `n` states.
pub fn max_steps(n: usize, m: usize) -> usize {
    n * m - m + 1
}

/// Heap key: larger residual first, then lower state index.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    state: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.total_cmp(&other.value).then_with(|| other.state.cmp(&self.state))
    }
}

struct Residuals {
    values: Vec<Vec<f64>>,
    n: usize,
    steps: Vec<TraceStep>,
    assignments: Vec<(Vec<usize>, f64)>,
}

impl Residuals {
    fn new(marginals: &[Marginal]) -> Result<Self> {
        let n = common_len(marginals, 2)?;
        let values = marginals
            .iter()
            .map(|p| p.probs().iter().map(|&x| if x <= EPS_ZERO { 0.0 } else { x }).collect())
            .collect();
        Ok(Residuals { values, n, steps: Vec::new(), assignments: Vec::new() })
    }

    fn m(&self) -> usize {
        self.values.len()
    }

    /// Assigns `mass` to `cell` and subtracts it from every marginal.
    fn assign(&mut self, cell: Vec<usize>, mass: f64) -> Result<()> {
        let mut saturated = Vec::new();
        for (axis, &state) in cell.iter().enumerate() {
            let slot = &mut self.values[axis][state];
            let left = *slot - mass;
            *slot = if left < EPS_ZERO { 0.0 } else { left };
            if *slot == 0.0 {
                saturated.push((axis, state));
            }
        }
        if saturated.is_empty() {
            return Err(Error::Invariant(format!("step at {cell:?} saturated no constraint")));
        }
        self.steps.push(TraceStep { iteration: self.steps.len() + 1, cell: cell.clone(), mass, saturated });
        if mass > 0.0 {
            self.assignments.push((cell, mass));
        }
        let bound = max_steps(self.n, self.m());
        if self.steps.len() > bound {
            return Err(Error::Invariant(format!("greedy exceeded {bound} steps")));
        }
        Ok(())
    }

    /// Runs the plain update step until some marginal is exhausted.
    fn update_until_exhausted(&mut self) -> Result<()> {
        let mut heaps: Vec<BinaryHeap<Candidate>> = self
            .values
            .iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .filter(|(_, &x)| x > 0.0)
                    .map(|(state, &value)| Candidate { value, state })
                    .collect()
            })
            .collect();
        loop {
            let mut cell = Vec::with_capacity(heaps.len());
            for heap in &heaps {
                match heap.peek() {
                    Some(top) => cell.push(top.state),
                    None => return Ok(()),
                }
            }
            let mass = cell
                .iter()
                .enumerate()
                .map(|(axis, &state)| self.values[axis][state])
                .fold(f64::INFINITY, f64::min);
            self.assign(cell.clone(), mass)?;
            for (axis, heap) in heaps.iter_mut().enumerate() {
                heap.pop();
                let value = self.values[axis][cell[axis]];
                if value > 0.0 {
                    heap.push(Candidate { value, state: cell[axis] });
                }
            }
        }
    }

    fn finish(self, phase_boundary: Option<usize>) -> Result<(SparseCoupling, GreedyTrace)> {
        let leftover = self.values.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        if leftover > EPS_MARG {
            return Err(Error::Invariant(format!(
                "marginals do not share a common total (leftover mass {leftover:e})"
            )));
        }
        let m = self.m();
        let coupling = SparseCoupling::from_assignments(vec![self.n; m], self.assignments)?;
        Ok((coupling, GreedyTrace { steps: self.steps, phase_boundary }))
    }
}

/// Plain greedy coupling of two or more marginals of equal length.
pub fn greedy_coupling(marginals: &[Marginal]) -> Result<(SparseCoupling, GreedyTrace)> {
    let mut state = Residuals::new(marginals)?;
    state.update_until_exhausted()?;
    state.finish(None)
}

/// Two-phase greedy coupling.
///
/// First phase: `n` rounds, round `t` takes each marginal's largest state
/// not yet taken by that marginal and assigns the smallest of their current
/// residuals. Rounds that assign zero stay in the trace but not in the
/// coupling. Second phase: plain greedy on the residuals.
pub fn greedy_coupling_two_phase(marginals: &[Marginal]) -> Result<(SparseCoupling, GreedyTrace)> {
    let mut state = Residuals::new(marginals)?;
    // untouched states keep their original values during this phase, so the
    // argmax over unselected states is just the next one in sorted order
    let orders: Vec<Vec<usize>> = state.values.iter().map(|v| decreasing_order(v)).collect();
    for t in 0..state.n {
        let cell: Vec<usize> = orders.iter().map(|o| o[t]).collect();
        let mass = cell
            .iter()
            .enumerate()
            .map(|(axis, &s)| state.values[axis][s])
            .fold(f64::INFINITY, f64::min);
        state.assign(cell, mass)?;
    }
    let boundary = state.steps.len();
    state.update_until_exhausted()?;
    state.finish(Some(boundary))
}
