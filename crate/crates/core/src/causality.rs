//! Entropic causal direction test for two discrete variables.
//!
//! For a model `X = g(Y, E')` with `E'` independent of `Y`, the smallest
//! achievable `H(E')` is the minimum entropy coupling of the conditionals
//! `p(X | Y = y)` over all `y`. The forward direction `Y = f(X, E)` is
//! scored the same way with the roles swapped. Each direction's score is the
//! cause's entropy plus the estimated exogenous entropy, and the direction
//! with the smaller score wins. Coupling entropies come from a greedy
//! solver, so they are upper estimates of the true minima.
//!
//! Note the forward score uses the coupling of `p(Y | X = x)` by symmetry
//! with the reverse construction; that is an interpretation, not a proved result.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dist::{common_len, Marginal};
use crate::greedy::Solver;
use crate::tol::EPS_SUM;
use crate::{Error, Result};

/// Joint distribution of `X` (rows) and `Y` (columns) with every row and
/// column carrying positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct JointObservation {
    joint: Vec<Vec<f64>>,
    diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl JointObservation {
    /// Validates a probability matrix; all-zero rows and columns are pruned
    /// with a diagnostic.
    pub fn from_matrix(joint: Vec<Vec<f64>>) -> Result<Self> {
        let cols = joint.first().map(Vec::len).unwrap_or(0);
        if joint.is_empty() || cols == 0 {
            return Err(Error::Domain("joint distribution is empty".into()));
        }
        if let Some((i, r)) = joint.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::Dimension(format!("row {} has {} entries, row 1 has {cols}", i + 1, r.len())));
        }
        if joint.iter().flatten().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain("joint has a negative or non-finite entry".into()));
        }
        let total: f64 = joint.iter().flatten().sum();
        if (total - 1.0).abs() > EPS_SUM {
            return Err(Error::Domain(format!("joint sums to {total}, expected 1")));
        }
        let mut diagnostics = Vec::new();
        let keep_rows: Vec<usize> = (0..joint.len()).filter(|&i| joint[i].iter().any(|&x| x > 0.0)).collect();
        let keep_cols: Vec<usize> = (0..cols).filter(|&j| joint.iter().any(|r| r[j] > 0.0)).collect();
        for i in (0..joint.len()).filter(|i| !keep_rows.contains(i)) {
            diagnostics.push(format!("pruned X state {} with zero mass", i + 1));
        }
        for j in (0..cols).filter(|j| !keep_cols.contains(j)) {
            diagnostics.push(format!("pruned Y state {} with zero mass", j + 1));
        }
        let joint = keep_rows
            .iter()
            .map(|&i| keep_cols.iter().map(|&j| joint[i][j] / total).collect())
            .collect();
        Ok(JointObservation { joint, diagnostics })
    }

    /// Empirical joint of `(x, y)` samples. States are the distinct labels
    /// in sorted order; no smoothing.
    pub fn from_samples<X: Ord + Clone, Y: Ord + Clone>(samples: &[(X, Y)]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("no samples".into()));
        }
        fn index<T: Ord + Clone>(labels: impl Iterator<Item = T>) -> BTreeMap<T, usize> {
            let mut map: BTreeMap<T, usize> = labels.map(|l| (l, 0)).collect();
            map.values_mut().enumerate().for_each(|(i, v)| *v = i);
            map
        }
        let xs = index(samples.iter().map(|(x, _)| x.clone()));
        let ys = index(samples.iter().map(|(_, y)| y.clone()));
        let mut joint = vec![vec![0.0; ys.len()]; xs.len()];
        let w = 1.0 / samples.len() as f64;
        for (x, y) in samples {
            joint[xs[x]][ys[y]] += w;
        }
        Self::from_matrix(joint)
    }

    pub fn joint(&self) -> &[Vec<f64>] {
        &self.joint
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    pub fn marginal(&self, axis: Axis) -> Vec<f64> {
        match axis {
            Axis::X => self.joint.iter().map(|r| r.iter().sum()).collect(),
            Axis::Y => (0..self.joint[0].len()).map(|j| self.joint.iter().map(|r| r[j]).sum()).collect(),
        }
    }

    /// True if the joint factorizes into its marginals within `EPS_SUM`.
    pub fn is_independent(&self) -> bool {
        let px = self.marginal(Axis::X);
        let py = self.marginal(Axis::Y);
        self.joint
            .iter()
            .enumerate()
            .all(|(i, r)| r.iter().enumerate().all(|(j, &x)| (x - px[i] * py[j]).abs() <= EPS_SUM))
    }
}

/// Conditional distributions of the other variable, one per state of
/// `given`.
pub fn conditionals_from_joint(obs: &JointObservation, given: Axis) -> Result<Vec<Marginal>> {
    let joint = obs.joint();
    let slices: Vec<Vec<f64>> = match given {
        Axis::X => joint.to_vec(),
        Axis::Y => (0..joint[0].len()).map(|j| joint.iter().map(|r| r[j]).collect()).collect(),
    };
    slices
        .into_iter()
        .map(|s| {
            let mass: f64 = s.iter().sum();
            Marginal::new(s.into_iter().map(|x| x / mass).collect())
        })
        .collect()
}

/// Greedy coupling entropy of the conditionals, an achievable exogenous
/// entropy. A single conditional couples with itself.
pub fn exogenous_entropy_estimate(conditionals: &[Marginal], solver: Solver) -> Result<f64> {
    common_len(conditionals, 1)?;
    if conditionals.len() == 1 {
        return Ok(conditionals[0].entropy());
    }
    let (coupling, _) = solver.run(conditionals)?;
    Ok(coupling.entropy())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    XToY,
    YToX,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    #[serde(rename = "H_X")]
    pub h_x: f64,
    #[serde(rename = "H_Y")]
    pub h_y: f64,
    /// Exogenous entropy estimate for `Y = f(X, E)`.
    #[serde(rename = "H_exo_XtoY")]
    pub h_exo_x_to_y: f64,
    /// Exogenous entropy estimate for `X = g(Y, E')`.
    #[serde(rename = "H_exo_YtoX")]
    pub h_exo_y_to_x: f64,
    #[serde(rename = "score_XtoY")]
    pub score_x_to_y: f64,
    #[serde(rename = "score_YtoX")]
    pub score_y_to_x: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

/// Scores both directions and compares them with `margin` bits of slack.
/// Score differences within `EPS_SUM` count as ties.
pub fn infer_direction(obs: &JointObservation, margin: f64, solver: Solver) -> Result<DirectionReport> {
    if !(margin >= 0.0) {
        return Err(Error::Domain(format!("margin must be >= 0, got {margin}")));
    }
    let h_x = crate::dist::h(&obs.marginal(Axis::X));
    let h_y = crate::dist::h(&obs.marginal(Axis::Y));
    let h_exo_x_to_y = exogenous_entropy_estimate(&conditionals_from_joint(obs, Axis::X)?, solver)?;
    let h_exo_y_to_x = exogenous_entropy_estimate(&conditionals_from_joint(obs, Axis::Y)?, solver)?;
    let score_x_to_y = h_x + h_exo_x_to_y;
    let score_y_to_x = h_y + h_exo_y_to_x;
    let mut diagnostics = obs.diagnostics().to_vec();
    let verdict = if obs.is_independent() {
        diagnostics.push("joint factorizes: X and Y are independent, no direction is identifiable".into());
        Verdict::Undecided
    } else if score_x_to_y + margin + EPS_SUM < score_y_to_x {
        Verdict::XToY
    } else if score_y_to_x + margin + EPS_SUM < score_x_to_y {
        Verdict::YToX
    } else {
        Verdict::Undecided
    };
    Ok(DirectionReport {
        h_x,
        h_y,
        h_exo_x_to_y,
        h_exo_y_to_x,
        score_x_to_y,
        score_y_to_x,
        margin,
        verdict,
        diagnostics,
    })
}
