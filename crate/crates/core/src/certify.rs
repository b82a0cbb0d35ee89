//! Local-optimality certificates for greedy couplings.
//!
//! A feasible coupling is a KKT point of the entropy minimization problem
//! when there are vectors `u_1, ..., u_m` of length `n` such that every
//! nonzero cell satisfies
//!
//! ```text
//! log2 x(i_1, ..., i_m) + 1 = u_1(i_1) + ... + u_m(i_m)
//! ```
//!
//! (the `u_k` are the multipliers of the marginal constraints; zero cells are
//! covered by the nonnegativity multipliers). Each positive greedy step
//! contributes one such equation, giving a 0/1 system `Gu = a` with one row
//! per step and `m` ones per row.
//!
//! Every greedy step exhausts some (axis, state) pair that no later step
//! touches again, so each row of `G` holds the last 1 of some column. That
//! makes the rows independent and also gives an exact solve: walk the rows
//! from last to first and set the row's last-1 column to whatever closes the
//! equation. Columns that are nobody's pivot stay at zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::SparseCoupling;
use crate::greedy::GreedyTrace;
use crate::tol::EPS_CERT;
use crate::{Error, Result};

/// The linear system `Gu = a` stored row-sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSystem {
    num_cols: usize,
    /// Column indices of the ones in each row, ascending.
    rows: Vec<Vec<usize>>,
    rhs: Vec<f64>,
    cells: Vec<Vec<usize>>,
}

impl CertificateSystem {
    /// A system over arbitrary 0/1 rows, for inspecting matrices that did
    /// not come from a trace.
    pub fn from_rows(num_cols: usize, rows: Vec<Vec<usize>>, rhs: Vec<f64>) -> Result<Self> {
        if rows.len() != rhs.len() {
            return Err(Error::Dimension(format!("{} rows but {} right-hand sides", rows.len(), rhs.len())));
        }
        let mut rows = rows;
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&c) = row.iter().find(|&&c| c >= num_cols) {
                return Err(Error::Dimension(format!("column {c} out of range ({num_cols} columns)")));
            }
        }
        let cells = vec![Vec::new(); rows.len()];
        Ok(CertificateSystem { num_cols, rows, rhs, cells })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.rows.len(), self.num_cols);
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                g[(r, c)] = 1.0;
            }
        }
        g
    }

    /// `|Gu - a|_2`.
    pub fn residual_norm(&self, u: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, a)| {
                let lhs: f64 = row.iter().map(|&c| u[c]).sum();
                (lhs - a).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// For each row, the column that holds the last 1 of that column, if
    /// any. The lowest such column is reported.
    fn pivots(&self) -> Vec<Option<usize>> {
        let mut last_row = vec![None; self.num_cols];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                last_row[c] = Some(r);
            }
        }
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| row.iter().copied().find(|&c| last_row[c] == Some(r)))
            .collect()
    }

    /// Exact solution by back substitution over the last-1 pivots.
    pub fn solve_back_substitution(&self) -> Result<Vec<f64>> {
        let pivots = self.pivots();
        let mut u = vec![0.0; self.num_cols];
        for r in (0..self.rows.len()).rev() {
            let pivot = pivots[r].ok_or_else(|| Error::Certification {
                reason: format!("row {} has no last-1 column", r + 1),
                residual_norm: f64::NAN,
                max_reconstruction_error: f64::NAN,
            })?;
            let others: f64 = self.rows[r].iter().filter(|&&c| c != pivot).map(|&c| u[c]).sum();
            u[pivot] = self.rhs[r] - others;
        }
        Ok(u)
    }

    /// Minimum-norm least-squares solution via SVD.
    pub fn solve_least_squares(&self) -> Result<Vec<f64>> {
        if self.rows.is_empty() {
            return Ok(vec![0.0; self.num_cols]);
        }
        let svd = self.dense().svd(true, true);
        let a = DVector::from_column_slice(&self.rhs);
        let x = svd.solve(&a, 1e-12).map_err(|e| Error::Invariant(format!("svd solve: {e}")))?;
        Ok(x.iter().copied().collect())
    }

    /// Numerical rank of `G` from its singular values.
    pub fn numeric_rank(&self) -> usize {
        if self.rows.is_empty() {
            return 0;
        }
        let g = self.dense();
        let sv = g.singular_values();
        let max = sv.max();
        let tol = max * (self.rows.len().max(self.num_cols) as f64) * f64::EPSILON;
        sv.iter().filter(|&&s| s > tol).count()
    }
}

/// Builds `Gu = a` from a greedy trace on `m` marginals of `n` states.
///
/// Rows follow the trace order and skip zero-mass rounds of the first phase
/// of the two-phase solver; any other non-positive mass is an error.
pub fn build_system(trace: &GreedyTrace, n: usize, m: usize) -> Result<CertificateSystem> {
    let boundary = trace.phase_boundary.unwrap_or(0);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut cells = Vec::new();
    for (k, step) in trace.steps.iter().enumerate() {
        if step.mass == 0.0 && k < boundary {
            continue;
        }
        if !(step.mass > 0.0) || !step.mass.is_finite() {
            return Err(Error::Domain(format!("trace step {} has mass {}", step.iteration, step.mass)));
        }
        if step.cell.len() != m {
            return Err(Error::Dimension(format!(
                "trace step {} has {} indices, expected {m}",
                step.iteration,
                step.cell.len()
            )));
        }
        if let Some(&s) = step.cell.iter().find(|&&s| s >= n) {
            return Err(Error::Dimension(format!("trace step {} uses state {} of {n}", step.iteration, s + 1)));
        }
        rows.push(step.cell.iter().enumerate().map(|(t, &i)| i + t * n).collect());
        rhs.push(step.mass.log2() + 1.0);
        cells.push(step.cell.clone());
    }
    if rows.is_empty() {
        return Err(Error::Domain("trace has no positive-mass steps".into()));
    }
    Ok(CertificateSystem { num_cols: n * m, rows, rhs, cells })
}

/// True iff every row holds the last 1 of at least one of its columns.
/// Rows without any 1 fail.
pub fn check_last_one_property(system: &CertificateSystem) -> bool {
    system.pivots().iter().all(Option::is_some)
}

/// Witness that a coupling is quasi-independent, hence a KKT point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// One vector of length `n` per variable.
    pub u: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub max_reconstruction_error: f64,
    /// `(cell, mass, 2^(-1 + sum_k u_k(i_k)))` for every nonzero cell.
    #[serde(skip)]
    pub witnesses: Vec<(Vec<usize>, f64, f64)>,
}

impl Certificate {
    /// `v_k(i) = 2^(u_k(i) - 1/m)`; nonzero masses are `prod_k v_k(i_k)`.
    pub fn product_factors(&self) -> Vec<Vec<f64>> {
        let m = self.u.len() as f64;
        self.u.iter().map(|uk| uk.iter().map(|&x| (x - 1.0 / m).exp2()).collect()).collect()
    }

    /// Largest error of the product form over the coupling's nonzero cells.
    pub fn product_form_error(&self, coupling: &SparseCoupling) -> f64 {
        let v = self.product_factors();
        coupling
            .entries()
            .iter()
            .map(|(cell, mass)| {
                let prod: f64 = cell.iter().enumerate().map(|(k, &i)| v[k][i]).product();
                (prod - mass).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Reconstructs every nonzero cell of `coupling` from `u` and reports the
/// largest absolute error.
pub fn reconstruction_error(coupling: &SparseCoupling, n: usize, u: &[f64]) -> (Vec<(Vec<usize>, f64, f64)>, f64) {
    let witnesses: Vec<_> = coupling
        .entries()
        .iter()
        .map(|(cell, &mass)| {
            let exponent: f64 = cell.iter().enumerate().map(|(k, &i)| u[i + k * n]).sum();
            (cell.clone(), mass, (exponent - 1.0).exp2())
        })
        .collect();
    let worst = witnesses.iter().map(|(_, x, r)| (x - r).abs()).fold(0.0, f64::max);
    (witnesses, worst)
}

/// Certifies that `coupling`, as produced by the run recorded in `trace`,
/// is quasi-independent.
pub fn certify_local_optimum(coupling: &SparseCoupling, trace: &GreedyTrace) -> Result<Certificate> {
    let m = coupling.num_vars();
    let n = coupling.cardinalities()[0];
    if coupling.cardinalities().iter().any(|&c| c != n) {
        return Err(Error::Dimension("certification needs equal cardinalities".into()));
    }
    let system = build_system(trace, n, m)?;
    if !check_last_one_property(&system) {
        return Err(Error::Certification {
            reason: "trace lacks the last-1 property".into(),
            residual_norm: f64::NAN,
            max_reconstruction_error: f64::NAN,
        });
    }
    if system.cells.iter().any(|c| coupling.get(c) == 0.0) {
        return Err(Error::Certification {
            reason: "trace assigns a cell the coupling does not contain".into(),
            residual_norm: f64::NAN,
            max_reconstruction_error: f64::NAN,
        });
    }
    let u = system.solve_back_substitution()?;
    let residual_norm = system.residual_norm(&u);
    let a_norm = system.rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (witnesses, max_reconstruction_error) = reconstruction_error(coupling, n, &u);
    let fail = |reason: &str| Error::Certification {
        reason: reason.into(),
        residual_norm,
        max_reconstruction_error,
    };
    if !(residual_norm <= EPS_CERT * a_norm.max(1.0)) {
        return Err(fail("Gu = a is inconsistent"));
    }
    if !(max_reconstruction_error <= EPS_CERT) {
        return Err(fail("witness does not reproduce the coupling masses"));
    }
    Ok(Certificate {
        u: u.chunks(n).map(<[f64]>::to_vec).collect(),
        residual_norm,
        max_reconstruction_error,
        witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Marginal;
    use crate::greedy::{greedy_coupling, greedy_coupling_two_phase, TraceStep};
    use approx::assert_abs_diff_eq;

    fn ms(vs: &[&[f64]]) -> Vec<Marginal> {
        vs.iter().map(|v| Marginal::new(v.to_vec()).unwrap()).collect()
    }

    fn worked() -> (SparseCoupling, GreedyTrace) {
        greedy_coupling(&ms(&[&[0.6, 0.4], &[0.5, 0.5]])).unwrap()
    }

    #[test]
    fn system_for_worked_instance() {
        let (_, trace) = worked();
        let sys = build_system(&trace, 2, 2).unwrap();
        assert_eq!(sys.rows(), &[vec![0, 2], vec![1, 3], vec![0, 3]]);
        let dense = sys.dense();
        assert_eq!(dense.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(dense.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(sys.rhs()[0], 0.0);
        assert_abs_diff_eq!(sys.rhs()[1], -0.321928094887362, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.rhs()[2], -2.321928094887362, epsilon = 1e-12);
        assert!(check_last_one_property(&sys));
        assert_eq!(sys.numeric_rank(), 3);
    }

    #[test]
    fn single_step_and_diagonal_systems() {
        let (_, trace) = greedy_coupling(&ms(&[&[1.0], &[1.0]])).unwrap();
        let sys = build_system(&trace, 1, 2).unwrap();
        assert_eq!(sys.rows(), &[vec![0, 1]]);
        assert_eq!(sys.rhs(), &[1.0]);

        let (_, trace) = greedy_coupling(&ms(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        let sys = build_system(&trace, 2, 2).unwrap();
        assert_eq!(sys.rows(), &[vec![0, 2], vec![1, 3]]);
        assert_eq!(sys.rhs(), &[0.0, 0.0]);
    }

    #[test]
    fn last_one_property_examples() {
        let dup = CertificateSystem::from_rows(2, vec![vec![0, 1], vec![0, 1]], vec![0.0, 0.0]).unwrap();
        assert!(!check_last_one_property(&dup));
        let single = CertificateSystem::from_rows(5, vec![vec![3]], vec![1.0]).unwrap();
        assert!(check_last_one_property(&single));
        let empty_row = CertificateSystem::from_rows(3, vec![vec![]], vec![0.0]).unwrap();
        assert!(!check_last_one_property(&empty_row));
    }

    #[test]
    fn certifies_worked_instance() {
        let (c, t) = worked();
        let cert = certify_local_optimum(&c, &t).unwrap();
        assert!(cert.residual_norm < 1e-12);
        assert!(cert.max_reconstruction_error < 1e-12);
        assert!(cert.product_form_error(&c) < 1e-12);
        assert_eq!(cert.witnesses.len(), 3);
    }

    #[test]
    fn hand_solved_witness_is_valid() {
        // free variable u_1(1) = 0
        let (c, t) = worked();
        let sys = build_system(&t, 2, 2).unwrap();
        let l = 0.4f64.log2() + 1.0;
        let u3 = 0.1f64.log2() + 1.0;
        let u = vec![0.0, l - u3, 0.0, u3];
        assert_abs_diff_eq!(u[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u[3], -2.321928094887362, epsilon = 1e-12);
        assert!(sys.residual_norm(&u) < 1e-12);
        let (_, err) = reconstruction_error(&c, 2, &u);
        assert!(err < 1e-12);
    }

    #[test]
    fn least_squares_route_agrees() {
        let (c, t) = greedy_coupling_two_phase(&ms(&[&[0.5, 0.3, 0.2], &[0.4, 0.4, 0.2], &[0.7, 0.2, 0.1]])).unwrap();
        let sys = build_system(&t, 3, 3).unwrap();
        let u = sys.solve_least_squares().unwrap();
        assert!(sys.residual_norm(&u) < 1e-10);
        let (_, err) = reconstruction_error(&c, 3, &u);
        assert!(err < 1e-10);
    }

    #[test]
    fn diagonal_zero_witness() {
        let (c, t) = greedy_coupling(&ms(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        let cert = certify_local_optimum(&c, &t).unwrap();
        assert_eq!(cert.u, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(cert.max_reconstruction_error, 0.0);
    }

    #[test]
    fn tampered_trace_fails() {
        let (c, mut t) = worked();
        t.steps[2].mass = 0.2;
        assert!(matches!(certify_local_optimum(&c, &t), Err(Error::Certification { .. })));

        let (c, mut t) = worked();
        t.steps.push(TraceStep { iteration: 4, cell: vec![0, 0], mass: 0.5, saturated: vec![] });
        t.steps.push(TraceStep { iteration: 5, cell: vec![0, 0], mass: 0.5, saturated: vec![] });
        assert!(matches!(certify_local_optimum(&c, &t), Err(Error::Certification { .. })));
    }

    #[test]
    fn build_system_rejects_bad_masses() {
        let (_, mut t) = worked();
        t.steps[1].mass = 0.0;
        assert!(matches!(build_system(&t, 2, 2), Err(Error::Domain(_))));
        t.steps[1].mass = -0.1;
        assert!(matches!(build_system(&t, 2, 2), Err(Error::Domain(_))));
        assert!(matches!(build_system(&GreedyTrace::default(), 2, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn two_phase_zero_rounds_are_skipped() {
        let (c, t) = greedy_coupling_two_phase(&ms(&[&[1.0, 0.0], &[0.5, 0.5]])).unwrap();
        let sys = build_system(&t, 2, 2).unwrap();
        assert_eq!(sys.num_rows(), 2);
        certify_local_optimum(&c, &t).unwrap();
    }
}
