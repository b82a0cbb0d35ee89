//! Additive approximation guarantees for the two-phase greedy solver.
//!
//! Sort every marginal decreasingly and let `p_min(i) = min_j p_j(i)`. The
//! first phase of the two-phase solver places exactly `p_min`; what is left
//! of marginal `j` is the residual `l_j = p_j - p_min`, and all residuals
//! carry the same total `T`. With `H_max = max_j H(X_j)`:
//!
//! ```text
//! m = 2:  H(U) <= H_max + 1 - T log2(1/T) + min(h(l_1), h(l_2))
//! m > 2:  H(U) <= H_max + 1 - (m-1) T log2(1/T) + sum_j h(l_j) - max_j h(l_j)
//! ```
//!
//! `H_max` is itself a lower bound on the optimum, so the additive term
//! ("slack") also bounds the distance to the unknown optimum.
//!
//! The second-phase estimate rests on the outer product of the residuals,
//! `R = prod_j l_j(i_j) / T^(m-1)`, for which
//! `h(R) = sum_j h(l_j) + (m-1) T log2 T` holds with equality.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dist::{common_len, h, plogp, sort_decreasing, total_variation_sorted, Marginal, ResidualVector};
use crate::tol::{EPS_SUM, EPS_ZERO};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub m: usize,
    pub n: usize,
    pub sorted_marginals: Vec<Vec<f64>>,
    pub p_min: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
    /// Common total of the residuals.
    #[serde(rename = "T")]
    pub total_residual: f64,
    /// `h(l_j)` for every residual.
    pub residual_entropies: Vec<f64>,
    /// `max_j H(X_j)`.
    pub lower_bound: f64,
    /// Additive term of the guarantee.
    pub slack: f64,
    /// `lower_bound + slack`.
    pub upper_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieved: Option<f64>,
    /// Exact optimum, when an oracle supplied it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimum: Option<f64>,
    /// `optimum + slack`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absolute_bound: Option<f64>,
    /// `achieved - optimum`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tightness: Option<f64>,
    /// `(achieved - optimum) / slack`: the share of the guaranteed slack used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tightness_ratio: Option<f64>,
}

impl BoundReport {
    pub fn min_residual_entropy(&self) -> f64 {
        self.residual_entropies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Attaches an exact optimum and derives the absolute bound and
    /// tightness figures.
    pub fn with_optimum(mut self, optimum: f64) -> Self {
        self.optimum = Some(optimum);
        self.absolute_bound = Some(optimum + self.slack);
        if let Some(achieved) = self.achieved {
            let gap = achieved - optimum;
            self.tightness = Some(gap);
            self.tightness_ratio = Some(if self.slack > 0.0 { gap / self.slack } else { 0.0 });
        }
        self
    }
}

/// `T log2(1/T)`, zero at `T = 0`.
fn t_log_inv_t(t: f64) -> f64 {
    plogp(t)
}

pub fn bound_report(marginals: &[Marginal], achieved: Option<f64>) -> Result<BoundReport> {
    let n = common_len(marginals, 2)?;
    let m = marginals.len();
    let sorted: Vec<Vec<f64>> = marginals.iter().map(|p| sort_decreasing(p).0.into_vec()).collect();
    let p_min: Vec<f64> = (0..n).map(|i| sorted.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min)).collect();
    let residuals: Vec<Vec<f64>> = sorted
        .iter()
        .map(|s| s.iter().zip(&p_min).map(|(a, b)| if a - b <= EPS_ZERO { 0.0 } else { a - b }).collect())
        .collect();
    let totals: Vec<f64> = residuals.iter().map(|l| l.iter().sum()).collect();
    let total = totals[0];
    if let Some(bad) = totals.iter().find(|t| (**t - total).abs() > EPS_SUM) {
        return Err(Error::Invariant(format!("residual totals differ: {total} vs {bad}")));
    }
    if m == 2 {
        let tv = total_variation_sorted(&marginals[0], &marginals[1])?;
        if (tv - total).abs() > EPS_SUM {
            return Err(Error::Invariant(format!("T = {total} but sorted total variation is {tv}")));
        }
    }
    let residual_entropies: Vec<f64> = residuals.iter().map(|l| h(l)).collect();
    let max_h = residual_entropies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_h = residual_entropies.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = if m == 2 {
        1.0 - t_log_inv_t(total) + min_h
    } else {
        1.0 - (m - 1) as f64 * t_log_inv_t(total) + residual_entropies.iter().sum::<f64>() - max_h
    };
    let lower_bound = marginals.iter().map(Marginal::entropy).fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundReport {
        m,
        n,
        sorted_marginals: sorted,
        p_min,
        residuals,
        total_residual: total,
        residual_entropies,
        lower_bound,
        slack,
        upper_bound: lower_bound + slack,
        achieved,
        optimum: None,
        absolute_bound: None,
        tightness: None,
        tightness_ratio: None,
    })
}

/// A nonnegative tensor stored by its nonzero cells. Need not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterProductTensor {
    pub cardinalities: Vec<usize>,
    pub entries: BTreeMap<Vec<usize>, f64>,
}

impl OuterProductTensor {
    pub fn entropy(&self) -> f64 {
        self.entries.values().copied().map(plogp).sum()
    }

    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cardinalities[axis]];
        for (cell, x) in &self.entries {
            out[cell[axis]] += x;
        }
        out
    }
}

fn common_total(residuals: &[ResidualVector]) -> Result<f64> {
    let first = residuals
        .first()
        .ok_or_else(|| Error::Dimension("need at least one residual".into()))?
        .total();
    if let Some(r) = residuals.iter().find(|r| (r.total() - first).abs() > EPS_SUM) {
        return Err(Error::Domain(format!("residual totals differ: {first} vs {}", r.total())));
    }
    Ok(first)
}

/// `R(i_1, ..., i_m) = prod_j l_j(i_j) / T^(m-1)`, whose axis-`j` marginal is
/// `l_j`. Empty when `T = 0`.
pub fn outer_product_coupling(residuals: &[ResidualVector]) -> Result<OuterProductTensor> {
    let total = common_total(residuals)?;
    let cardinalities: Vec<usize> = residuals.iter().map(ResidualVector::len).collect();
    let mut entries = BTreeMap::new();
    if total > EPS_ZERO {
        let scale = total.powi(residuals.len() as i32 - 1);
        let supports: Vec<Vec<(usize, f64)>> = residuals
            .iter()
            .map(|r| r.masses().iter().copied().enumerate().filter(|(_, x)| *x > 0.0).collect())
            .collect();
        let mut cursor = vec![0usize; supports.len()];
        if supports.iter().all(|s| !s.is_empty()) {
            'outer: loop {
                let cell: Vec<usize> = cursor.iter().zip(&supports).map(|(&c, s)| s[c].0).collect();
                let prod: f64 = cursor.iter().zip(&supports).map(|(&c, s)| s[c].1).product();
                entries.insert(cell, prod / scale);
                for axis in (0..cursor.len()).rev() {
                    cursor[axis] += 1;
                    if cursor[axis] < supports[axis].len() {
                        continue 'outer;
                    }
                    cursor[axis] = 0;
                }
                break;
            }
        }
    }
    Ok(OuterProductTensor { cardinalities, entries })
}

/// `(h(R), sum_j h(l_j) + (m-1) T log2 T)` for the outer product `R`; the two
/// agree up to rounding.
pub fn outer_product_entropy_identity(residuals: &[ResidualVector]) -> Result<(f64, f64)> {
    let tensor = outer_product_coupling(residuals)?;
    let total = common_total(residuals)?;
    let m = residuals.len() as f64;
    let lhs = tensor.entropy();
    let rhs = residuals.iter().map(ResidualVector::entropy).sum::<f64>() - (m - 1.0) * t_log_inv_t(total);
    Ok((lhs, rhs))
}

/// Uniform `X_1` against an `X_2` that puts `alpha/n` on the first half of
/// the states and `(2-alpha)/n` on the rest, with closed-form predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecialFamily {
    pub n: usize,
    pub alpha: f64,
    #[serde(skip)]
    pub uniform: Marginal,
    #[serde(skip)]
    pub skewed: Marginal,
    /// Entropy of the two-phase greedy coupling.
    pub predicted_greedy_entropy: f64,
    /// `H(X_2)`.
    pub predicted_h2: f64,
    /// `h(l_1) = h(l_2) = ((alpha-1)/2) log2(n/(alpha-1))`.
    pub predicted_residual_entropy: f64,
    /// `predicted_greedy_entropy - predicted_h2` in the `eps = alpha - 1` form.
    pub predicted_gap: f64,
}

pub fn special_family(n: usize, alpha: f64) -> Result<SpecialFamily> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::Domain(format!("n must be even and at least 2, got {n}")));
    }
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (1, 2), got {alpha}")));
    }
    let nf = n as f64;
    let half = n / 2;
    let skewed: Vec<f64> = (0..n).map(|i| if i < half { alpha / nf } else { (2.0 - alpha) / nf }).collect();
    let eps = alpha - 1.0;
    let xlog = |x: f64| x * x.log2();
    Ok(SpecialFamily {
        n,
        alpha,
        uniform: Marginal::uniform(n)?,
        skewed: Marginal::new(skewed)?,
        predicted_greedy_entropy: nf.log2() - xlog(alpha - 1.0) / 2.0 - xlog(2.0 - alpha) / 2.0,
        predicted_h2: nf.log2() - xlog(alpha) / 2.0 - xlog(2.0 - alpha) / 2.0,
        predicted_residual_entropy: eps / 2.0 * (nf / eps).log2(),
        predicted_gap: 0.5 * (1.0 + eps).log2() + eps / 2.0 * (1.0 + 1.0 / eps).log2(),
    })
}
