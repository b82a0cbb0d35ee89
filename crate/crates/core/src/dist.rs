//! Discrete distributions, couplings and entropy functionals.
//!
//! All entropies are in bits. [`extended_entropy`] accepts any nonnegative
//! vector, not only probability vectors, with `0 log 0 = 0`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::tol::{EPS_MARG, EPS_SUM, EPS_ZERO};
use crate::{Error, Result};

/// `-x log2 x`, zero at zero.
#[inline]
pub(crate) fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.log2()
    } else {
        0.0
    }
}

/// Entropy of a vector already known to be nonnegative.
pub(crate) fn h(v: &[f64]) -> f64 {
    v.iter().copied().map(plogp).sum()
}

/// `-sum v_i log2 v_i` over a nonnegative vector that need not sum to one.
pub fn extended_entropy(v: &[f64]) -> Result<f64> {
    if let Some((i, &x)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("entry {i} is {x}, expected a finite value >= 0")));
    }
    Ok(h(v))
}

/// A probability vector over `n` states.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    probs: Vec<f64>,
}

impl Marginal {
    /// Validates and stores `probs`. The vector is rescaled by its sum so
    /// that downstream residual totals agree to rounding error.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("marginal has no states".into()));
        }
        if let Some((i, &x)) = probs.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("probability {} is {x}", i + 1)));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > EPS_SUM {
            return Err(Error::Domain(format!("probabilities sum to {sum}, expected 1")));
        }
        let probs = if sum == 1.0 { probs } else { probs.into_iter().map(|x| x / sum).collect() };
        Ok(Marginal { probs })
    }

    /// Uniform distribution on `n` states.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("marginal has no states".into()));
        }
        Ok(Marginal { probs: vec![1.0 / n as f64; n] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        h(&self.probs)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// A nonnegative sub-probability vector, e.g. what is left of a marginal
/// after some of its mass has been assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    masses: Vec<f64>,
    total: f64,
}

impl ResidualVector {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if let Some((i, &x)) = masses.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("residual entry {} is {x}", i + 1)));
        }
        let total = masses.iter().sum();
        Ok(ResidualVector { masses, total })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        h(&self.masses)
    }
}

/// A joint distribution stored by its nonzero cells only.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoupling {
    cardinalities: Vec<usize>,
    entries: BTreeMap<Vec<usize>, f64>,
    assignment_order: Vec<(Vec<usize>, f64)>,
}

impl SparseCoupling {
    /// Builds a coupling from cells in the order they were assigned.
    ///
    /// Every mass must exceed `EPS_ZERO`, every index must be in range and no
    /// cell may appear twice. Marginal agreement is checked separately by
    /// [`SparseCoupling::check_marginals`].
    pub fn from_assignments(
        cardinalities: Vec<usize>,
        assignments: Vec<(Vec<usize>, f64)>,
    ) -> Result<Self> {
        if cardinalities.len() < 2 {
            return Err(Error::Dimension(format!(
                "a coupling needs at least 2 variables, got {}",
                cardinalities.len()
            )));
        }
        let mut entries = BTreeMap::new();
        for (cell, mass) in &assignments {
            if cell.len() != cardinalities.len() {
                return Err(Error::Dimension(format!(
                    "cell {cell:?} has {} indices, expected {}",
                    cell.len(),
                    cardinalities.len()
                )));
            }
            if let Some((axis, &i)) = cell.iter().enumerate().find(|(a, &i)| i >= cardinalities[*a]) {
                return Err(Error::Dimension(format!(
                    "state {} out of range on axis {} (cardinality {})",
                    i + 1,
                    axis + 1,
                    cardinalities[axis]
                )));
            }
            if !(*mass > EPS_ZERO) || !mass.is_finite() {
                return Err(Error::Domain(format!("cell {cell:?} has non-positive mass {mass}")));
            }
            if entries.insert(cell.clone(), *mass).is_some() {
                return Err(Error::Invariant(format!("cell {cell:?} assigned twice")));
            }
        }
        Ok(SparseCoupling { cardinalities, entries, assignment_order: assignments })
    }

    pub fn num_vars(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Nonzero cells keyed by their index tuple, in lexicographic order.
    pub fn entries(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.entries
    }

    pub fn assignment_order(&self) -> &[(Vec<usize>, f64)] {
        &self.assignment_order
    }

    pub fn get(&self, cell: &[usize]) -> f64 {
        self.entries.get(cell).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn entropy(&self) -> f64 {
        self.entries.values().copied().map(plogp).sum()
    }

    /// Largest deviation between the coupling's marginals and `marginals`.
    pub fn marginal_error(&self, marginals: &[Marginal]) -> Result<f64> {
        if marginals.len() != self.num_vars() {
            return Err(Error::Dimension(format!(
                "{} marginals for a coupling of {} variables",
                marginals.len(),
                self.num_vars()
            )));
        }
        let mut worst = 0.0f64;
        for (axis, p) in marginals.iter().enumerate() {
            let implied = marginalize(self, axis)?;
            if implied.len() != p.len() {
                return Err(Error::Dimension(format!(
                    "axis {} has {} states, marginal has {}",
                    axis + 1,
                    implied.len(),
                    p.len()
                )));
            }
            for (a, b) in implied.iter().zip(p.probs()) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// Errors unless every marginal is reproduced within `EPS_MARG`.
    pub fn check_marginals(&self, marginals: &[Marginal]) -> Result<()> {
        let err = self.marginal_error(marginals)?;
        if err > EPS_MARG {
            return Err(Error::Invariant(format!("marginal reproduction error {err:e}")));
        }
        Ok(())
    }
}

/// Sorts `p` into non-increasing order. `perm[k]` is the original index of
/// the `k`-th sorted entry; ties keep their original order.
pub fn sort_decreasing(p: &Marginal) -> (Marginal, Vec<usize>) {
    let perm = decreasing_order(p.probs());
    let sorted = perm.iter().map(|&i| p.probs()[i]).collect();
    (Marginal { probs: sorted }, perm)
}

pub(crate) fn decreasing_order(v: &[f64]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..v.len()).collect();
    // sort_by is stable, so equal values keep ascending index order
    perm.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    perm
}

/// Total variation distance between the decreasingly sorted versions of `p`
/// and `q`.
pub fn total_variation_sorted(p: &Marginal, q: &Marginal) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("lengths {} and {}", p.len(), q.len())));
    }
    let (ps, _) = sort_decreasing(p);
    let (qs, _) = sort_decreasing(q);
    Ok(0.5 * ps.probs().iter().zip(qs.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// The marginal of `c` along `axis` (0-based).
pub fn marginalize(c: &SparseCoupling, axis: usize) -> Result<Vec<f64>> {
    if axis >= c.num_vars() {
        return Err(Error::Dimension(format!(
            "axis {} out of range for {} variables",
            axis + 1,
            c.num_vars()
        )));
    }
    let mut out = vec![0.0; c.cardinalities[axis]];
    for (cell, mass) in &c.entries {
        out[cell[axis]] += mass;
    }
    Ok(out)
}

/// Common state count of `marginals`; requires at least `min_count` of them.
pub(crate) fn common_len(marginals: &[Marginal], min_count: usize) -> Result<usize> {
    if marginals.len() < min_count {
        return Err(Error::Dimension(format!(
            "need at least {min_count} marginals, got {}",
            marginals.len()
        )));
    }
    let n = marginals[0].len();
    if let Some((j, p)) = marginals.iter().enumerate().find(|(_, p)| p.len() != n) {
        return Err(Error::Dimension(format!(
            "marginal {} has {} states, marginal 1 has {n}",
            j + 1,
            p.len()
        )));
    }
    Ok(n)
}

/// Draws one marginal from a symmetric Dirichlet with the given concentration.
pub fn dirichlet_marginal<R: Rng + ?Sized>(rng: &mut R, n: usize, concentration: f64) -> Result<Marginal> {
    if n == 0 {
        return Err(Error::Domain("marginal has no states".into()));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::Domain(format!("concentration {concentration}: {e}")))?;
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        // all-zero draws only happen for tiny concentrations
        if sum > 0.0 {
            return Marginal::new(draws.into_iter().map(|x| x / sum).collect());
        }
    }
}

/// `m` independent symmetric-Dirichlet marginals on `n` states.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    n: usize,
    concentration: f64,
) -> Result<Vec<Marginal>> {
    (0..m).map(|_| dirichlet_marginal(rng, n, concentration)).collect()
}
