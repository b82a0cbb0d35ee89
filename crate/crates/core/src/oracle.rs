//! Exact minimum entropy coupling of two small marginals.
//!
//! Entropy is concave, so its minimum over the transportation polytope sits
//! at a vertex. Vertices are generated by saturating orders: pick any cell
//! whose row and column are both open, give it the smaller of the two
//! remainders, close whichever line ran out, recurse. Every vertex has a
//! forest support, and peeling a leaf of that forest is one such step, so
//! the recursion reaches all of them. Subproblems are memoized on their
//! open remainders.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use crate::dist::{common_len, Marginal, SparseCoupling};
use crate::tol::EPS_ZERO;
use crate::{Error, Result};

/// Default cap on the number of states per marginal.
pub const DEFAULT_N_CAP: usize = 5;

/// Two vertices are the same if their supports match and masses agree to
/// this tolerance.
const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    /// Deduplicated vertices, ordered by support.
    pub vertices: Vec<SparseCoupling>,
    pub best_index: usize,
    pub best_entropy: f64,
}

impl VertexSet {
    pub fn best(&self) -> &SparseCoupling {
        &self.vertices[self.best_index]
    }
}

/// Support of a partial vertex, one bit per cell `i * n + j`.
type Support = u64;

/// Largest `n` whose `n * n` cells fit in a [`Support`].
const MAX_N: usize = 8;

/// Row remainders in `[..n]`, column remainders in `[MAX_N..MAX_N + n]`.
type State = [f64; 2 * MAX_N];

struct Enumerator {
    n: usize,
    memo: HashMap<[i64; 2 * MAX_N], Rc<Vec<Support>>>,
}

fn key(state: &State) -> [i64; 2 * MAX_N] {
    // remainders reached along different orders differ by rounding only
    state.map(|x| (x / 1e-11).round() as i64)
}

fn snap(x: f64) -> f64 {
    if x <= EPS_ZERO {
        0.0
    } else {
        x
    }
}

/// Lowest cell of `support` whose row or column holds no other cell. Every
/// cell with that property can be the first step of a saturating order
/// producing `support`, and no other cell can.
fn first_leaf_cell(support: Support, n: usize) -> Support {
    let row_mask: Support = (1 << n) - 1;
    let col_mask: Support = (0..n).fold(0, |acc, i| acc | 1 << (i * n));
    let mut rest = support;
    while rest != 0 {
        let bit = rest & rest.wrapping_neg();
        let b = bit.trailing_zeros() as usize;
        let (i, j) = (b / n, b % n);
        if (support & row_mask << (i * n)).count_ones() == 1 || (support & col_mask << j).count_ones() == 1 {
            return bit;
        }
        rest &= rest - 1;
    }
    0
}

impl Enumerator {
    /// Supports of every vertex of the subproblem with these remainders.
    /// Masses are left out: a forest support fixes them.
    fn explore(&mut self, state: &State) -> Rc<Vec<Support>> {
        let k = key(state);
        if let Some(hit) = self.memo.get(&k) {
            return Rc::clone(hit);
        }
        let n = self.n;
        let open_rows: Vec<usize> = (0..n).filter(|&i| state[i] > 0.0).collect();
        let open_cols: Vec<usize> = (0..n).filter(|&j| state[MAX_N + j] > 0.0).collect();
        let result = if open_rows.is_empty() || open_cols.is_empty() {
            vec![0]
        } else {
            let mut all = Vec::new();
            for &i in &open_rows {
                for &j in &open_cols {
                    let (r, c) = (i, MAX_N + j);
                    let x = state[r].min(state[c]);
                    let mut next = *state;
                    next[r] = snap(next[r] - x);
                    next[c] = snap(next[c] - x);
                    let bit: Support = 1 << (i * n + j);
                    // keep each support only under its first peelable cell
                    all.extend(
                        self.explore(&next)
                            .iter()
                            .map(|tail| tail | bit)
                            .filter(|&full| first_leaf_cell(full, n) == bit),
                    );
                }
            }
            all
        };
        let result = Rc::new(result);
        self.memo.insert(k, Rc::clone(&result));
        result
    }
}

/// Masses on a forest support, found by peeling leaf lines.
fn solve_forest(p: &[f64], q: &[f64], support: Support, n: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let mut rows = p.to_vec();
    let mut cols = q.to_vec();
    let mut open: Vec<(usize, usize)> =
        (0..n * n).filter(|b| support >> b & 1 == 1).map(|b| (b / n, b % n)).collect();
    let mut cells = Vec::with_capacity(open.len());
    while !open.is_empty() {
        let degree = |line: &dyn Fn(&(usize, usize)) -> bool| open.iter().filter(|c| line(c)).count();
        let leaf = open
            .iter()
            .position(|&(i, _)| degree(&|c| c.0 == i) == 1)
            .map(|k| (k, true))
            .or_else(|| open.iter().position(|&(_, j)| degree(&|c| c.1 == j) == 1).map(|k| (k, false)))
            .ok_or_else(|| Error::Invariant("vertex support has a cycle".into()))?;
        let (i, j) = open.swap_remove(leaf.0);
        let x = if leaf.1 { rows[i] } else { cols[j] };
        rows[i] = snap(rows[i] - x);
        cols[j] = snap(cols[j] - x);
        if x > EPS_ZERO {
            cells.push((vec![i, j], x));
        }
    }
    Ok(cells)
}

/// All vertices of the polytope of couplings of `p` and `q`.
pub fn enumerate_vertices(p: &Marginal, q: &Marginal, n_cap: usize) -> Result<VertexSet> {
    let pair = [p.clone(), q.clone()];
    let n = common_len(&pair, 2)?;
    if n > n_cap {
        return Err(Error::SizeCap { n, cap: n_cap });
    }
    if n > MAX_N {
        return Err(Error::SizeCap { n, cap: MAX_N });
    }
    let snapped = |v: &[f64]| -> Vec<f64> { v.iter().map(|&x| snap(x)).collect() };
    let (rows, cols) = (snapped(p.probs()), snapped(q.probs()));
    let mut start = [0.0; 2 * MAX_N];
    start[..n].copy_from_slice(&rows);
    start[MAX_N..MAX_N + n].copy_from_slice(&cols);
    let mut enumerator = Enumerator { n, memo: HashMap::new() };
    let supports = enumerator.explore(&start);

    // cells that solve to zero can make two supports the same vertex; once
    // those are dropped the support determines the masses
    let mut unique: BTreeMap<Vec<Vec<usize>>, SparseCoupling> = BTreeMap::new();
    for &support in supports.iter() {
        let v = SparseCoupling::from_assignments(vec![n, n], solve_forest(&rows, &cols, support, n)?)?;
        let cells: Vec<Vec<usize>> = v.entries().keys().cloned().collect();
        match unique.get(&cells) {
            Some(w) if w.entries().values().zip(v.entries().values()).any(|(a, b)| (a - b).abs() > DEDUP_TOL) => {
                return Err(Error::Invariant(format!("support {cells:?} solved to two different vertices")));
            }
            Some(_) => {}
            None => {
                unique.insert(cells, v);
            }
        }
    }
    let vertices: Vec<SparseCoupling> = unique.into_values().collect();
    let (best_index, best_entropy) = vertices
        .iter()
        .enumerate()
        .map(|(k, v)| (k, v.entropy()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok(VertexSet { vertices, best_index, best_entropy })
}

/// Globally optimal coupling of two marginals with at most
/// [`DEFAULT_N_CAP`] states, and its entropy.
pub fn exact_min_entropy_2var(p: &Marginal, q: &Marginal) -> Result<(SparseCoupling, f64)> {
    let set = enumerate_vertices(p, q, DEFAULT_N_CAP)?;
    let best = set.best().clone();
    Ok((best, set.best_entropy))
}

/// `max_j H(X_j)`, the trivial lower bound on any coupling's entropy.
/// Zero for an empty slice.
pub fn entropy_lower_bound(marginals: &[Marginal]) -> f64 {
    marginals.iter().map(Marginal::entropy).fold(0.0, f64::max)
}

/// True if the support of a two-variable coupling has no cycle when read as
/// a bipartite graph between row states and column states.
pub fn support_is_acyclic(c: &SparseCoupling) -> bool {
    let rows = c.cardinalities()[0];
    let mut parent: Vec<usize> = (0..rows + c.cardinalities()[1]).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for cell in c.entries().keys() {
        let a = find(&mut parent, cell[0]);
        let b = find(&mut parent, rows + cell[1]);
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}
