//! The partial order `U` on strictly-upper coordinate pairs and its total
//! extensions: `(i,j) <=_U (i',j')` iff `i <= i'` and `j >= j'`. Total
//! extensions are ranked pair lists validated against `U`; the built-in
//! row-major and column-major extensions correspond to reading the strict
//! upper triangle along rows or columns.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matrix::UTMatrix;

/// A coordinate pair `(i, j)` with `0 <= i < j < n` (0-based).
pub type Pair = (usize, usize);

/// `(i,j) <=_U (i',j')` iff `i <= i'` and `j >= j'`.
pub fn leq_u(a: Pair, b: Pair) -> bool {
    a.0 <= b.0 && a.1 >= b.1
}

/// All strict upper-triangle pairs of an `n x n` matrix.
pub fn all_pairs(n: usize) -> Vec<Pair> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TOrder {
    /// The partial order `U` itself.
    U,
    /// A total extension of `U`, as a ranked list from smallest to largest.
    Total(Vec<Pair>),
}

impl TOrder {
    /// Row-major total extension: for each row from the bottom up, pairs left
    /// to right... concretely, ranked so that `U`-larger pairs rank larger.
    pub fn row_major(n: usize) -> TOrder {
        let mut pairs = all_pairs(n);
        // sort ascending in the extension: larger (i, -j) later
        pairs.sort_by_key(|&(i, j)| (i as isize, -(j as isize)));
        TOrder::validated_total(pairs, n).expect("row-major extends U")
    }

    /// Column-major total extension.
    pub fn col_major(n: usize) -> TOrder {
        let mut pairs = all_pairs(n);
        pairs.sort_by_key(|&(i, j)| (-(j as isize), i as isize));
        TOrder::validated_total(pairs, n).expect("col-major extends U")
    }

    /// Validate a user-supplied ranked list: it must list every pair exactly
    /// once and respect `U`.
    pub fn validated_total(ranked: Vec<Pair>, n: usize) -> Result<TOrder, CoreError> {
        let mut expected = all_pairs(n);
        let mut got = ranked.clone();
        expected.sort_unstable();
        got.sort_unstable();
        if expected != got {
            return Err(CoreError::InvalidOrder(format!(
                "ranked list must contain every pair (i<j) of a {n}x{n} matrix exactly once"
            )));
        }
        for (a_idx, &a) in ranked.iter().enumerate() {
            for &b in ranked.iter().skip(a_idx + 1) {
                // a ranks strictly below b; U must not say a > b
                if leq_u(b, a) && a != b {
                    return Err(CoreError::InvalidOrder(format!(
                        "ranking violates U: {b:?} <=_U {a:?} but ranks above it"
                    )));
                }
            }
        }
        Ok(TOrder::Total(ranked))
    }

    /// Strict comparison `a <_T b` where defined. For `U` this is the partial
    /// order; for a total extension it is the ranked position.
    pub fn less(&self, a: Pair, b: Pair) -> bool {
        if a == b {
            return false;
        }
        match self {
            TOrder::U => leq_u(a, b),
            TOrder::Total(ranked) => {
                let pa = ranked.iter().position(|&p| p == a);
                let pb = ranked.iter().position(|&p| p == b);
                match (pa, pb) {
                    (Some(x), Some(y)) => x < y,
                    _ => false,
                }
            }
        }
    }

    /// `a >=_T b`.
    pub fn geq(&self, a: Pair, b: Pair) -> bool {
        a == b || self.less(b, a)
    }

    pub fn is_total(&self) -> bool {
        matches!(self, TOrder::Total(_))
    }
}

/// The set of `T`-maximal coordinates with nonzero entry of a unipotent
/// matrix: empty for the identity; a single pair under a total extension.
pub fn t_maximal_coordinates(u: &UTMatrix, order: &TOrder) -> Vec<Pair> {
    let nonzero: Vec<Pair> = all_pairs(u.n)
        .into_iter()
        .filter(|&(i, j)| !u.at(i, j).is_zero())
        .collect();
    nonzero
        .iter()
        .copied()
        .filter(|&p| !nonzero.iter().any(|&q| q != p && order.less(p, q)))
        .collect()
}

/// The single `T`-maximal nonzero coordinate under a total order, or `None`
/// for the identity.
pub fn t_max_coordinate(u: &UTMatrix, order: &TOrder) -> Option<Pair> {
    let maxima = t_maximal_coordinates(u, order);
    maxima.first().copied()
}

/// Membership in `N^T_(i,j)`: every coordinate `(i',j') >=_T (i,j)` is zero.
pub fn in_nt(u: &UTMatrix, i: usize, j: usize, order: &TOrder) -> bool {
    debug_assert!(i < j);
    all_pairs(u.n)
        .into_iter()
        .filter(|&p| order.geq(p, (i, j)))
        .all(|(a, b)| u.at(a, b).is_zero())
}
