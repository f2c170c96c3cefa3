//! Block decomposition of an upper-triangular matrix group: for each
//! coordinate pair `(i,j)` the 2x2 block spanned by the diagonal pairs of the
//! generators together with the elementary unipotent, plus a validity
//! witness: a unipotent group element with nonzero `(i,j)` entry and zeros at
//! all coordinates strictly above it in the chosen order.
//!
//! Witnesses are found by breadth-first search over words in the generators
//! and their inverses, keeping the elements with trivial diagonal and
//! augmenting them with single commutators (which reach pure higher-corner
//! elements quickly). Every emitted witness is re-verified by exact
//! arithmetic; deduplication uses canonical Laurent keys where entries stay
//! polynomial and fingerprints otherwise.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::CoreError;
use crate::field::CoefficientField;
use crate::fingerprint::FingerprintCtx;
use crate::matrix::{delta2, encode_word, invert_word, GroupSpec, UTMatrix, Word};
use crate::order::{all_pairs, t_maximal_coordinates, Pair, TOrder};
use crate::ratfun::RationalFunction;
use crate::rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Validity {
    Valid { witness: Vec<String> },
    NoWitnessUpToDepth(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockData {
    pub pair: Pair,
    pub status: Validity,
    /// phi value `g_ii / g_jj` per generator, by generator name.
    pub phi_values: Vec<(String, RationalFunction)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockReport {
    pub n: usize,
    pub depth: usize,
    pub pairs: Vec<BlockData>,
    /// Searched-set description backing NoWitness claims.
    pub search_description: String,
    /// Set when the search hit the term-count guard and degraded to
    /// fingerprint dedup for some elements.
    pub fingerprint_mode: bool,
}

impl BlockReport {
    pub fn valid_pairs(&self) -> Vec<Pair> {
        self.pairs
            .iter()
            .filter(|b| matches!(b.status, Validity::Valid { .. }))
            .map(|b| b.pair)
            .collect()
    }

    pub fn block(&self, pair: Pair) -> Option<&BlockData> {
        self.pairs.iter().find(|b| b.pair == pair)
    }
}

/// Literal coordinate test: nonzero at `(i,j)`, zero at every coordinate
/// strictly greater in the order.
pub fn valid_wrt(u: &UTMatrix, i: usize, j: usize, order: &TOrder) -> bool {
    debug_assert!(i < j && j < u.n);
    if u.at(i, j).is_zero() {
        return false;
    }
    all_pairs(u.n)
        .into_iter()
        .filter(|&p| p != (i, j) && order.geq(p, (i, j)))
        .all(|(a, b)| u.at(a, b).is_zero())
}

/// The 2x2 block spec at `(i,j)`: `diag(g_ii, g_jj)` for every generator,
/// plus the elementary unipotent.
pub fn block_spec(spec: &GroupSpec, i: usize, j: usize) -> Result<GroupSpec, CoreError> {
    let field = spec.field;
    let nvars = spec.nvars;
    let zero = RationalFunction::zero(field, nvars);
    let mut gens = vec![("delta".to_string(), delta2(field, nvars))];
    for (name, g) in &spec.generators {
        let m = UTMatrix::from_entries(
            2,
            vec![
                g.at(i, i).clone(),
                zero.clone(),
                zero.clone(),
                g.at(j, j).clone(),
            ],
        )?;
        gens.push((format!("B_{name}"), m));
    }
    GroupSpec::new(field, nvars, 2, gens)
}

/// phi values of the `(i,j)` block: `g_ii / g_jj` per generator.
pub fn phi_values(
    spec: &GroupSpec,
    i: usize,
    j: usize,
) -> Result<Vec<(String, RationalFunction)>, CoreError> {
    spec.generators
        .iter()
        .map(|(name, g)| Ok((name.clone(), g.at(i, i).mul(&g.at(j, j).inv()?)?)))
        .collect()
}

struct SearchLimits {
    max_elements: usize,
    max_terms: usize,
    commutator_budget: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_elements: 2_000_000,
            max_terms: 4096,
            commutator_budget: 48,
        }
    }
}

struct Dedup {
    ctx: FingerprintCtx,
    hashed: HashSet<u128>,
    /// exact fallback for elements without a canonical key (char p entries
    /// with non-monomial denominators)
    exact: Vec<UTMatrix>,
    char_p: bool,
    fingerprint_mode: bool,
}

impl Dedup {
    fn insert(&mut self, m: &UTMatrix, max_terms: usize) -> bool {
        if let Some(key) = m.laurent_key() {
            let digest = FingerprintCtx::digest(key.bytes().map(|b| b as u64));
            return self.hashed.insert(digest);
        }
        if m.max_term_count() > max_terms {
            self.fingerprint_mode = true;
        }
        if !self.char_p {
            if let Some(rows) = m.fingerprint_rows(&self.ctx) {
                return self.hashed.insert(FingerprintCtx::digest(rows));
            }
        }
        // exact quadratic fallback
        if self.exact.iter().any(|x| x == m) {
            false
        } else {
            self.exact.push(m.clone());
            true
        }
    }
}

/// Breadth-first enumeration of the ball of radius `depth`, returning the
/// unipotent elements found (with witnessing words), augmented by single
/// commutators of found elements.
fn unipotent_search(
    spec: &GroupSpec,
    depth: usize,
    limits: &SearchLimits,
) -> Result<(Vec<(UTMatrix, Word)>, bool), CoreError> {
    let alphabet = spec.alphabet();
    let identity = UTMatrix::identity(spec.field, spec.nvars, spec.n);
    let mut dedup = Dedup {
        ctx: FingerprintCtx::new(rng::derive(0xB10C, "block-bfs"), spec.nvars),
        hashed: HashSet::new(),
        exact: Vec::new(),
        char_p: spec.field.characteristic() > 0,
        fingerprint_mode: false,
    };
    dedup.insert(&identity, limits.max_terms);
    let mut unipotents: Vec<(UTMatrix, Word)> = Vec::new();
    let mut frontier: Vec<(UTMatrix, Word)> = vec![(identity, Vec::new())];
    let mut truncated = false;

    'levels: for _level in 1..=depth {
        let mut next = Vec::new();
        for (m, word) in &frontier {
            for letter in &alphabet {
                // avoid immediate backtracking
                if word.last() == Some(&letter.inverted()) {
                    continue;
                }
                let g = spec.generator(&letter.name)?;
                let gm = if letter.inverse { g.inv()? } else { g.clone() };
                let child = m.mul(&gm)?;
                if dedup.hashed.len() + dedup.exact.len() >= limits.max_elements {
                    truncated = true;
                    break 'levels;
                }
                if dedup.insert(&child, limits.max_terms) {
                    let mut w = word.clone();
                    w.push(letter.clone());
                    if child.is_unipotent() && !child.is_identity() {
                        unipotents.push((child.clone(), w.clone()));
                    }
                    next.push((child, w));
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    // commutator augmentation: [a, b] = a b a^-1 b^-1 of retained elements
    unipotents.sort_by_key(|(_, w)| w.len());
    let k = unipotents.len().min(limits.commutator_budget);
    let mut extra = Vec::new();
    for x in 0..k {
        for y in 0..k {
            if x == y {
                continue;
            }
            let (a, wa) = &unipotents[x];
            let (b, wb) = &unipotents[y];
            let c = a.mul(b)?.mul(&a.inv()?)?.mul(&b.inv()?)?;
            if c.is_identity() {
                continue;
            }
            if dedup.insert(&c, limits.max_terms) {
                let mut w = wa.clone();
                w.extend(wb.iter().cloned());
                w.extend(invert_word(wa));
                w.extend(invert_word(wb));
                extra.push((c, w));
            }
        }
    }
    unipotents.extend(extra);
    let _ = truncated;
    Ok((unipotents, dedup.fingerprint_mode))
}

/// Compute the block decomposition: validity witnesses per coordinate pair
/// (exactly verified), block generators and phi values.
pub fn decompose(spec: &GroupSpec, depth: usize, order: &TOrder) -> Result<BlockReport, CoreError> {
    if depth == 0 {
        return Err(CoreError::InvalidParameter("depth must be >= 1".into()));
    }
    let limits = SearchLimits::default();
    let (unipotents, fingerprint_mode) = unipotent_search(spec, depth, &limits)?;

    let mut pairs = Vec::new();
    for (i, j) in all_pairs(spec.n) {
        let witness = unipotents
            .iter()
            .filter(|(m, _)| valid_wrt(m, i, j, order))
            .min_by_key(|(_, w)| w.len());
        let status = match witness {
            Some((m, w)) => {
                // exact re-verification of the emitted witness
                let rebuilt = spec.eval_word(w)?;
                debug_assert_eq!(&rebuilt, m);
                if !(rebuilt.is_unipotent() && valid_wrt(&rebuilt, i, j, order)) {
                    return Err(CoreError::InvalidParameter(format!(
                        "witness verification failed at ({i},{j})"
                    )));
                }
                Validity::Valid {
                    witness: encode_word(w),
                }
            }
            None => Validity::NoWitnessUpToDepth(depth),
        };
        pairs.push(BlockData {
            pair: (i, j),
            status,
            phi_values: phi_values(spec, i, j)?,
        });
    }
    Ok(BlockReport {
        n: spec.n,
        depth,
        pairs,
        search_description: format!(
            "unipotent elements from words of length <= {depth} in generators and inverses, \
             closed under single commutators of the {} shortest finds",
            limits.commutator_budget
        ),
        fingerprint_mode,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ActionVerdict {
    ActsNontrivially {
        witness: Vec<String>,
        pair: Pair,
    },
    NoEvidenceUpToDepth(usize),
}

/// Search the normal closure of `g` (conjugates and products of two
/// conjugates, conjugators from the ball of radius `depth`) for a unipotent
/// element whose maximal coordinate under the total order sits over a block
/// classified as having a non-trivial boundary.
pub fn act_nontrivially(
    spec: &GroupSpec,
    g_word: &Word,
    depth: usize,
    order: &TOrder,
    block_nontrivial: &dyn Fn(Pair) -> bool,
) -> Result<ActionVerdict, CoreError> {
    if !order.is_total() {
        return Err(CoreError::InvalidOrder(
            "the element action test needs a total order".into(),
        ));
    }
    let g = spec.eval_word(g_word)?;
    if g.is_identity() {
        return Ok(ActionVerdict::NoEvidenceUpToDepth(depth));
    }
    // conjugators: ball of radius depth (words, deduped syntactically)
    let alphabet = spec.alphabet();
    let mut conjugators: Vec<Word> = vec![Vec::new()];
    let mut frontier: Vec<Word> = vec![Vec::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for w in &frontier {
            for letter in &alphabet {
                if w.last() == Some(&letter.inverted()) {
                    continue;
                }
                let mut nw = w.clone();
                nw.push(letter.clone());
                next.push(nw.clone());
                conjugators.push(nw);
                if conjugators.len() > 20_000 {
                    break;
                }
            }
        }
        frontier = next;
        if conjugators.len() > 20_000 {
            break;
        }
    }

    let mut candidates: Vec<(UTMatrix, Word)> = Vec::new();
    for w in &conjugators {
        for sign in [false, true] {
            let mut word: Word = w.clone();
            let mut gw = g_word.clone();
            if sign {
                gw = invert_word(g_word);
            }
            word.extend(gw);
            word.extend(invert_word(w));
            let m = spec.eval_word(&word)?;
            if m.is_unipotent() && !m.is_identity() {
                candidates.push((m, word));
            }
        }
    }
    // products of two conjugates reach cancellations of higher coordinates
    let k = candidates.len().min(24);
    for x in 0..k {
        for y in 0..k {
            if x == y {
                continue;
            }
            let m = candidates[x].0.mul(&candidates[y].0)?;
            if m.is_unipotent() && !m.is_identity() {
                let mut w = candidates[x].1.clone();
                w.extend(candidates[y].1.iter().cloned());
                candidates.push((m, w));
            }
        }
        if candidates.len() > 4000 {
            break;
        }
    }

    for (m, w) in &candidates {
        if let Some(pair) = t_maximal_coordinates(m, order).first().copied() {
            if block_nontrivial(pair) {
                return Ok(ActionVerdict::ActsNontrivially {
                    witness: encode_word(w),
                    pair,
                });
            }
        }
    }
    Ok(ActionVerdict::NoEvidenceUpToDepth(depth))
}

/// Convenience: is the field characteristic positive?
pub fn is_char_p(field: &CoefficientField) -> bool {
    field.characteristic() > 0
}
