//! Upper-triangular matrices over rational functions, group presentations as
//! named generator lists, and word evaluation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::CoreError;
use crate::field::CoefficientField;
use crate::fingerprint::FingerprintCtx;
use crate::poly::{Coef, Expo};
use crate::ratfun::RationalFunction;

/// An invertible upper-triangular `n x n` matrix; entries below the diagonal
/// are identically zero and every diagonal entry is nonzero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UTMatrix {
    pub n: usize,
    entries: Vec<RationalFunction>,
}

impl UTMatrix {
    pub fn identity(field: CoefficientField, nvars: usize, n: usize) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(if i == j {
                    RationalFunction::one(field, nvars)
                } else {
                    RationalFunction::zero(field, nvars)
                });
            }
        }
        UTMatrix { n, entries }
    }

    pub fn from_entries(n: usize, entries: Vec<RationalFunction>) -> Result<Self, CoreError> {
        if entries.len() != n * n {
            return Err(CoreError::SizeMismatch(entries.len(), n * n));
        }
        let m = UTMatrix { n, entries };
        for i in 0..n {
            for j in 0..i {
                if !m.at(i, j).is_zero() {
                    return Err(CoreError::InvalidParameter(format!(
                        "entry ({i},{j}) below the diagonal is nonzero"
                    )));
                }
            }
            if m.at(i, i).is_zero() {
                return Err(CoreError::SingularMatrix(i));
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &RationalFunction {
        &self.entries[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: RationalFunction) {
        self.entries[i * self.n + j] = v;
    }

    pub fn field(&self) -> CoefficientField {
        self.entries[0].field()
    }

    pub fn nvars(&self) -> usize {
        self.entries[0].nvars()
    }

    fn compat(&self, other: &Self) -> Result<(), CoreError> {
        if self.n != other.n {
            return Err(CoreError::SizeMismatch(self.n, other.n));
        }
        self.field().same(&other.field())?;
        if self.nvars() != other.nvars() {
            return Err(CoreError::ArityMismatch(self.nvars(), other.nvars()));
        }
        Ok(())
    }

    /// Exact product; upper-triangularity is preserved by construction.
    pub fn mul(&self, other: &Self) -> Result<Self, CoreError> {
        self.compat(other)?;
        let n = self.n;
        let field = self.field();
        let nvars = self.nvars();
        let mut entries = vec![RationalFunction::zero(field, nvars); n * n];
        for i in 0..n {
            for j in i..n {
                let mut acc = RationalFunction::zero(field, nvars);
                for k in i..=j {
                    let a = self.at(i, k);
                    let b = other.at(k, j);
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    acc = acc.add(&a.mul(b)?)?;
                }
                entries[i * n + j] = acc;
            }
        }
        Ok(UTMatrix { n, entries })
    }

    /// Exact inverse by back-substitution on the triangular structure.
    pub fn inv(&self) -> Result<Self, CoreError> {
        let n = self.n;
        let field = self.field();
        let nvars = self.nvars();
        let mut out = UTMatrix {
            n,
            entries: vec![RationalFunction::zero(field, nvars); n * n],
        };
        for i in 0..n {
            out.set(i, i, self.at(i, i).inv()?);
        }
        for j in 0..n {
            for i in (0..j).rev() {
                let mut acc = RationalFunction::zero(field, nvars);
                for k in i + 1..=j {
                    let a = self.at(i, k);
                    let b = out.at(k, j);
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    acc = acc.add(&a.mul(b)?)?;
                }
                if !acc.is_zero() {
                    let v = acc.neg().mul(&out.at(i, i).clone())?;
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn is_identity(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            (i..n).all(|j| {
                if i == j {
                    self.at(i, j).is_one()
                } else {
                    self.at(i, j).is_zero()
                }
            })
        })
    }

    pub fn is_unipotent(&self) -> bool {
        (0..self.n).all(|i| self.at(i, i).is_one())
    }

    /// Exact factorization `a = diag * unip` with `unip` unipotent:
    /// `unip[i][j] = a[i][j] / a[i][i]`.
    pub fn ut_part_and_diag(&self) -> Result<(Vec<RationalFunction>, UTMatrix), CoreError> {
        let n = self.n;
        let diag: Vec<RationalFunction> = (0..n).map(|i| self.at(i, i).clone()).collect();
        let mut unip = UTMatrix::identity(self.field(), self.nvars(), n);
        for i in 0..n {
            let dinv = self.at(i, i).inv()?;
            for j in i + 1..n {
                if !self.at(i, j).is_zero() {
                    unip.set(i, j, self.at(i, j).mul(&dinv)?);
                }
            }
        }
        Ok((diag, unip))
    }

    /// Evaluations of all entries at the context's points, row-major per
    /// point; `None` if any stored entry has a pole at some point.
    pub fn fingerprint_rows(&self, ctx: &FingerprintCtx) -> Option<Vec<u64>> {
        let mut out = Vec::with_capacity(ctx.min_points * self.n * self.n);
        for i in 0..ctx.min_points {
            let point = ctx.point(i);
            for e in &self.entries {
                out.push(e.eval_fq(&point)?);
            }
        }
        Some(out)
    }

    /// Canonical key when every entry normalizes to a plain Laurent
    /// polynomial (denominator 1 after monomial cancellation). Exact: two
    /// matrices get the same key iff they are equal.
    pub fn laurent_key(&self) -> Option<String> {
        use std::fmt::Write;
        let mut out = String::new();
        for e in &self.entries {
            if !e.den.is_one() {
                return None;
            }
            let _ = write!(out, "{};", e.num);
        }
        Some(out)
    }

    pub fn max_term_count(&self) -> usize {
        self.entries.iter().map(|e| e.term_count()).max().unwrap_or(0)
    }
}

impl fmt::Display for UTMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            write!(f, "[")?;
            for j in 0..self.n {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.at(i, j))?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

/// One letter of a word: a generator name, possibly inverted. The JSON form
/// prefixes inverses with `~`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub name: String,
    pub inverse: bool,
}

impl Letter {
    pub fn parse(s: &str) -> Letter {
        match s.strip_prefix('~') {
            Some(rest) => Letter {
                name: rest.to_string(),
                inverse: true,
            },
            None => Letter {
                name: s.to_string(),
                inverse: false,
            },
        }
    }

    pub fn gen(name: &str) -> Letter {
        Letter {
            name: name.to_string(),
            inverse: false,
        }
    }

    pub fn encode(&self) -> String {
        if self.inverse {
            format!("~{}", self.name)
        } else {
            self.name.clone()
        }
    }

    pub fn inverted(&self) -> Letter {
        Letter {
            name: self.name.clone(),
            inverse: !self.inverse,
        }
    }
}

pub type Word = Vec<Letter>;

pub fn parse_word(parts: &[String]) -> Word {
    parts.iter().map(|s| Letter::parse(s)).collect()
}

pub fn encode_word(word: &[Letter]) -> Vec<String> {
    word.iter().map(|l| l.encode()).collect()
}

pub fn invert_word(word: &[Letter]) -> Word {
    word.iter().rev().map(|l| l.inverted()).collect()
}

/// A finitely generated group of upper-triangular matrices, presented by a
/// named generator list. Generators are kept sorted by name so JSON
/// round-trips and iteration order are canonical.
#[derive(Clone, Debug)]
pub struct GroupSpec {
    pub field: CoefficientField,
    pub nvars: usize,
    pub n: usize,
    pub generators: Vec<(String, UTMatrix)>,
}

impl GroupSpec {
    pub fn new(
        field: CoefficientField,
        nvars: usize,
        n: usize,
        mut generators: Vec<(String, UTMatrix)>,
    ) -> Result<Self, CoreError> {
        for (name, g) in &generators {
            if g.n != n {
                return Err(CoreError::SizeMismatch(g.n, n));
            }
            g.field().same(&field)?;
            if g.nvars() != nvars {
                return Err(CoreError::ArityMismatch(g.nvars(), nvars));
            }
            if name.is_empty() || name.starts_with('~') {
                return Err(CoreError::InvalidParameter(format!(
                    "bad generator name {name:?}"
                )));
            }
        }
        generators.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(GroupSpec {
            field,
            nvars,
            n,
            generators,
        })
    }

    pub fn generator(&self, name: &str) -> Result<&UTMatrix, CoreError> {
        self.generators
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| CoreError::UnknownGenerator(name.to_string()))
    }

    pub fn generator_names(&self) -> Vec<String> {
        self.generators.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Left-to-right product of the word; the empty word is the identity.
    pub fn eval_word(&self, word: &[Letter]) -> Result<UTMatrix, CoreError> {
        let mut acc = UTMatrix::identity(self.field, self.nvars, self.n);
        for letter in word {
            let g = self.generator(&letter.name)?;
            let m = if letter.inverse { g.inv()? } else { g.clone() };
            acc = acc.mul(&m)?;
        }
        Ok(acc)
    }

    /// Signed letters available to word searches: every generator and its
    /// formal inverse.
    pub fn alphabet(&self) -> Vec<Letter> {
        let mut out = Vec::with_capacity(2 * self.generators.len());
        for (name, _) in &self.generators {
            out.push(Letter {
                name: name.clone(),
                inverse: false,
            });
            out.push(Letter {
                name: name.clone(),
                inverse: true,
            });
        }
        out
    }

    /// Per-generator exponent vectors of the diagonal, when every diagonal
    /// entry of every generator is a constant times a monomial.
    pub fn diag_monomial_exponents(&self) -> Option<Vec<Vec<Expo>>> {
        let mut out = Vec::new();
        for (_, g) in &self.generators {
            let mut per_gen = Vec::new();
            for i in 0..g.n {
                let d = g.at(i, i);
                if !d.den.is_one() {
                    return None;
                }
                let (e, _) = d.num.as_monomial()?;
                per_gen.push(e.clone());
            }
            out.push(per_gen);
        }
        Some(out)
    }

    /// Per-generator diagonal constants under the same monomial assumption.
    pub fn diag_monomial_constants(&self) -> Option<Vec<Vec<Coef>>> {
        let mut out = Vec::new();
        for (_, g) in &self.generators {
            let mut per_gen = Vec::new();
            for i in 0..g.n {
                let d = g.at(i, i);
                if !d.den.is_one() {
                    return None;
                }
                let (_, c) = d.num.as_monomial()?;
                per_gen.push(c.clone());
            }
            out.push(per_gen);
        }
        Some(out)
    }

    pub fn to_json(&self) -> GroupSpecJson {
        let mut generators = BTreeMap::new();
        for (name, m) in &self.generators {
            let rows: Vec<Vec<String>> = (0..m.n)
                .map(|i| (0..m.n).map(|j| m.at(i, j).to_string()).collect())
                .collect();
            generators.insert(name.clone(), rows);
        }
        GroupSpecJson {
            char: self.field.characteristic(),
            vars: self.nvars,
            size: self.n,
            generators,
        }
    }

    pub fn from_json(j: &GroupSpecJson) -> Result<Self, CoreError> {
        let field = CoefficientField::from_char(j.char)?;
        let mut gens = Vec::new();
        for (name, rows) in &j.generators {
            if rows.len() != j.size || rows.iter().any(|r| r.len() != j.size) {
                return Err(CoreError::SizeMismatch(rows.len(), j.size));
            }
            let mut entries = Vec::with_capacity(j.size * j.size);
            for row in rows {
                for cell in row {
                    entries.push(RationalFunction::parse(cell, field, j.vars)?);
                }
            }
            gens.push((name.clone(), UTMatrix::from_entries(j.size, entries)?));
        }
        GroupSpec::new(field, j.vars, j.size, gens)
    }
}

/// The on-disk JSON schema for group presentations.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroupSpecJson {
    pub char: u64,
    pub vars: usize,
    pub size: usize,
    pub generators: BTreeMap<String, Vec<Vec<String>>>,
}

/// Convenience builder for 2x2 specs: optional `delta` plus diagonal
/// generators `diag(1, entry)` given as parse strings.
pub fn two_by_two(
    field: CoefficientField,
    nvars: usize,
    diagonal_entries: &[(&str, &str)],
    include_delta: bool,
) -> Result<GroupSpec, CoreError> {
    let mut gens = Vec::new();
    if include_delta {
        gens.push(("delta".to_string(), delta2(field, nvars)));
    }
    for (name, entry) in diagonal_entries {
        let one = RationalFunction::one(field, nvars);
        let zero = RationalFunction::zero(field, nvars);
        let e = RationalFunction::parse(entry, field, nvars)?;
        let m = UTMatrix::from_entries(2, vec![one, zero.clone(), zero, e])?;
        gens.push((name.to_string(), m));
    }
    GroupSpec::new(field, nvars, 2, gens)
}

/// The 2x2 elementary unipotent with upper-right entry 1.
pub fn delta2(field: CoefficientField, nvars: usize) -> UTMatrix {
    let one = RationalFunction::one(field, nvars);
    let zero = RationalFunction::zero(field, nvars);
    UTMatrix::from_entries(2, vec![one.clone(), one.clone(), zero, one]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> CoefficientField {
        CoefficientField::PrimeField(2)
    }

    fn q() -> CoefficientField {
        CoefficientField::Rationals
    }

    #[test]
    fn lamp_of_order_two() {
        let d = delta2(f2(), 1);
        assert!(d.mul(&d).unwrap().is_identity());
    }

    #[test]
    fn diagonal_generators_commute() {
        let spec = two_by_two(q(), 2, &[("M_X", "X"), ("M_Y", "Y")], true).unwrap();
        let x = spec.generator("M_X").unwrap();
        let y = spec.generator("M_Y").unwrap();
        assert_eq!(x.mul(y).unwrap(), y.mul(x).unwrap());
    }

    #[test]
    fn conjugation_acts_by_phi() {
        // Conjugating delta by diag(1,X) multiplies the upper-right entry by
        // phi = g11/g22 = 1/X.
        let spec = two_by_two(q(), 1, &[("M_X", "X")], true).unwrap();
        let m = spec.generator("M_X").unwrap();
        let d = spec.generator("delta").unwrap();
        let conj = m.mul(d).unwrap().mul(&m.inv().unwrap()).unwrap();
        let expected = RationalFunction::parse("X^-1", q(), 1).unwrap();
        assert!(conj.at(0, 1).eq_exact(&expected));
        assert!(conj.is_unipotent());
        let other = m.inv().unwrap().mul(d).unwrap().mul(m).unwrap();
        assert!(other
            .at(0, 1)
            .eq_exact(&RationalFunction::parse("X", q(), 1).unwrap()));
    }

    #[test]
    fn inverse_of_delta() {
        let d = delta2(q(), 1);
        let di = d.inv().unwrap();
        assert!(d.mul(&di).unwrap().is_identity());
        let minus_one = RationalFunction::constant(q(), 1, -1);
        assert!(di.at(0, 1).eq_exact(&minus_one));
    }

    #[test]
    fn eval_word_examples() {
        let spec = two_by_two(q(), 1, &[("M_X", "X")], true).unwrap();
        assert!(spec.eval_word(&[]).unwrap().is_identity());
        let w = parse_word(&["M_X".into(), "~M_X".into()]);
        assert!(spec.eval_word(&w).unwrap().is_identity());
        assert!(matches!(
            spec.eval_word(&[Letter::parse("nope")]),
            Err(CoreError::UnknownGenerator(_))
        ));
    }

    #[test]
    fn baumslag_solitar_relation() {
        // M_2^-1 delta M_2 = delta^2
        let spec = two_by_two(q(), 1, &[("M_2", "2")], true).unwrap();
        let lhs = spec
            .eval_word(&parse_word(&["~M_2".into(), "delta".into(), "M_2".into()]))
            .unwrap();
        let rhs = spec
            .eval_word(&parse_word(&["delta".into(), "delta".into()]))
            .unwrap();
        assert_eq!(lhs, rhs);
        assert!(lhs
            .at(0, 1)
            .eq_exact(&RationalFunction::constant(q(), 1, 2)));
    }

    #[test]
    fn factorization_diag_times_unipotent() {
        let spec = two_by_two(q(), 1, &[("M_X", "X")], true).unwrap();
        let a = spec
            .eval_word(&parse_word(&["M_X".into(), "delta".into()]))
            .unwrap();
        let (diag, unip) = a.ut_part_and_diag().unwrap();
        assert!(unip.is_unipotent());
        // rebuild diag * unip and compare entrywise
        for i in 0..2 {
            for j in i..2 {
                let v = if i == j {
                    diag[i].clone()
                } else {
                    diag[i].mul(unip.at(i, j)).unwrap()
                };
                assert!(v.eq_exact(a.at(i, j)));
            }
        }
        let (d2, u2) = UTMatrix::identity(q(), 1, 2).ut_part_and_diag().unwrap();
        assert!(d2.iter().all(|x| x.is_one()));
        assert!(u2.is_identity());
    }

    #[test]
    fn json_roundtrip() {
        let spec = two_by_two(q(), 2, &[("M_X", "X"), ("M_Y", "(Y+1)/Y")], true).unwrap();
        let j = spec.to_json();
        let text = serde_json::to_string(&j).unwrap();
        let back: GroupSpecJson = serde_json::from_str(&text).unwrap();
        let spec2 = GroupSpec::from_json(&back).unwrap();
        assert_eq!(spec.to_json(), spec2.to_json());
    }
}
