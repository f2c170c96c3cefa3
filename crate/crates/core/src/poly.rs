//! Sparse multivariate Laurent polynomials with exact coefficients over `F_p`
//! or `Q`, plus the two structural procedures the dimension machinery needs:
//! a basis change separating a finite exponent set along one coordinate
//! ([`new_basis`]) and bounded-remainder long division along an axis
//! ([`LaurentPoly::star_divide`]).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::CoreError;
use crate::field::CoefficientField;
use crate::fp;

/// Exponent vector; negative entries are Laurent exponents.
pub type Expo = Vec<i32>;

/// A coefficient in the active field. `Fp` values are always reduced mod `p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coef {
    Fp(u64),
    Rat(BigRational),
}

impl Coef {
    pub fn is_zero(&self) -> bool {
        match self {
            Coef::Fp(v) => *v == 0,
            Coef::Rat(r) => r.is_zero(),
        }
    }

    fn add(&self, other: &Coef, field: &CoefficientField) -> Coef {
        match (self, other, field) {
            (Coef::Fp(a), Coef::Fp(b), CoefficientField::PrimeField(p)) => Coef::Fp((a + b) % p),
            (Coef::Rat(a), Coef::Rat(b), _) => Coef::Rat(a + b),
            _ => unreachable!("mixed coefficient kinds"),
        }
    }

    fn mul(&self, other: &Coef, field: &CoefficientField) -> Coef {
        match (self, other, field) {
            (Coef::Fp(a), Coef::Fp(b), CoefficientField::PrimeField(p)) => {
                Coef::Fp(((*a as u128 * *b as u128) % *p as u128) as u64)
            }
            (Coef::Rat(a), Coef::Rat(b), _) => Coef::Rat(a * b),
            _ => unreachable!("mixed coefficient kinds"),
        }
    }

    fn neg(&self, field: &CoefficientField) -> Coef {
        match (self, field) {
            (Coef::Fp(a), CoefficientField::PrimeField(p)) => {
                Coef::Fp(if *a == 0 { 0 } else { p - a })
            }
            (Coef::Rat(a), _) => Coef::Rat(-a),
            _ => unreachable!("mixed coefficient kinds"),
        }
    }

    pub fn inv(&self, field: &CoefficientField) -> Result<Coef, CoreError> {
        if self.is_zero() {
            return Err(CoreError::DivisionByZero("coefficient"));
        }
        Ok(match (self, field) {
            (Coef::Fp(a), CoefficientField::PrimeField(p)) => Coef::Fp(mod_inv(*a, *p)),
            (Coef::Rat(a), _) => Coef::Rat(a.recip()),
            _ => unreachable!("mixed coefficient kinds"),
        })
    }

    /// Image in the fingerprint field `F_q`. For `F_p` coefficients this is
    /// the canonical lift of the reduced representative, which makes the map
    /// injective on canonical forms (the property dedup keys rely on).
    pub fn to_fq(&self) -> u64 {
        match self {
            Coef::Fp(v) => v % fp::Q,
            Coef::Rat(r) => {
                let num = bigint_mod_q(r.numer());
                let den = bigint_mod_q(r.denom());
                fp::mul(num, fp::inv(den))
            }
        }
    }
}

fn bigint_mod_q(v: &BigInt) -> u64 {
    let q = BigInt::from(fp::Q);
    let m = ((v % &q) + &q) % &q;
    let (_, digits) = m.to_u64_digits();
    *digits.first().unwrap_or(&0)
}

fn mod_inv(a: u64, p: u64) -> u64 {
    // Fermat: p is prime.
    let mut acc = 1u64;
    let mut b = a % p;
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            acc = ((acc as u128 * b as u128) % p as u128) as u64;
        }
        b = ((b as u128 * b as u128) % p as u128) as u64;
        e >>= 1;
    }
    acc
}

/// Modular inverse mod a prime, shared with the rank and walk machinery.
pub fn mod_inv_pub(a: u64, p: u64) -> u64 {
    mod_inv(a, p)
}

/// Sparse Laurent polynomial. Stored zero coefficients are pruned eagerly;
/// the zero polynomial has an empty term map. Serializes as a canonical term
/// list sorted by exponent vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LaurentPolyJson", into = "LaurentPolyJson")]
pub struct LaurentPoly {
    pub field: CoefficientField,
    pub nvars: usize,
    pub terms: BTreeMap<Expo, Coef>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaurentPolyJson {
    pub field: CoefficientField,
    pub nvars: usize,
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub e: Expo,
    pub c: String,
}

impl From<LaurentPoly> for LaurentPolyJson {
    fn from(p: LaurentPoly) -> Self {
        LaurentPolyJson {
            field: p.field,
            nvars: p.nvars,
            terms: p
                .terms
                .into_iter()
                .map(|(e, c)| TermJson {
                    e,
                    c: match c {
                        Coef::Fp(v) => v.to_string(),
                        Coef::Rat(r) => r.to_string(),
                    },
                })
                .collect(),
        }
    }
}

impl TryFrom<LaurentPolyJson> for LaurentPoly {
    type Error = String;

    fn try_from(j: LaurentPolyJson) -> Result<Self, String> {
        let mut terms = BTreeMap::new();
        for t in j.terms {
            if t.e.len() != j.nvars {
                return Err(format!(
                    "exponent vector length {} does not match nvars {}",
                    t.e.len(),
                    j.nvars
                ));
            }
            let coef = match j.field {
                CoefficientField::PrimeField(p) => {
                    let v: u64 = t.c.parse().map_err(|_| format!("bad coefficient {}", t.c))?;
                    Coef::Fp(v % p)
                }
                CoefficientField::Rationals => {
                    let r: BigRational =
                        t.c.parse()
                            .map_err(|_| format!("bad coefficient {}", t.c))?;
                    Coef::Rat(r)
                }
            };
            if coef.is_zero() {
                return Err(format!("stored zero coefficient at {:?}", t.e));
            }
            if terms.insert(t.e.clone(), coef).is_some() {
                return Err(format!("duplicate exponent vector {:?}", t.e));
            }
        }
        Ok(LaurentPoly {
            field: j.field,
            nvars: j.nvars,
            terms,
        })
    }
}

impl LaurentPoly {
    pub fn zero(field: CoefficientField, nvars: usize) -> Self {
        LaurentPoly {
            field,
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(field: CoefficientField, nvars: usize, value: i64) -> Self {
        let coef = Self::coef_from_i64(&field, value);
        let mut poly = Self::zero(field, nvars);
        if !coef.is_zero() {
            poly.terms.insert(vec![0; nvars], coef);
        }
        poly
    }

    pub fn one(field: CoefficientField, nvars: usize) -> Self {
        Self::constant(field, nvars, 1)
    }

    pub fn coef_from_i64(field: &CoefficientField, value: i64) -> Coef {
        match field {
            CoefficientField::PrimeField(p) => {
                Coef::Fp(value.rem_euclid(*p as i64) as u64)
            }
            CoefficientField::Rationals => Coef::Rat(BigRational::from(BigInt::from(value))),
        }
    }

    pub fn monomial(field: CoefficientField, nvars: usize, expo: Expo, coef: Coef) -> Self {
        assert_eq!(expo.len(), nvars);
        let mut poly = Self::zero(field, nvars);
        if !coef.is_zero() {
            poly.terms.insert(expo, coef);
        }
        poly
    }

    /// The variable `X_{index}` (0-based).
    pub fn variable(field: CoefficientField, nvars: usize, index: usize) -> Self {
        let mut e = vec![0; nvars];
        e[index] = 1;
        let one = Self::coef_from_i64(&field, 1);
        Self::monomial(field, nvars, e, one)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self
                .terms
                .get(&vec![0; self.nvars])
                .map(|c| *c == Self::coef_from_i64(&self.field, 1))
                .unwrap_or(false)
    }

    /// Single term `c * X^e`? Returns it if so.
    pub fn as_monomial(&self) -> Option<(&Expo, &Coef)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Total degree bound `max |e|_1`, used for Schwartz-Zippel estimates.
    pub fn total_degree(&self) -> u64 {
        self.terms
            .keys()
            .map(|e| e.iter().map(|x| x.unsigned_abs() as u64).sum())
            .max()
            .unwrap_or(0)
    }

    fn compat(&self, other: &Self) -> Result<(), CoreError> {
        self.field.same(&other.field)?;
        if self.nvars != other.nvars {
            return Err(CoreError::ArityMismatch(self.nvars, other.nvars));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, CoreError> {
        self.compat(other)?;
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            match terms.get_mut(e) {
                Some(existing) => {
                    let sum = existing.add(c, &self.field);
                    if sum.is_zero() {
                        terms.remove(e);
                    } else {
                        *existing = sum;
                    }
                }
                None => {
                    terms.insert(e.clone(), c.clone());
                }
            }
        }
        Ok(LaurentPoly {
            field: self.field,
            nvars: self.nvars,
            terms,
        })
    }

    pub fn neg(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| (e.clone(), c.neg(&self.field)))
            .collect();
        LaurentPoly {
            field: self.field,
            nvars: self.nvars,
            terms,
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self, CoreError> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Result<Self, CoreError> {
        self.compat(other)?;
        let mut terms: BTreeMap<Expo, Coef> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Expo = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                let c = ca.mul(cb, &self.field);
                match terms.get_mut(&e) {
                    Some(existing) => {
                        let sum = existing.add(&c, &self.field);
                        if sum.is_zero() {
                            terms.remove(&e);
                        } else {
                            *existing = sum;
                        }
                    }
                    None => {
                        if !c.is_zero() {
                            terms.insert(e, c);
                        }
                    }
                }
            }
        }
        Ok(LaurentPoly {
            field: self.field,
            nvars: self.nvars,
            terms,
        })
    }

    pub fn scale(&self, c: &Coef) -> Self {
        if c.is_zero() {
            return Self::zero(self.field, self.nvars);
        }
        let terms = self
            .terms
            .iter()
            .map(|(e, v)| (e.clone(), v.mul(c, &self.field)))
            .collect();
        LaurentPoly {
            field: self.field,
            nvars: self.nvars,
            terms,
        }
    }

    /// Multiply by the monomial `X^shift` (a Laurent unit).
    pub fn shift(&self, shift: &[i32]) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                (
                    e.iter().zip(shift).map(|(x, s)| x + s).collect(),
                    c.clone(),
                )
            })
            .collect();
        LaurentPoly {
            field: self.field,
            nvars: self.nvars,
            terms,
        }
    }

    /// Formal partial derivative with respect to variable `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = Self::zero(self.field, self.nvars);
        for (e, c) in &self.terms {
            let k = e[axis];
            if k == 0 {
                continue;
            }
            let factor = Self::coef_from_i64(&self.field, k as i64);
            let c2 = c.mul(&factor, &self.field);
            if c2.is_zero() {
                continue;
            }
            let mut e2 = e.clone();
            e2[axis] -= 1;
            out.terms.insert(e2, c2);
        }
        out
    }

    /// Evaluate at a point of `F_q^d` (coefficients mapped via [`Coef::to_fq`]).
    /// For negative exponents the coordinate must be nonzero; returns `None`
    /// (pole) otherwise.
    pub fn eval_fq(&self, point: &[u64]) -> Option<u64> {
        debug_assert_eq!(point.len(), self.nvars);
        let mut acc = 0u64;
        for (e, c) in &self.terms {
            let mut t = c.to_fq();
            for (x, k) in point.iter().zip(e) {
                if *x == 0 && *k < 0 {
                    return None;
                }
                if *k != 0 {
                    t = fp::mul(t, fp::pow_i(*x, *k as i64));
                }
            }
            acc = fp::add(acc, t);
        }
        Some(acc)
    }

    /// Apply a unimodular change of exponent basis: `X^e -> C^(A e)`.
    pub fn change_basis(&self, a: &[Vec<i64>]) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let ne: Expo = a
                    .iter()
                    .map(|row| {
                        row.iter()
                            .zip(e)
                            .map(|(m, x)| m * *x as i64)
                            .sum::<i64>() as i32
                    })
                    .collect();
                (ne, c.clone())
            })
            .collect();
        LaurentPoly {
            field: self.field,
            nvars: self.nvars,
            terms,
        }
    }

    fn axis_range(&self, axis: usize) -> Option<(i32, i32)> {
        let mut lo = i32::MAX;
        let mut hi = i32::MIN;
        for e in self.terms.keys() {
            lo = lo.min(e[axis]);
            hi = hi.max(e[axis]);
        }
        if self.terms.is_empty() {
            None
        } else {
            Some((lo, hi))
        }
    }

    /// Check the star condition on `axis`: a unique monomial attains the
    /// maximal axis exponent and a unique monomial attains the minimal one.
    pub fn star_condition(&self, axis: usize) -> Result<(i32, i32), CoreError> {
        let (lo, hi) = self.axis_range(axis).ok_or(CoreError::StarCondition {
            axis,
            reason: "divisor is zero".into(),
        })?;
        let at_hi = self.terms.keys().filter(|e| e[axis] == hi).count();
        let at_lo = self.terms.keys().filter(|e| e[axis] == lo).count();
        if at_hi != 1 {
            return Err(CoreError::StarCondition {
                axis,
                reason: format!("{at_hi} monomials attain the maximal exponent {hi}"),
            });
        }
        if at_lo != 1 {
            return Err(CoreError::StarCondition {
                axis,
                reason: format!("{at_lo} monomials attain the minimal exponent {lo}"),
            });
        }
        Ok((lo, hi))
    }

    /// Bounded-remainder division along one axis: writes `self = v*t + w`
    /// where every monomial of `w` has axis exponent in `[lo, hi)` for the
    /// divisor's axis exponent range `[lo, hi]` (for a single-monomial
    /// divisor, `w = 0`). Requires the star condition on `axis`.
    pub fn star_divide(
        &self,
        v: &Self,
        axis: usize,
    ) -> Result<(LaurentPoly, LaurentPoly), CoreError> {
        self.compat(v)?;
        let (lo, hi) = v.star_condition(axis)?;
        let top = v
            .terms
            .iter()
            .find(|(e, _)| e[axis] == hi)
            .map(|(e, c)| (e.clone(), c.clone()))
            .unwrap();
        let bottom = v
            .terms
            .iter()
            .find(|(e, _)| e[axis] == lo)
            .map(|(e, c)| (e.clone(), c.clone()))
            .unwrap();
        let top_inv = top.1.inv(&self.field)?;
        let bottom_inv = bottom.1.inv(&self.field)?;

        let mut w = self.clone();
        let mut t = Self::zero(self.field, self.nvars);

        if lo == hi {
            // Single monomial: a Laurent unit, exact division.
            for (e, c) in &self.terms {
                let qe: Expo = e.iter().zip(&top.0).map(|(x, y)| x - y).collect();
                let qc = c.mul(&top_inv, &self.field);
                t.terms.insert(qe, qc);
            }
            return Ok((t, Self::zero(self.field, self.nvars)));
        }

        // Phase 1: cancel every monomial with axis exponent >= hi against the
        // unique top term. New terms land strictly below the cancelled one.
        loop {
            let target = w
                .terms
                .iter()
                .filter(|(e, _)| e[axis] >= hi)
                .max_by(|(a, _), (b, _)| a[axis].cmp(&b[axis]).then(a.cmp(b)))
                .map(|(e, c)| (e.clone(), c.clone()));
            let Some((e, c)) = target else { break };
            let qe: Expo = e.iter().zip(&top.0).map(|(x, y)| x - y).collect();
            let qc = c.mul(&top_inv, &self.field);
            let q = Self::monomial(self.field, self.nvars, qe, qc);
            w = w.sub(&q.mul(v)?)?;
            t = t.add(&q)?;
        }

        // Phase 2: push every monomial with axis exponent < lo up against the
        // unique bottom term. New terms stay strictly below hi and strictly
        // above the cancelled exponent, so this terminates.
        loop {
            let target = w
                .terms
                .iter()
                .filter(|(e, _)| e[axis] < lo)
                .min_by(|(a, _), (b, _)| a[axis].cmp(&b[axis]).then(a.cmp(b)))
                .map(|(e, c)| (e.clone(), c.clone()));
            let Some((e, c)) = target else { break };
            let qe: Expo = e.iter().zip(&bottom.0).map(|(x, y)| x - y).collect();
            let qc = c.mul(&bottom_inv, &self.field);
            let q = Self::monomial(self.field, self.nvars, qe, qc);
            w = w.sub(&q.mul(v)?)?;
            t = t.add(&q)?;
        }

        debug_assert!(w
            .terms
            .keys()
            .all(|e| e[axis] >= lo && e[axis] < hi));
        Ok((t, w))
    }
}

/// Dispatcher matching the operation enum used by callers that route through
/// a single arithmetic entry point.
pub fn lp_arith(a: &LaurentPoly, b: &LaurentPoly, op: LpOp) -> Result<LaurentPoly, CoreError> {
    match op {
        LpOp::Add => a.add(b),
        LpOp::Sub => a.sub(b),
        LpOp::Mul => a.mul(b),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpOp {
    Add,
    Sub,
    Mul,
}

/// A basis of `Z^d` (rows of a unimodular integer matrix) on which the first
/// coordinate separates all points of `w`: distinct points of `w` get
/// distinct first coordinates. The transform is
/// `x -> (x_1 - sum_{i>=2} (3S)^(i-1) x_i, x_2, ..., x_d)` for
/// `S = max |coordinate|` over `w`.
pub fn new_basis(w: &[Expo]) -> Vec<Vec<i64>> {
    assert!(!w.is_empty(), "new_basis needs a nonempty point set");
    let d = w[0].len();
    let s = w
        .iter()
        .flat_map(|e| e.iter().map(|x| x.unsigned_abs() as i64))
        .max()
        .unwrap_or(0);
    let mut a = vec![vec![0i64; d]; d];
    let mut pow = 1i64;
    for (i, cell) in a[0].iter_mut().enumerate() {
        if i == 0 {
            *cell = 1;
        } else {
            pow *= 3 * s.max(0);
            *cell = -pow;
        }
    }
    for i in 1..d {
        a[i][i] = 1;
    }
    a
}

/// First coordinate of `x` in the [`new_basis`] coordinates.
pub fn b1_coordinate(a: &[Vec<i64>], x: &Expo) -> i64 {
    a[0].iter().zip(x).map(|(m, v)| m * *v as i64).sum()
}

/// Determinant of a small integer matrix (Laplace expansion, exact over
/// i128), for the unimodularity property checks on [`new_basis`] output.
pub fn det_i64(m: &[Vec<i64>]) -> i64 {
    fn det_rec(a: &[Vec<i128>]) -> i128 {
        let n = a.len();
        if n == 1 {
            return a[0][0];
        }
        let mut acc: i128 = 0;
        for (j, &top) in a[0].iter().enumerate() {
            if top == 0 {
                continue;
            }
            let minor: Vec<Vec<i128>> = a[1..]
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(c, _)| *c != j)
                        .map(|(_, &v)| v)
                        .collect()
                })
                .collect();
            let sign = if j % 2 == 0 { 1 } else { -1 };
            acc += sign * top * det_rec(&minor);
        }
        acc
    }
    let a: Vec<Vec<i128>> = m
        .iter()
        .map(|row| row.iter().map(|&x| x as i128).collect())
        .collect();
    det_rec(&a) as i64
}

// --- parsing -------------------------------------------------------------

/// Parse the polynomial/fraction syntax used in matrix entry strings:
/// integer coefficients, variables `X1..Xd` (aliases `X,Y,Z` for `d <= 3`),
/// `^` powers with negative exponents, `+ - * / ( )`.
/// Returns numerator and denominator.
pub fn parse_ratfun(
    input: &str,
    field: CoefficientField,
    nvars: usize,
) -> Result<(LaurentPoly, LaurentPoly), CoreError> {
    let mut p = Parser {
        tokens: tokenize(input)?,
        pos: 0,
        field,
        nvars,
    };
    let r = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(CoreError::Parse(format!(
            "trailing input at token {}",
            p.pos
        )));
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Var(usize),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(s: &str) -> Result<Vec<(Tok, String)>, CoreError> {
    let mut out = Vec::new();
    let b: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push((Tok::Plus, "+".into()));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, "-".into()));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, "*".into()));
                i += 1;
            }
            '/' => {
                out.push((Tok::Slash, "/".into()));
                i += 1;
            }
            '^' => {
                out.push((Tok::Caret, "^".into()));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, "(".into()));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, ")".into()));
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = b[start..i].iter().collect();
                let v = text
                    .parse::<i64>()
                    .map_err(|_| CoreError::Parse(format!("integer overflow: {text}")))?;
                out.push((Tok::Int(v), text));
            }
            'X' | 'x' | 'Y' | 'y' | 'Z' | 'z' => {
                let start = i;
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = b[start..i].iter().collect();
                let idx = match (c.to_ascii_uppercase(), text.len()) {
                    ('X', 1) => 0,
                    ('Y', 1) => 1,
                    ('Z', 1) => 2,
                    ('X', _) => {
                        let n: usize = text[1..]
                            .parse()
                            .map_err(|_| CoreError::Parse(format!("bad variable {text}")))?;
                        if n == 0 {
                            return Err(CoreError::Parse("variables are 1-based".into()));
                        }
                        n - 1
                    }
                    _ => return Err(CoreError::Parse(format!("bad variable {text}"))),
                };
                out.push((Tok::Var(idx), text));
            }
            _ => return Err(CoreError::Parse(format!("unexpected character '{c}'"))),
        }
    }
    Ok(out)
}

/// Monomial denominators are Laurent units; fold them into the numerator so
/// plain Laurent expressions like `X^-1` parse as polynomials.
fn cancel_monomial_denominator(num: LaurentPoly, den: LaurentPoly) -> (LaurentPoly, LaurentPoly) {
    if den.is_one() {
        return (num, den);
    }
    if let Some((e, c)) = den.as_monomial() {
        let shift: Vec<i32> = e.iter().map(|x| -x).collect();
        if let Ok(cinv) = c.inv(&den.field) {
            let one = LaurentPoly::one(num.field, num.nvars);
            return (num.shift(&shift).scale(&cinv), one);
        }
    }
    (num, den)
}

struct Parser {
    tokens: Vec<(Tok, String)>,
    pos: usize,
    field: CoefficientField,
    nvars: usize,
}

type Frac = (LaurentPoly, LaurentPoly);

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn one(&self) -> LaurentPoly {
        LaurentPoly::one(self.field, self.nvars)
    }

    fn expr(&mut self) -> Result<Frac, CoreError> {
        let mut negate = false;
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.next();
            negate = true;
        } else if matches!(self.peek(), Some(Tok::Plus)) {
            self.next();
        }
        let mut acc = self.term()?;
        if negate {
            acc.0 = acc.0.neg();
        }
        while let Some(t) = self.peek() {
            match t {
                Tok::Plus | Tok::Minus => {
                    let minus = matches!(t, Tok::Minus);
                    self.next();
                    let rhs = self.term()?;
                    let rhs0 = if minus { rhs.0.neg() } else { rhs.0 };
                    // a/b + c/d = (ad + cb) / bd
                    let num = acc.0.mul(&rhs.1)?.add(&rhs0.mul(&acc.1)?)?;
                    let den = acc.1.mul(&rhs.1)?;
                    acc = (num, den);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Frac, CoreError> {
        let mut acc = self.factor()?;
        while let Some(t) = self.peek() {
            match t {
                Tok::Star => {
                    self.next();
                    let rhs = self.factor()?;
                    acc = (acc.0.mul(&rhs.0)?, acc.1.mul(&rhs.1)?);
                }
                Tok::Slash => {
                    self.next();
                    let rhs = self.factor()?;
                    if rhs.0.is_zero() {
                        return Err(CoreError::DivisionByZero("in parsed expression"));
                    }
                    acc =
                        cancel_monomial_denominator(acc.0.mul(&rhs.1)?, acc.1.mul(&rhs.0)?);
                }
                // Implicit multiplication: `2X`, `X Y`, `3(X+1)`.
                Tok::Int(_) | Tok::Var(_) | Tok::LParen => {
                    let rhs = self.factor()?;
                    acc = (acc.0.mul(&rhs.0)?, acc.1.mul(&rhs.1)?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Frac, CoreError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.next();
            let mut sign = 1i64;
            if matches!(self.peek(), Some(Tok::Minus)) {
                self.next();
                sign = -1;
            }
            let Some(Tok::Int(k)) = self.next() else {
                return Err(CoreError::Parse("expected integer exponent after ^".into()));
            };
            let k = sign * k;
            return self.pow_frac(base, k);
        }
        Ok(base)
    }

    fn pow_frac(&self, base: Frac, k: i64) -> Result<Frac, CoreError> {
        let (num, den) = if k >= 0 {
            (base.0, base.1)
        } else {
            if base.0.is_zero() {
                return Err(CoreError::DivisionByZero("zero to a negative power"));
            }
            (base.1, base.0)
        };
        let mut out_num = self.one();
        let mut out_den = self.one();
        for _ in 0..k.unsigned_abs() {
            out_num = out_num.mul(&num)?;
            out_den = out_den.mul(&den)?;
        }
        Ok(cancel_monomial_denominator(out_num, out_den))
    }

    fn atom(&mut self) -> Result<Frac, CoreError> {
        match self.next() {
            Some(Tok::Int(v)) => Ok((
                LaurentPoly::constant(self.field, self.nvars, v),
                self.one(),
            )),
            Some(Tok::Var(idx)) => {
                if idx >= self.nvars {
                    return Err(CoreError::Parse(format!(
                        "variable index {} out of range for {} variables",
                        idx + 1,
                        self.nvars
                    )));
                }
                Ok((
                    LaurentPoly::variable(self.field, self.nvars, idx),
                    self.one(),
                ))
            }
            Some(Tok::Minus) => {
                let inner = self.factor()?;
                Ok((inner.0.neg(), inner.1))
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(CoreError::Parse("missing closing parenthesis".into())),
                }
            }
            other => Err(CoreError::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

// Display is also the serialization used inside matrix entry strings, so it
// must round-trip through `parse_ratfun`.
impl fmt::Display for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            let (sign, mag) = match c {
                Coef::Fp(v) => (false, format!("{v}")),
                Coef::Rat(r) => (r.is_negative(), format!("{}", r.abs())),
            };
            if first {
                if sign {
                    write!(f, "-")?;
                }
                first = false;
            } else if sign {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, k)| **k != 0)
                .map(|(i, k)| {
                    let name = var_name(i, self.nvars);
                    if *k == 1 {
                        name
                    } else {
                        format!("{name}^{k}")
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == "1" {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{mag}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

pub(crate) fn var_name(i: usize, nvars: usize) -> String {
    if nvars <= 3 {
        ["X", "Y", "Z"][i].to_string()
    } else {
        format!("X{}", i + 1)
    }
}
