//! Rational functions as unreduced fractions of Laurent polynomials.
//!
//! There is deliberately no multivariate gcd here: fractions stay unreduced
//! apart from cheap monomial/content cancellation, equality goes through
//! cross-multiplication (exact) or fingerprint evaluation (randomized).

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::CoreError;
use crate::field::CoefficientField;
use crate::fingerprint::FingerprintCtx;
use crate::fp;
use crate::poly::{parse_ratfun, LaurentPoly};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RationalFunction {
    pub num: LaurentPoly,
    pub den: LaurentPoly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RfOp {
    Add,
    Mul,
    InvOfA,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqMode {
    Randomized,
    Exact,
}

impl RationalFunction {
    pub fn new(num: LaurentPoly, den: LaurentPoly) -> Result<Self, CoreError> {
        if den.is_zero() {
            return Err(CoreError::DivisionByZero("rational function denominator"));
        }
        Ok(RationalFunction { num, den }.normalized())
    }

    pub fn from_poly(num: LaurentPoly) -> Self {
        let den = LaurentPoly::one(num.field, num.nvars);
        RationalFunction { num, den }
    }

    pub fn zero(field: CoefficientField, nvars: usize) -> Self {
        Self::from_poly(LaurentPoly::zero(field, nvars))
    }

    pub fn one(field: CoefficientField, nvars: usize) -> Self {
        Self::from_poly(LaurentPoly::one(field, nvars))
    }

    pub fn constant(field: CoefficientField, nvars: usize, v: i64) -> Self {
        Self::from_poly(LaurentPoly::constant(field, nvars, v))
    }

    pub fn parse(s: &str, field: CoefficientField, nvars: usize) -> Result<Self, CoreError> {
        let (num, den) = parse_ratfun(s, field, nvars)?;
        Self::new(num, den)
    }

    pub fn field(&self) -> CoefficientField {
        self.num.field
    }

    pub fn nvars(&self) -> usize {
        self.num.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.eq_exact(&Self::one(self.field(), self.nvars()))
    }

    pub fn term_count(&self) -> usize {
        self.num.term_count() + self.den.term_count()
    }

    /// Cheap normalization without gcd: cancel the denominator when it is a
    /// single monomial (a Laurent unit), otherwise shift the denominator's
    /// per-variable minimum exponents to zero and make its first stored
    /// coefficient 1. Canonical whenever the denominator is a unit.
    pub fn normalized(&self) -> Self {
        if self.num.is_zero() {
            return Self::zero(self.field(), self.nvars());
        }
        let field = self.field();
        if let Some((e, c)) = self.den.as_monomial() {
            let shift: Vec<i32> = e.iter().map(|x| -x).collect();
            let cinv = c.inv(&field).expect("stored coefficients are nonzero");
            let num = self.num.shift(&shift).scale(&cinv);
            return RationalFunction {
                den: LaurentPoly::one(num.field, num.nvars),
                num,
            };
        }
        let mut shift = vec![i32::MAX; self.nvars()];
        for e in self.den.terms.keys() {
            for (s, x) in shift.iter_mut().zip(e) {
                *s = (*s).min(*x);
            }
        }
        let shift: Vec<i32> = shift.iter().map(|x| -x).collect();
        let den = self.den.shift(&shift);
        let num = self.num.shift(&shift);
        let lead = den.terms.values().next().unwrap().clone();
        let linv = lead.inv(&field).expect("stored coefficients are nonzero");
        RationalFunction {
            num: num.scale(&linv),
            den: den.scale(&linv),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, CoreError> {
        let num = self
            .num
            .mul(&other.den)?
            .add(&other.num.mul(&self.den)?)?;
        let den = self.den.mul(&other.den)?;
        Self::new(num, den)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, CoreError> {
        let num = self
            .num
            .mul(&other.den)?
            .sub(&other.num.mul(&self.den)?)?;
        let den = self.den.mul(&other.den)?;
        Self::new(num, den)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, CoreError> {
        Self::new(self.num.mul(&other.num)?, self.den.mul(&other.den)?)
    }

    pub fn inv(&self) -> Result<Self, CoreError> {
        if self.num.is_zero() {
            return Err(CoreError::DivisionByZero("inverse of zero"));
        }
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn neg(&self) -> Self {
        RationalFunction {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    /// Cross-multiplied exact equality; no gcd needed.
    pub fn eq_exact(&self, other: &Self) -> bool {
        match self.num.mul(&other.den) {
            Ok(l) => match other.num.mul(&self.den) {
                Ok(r) => l == r,
                Err(_) => false,
            },
            Err(_) => false,
        }
    }

    /// Evaluate at a fingerprint point; `None` marks a pole of the stored
    /// representation (vanishing denominator or a negative power at zero).
    pub fn eval_fq(&self, point: &[u64]) -> Option<u64> {
        let d = self.den.eval_fq(point)?;
        if d == 0 {
            return None;
        }
        let n = self.num.eval_fq(point)?;
        Some(fp::mul(n, fp::inv(d)))
    }

    /// Formal partial derivative (quotient rule), for the Jacobian criterion.
    pub fn derivative(&self, axis: usize) -> Result<Self, CoreError> {
        let num = self
            .num
            .derivative(axis)
            .mul(&self.den)?
            .sub(&self.num.mul(&self.den.derivative(axis))?)?;
        let den = self.den.mul(&self.den)?;
        Self::new(num, den)
    }

    /// Randomized or exact equality. Randomized mode evaluates the
    /// cross-products at at least `ctx.min_points` non-pole points; over a
    /// prime coefficient field it falls back to the exact comparison because
    /// integer-lift evaluation is not a ring homomorphism mod p.
    pub fn rf_equal(&self, other: &Self, mode: EqMode, ctx: &FingerprintCtx) -> Result<bool, CoreError> {
        self.field().same(&other.field())?;
        if self.nvars() != other.nvars() {
            return Err(CoreError::ArityMismatch(self.nvars(), other.nvars()));
        }
        match (mode, self.field()) {
            (EqMode::Exact, _) | (_, CoefficientField::PrimeField(_)) => Ok(self.eq_exact(other)),
            (EqMode::Randomized, CoefficientField::Rationals) => {
                let mut usable = 0usize;
                for i in 0..ctx.max_points {
                    let point = ctx.point(i);
                    let l = self
                        .num
                        .eval_fq(&point)
                        .zip(other.den.eval_fq(&point))
                        .map(|(a, b)| fp::mul(a, b));
                    let r = other
                        .num
                        .eval_fq(&point)
                        .zip(self.den.eval_fq(&point))
                        .map(|(a, b)| fp::mul(a, b));
                    // Skip points where either stored denominator vanishes.
                    let dl = self.den.eval_fq(&point);
                    let dr = other.den.eval_fq(&point);
                    if dl == Some(0) || dr == Some(0) || dl.is_none() || dr.is_none() {
                        continue;
                    }
                    match (l, r) {
                        (Some(a), Some(b)) => {
                            if a != b {
                                return Ok(false);
                            }
                            usable += 1;
                            if usable >= ctx.min_points {
                                return Ok(true);
                            }
                        }
                        _ => continue,
                    }
                }
                Err(CoreError::AllPointsPoles(ctx.max_points))
            }
        }
    }
}

/// Dispatcher for the three-way arithmetic entry point.
pub fn rf_arith(a: &RationalFunction, b: &RationalFunction, op: RfOp) -> Result<RationalFunction, CoreError> {
    match op {
        RfOp::Add => a.add(b),
        RfOp::Mul => a.mul(b),
        RfOp::InvOfA => a.inv(),
    }
}

impl PartialEq for RationalFunction {
    fn eq(&self, other: &Self) -> bool {
        self.eq_exact(other)
    }
}

impl Eq for RationalFunction {}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({})/({})", self.num, self.den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> CoefficientField {
        CoefficientField::Rationals
    }

    fn rf(s: &str) -> RationalFunction {
        RationalFunction::parse(s, q(), 1).unwrap()
    }

    #[test]
    fn inverse_cancels() {
        let a = rf("1/(X+1)");
        let b = rf("X+1");
        assert!(a.mul(&b).unwrap().is_one());
    }

    #[test]
    fn sum_over_common_denominator() {
        let s = rf("X").add(&rf("1/X")).unwrap();
        assert!(s.eq_exact(&rf("(X^2+1)/X")));
    }

    #[test]
    fn rational_inverse() {
        let a = RationalFunction::parse("2/3", q(), 1).unwrap();
        assert!(a.inv().unwrap().eq_exact(&RationalFunction::parse("3/2", q(), 1).unwrap()));
        assert!(RationalFunction::zero(q(), 1).inv().is_err());
    }

    #[test]
    fn telescoping_equality() {
        let a = rf("(X^2-1)/(X-1)");
        let b = rf("X+1");
        assert!(a.eq_exact(&b));
        assert!(!rf("X").eq_exact(&rf("X+1")));
        let ctx = FingerprintCtx::new(7, 1);
        assert!(a.rf_equal(&b, EqMode::Randomized, &ctx).unwrap());
        assert!(!rf("X").rf_equal(&rf("X+1"), EqMode::Randomized, &ctx).unwrap());
    }

    #[test]
    fn monomial_denominator_normalizes_away() {
        let a = RationalFunction::new(
            LaurentPoly::one(q(), 1),
            RationalFunction::parse("X^2", q(), 1).unwrap().num,
        )
        .unwrap();
        assert!(a.den.is_one());
        assert!(a.eq_exact(&rf("X^-2")));
    }
}
