//! Coefficient fields: `F_p` for a machine-word prime `p`, or `Q` with
//! arbitrary-precision rationals.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::CoreError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoefficientField {
    PrimeField(u64),
    Rationals,
}

impl CoefficientField {
    /// Build from a characteristic as it appears in the JSON schema
    /// (`"char": 0` means `Q`).
    pub fn from_char(c: u64) -> Result<Self, CoreError> {
        if c == 0 {
            Ok(CoefficientField::Rationals)
        } else if is_prime_u64(c) {
            Ok(CoefficientField::PrimeField(c))
        } else {
            Err(CoreError::InvalidParameter(format!(
                "characteristic {c} is not prime"
            )))
        }
    }

    pub fn characteristic(&self) -> u64 {
        match self {
            CoefficientField::PrimeField(p) => *p,
            CoefficientField::Rationals => 0,
        }
    }

    pub fn same(&self, other: &Self) -> Result<(), CoreError> {
        if self == other {
            Ok(())
        } else {
            Err(CoreError::FieldMismatch(self.to_string(), other.to_string()))
        }
    }
}

impl fmt::Display for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::PrimeField(p) => write!(f, "F_{p}"),
            CoefficientField::Rationals => write!(f, "Q"),
        }
    }
}

/// Deterministic Miller-Rabin, exact for all u64.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = ((x as u128 * x as u128) % n as u128) as u64;
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mod_pow(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = ((acc as u128 * b as u128) % m as u128) as u64;
        }
        b = ((b as u128 * b as u128) % m as u128) as u64;
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality() {
        assert!(is_prime_u64(2));
        assert!(is_prime_u64(3));
        assert!(!is_prime_u64(1));
        assert!(!is_prime_u64(4));
        assert!(is_prime_u64((1u64 << 62) - 57));
        assert!(!is_prime_u64(1_000_000_000));
    }

    #[test]
    fn char_roundtrip() {
        assert_eq!(
            CoefficientField::from_char(0).unwrap(),
            CoefficientField::Rationals
        );
        assert_eq!(
            CoefficientField::from_char(5).unwrap(),
            CoefficientField::PrimeField(5)
        );
        assert!(CoefficientField::from_char(6).is_err());
    }
}
