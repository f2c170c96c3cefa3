//! Session-scoped fingerprint context: deterministic evaluation points over
//! `F_q`, `q = 2^62 - 57 > 2^61`, used for randomized identity testing and
//! as stable hash keys for group elements over `Q`.
//!
//! By Schwartz-Zippel, two distinct rational functions of total degree at
//! most `D` agree at one random point with probability at most `2D/q`;
//! requiring agreement at `min_points` points raises the one-sided error to
//! `(2D/q)^min_points`.

use serde::{Deserialize, Serialize};

use crate::fp;
use crate::poly::LaurentPoly;
use crate::ratfun::RationalFunction;
use crate::rng;

#[derive(Clone, Debug)]
pub struct FingerprintCtx {
    pub seed: u64,
    pub nvars: usize,
    /// Points that must agree before randomized equality returns true.
    pub min_points: usize,
    /// Retry budget when stored representations have poles at sample points.
    pub max_points: usize,
}

/// Evaluations of one rational function at the context's points; `None`
/// marks a pole of the stored representation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub values: Vec<Option<u64>>,
}

impl FingerprintCtx {
    pub fn new(seed: u64, nvars: usize) -> Self {
        FingerprintCtx {
            seed,
            nvars,
            min_points: 3,
            max_points: 64,
        }
    }

    /// The `i`-th evaluation point. Coordinates are nonzero so Laurent
    /// monomials never hit the trivial pole at the origin.
    pub fn point(&self, i: usize) -> Vec<u64> {
        (0..self.nvars)
            .map(|j| {
                1 + rng::derive_indexed(self.seed, "fingerprint-point", (i * self.nvars + j) as u64)
                    % (fp::Q - 1)
            })
            .collect()
    }

    pub fn fingerprint(&self, f: &RationalFunction) -> Fingerprint {
        Fingerprint {
            values: (0..self.min_points)
                .map(|i| f.eval_fq(&self.point(i)))
                .collect(),
        }
    }

    pub fn fingerprint_poly(&self, f: &LaurentPoly) -> Fingerprint {
        Fingerprint {
            values: (0..self.min_points)
                .map(|i| f.eval_fq(&self.point(i)))
                .collect(),
        }
    }

    /// Fold a sequence of evaluations into a 128-bit digest for hash-based
    /// dedup. Stable across runs with the same session seed.
    pub fn digest(values: impl IntoIterator<Item = u64>) -> u128 {
        let mut h1 = 0x9E3779B97F4A7C15u64;
        let mut h2 = 0xC2B2AE3D27D4EB4Fu64;
        for v in values {
            h1 = rng::splitmix64(h1 ^ v);
            h2 = rng::splitmix64(h2 ^ v.rotate_left(32));
        }
        ((h1 as u128) << 64) | h2 as u128
    }
}
