//! Exact algebra and random-walk statistics for finitely generated groups of
//! upper-triangular matrices over rational function fields.
//!
//! The crate is organized around a pipeline:
//!
//! 1. [`poly`] / [`ratfun`] — sparse Laurent polynomials over `F_p` or `Q`,
//!    fractions thereof, and randomized identity testing ([`fingerprint`]).
//! 2. [`matrix`] / [`measure`] — upper-triangular matrices, group
//!    presentations as generator lists, step measures on words.
//! 3. [`blocks`] — the 2x2 block decomposition of a triangular group and
//!    validity witnesses found by breadth-first word search.
//! 4. [`moduledim`] — the dimension of a block's coefficient module via span
//!    growth over balls, transcendence-degree and quotient shortcuts.
//! 5. [`classify`] — boundary verdicts with moment-class qualifiers.
//! 6. [`walk`] — seeded Monte Carlo: range, generalized range, drift,
//!    cautiousness, return frequencies and delta-rank statistics, with an
//!    exact convolution oracle in [`convolve`] and the staged recurrent
//!    measure construction in [`stages`].
//!
//! All randomness flows from explicit 64-bit seeds; identical inputs produce
//! bit-identical outputs independently of thread count.

pub mod blocks;
pub mod catalog;
pub mod classify;
pub mod convolve;
pub mod error;
pub mod field;
pub mod fingerprint;
pub mod fp;
pub mod matrix;
pub mod measure;
pub mod moduledim;
pub mod order;
pub mod parallel;
pub mod pipeline;
pub mod poly;
pub mod ratfun;
pub mod rng;
pub mod stages;
pub mod walk;

pub use error::CoreError;
pub use field::CoefficientField;
pub use fingerprint::FingerprintCtx;
pub use matrix::{GroupSpec, UTMatrix};
pub use measure::StepMeasure;
pub use order::TOrder;
pub use poly::LaurentPoly;
pub use ratfun::RationalFunction;
