//! Step measures: probability measures on words in the generators, with an
//! explicit lazification mass on the identity. Atoms are words rather than
//! single generators so convolution powers and exit measures are expressible
//! directly.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matrix::{encode_word, parse_word, GroupSpec, Word};

#[derive(Clone, Debug)]
pub struct StepMeasure {
    pub atoms: Vec<(Word, f64)>,
    pub lazification: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepMeasureJson {
    pub atoms: Vec<AtomJson>,
    #[serde(default)]
    pub lazification: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AtomJson {
    pub word: Vec<String>,
    pub p: f64,
}

impl StepMeasure {
    pub fn new(atoms: Vec<(Word, f64)>, lazification: f64) -> Result<Self, CoreError> {
        if atoms.iter().any(|(_, p)| *p <= 0.0) || lazification < 0.0 {
            return Err(CoreError::InvalidMeasure(
                "atom weights must be positive".into(),
            ));
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum::<f64>() + lazification;
        if (total - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(StepMeasure {
            atoms,
            lazification,
        })
    }

    /// Uniform measure on each generator and its inverse.
    pub fn uniform_symmetric(spec: &GroupSpec) -> Self {
        let letters = spec.alphabet();
        let p = 1.0 / letters.len() as f64;
        StepMeasure {
            atoms: letters.into_iter().map(|l| (vec![l], p)).collect(),
            lazification: 0.0,
        }
    }

    /// Lazy walk: mass 1/2 on the identity, the rest uniform on generators
    /// and inverses.
    pub fn lazy_uniform(spec: &GroupSpec) -> Self {
        let letters = spec.alphabet();
        let p = 0.5 / letters.len() as f64;
        StepMeasure {
            atoms: letters.into_iter().map(|l| (vec![l], p)).collect(),
            lazification: 0.5,
        }
    }

    /// Check that every atom evaluates in the group.
    pub fn validate(&self, spec: &GroupSpec) -> Result<(), CoreError> {
        for (word, _) in &self.atoms {
            spec.eval_word(word)?;
        }
        Ok(())
    }

    /// Cumulative weights for sampling: `sample_index(u)` maps a uniform
    /// `u in [0,1)` to `None` (lazy step) or an atom index.
    pub fn sample_index(&self, u: f64) -> Option<usize> {
        let mut acc = self.lazification;
        if u < acc {
            return None;
        }
        for (idx, (_, p)) in self.atoms.iter().enumerate() {
            acc += p;
            if u < acc {
                return Some(idx);
            }
        }
        // Guard against accumulated floating error on the last atom.
        if self.atoms.is_empty() {
            None
        } else {
            Some(self.atoms.len() - 1)
        }
    }

    /// Is the measure symmetric as a measure on words: for every atom the
    /// reversed-inverted word appears with the same weight.
    pub fn is_symmetric_on_words(&self) -> bool {
        self.atoms.iter().all(|(w, p)| {
            let inv = crate::matrix::invert_word(w);
            self.atoms
                .iter()
                .any(|(w2, p2)| *w2 == inv && (p2 - p).abs() < 1e-12)
        })
    }

    pub fn to_json(&self) -> StepMeasureJson {
        StepMeasureJson {
            atoms: self
                .atoms
                .iter()
                .map(|(w, p)| AtomJson {
                    word: encode_word(w),
                    p: *p,
                })
                .collect(),
            lazification: self.lazification,
        }
    }

    pub fn from_json(j: &StepMeasureJson) -> Result<Self, CoreError> {
        Self::new(
            j.atoms
                .iter()
                .map(|a| (parse_word(&a.word), a.p))
                .collect(),
            j.lazification,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CoefficientField;
    use crate::matrix::two_by_two;

    #[test]
    fn uniform_and_lazy_shapes() {
        let spec = two_by_two(
            CoefficientField::PrimeField(2),
            2,
            &[("M_X1", "X"), ("M_X2", "Y")],
            true,
        )
        .unwrap();
        let u = StepMeasure::uniform_symmetric(&spec);
        assert_eq!(u.atoms.len(), 6);
        assert!(u.is_symmetric_on_words());
        let l = StepMeasure::lazy_uniform(&spec);
        assert_eq!(l.lazification, 0.5);
        let total: f64 = l.atoms.iter().map(|(_, p)| p).sum::<f64>() + l.lazification;
        assert!((total - 1.0).abs() < 1e-12);
        u.validate(&spec).unwrap();
    }

    #[test]
    fn sampling_covers_all_atoms() {
        let spec = two_by_two(CoefficientField::PrimeField(2), 1, &[("M_X", "X")], true).unwrap();
        let m = StepMeasure::lazy_uniform(&spec);
        assert_eq!(m.sample_index(0.0), None);
        assert_eq!(m.sample_index(0.49), None);
        assert!(m.sample_index(0.51).is_some());
        assert_eq!(m.sample_index(0.999999), Some(m.atoms.len() - 1));
    }

    #[test]
    fn json_roundtrip_with_inverse_marks() {
        let spec = two_by_two(CoefficientField::Rationals, 1, &[("M_X", "X")], true).unwrap();
        let m = StepMeasure::new(
            vec![
                (parse_word(&["M_X".into(), "~delta".into()]), 0.5),
                (parse_word(&["~M_X".into()]), 0.5),
            ],
            0.0,
        )
        .unwrap();
        m.validate(&spec).unwrap();
        let j = m.to_json();
        let text = serde_json::to_string(&j).unwrap();
        let back = StepMeasure::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.to_json(), j);
    }

    #[test]
    fn bad_measures_rejected() {
        assert!(StepMeasure::new(vec![(vec![], 0.5)], 0.0).is_err()); // sums to 0.5
        assert!(StepMeasure::new(vec![(vec![], -0.5), (vec![], 1.5)], 0.0).is_err());
    }
}
