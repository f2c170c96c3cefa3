//! Boundary verdicts from block dimensions, with the moment class under
//! which each verdict's rule applies. Triviality rules are moment-conditional
//! while non-triviality rules are not, so the two are never conflated.

use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::blocks::BlockReport;
use crate::error::CoreError;
use crate::field::CoefficientField;
use crate::matrix::GroupSpec;
use crate::moduledim::{DimensionReport, DimensionValue, WreathCheck};
use crate::order::Pair;
use crate::poly::Coef;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Trivial,
    Nontrivial,
    ConjecturalNontrivial,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentClass {
    /// Applies to every non-degenerate finite entropy step measure.
    AnyFiniteEntropyNondegenerate,
    /// Applies to centered measures with finite second moment.
    CenteredSecondMoment,
    /// Applies to centered measures with finite first moment.
    CenteredFirstMoment,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuleApplication {
    pub pair: Option<Pair>,
    pub dimension: Option<usize>,
    pub rule: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub moment_class: MomentClass,
    pub basis: Vec<RuleApplication>,
    /// Sub-verdicts for individually tested elements, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_element: Option<Vec<(Vec<String>, crate::blocks::ActionVerdict)>>,
}

/// True iff the rational number is a root of unity: over `Q` only `1` and
/// `-1` qualify.
pub fn root_of_unity_check(alpha: &BigRational) -> bool {
    alpha.is_one() || (-alpha).is_one()
}

/// The scaling-constant pattern of a dimension-2 block: a rational constant
/// among the phi values that is neither zero nor a root of unity, sitting
/// alongside a rank-2 variable part.
fn scaling_constants(phis: &[(String, crate::ratfun::RationalFunction)]) -> Vec<BigRational> {
    let mut out = Vec::new();
    for (_, f) in phis {
        if !f.den.is_one() {
            continue;
        }
        if let Some((e, c)) = f.num.as_monomial() {
            if e.iter().all(|&x| x == 0) {
                if let Coef::Rat(r) = c {
                    out.push(r.clone());
                }
            }
        }
    }
    out
}

/// Combine the block decomposition, per-block dimensions and wreath
/// certificates into a verdict.
pub fn classify(
    spec: &GroupSpec,
    blocks: &BlockReport,
    dims: &[(Pair, DimensionReport)],
    wreath: &[(Pair, WreathCheck)],
) -> Result<Verdict, CoreError> {
    let char_p = spec.field.characteristic() > 0;
    let mut basis = Vec::new();

    let valid = blocks.valid_pairs();
    let mut resolved: Vec<(Pair, usize)> = Vec::new();
    for pair in &valid {
        let Some((_, report)) = dims.iter().find(|(p, _)| p == pair) else {
            return Err(CoreError::InvalidParameter(format!(
                "no dimension report for valid block {pair:?}"
            )));
        };
        match report.dimension {
            DimensionValue::Resolved(d) => resolved.push((*pair, d)),
            DimensionValue::Ambiguous(a, b) => {
                basis.push(RuleApplication {
                    pair: Some(*pair),
                    dimension: None,
                    rule: format!(
                        "dimension fit ambiguous between {a} and {b} (exponent {:.3})",
                        report.fitted_exponent
                    ),
                });
                return Ok(Verdict {
                    outcome: Outcome::Unknown,
                    moment_class: MomentClass::AnyFiniteEntropyNondegenerate,
                    basis,
                    per_element: None,
                    });
            }
        }
    }

    // Dimension >= 3 forces non-triviality in any characteristic.
    if let Some(&(pair, d)) = resolved.iter().find(|(_, d)| *d >= 3) {
        basis.push(RuleApplication {
            pair: Some(pair),
            dimension: Some(d),
            rule: "a valid block of dimension >= 3 gives a non-trivial boundary for every \
                   non-degenerate finite entropy walk"
                .into(),
        });
        return Ok(Verdict {
            outcome: Outcome::Nontrivial,
            moment_class: MomentClass::AnyFiniteEntropyNondegenerate,
            basis,
            per_element: None,
            });
    }

    let max_dim = resolved.iter().map(|(_, d)| *d).max().unwrap_or(0);

    if char_p {
        // Characteristic p is a dichotomy: <= 2 is trivial for centered
        // second-moment walks, <= 1 already for centered first-moment walks.
        let (mc, rule) = if max_dim <= 1 {
            (
                MomentClass::CenteredFirstMoment,
                "characteristic p with all block dimensions <= 1: trivial boundary for \
                 centered finite first moment walks",
            )
        } else {
            (
                MomentClass::CenteredSecondMoment,
                "characteristic p with all block dimensions <= 2: trivial boundary for \
                 centered finite second moment walks",
            )
        };
        for (pair, d) in &resolved {
            basis.push(RuleApplication {
                pair: Some(*pair),
                dimension: Some(*d),
                rule: rule.into(),
            });
        }
        if resolved.is_empty() {
            basis.push(RuleApplication {
                pair: None,
                dimension: Some(0),
                rule: "no valid blocks: the group acts through its diagonal, boundary trivial \
                       for centered finite first moment walks"
                    .into(),
            });
        }
        return Ok(Verdict {
            outcome: Outcome::Trivial,
            moment_class: mc,
            basis,
            per_element: None,
            });
    }

    // characteristic 0
    if max_dim <= 1 {
        for (pair, d) in &resolved {
            basis.push(RuleApplication {
                pair: Some(*pair),
                dimension: Some(*d),
                rule: "characteristic 0 with all block dimensions <= 1: trivial boundary for \
                       centered finite second moment walks"
                    .into(),
            });
        }
        if resolved.is_empty() {
            basis.push(RuleApplication {
                pair: None,
                dimension: Some(0),
                rule: "no valid blocks: the group acts through its diagonal, boundary trivial \
                       for centered finite second moment walks"
                    .into(),
            });
        }
        return Ok(Verdict {
            outcome: Outcome::Trivial,
            moment_class: MomentClass::CenteredSecondMoment,
            basis,
            per_element: None,
            });
    }

    // dimension-2 blocks in characteristic 0: wreath products are trivial,
    // non-root-of-unity scaling constants are non-trivial, the rest is the
    // open regime.
    let mut any_conjectural = false;
    for (pair, d) in resolved.iter().filter(|(_, d)| *d == 2) {
        let wreath_ok = wreath
            .iter()
            .find(|(p, _)| p == pair)
            .map(|(_, w)| w.is_wreath)
            .unwrap_or(false);
        if wreath_ok {
            basis.push(RuleApplication {
                pair: Some(*pair),
                dimension: Some(*d),
                rule: "dimension-2 block certified isomorphic to the rank-2 wreath product: \
                       trivial boundary for centered finite second moment walks"
                    .into(),
            });
            continue;
        }
        let constants = blocks
            .block(*pair)
            .map(|b| scaling_constants(&b.phi_values))
            .unwrap_or_default();
        let nontrivial_constant = constants
            .iter()
            .find(|c| !root_of_unity_check(c))
            .cloned();
        if let Some(alpha) = nontrivial_constant {
            basis.push(RuleApplication {
                pair: Some(*pair),
                dimension: Some(*d),
                rule: format!(
                    "dimension-2 block with scaling constant {alpha} that is not a root of \
                     unity: non-trivial boundary for every irreducible finite entropy walk"
                ),
            });
            return Ok(Verdict {
                outcome: Outcome::Nontrivial,
                moment_class: MomentClass::AnyFiniteEntropyNondegenerate,
                basis,
                per_element: None,
                });
        }
        if !constants.is_empty() {
            basis.push(RuleApplication {
                pair: Some(*pair),
                dimension: Some(*d),
                rule: "dimension-2 block whose scaling constants are roots of unity: a finite \
                       index subgroup is a wreath-product quotient, trivial boundary for \
                       centered finite second moment walks"
                    .into(),
            });
            continue;
        }
        any_conjectural = true;
        basis.push(RuleApplication {
            pair: Some(*pair),
            dimension: Some(*d),
            rule: "dimension-2 block in characteristic 0 outside the certified patterns: \
                   conjecturally non-trivial"
                .into(),
        });
    }

    if any_conjectural {
        return Ok(Verdict {
            outcome: Outcome::ConjecturalNontrivial,
            moment_class: MomentClass::AnyFiniteEntropyNondegenerate,
            basis,
            per_element: None,
            });
    }
    Ok(Verdict {
        outcome: Outcome::Trivial,
        moment_class: MomentClass::CenteredSecondMoment,
        basis,
        per_element: None,
    })
}

/// Attach element sub-verdicts: for each word, search its normal closure for
/// a unipotent witness sitting over a block the verdict already classified
/// as non-trivial.
pub fn with_element_tests(
    mut verdict: Verdict,
    spec: &GroupSpec,
    dims: &[(Pair, DimensionReport)],
    words: &[crate::matrix::Word],
    depth: usize,
) -> Result<Verdict, CoreError> {
    let order = crate::order::TOrder::row_major(spec.n);
    let nontrivial_pairs: Vec<Pair> = dims
        .iter()
        .filter(|(_, d)| matches!(d.dimension, DimensionValue::Resolved(v) if v >= 3))
        .map(|(p, _)| *p)
        .collect();
    let mut out = Vec::new();
    for word in words {
        let v = crate::blocks::act_nontrivially(spec, word, depth, &order, &|pair| {
            nontrivial_pairs.contains(&pair)
        })?;
        out.push((crate::matrix::encode_word(word), v));
    }
    verdict.per_element = Some(out);
    Ok(verdict)
}

pub fn field_label(field: &CoefficientField) -> String {
    field.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::decompose;
    use crate::matrix::two_by_two;
    use crate::moduledim::{DimensionValue, ExactShortcuts, Provenance};
    use crate::order::TOrder;
    use num_bigint::BigInt;

    fn synthetic_dim(d: usize) -> DimensionReport {
        DimensionReport {
            span_table: vec![(2, 5), (4, 9), (6, 13)],
            fitted_exponent: d as f64,
            exact_shortcuts: ExactShortcuts {
                trdeg: Some(d),
                quotient_rule: None,
                free_module: Some(d),
            },
            dimension: DimensionValue::Resolved(d),
            provenance: Provenance::FreeModule,
            fingerprint_mode: false,
        }
    }

    #[test]
    fn adding_a_block_never_flips_nontrivial_to_trivial() {
        // one valid block of dimension 3 in a 3x3 group: Nontrivial; a second
        // valid block of low dimension must not weaken the verdict
        let entry = crate::catalog::xyz().unwrap();
        let report = decompose(&entry.spec, 4, &TOrder::U).unwrap();
        let pairs = report.valid_pairs();
        assert!(pairs.len() >= 2);
        let dims_low: Vec<_> = pairs.iter().map(|p| (*p, synthetic_dim(1))).collect();
        let low = classify(&entry.spec, &report, &dims_low, &[]).unwrap();
        assert_eq!(low.outcome, Outcome::Trivial);

        let mut dims_mixed = dims_low.clone();
        dims_mixed[0].1 = synthetic_dim(3);
        let mixed = classify(&entry.spec, &report, &dims_mixed, &[]).unwrap();
        assert_eq!(mixed.outcome, Outcome::Nontrivial);

        // every valid block needs a dimension report
        let missing: Vec<_> = dims_mixed[..1].to_vec();
        assert!(classify(&entry.spec, &report, &missing, &[]).is_err());
    }

    #[test]
    fn ambiguous_dimension_yields_unknown() {
        let spec = two_by_two(CoefficientField::Rationals, 1, &[("M_X", "X")], true).unwrap();
        let report = decompose(&spec, 2, &TOrder::U).unwrap();
        let mut dim = synthetic_dim(1);
        dim.dimension = DimensionValue::Ambiguous(1, 2);
        dim.fitted_exponent = 1.5;
        let verdict = classify(&spec, &report, &[((0, 1), dim)], &[]).unwrap();
        assert_eq!(verdict.outcome, Outcome::Unknown);
        assert!(verdict.basis[0].rule.contains("ambiguous"));
    }

    #[test]
    fn rational_roots_of_unity() {
        let r = |a: i64, b: i64| BigRational::new(BigInt::from(a), BigInt::from(b));
        assert!(root_of_unity_check(&r(1, 1)));
        assert!(root_of_unity_check(&r(-1, 1)));
        assert!(!root_of_unity_check(&r(2, 1)));
        assert!(!root_of_unity_check(&r(1, 2)));
        assert!(!root_of_unity_check(&r(-3, 2)));
    }
}
