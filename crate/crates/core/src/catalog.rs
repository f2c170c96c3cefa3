//! Parameterized builders for the named example groups, with the expected
//! dimension and verdict attached as metadata for the verification suite.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::classify::{MomentClass, Outcome};
use crate::error::CoreError;
use crate::field::CoefficientField;
use crate::matrix::{two_by_two, GroupSpec, UTMatrix};
use crate::measure::StepMeasure;
use crate::poly::var_name;
use crate::ratfun::RationalFunction;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpectedVerdict {
    pub outcome: Outcome,
    pub moment_class: Option<MomentClass>,
    pub why: String,
}

#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: String,
    pub spec: GroupSpec,
    pub expected_dimension: Option<(usize, String)>,
    pub expected_verdict: Option<ExpectedVerdict>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureKind {
    UniformSymmetric,
    BasePlusLamp,
    LazyUniform,
}

/// Names and parameter shapes accepted by [`build`].
pub fn catalog_names() -> Vec<&'static str> {
    vec![
        "lamplighter(d,p|0)",
        "baumslag(d,p|0)",
        "g23x",
        "gx_x1_x2",
        "lbs(d)",
        "x1x2x3",
        "xyz",
        "g_alpha(num/den,d)",
        "met(d,p|0)",
    ]
}

fn field_of(p: u64) -> Result<CoefficientField, CoreError> {
    CoefficientField::from_char(p)
}

/// `Z^d`-by-lamp group: `delta` and `M_{X_i} = diag(1, X_i)`.
pub fn lamplighter(d: usize, p: u64) -> Result<CatalogEntry, CoreError> {
    if d == 0 || d > 3 {
        return Err(CoreError::InvalidParameter(
            "lamplighter supports 1 <= d <= 3".into(),
        ));
    }
    let field = field_of(p)?;
    let names: Vec<String> = (1..=d).map(|i| format!("M_X{i}")).collect();
    let pairs: Vec<(String, String)> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), var_name(i, d)))
        .collect();
    let refs: Vec<(&str, &str)> = pairs
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let spec = two_by_two(field, d, &refs, true)?;
    let expected_verdict = Some(if d >= 3 {
        ExpectedVerdict {
            outcome: Outcome::Nontrivial,
            moment_class: Some(MomentClass::AnyFiniteEntropyNondegenerate),
            why: "free rank-3 block".into(),
        }
    } else if d == 2 {
        ExpectedVerdict {
            outcome: Outcome::Trivial,
            moment_class: Some(MomentClass::CenteredSecondMoment),
            why: "dimension-2 wreath block".into(),
        }
    } else {
        ExpectedVerdict {
            outcome: Outcome::Trivial,
            moment_class: Some(if p > 0 {
                MomentClass::CenteredFirstMoment
            } else {
                MomentClass::CenteredSecondMoment
            }),
            why: "dimension-1 block".into(),
        }
    });
    Ok(CatalogEntry {
        name: format!("lamplighter({d},{p})"),
        spec,
        expected_dimension: Some((d, "free module over the rank-d lattice".into())),
        expected_verdict,
    })
}

/// Finitely presented overgroup of the lamplighter: generators `delta`,
/// `diag(1, X_i)` and `diag(1, X_i + 1)`.
pub fn baumslag(d: usize, p: u64) -> Result<CatalogEntry, CoreError> {
    if d == 0 || d > 3 {
        return Err(CoreError::InvalidParameter(
            "baumslag supports 1 <= d <= 3".into(),
        ));
    }
    let field = field_of(p)?;
    let mut pairs = Vec::new();
    for i in 0..d {
        pairs.push((format!("M_X{}", i + 1), var_name(i, d)));
        pairs.push((format!("M_X{}p1", i + 1), format!("{}+1", var_name(i, d))));
    }
    let refs: Vec<(&str, &str)> = pairs
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let spec = two_by_two(field, d, &refs, true)?;
    let expected_verdict = Some(if d >= 3 {
        ExpectedVerdict {
            outcome: Outcome::Nontrivial,
            moment_class: Some(MomentClass::AnyFiniteEntropyNondegenerate),
            why: "dimension 3 block".into(),
        }
    } else {
        ExpectedVerdict {
            outcome: Outcome::Trivial,
            moment_class: Some(MomentClass::CenteredSecondMoment),
            why: "dimension <= 2 block".into(),
        }
    });
    Ok(CatalogEntry {
        name: format!("baumslag({d},{p})"),
        spec,
        expected_dimension: Some((d, "transcendence degree of the phi image".into())),
        expected_verdict,
    })
}

/// `delta`, `diag(1,2)`, `diag(1,3)`, `diag(1,X)` over `Q(X)`: dimension 1.
pub fn g23x() -> Result<CatalogEntry, CoreError> {
    let q = CoefficientField::Rationals;
    let spec = two_by_two(q, 1, &[("M_2", "2"), ("M_3", "3"), ("M_X", "X")], true)?;
    Ok(CatalogEntry {
        name: "g23x".into(),
        spec,
        expected_dimension: Some((1, "constants collapse to scalars".into())),
        expected_verdict: Some(ExpectedVerdict {
            outcome: Outcome::Trivial,
            moment_class: Some(MomentClass::CenteredSecondMoment),
            why: "dimension 1 in characteristic 0".into(),
        }),
    })
}

/// `delta`, `diag(1,X)`, `diag(1,X+1)`, `diag(1,X+2)` over `Q(X)`.
pub fn gx_x1_x2() -> Result<CatalogEntry, CoreError> {
    let q = CoefficientField::Rationals;
    let spec = two_by_two(
        q,
        1,
        &[("M_X", "X"), ("M_Xp1", "X+1"), ("M_Xp2", "X+2")],
        true,
    )?;
    Ok(CatalogEntry {
        name: "gx_x1_x2".into(),
        spec,
        expected_dimension: Some((1, "one transcendental".into())),
        expected_verdict: Some(ExpectedVerdict {
            outcome: Outcome::Trivial,
            moment_class: Some(MomentClass::CenteredSecondMoment),
            why: "dimension 1 in characteristic 0".into(),
        }),
    })
}

/// Lamplighter with an extra scaling generator `diag(1,2)`.
pub fn lbs(d: usize) -> Result<CatalogEntry, CoreError> {
    let mut entry = g_alpha(&BigRational::from_integer(2.into()), d)?;
    entry.name = format!("lbs({d})");
    Ok(entry)
}

/// `delta`, `M_{X_i}` and `M_alpha = diag(1, alpha)` over `Q`.
pub fn g_alpha(alpha: &BigRational, d: usize) -> Result<CatalogEntry, CoreError> {
    use num_traits::Zero;
    if alpha.is_zero() {
        return Err(CoreError::InvalidParameter("alpha must be nonzero".into()));
    }
    if d == 0 || d > 3 {
        return Err(CoreError::InvalidParameter(
            "g_alpha supports 1 <= d <= 3".into(),
        ));
    }
    let q = CoefficientField::Rationals;
    let alpha_str = format!(
        "{}{}",
        alpha.numer(),
        if alpha.denom() == &1.into() {
            String::new()
        } else {
            format!("/{}", alpha.denom())
        }
    );
    let mut pairs: Vec<(String, String)> = (0..d)
        .map(|i| (format!("M_X{}", i + 1), var_name(i, d)))
        .collect();
    pairs.push(("M_alpha".into(), alpha_str.clone()));
    let refs: Vec<(&str, &str)> = pairs
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let spec = two_by_two(q, d, &refs, true)?;
    let is_root = crate::classify::root_of_unity_check(alpha);
    let expected_verdict = Some(if d >= 3 {
        ExpectedVerdict {
            outcome: Outcome::Nontrivial,
            moment_class: Some(MomentClass::AnyFiniteEntropyNondegenerate),
            why: "dimension >= 3".into(),
        }
    } else if d == 2 && !is_root {
        ExpectedVerdict {
            outcome: Outcome::Nontrivial,
            moment_class: Some(MomentClass::AnyFiniteEntropyNondegenerate),
            why: "dimension-2 block scaled by a non-root-of-unity constant".into(),
        }
    } else if is_root {
        ExpectedVerdict {
            outcome: Outcome::Trivial,
            moment_class: Some(MomentClass::CenteredSecondMoment),
            why: "root-of-unity scaling: wreath-product quotient".into(),
        }
    } else {
        // d = 1, alpha not a root of unity: dimension 1 but with the
        // second-moment caveat of the scaled one-dimensional family
        ExpectedVerdict {
            outcome: Outcome::Trivial,
            moment_class: Some(MomentClass::CenteredSecondMoment),
            why: "dimension 1 in characteristic 0".into(),
        }
    });
    Ok(CatalogEntry {
        name: format!("g_alpha({alpha_str},{d})"),
        spec,
        // rational alpha is algebraic: the scaling collapses to a scalar and
        // the dimension is the number of variables
        expected_dimension: Some((d, "variables; algebraic scaling collapses".into())),
        expected_verdict,
    })
}

/// `delta`, `M_{X_1..X_3}` and `diag(1, X_1+X_2+X_3)`: a dimension-3 block.
pub fn x1x2x3() -> Result<CatalogEntry, CoreError> {
    let q = CoefficientField::Rationals;
    let spec = two_by_two(
        q,
        3,
        &[
            ("M_X1", "X"),
            ("M_X2", "Y"),
            ("M_X3", "Z"),
            ("M_sum", "X+Y+Z"),
        ],
        true,
    )?;
    Ok(CatalogEntry {
        name: "x1x2x3".into(),
        spec,
        expected_dimension: Some((3, "three independent variables".into())),
        expected_verdict: Some(ExpectedVerdict {
            outcome: Outcome::Nontrivial,
            moment_class: Some(MomentClass::AnyFiniteEntropyNondegenerate),
            why: "dimension 3".into(),
        }),
    })
}

/// The 3x3 example: diagonal generators scaling one axis each, plus the full
/// upper unipotent with all entries 1.
pub fn xyz() -> Result<CatalogEntry, CoreError> {
    let q = CoefficientField::Rationals;
    let one = RationalFunction::one(q, 3);
    let zero = RationalFunction::zero(q, 3);
    let rf = |s: &str| RationalFunction::parse(s, q, 3).unwrap();
    let diag3 = |a: &str, b: &str, c: &str| -> UTMatrix {
        UTMatrix::from_entries(
            3,
            vec![
                rf(a),
                zero.clone(),
                zero.clone(),
                zero.clone(),
                rf(b),
                zero.clone(),
                zero.clone(),
                zero.clone(),
                rf(c),
            ],
        )
        .unwrap()
    };
    let delta111 = UTMatrix::from_entries(
        3,
        vec![
            one.clone(),
            one.clone(),
            one.clone(),
            zero.clone(),
            one.clone(),
            one.clone(),
            zero.clone(),
            zero.clone(),
            one.clone(),
        ],
    )
    .unwrap();
    let spec = GroupSpec::new(
        q,
        3,
        3,
        vec![
            ("M_X".into(), diag3("X", "1", "1")),
            ("M_Y".into(), diag3("1", "Y", "1")),
            ("M_Z".into(), diag3("1", "1", "Z")),
            ("delta111".into(), delta111),
        ],
    )?;
    Ok(CatalogEntry {
        name: "xyz".into(),
        spec,
        expected_dimension: Some((2, "each block sees two of the three variables".into())),
        expected_verdict: Some(ExpectedVerdict {
            outcome: Outcome::Trivial,
            moment_class: Some(MomentClass::CenteredSecondMoment),
            why: "all blocks are dimension-2 wreath products".into(),
        }),
    })
}

/// Free metabelian representation: `d` generators `[[X_i^-1, 1], [0, X_i]]`.
pub fn met(d: usize, p: u64) -> Result<CatalogEntry, CoreError> {
    if d == 0 || d > 3 {
        return Err(CoreError::InvalidParameter("met supports 1 <= d <= 3".into()));
    }
    let field = field_of(p)?;
    let zero = RationalFunction::zero(field, d);
    let one = RationalFunction::one(field, d);
    let mut gens = Vec::new();
    for i in 0..d {
        let x = RationalFunction::parse(&var_name(i, d), field, d)?;
        let m = UTMatrix::from_entries(
            2,
            vec![x.inv()?, one.clone(), zero.clone(), x],
        )?;
        gens.push((format!("FM_X{}", i + 1), m));
    }
    let spec = GroupSpec::new(field, d, 2, gens)?;
    Ok(CatalogEntry {
        name: format!("met({d},{p})"),
        spec,
        expected_dimension: Some((d, "free metabelian of rank d".into())),
        expected_verdict: Some(if d >= 3 {
            ExpectedVerdict {
                outcome: Outcome::Nontrivial,
                moment_class: Some(MomentClass::AnyFiniteEntropyNondegenerate),
                why: "dimension 3".into(),
            }
        } else {
            ExpectedVerdict {
                outcome: Outcome::Trivial,
                moment_class: Some(MomentClass::CenteredSecondMoment),
                why: "dimension <= 2".into(),
            }
        }),
    })
}

/// Build a catalog entry from a textual name like `lamplighter(3,2)`,
/// `g_alpha(2,2)`, `g_alpha(-1,2)` or `xyz`.
pub fn build(name: &str) -> Result<CatalogEntry, CoreError> {
    let name = name.trim();
    let (head, args) = match name.find('(') {
        Some(i) => {
            let inner = name[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| CoreError::Parse(format!("unbalanced parens in {name}")))?;
            (
                &name[..i],
                inner.split(',').map(|s| s.trim().to_string()).collect(),
            )
        }
        None => (name, Vec::<String>::new()),
    };
    let usize_arg = |i: usize| -> Result<usize, CoreError> {
        args.get(i)
            .ok_or_else(|| CoreError::InvalidParameter(format!("{head} needs argument {i}")))?
            .parse()
            .map_err(|_| CoreError::Parse(format!("bad integer argument in {name}")))
    };
    let u64_arg = |i: usize| -> Result<u64, CoreError> {
        args.get(i)
            .ok_or_else(|| CoreError::InvalidParameter(format!("{head} needs argument {i}")))?
            .parse()
            .map_err(|_| CoreError::Parse(format!("bad integer argument in {name}")))
    };
    match head {
        "lamplighter" => lamplighter(usize_arg(0)?, u64_arg(1)?),
        "baumslag" => baumslag(usize_arg(0)?, u64_arg(1)?),
        "g23x" => g23x(),
        "gx_x1_x2" => gx_x1_x2(),
        "lbs" => lbs(usize_arg(0)?),
        "x1x2x3" => x1x2x3(),
        "xyz" => xyz(),
        "met" => met(usize_arg(0)?, u64_arg(1)?),
        "g_alpha" => {
            let raw = args.first().ok_or_else(|| {
                CoreError::InvalidParameter("g_alpha needs alpha and d".into())
            })?;
            let alpha = parse_rational(raw)?;
            g_alpha(&alpha, usize_arg(1)?)
        }
        other => Err(CoreError::InvalidParameter(format!(
            "unknown catalog name {other:?}; known: {:?}",
            catalog_names()
        ))),
    }
}

fn parse_rational(s: &str) -> Result<BigRational, CoreError> {
    let mut parts = s.splitn(2, '/');
    let num: i64 = parts
        .next()
        .unwrap()
        .trim()
        .parse()
        .map_err(|_| CoreError::Parse(format!("bad rational {s}")))?;
    let den: i64 = match parts.next() {
        Some(d) => d
            .trim()
            .parse()
            .map_err(|_| CoreError::Parse(format!("bad rational {s}")))?,
        None => 1,
    };
    if den == 0 {
        return Err(CoreError::DivisionByZero("rational denominator"));
    }
    Ok(BigRational::new(num.into(), den.into()))
}

/// Default step measures on a catalog entry.
pub fn default_measure(entry: &CatalogEntry, kind: MeasureKind) -> Result<StepMeasure, CoreError> {
    let spec = &entry.spec;
    match kind {
        MeasureKind::UniformSymmetric => Ok(StepMeasure::uniform_symmetric(spec)),
        MeasureKind::LazyUniform => Ok(StepMeasure::lazy_uniform(spec)),
        MeasureKind::BasePlusLamp => {
            // signed diagonal generators plus the single unipotent generator
            let mut atoms: Vec<(crate::matrix::Word, f64)> = Vec::new();
            let mut lamp_names = Vec::new();
            for (name, g) in &spec.generators {
                if g.is_unipotent() {
                    lamp_names.push(name.clone());
                } else {
                    atoms.push((vec![Letter::gen(name)], 0.0));
                    atoms.push((vec![Letter::parse(&format!("~{name}"))], 0.0));
                }
            }
            if lamp_names.len() != 1 {
                return Err(CoreError::InvalidMeasure(format!(
                    "base-plus-lamp needs exactly one unipotent generator, found {}",
                    lamp_names.len()
                )));
            }
            atoms.push((vec![Letter::gen(&lamp_names[0])], 0.0));
            let w = 1.0 / atoms.len() as f64;
            for a in atoms.iter_mut() {
                a.1 = w;
            }
            StepMeasure::new(atoms, 0.0)
        }
    }
}

use crate::matrix::Letter;
