//! Acceptance suite: every release criterion runs here at its stated
//! tolerance and prints one PASS/FAIL line. Run with `--nocapture` to see
//! the lines for passing criteria too:
//!
//! ```text
//! cargo test -p blockwalk-cli --test acceptance -- --nocapture
//! ```

use std::collections::HashMap;
use std::process::Command;
use std::sync::{Mutex, OnceLock};

use blockwalk::blocks::{decompose, valid_wrt, Validity};
use blockwalk::catalog::{self, MeasureKind};
use blockwalk::classify::{MomentClass, Outcome};
use blockwalk::convolve::ZdMeasure;
use blockwalk::field::CoefficientField;
use blockwalk::fingerprint::FingerprintCtx;
use blockwalk::matrix::{parse_word, UTMatrix};
use blockwalk::measure::StepMeasure;
use blockwalk::moduledim::{
    dimension_estimate, ModuleSpec, Provenance, DEFAULT_RADII, FIT_TOLERANCE,
};
use blockwalk::order::{in_nt, TOrder};
use blockwalk::pipeline::{run_pipeline, PipelineConfig, PipelineReport};
use blockwalk::poly::{b1_coordinate, det_i64, new_basis, parse_ratfun, LaurentPoly};
use blockwalk::ratfun::{EqMode, RationalFunction};
use blockwalk::stages::recurrent_measure_stages;
use blockwalk::walk::{
    cautiousness_probe, simulate_select, strong_transience_probe, AdmissibleRelation,
    CautiousScale, StatSelect, WalkConfig,
};

fn pass(criterion: usize, msg: &str) {
    println!("[acceptance {criterion}] PASS {msg}");
}

fn fail(criterion: usize, msg: &str) -> ! {
    println!("[acceptance {criterion}] FAIL {msg}");
    panic!("[acceptance {criterion}] FAIL {msg}");
}

fn check(criterion: usize, cond: bool, msg: &str) {
    if !cond {
        fail(criterion, msg);
    }
}

/// The expensive pipelines are shared between criteria.
fn pipeline_for(name: &str) -> PipelineReport {
    static CACHE: OnceLock<Mutex<HashMap<String, PipelineReport>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(name) {
        return hit.clone();
    }
    let entry = catalog::build(name).unwrap();
    let report = run_pipeline(&entry.spec, &PipelineConfig::default()).unwrap();
    cache
        .lock()
        .unwrap()
        .insert(name.to_string(), report.clone());
    report
}

fn single_block_dimension(name: &str) -> (usize, f64, Provenance) {
    let report = pipeline_for(name);
    assert_eq!(
        report.dimensions.len(),
        1,
        "{name}: expected one valid block"
    );
    let (_, d) = &report.dimensions[0];
    (
        d.resolved().unwrap_or_else(|| panic!("{name}: ambiguous dimension")),
        d.fitted_exponent,
        d.provenance,
    )
}

#[test]
fn a1_dimension_table() {
    let c = 1;
    // free-lattice blocks
    for d in 1..=3usize {
        for p in [2u64, 3] {
            let name = format!("lamplighter({d},{p})");
            let (dim, fit, _) = single_block_dimension(&name);
            check(c, dim == d, &format!("{name}: dimension {dim}, expected {d}"));
            check(
                c,
                (fit - d as f64).abs() <= FIT_TOLERANCE,
                &format!("{name}: fitted exponent {fit:.3} not within 0.25 of {d}"),
            );
            let report = pipeline_for(&name);
            let sc = &report.dimensions[0].1.exact_shortcuts;
            check(
                c,
                sc.free_module == Some(d) && sc.trdeg == Some(d),
                &format!("{name}: shortcuts disagree: {sc:?}"),
            );
        }
    }
    // polynomial-entry blocks
    for d in 1..=3usize {
        for p in [2u64, 3] {
            let name = format!("baumslag({d},{p})");
            let (dim, fit, _) = single_block_dimension(&name);
            check(c, dim == d, &format!("{name}: dimension {dim}, expected {d}"));
            check(
                c,
                (fit - d as f64).abs() <= FIT_TOLERANCE,
                &format!("{name}: fitted exponent {fit:.3} not within 0.25 of {d}"),
            );
            let report = pipeline_for(&name);
            check(
                c,
                report.dimensions[0].1.exact_shortcuts.trdeg == Some(d),
                &format!("{name}: transcendence shortcut disagrees"),
            );
        }
    }
    // constants collapse
    let (dim, fit, _) = single_block_dimension("g23x");
    check(c, dim == 1, &format!("g23x: dimension {dim}, expected 1"));
    check(c, (fit - 1.0).abs() <= FIT_TOLERANCE, "g23x exponent");
    // scaling constant on a rank-2 lattice
    let (dim, fit, _) = single_block_dimension("g_alpha(2,2)");
    check(c, dim == 2, &format!("g_alpha(2,2): dimension {dim}, expected 2"));
    check(c, (fit - 2.0).abs() <= FIT_TOLERANCE, "g_alpha(2,2) exponent");
    // one-relator quotient of the rank-3 lattice
    let f2 = CoefficientField::PrimeField(2);
    let rel = parse_ratfun("1+X+Y+Z", f2, 3).unwrap().0;
    let gens = ["X", "Y", "Z"]
        .iter()
        .map(|v| RationalFunction::parse(v, f2, 3).unwrap())
        .collect();
    let module = ModuleSpec::cyclic(f2, 3, gens)
        .unwrap()
        .with_relation(rel)
        .unwrap();
    let report = dimension_estimate(&module, &DEFAULT_RADII).unwrap();
    check(
        c,
        report.resolved() == Some(2) && report.provenance == Provenance::QuotientRule,
        &format!("quotient: {:?} via {:?}", report.dimension, report.provenance),
    );
    check(
        c,
        (report.fitted_exponent - 2.0).abs() <= FIT_TOLERANCE,
        &format!("quotient exponent {:.3}", report.fitted_exponent),
    );
    pass(
        c,
        "dimension table exact for all fourteen modules; fits within 0.25; shortcuts agree",
    );
}

#[test]
fn a2_block_decomposition() {
    let c = 2;
    let entry = catalog::xyz().unwrap();
    let report = decompose(&entry.spec, 4, &TOrder::U).unwrap();
    let mut valid = report.valid_pairs();
    valid.sort_unstable();
    check(
        c,
        valid == vec![(0, 1), (0, 2), (1, 2)],
        &format!("xyz valid blocks {valid:?}, expected all three"),
    );
    let expected_phis: [((usize, usize), [&str; 2]); 3] = [
        ((0, 1), ["X", "Y^-1"]),
        ((1, 2), ["Y", "Z^-1"]),
        ((0, 2), ["X", "Z^-1"]),
    ];
    for (pair, phis) in expected_phis {
        let block = report.block(pair).unwrap();
        // witness: exact re-verification from the word alone
        let Validity::Valid { witness } = &block.status else {
            fail(c, &format!("block {pair:?} has no witness"));
        };
        check(
            c,
            witness.len() <= 8,
            &format!("block {pair:?} witness length {} > 8", witness.len()),
        );
        let m = entry.spec.eval_word(&parse_word(witness)).unwrap();
        check(
            c,
            m.is_unipotent() && valid_wrt(&m, pair.0, pair.1, &TOrder::U),
            &format!("block {pair:?} witness fails exact verification"),
        );
        // phi set matches the diagonal pairs of the printed generators
        let q = CoefficientField::Rationals;
        for want in phis {
            let w = RationalFunction::parse(want, q, 3).unwrap();
            check(
                c,
                block.phi_values.iter().any(|(_, f)| f.eq_exact(&w)),
                &format!("block {pair:?} is missing phi value {want}"),
            );
        }
        let one = RationalFunction::one(q, 3);
        check(
            c,
            block.phi_values.iter().any(|(_, f)| f.eq_exact(&one)),
            &format!("block {pair:?} is missing the trivial phi value"),
        );
    }
    // validity with respect to a total extension implies validity for U:
    // the same witness works because U-above coordinates are T-above
    for order in [TOrder::row_major(3), TOrder::col_major(3)] {
        let total = decompose(&entry.spec, 4, &order).unwrap();
        for pair in total.valid_pairs() {
            let data = total.block(pair).unwrap();
            if let Validity::Valid { witness } = &data.status {
                let m = entry.spec.eval_word(&parse_word(witness)).unwrap();
                check(
                    c,
                    valid_wrt(&m, pair.0, pair.1, &TOrder::U),
                    &format!("total-order witness at {pair:?} is not valid for U"),
                );
                check(
                    c,
                    report.valid_pairs().contains(&pair),
                    &format!("pair {pair:?} valid for the extension but not for U"),
                );
            }
        }
    }
    pass(
        c,
        "xyz: three valid blocks with exact witnesses (lengths <= 8) and the expected phi sets",
    );
}

#[test]
fn a3_verdict_table() {
    let c = 3;
    let table: Vec<(&str, Outcome, MomentClass)> = vec![
        (
            "lamplighter(3,2)",
            Outcome::Nontrivial,
            MomentClass::AnyFiniteEntropyNondegenerate,
        ),
        (
            "lamplighter(3,3)",
            Outcome::Nontrivial,
            MomentClass::AnyFiniteEntropyNondegenerate,
        ),
        (
            "lamplighter(2,2)",
            Outcome::Trivial,
            MomentClass::CenteredSecondMoment,
        ),
        (
            "lamplighter(2,3)",
            Outcome::Trivial,
            MomentClass::CenteredSecondMoment,
        ),
        (
            "baumslag(2,2)",
            Outcome::Trivial,
            MomentClass::CenteredSecondMoment,
        ),
        (
            "baumslag(2,3)",
            Outcome::Trivial,
            MomentClass::CenteredSecondMoment,
        ),
        (
            "baumslag(3,2)",
            Outcome::Nontrivial,
            MomentClass::AnyFiniteEntropyNondegenerate,
        ),
        (
            "baumslag(3,3)",
            Outcome::Nontrivial,
            MomentClass::AnyFiniteEntropyNondegenerate,
        ),
        ("g23x", Outcome::Trivial, MomentClass::CenteredSecondMoment),
        (
            "x1x2x3",
            Outcome::Nontrivial,
            MomentClass::AnyFiniteEntropyNondegenerate,
        ),
        ("xyz", Outcome::Trivial, MomentClass::CenteredSecondMoment),
        (
            "lbs(2)",
            Outcome::Nontrivial,
            MomentClass::AnyFiniteEntropyNondegenerate,
        ),
        (
            "g_alpha(-1,2)",
            Outcome::Trivial,
            MomentClass::CenteredSecondMoment,
        ),
    ];
    for (name, outcome, moment) in table {
        let report = pipeline_for(name);
        check(
            c,
            report.verdict.outcome == outcome,
            &format!(
                "{name}: verdict {:?}, expected {outcome:?}",
                report.verdict.outcome
            ),
        );
        check(
            c,
            report.verdict.moment_class == moment,
            &format!(
                "{name}: moment class {:?}, expected {moment:?}",
                report.verdict.moment_class
            ),
        );
        check(
            c,
            !report.verdict.basis.is_empty(),
            &format!("{name}: verdict carries no rule citations"),
        );
    }
    // the special dimension-2 paths carry their specific rules
    let lbs = pipeline_for("lbs(2)");
    check(
        c,
        lbs.verdict
            .basis
            .iter()
            .any(|b| b.rule.contains("not a root of unity")),
        "lbs(2) must cite the scaling-constant rule",
    );
    let galpha = pipeline_for("g_alpha(-1,2)");
    check(
        c,
        galpha
            .verdict
            .basis
            .iter()
            .any(|b| b.rule.contains("roots of unity")),
        "g_alpha(-1,2) must cite the root-of-unity rule",
    );
    let xyz = pipeline_for("xyz");
    check(
        c,
        xyz.verdict
            .basis
            .iter()
            .filter(|b| b.rule.contains("wreath"))
            .count()
            == 3,
        "xyz must cite the wreath rule for all three blocks",
    );
    pass(c, "verdict table reproduced with citations for all thirteen entries");
}

/// Walk on the diagonal lattice of a lamplighter base: uniform measure on
/// the signed diagonal generators only.
fn zd_projection_config(
    d: usize,
    horizon: usize,
    walkers: usize,
    seed: u64,
    checkpoints: Vec<usize>,
) -> WalkConfig {
    let entry = catalog::lamplighter(d, 2).unwrap();
    let mut atoms = Vec::new();
    for (name, g) in &entry.spec.generators {
        if g.is_unipotent() {
            continue;
        }
        atoms.push((parse_word(std::slice::from_ref(name)), 0.0));
        atoms.push((parse_word(&[format!("~{name}")]), 0.0));
    }
    let w = 1.0 / atoms.len() as f64;
    let atoms = atoms.into_iter().map(|(a, _)| (a, w)).collect();
    let measure = StepMeasure::new(atoms, 0.0).unwrap();
    WalkConfig::new(entry.spec, measure, horizon, walkers, seed, checkpoints).unwrap()
}

#[test]
fn a4_simulation_signatures() {
    let c = 4;
    // (a) linear range of the transient walk
    let n = 10_000;
    let config = zd_projection_config(3, n, 200, 0x41, vec![n]);
    let stats = simulate_select(
        &config,
        &AdmissibleRelation::Identity,
        None,
        None,
        &StatSelect {
            range: true,
            ..Default::default()
        },
    )
    .unwrap();
    let ratio = stats.range[0].mean / n as f64;
    check(
        c,
        (0.61..=0.71).contains(&ratio),
        &format!("Z^3 range({n})/{n} = {ratio:.4} outside [0.61, 0.71]"),
    );

    // (b) sublinear range of the recurrent walk
    let config = zd_projection_config(2, n, 200, 0x42, vec![100, 1000, n]);
    let stats = simulate_select(
        &config,
        &AdmissibleRelation::Identity,
        None,
        None,
        &StatSelect {
            range: true,
            ..Default::default()
        },
    )
    .unwrap();
    let ratios: Vec<f64> = stats
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, &ck)| stats.range[i].mean / ck as f64)
        .collect();
    check(
        c,
        ratios[0] > ratios[1] && ratios[1] > ratios[2],
        &format!("Z^2 range ratios {ratios:?} not strictly decreasing"),
    );
    check(
        c,
        ratios[2] < 0.45,
        &format!("Z^2 range(10^4)/10^4 = {:.4} >= 0.45", ratios[2]),
    );

    // (c) return-frequency decay exponents, validated against the exact
    // convolution oracle at t <= 50 with relative error < 5%
    let horizon = 200;
    let z1 = zd_projection_config(1, horizon, 100_000, 0x43, (1..=horizon).collect());
    let report = strong_transience_probe(&z1).unwrap();
    let e1 = report.fitted_exponent.unwrap();
    check(
        c,
        (0.4..=0.6).contains(&e1),
        &format!("Z decay exponent {e1:.3} outside [0.4, 0.6]"),
    );
    let exact = ZdMeasure::srw(1, 0.0).return_probs(50).unwrap();
    for t in (2..=50).step_by(2) {
        let est = report.return_freq[t - 1].as_ref().unwrap().mean;
        let rel = (est - exact[t]).abs() / exact[t];
        check(
            c,
            rel < 0.05,
            &format!("Z return estimate at t={t}: relative error {rel:.4}"),
        );
    }
    let z3 = zd_projection_config(3, horizon, 1_000_000, 0x44, (1..=horizon).collect());
    let report = strong_transience_probe(&z3).unwrap();
    let e3 = report.fitted_exponent.unwrap();
    check(
        c,
        (1.3..=1.7).contains(&e3),
        &format!("Z^3 decay exponent {e3:.3} outside [1.3, 1.7]"),
    );
    check(c, report.uniform_strong_transience_consistent, "Z^3 summability flag");
    let exact = ZdMeasure::srw(3, 0.0).return_probs(50).unwrap();
    for t in (2..=50).step_by(2) {
        let est = report.return_freq[t - 1].as_ref().unwrap().mean;
        let rel = (est - exact[t]).abs() / exact[t];
        check(
            c,
            rel < 0.05,
            &format!("Z^3 return estimate at t={t}: relative error {rel:.4}"),
        );
    }
    pass(
        c,
        &format!(
            "range Z^3 {ratio:.3}; Z^2 ratios decreasing to {:.3}; decay exponents {e1:.2} / {e3:.2}, \
             oracle-validated at t <= 50",
            ratios[2]
        ),
    );
}

#[test]
fn a5_delta_rank_separation() {
    let c = 5;
    let n = 10_000;
    let run = |d: usize| {
        let entry = catalog::lamplighter(d, 2).unwrap();
        let measure = catalog::default_measure(&entry, MeasureKind::BasePlusLamp).unwrap();
        let config = WalkConfig::new(entry.spec, measure, n, 200, 0x51, vec![n]).unwrap();
        let stats = simulate_select(
            &config,
            &AdmissibleRelation::Identity,
            None,
            None,
            &StatSelect {
                delta: true,
                ..Default::default()
            },
        )
        .unwrap();
        let cell = stats.delta_rank.as_ref().unwrap()[0];
        (cell.mean / n as f64, cell.se / n as f64)
    };
    let (r3, se3) = run(3);
    let (r2, se2) = run(2);
    check(
        c,
        se3 < 0.02 && se2 < 0.02,
        &format!("standard errors {se3:.4} / {se2:.4} exceed 0.02"),
    );
    // the separation direction itself must hold
    check(
        c,
        r3 > r2,
        &format!("rank density must separate: transient {r3:.4} vs recurrent {r2:.4}"),
    );
    if r3 < 0.2 || r2 > 0.08 {
        fail(
            c,
            &format!(
                "delta_rank(10^4)/10^4 = {r3:.4} (required >= 0.2) on the transient base and \
                 {r2:.4} (required <= 0.08) on the recurrent base. With the uniform \
                 base-plus-lamp measure only 1/7 of the steps are delta-steps, so the rank \
                 density is capped at 1/7 = 0.143 < 0.2; the recurrent-base density decays \
                 only logarithmically and still exceeds 0.08 at this horizon. The stated \
                 thresholds are unreachable for this statistic at n = 10^4."
            ),
        );
    }
    pass(
        c,
        &format!("delta-rank separation {r3:.4} vs {r2:.4} with SEs below 0.02"),
    );
}

#[test]
fn a6_cautiousness_stability() {
    let c = 6;
    let config = zd_projection_config(2, 4096, 2000, 0x61, vec![256, 1024, 4096]);
    let cells = cautiousness_probe(&config, CautiousScale::Sqrt, &[1.0]).unwrap();
    let probs: Vec<f64> = cells.iter().map(|cell| cell.prob).collect();
    assert_eq!(probs.len(), 3);
    for (i, p) in probs.iter().enumerate() {
        check(
            c,
            *p >= 0.1,
            &format!("cautious probability {p:.3} at n={} below 0.1", cells[i].checkpoint),
        );
    }
    for i in 0..probs.len() {
        for j in 0..probs.len() {
            check(
                c,
                probs[i] <= 2.0 * probs[j],
                &format!("probabilities {probs:?} not within a factor of 2"),
            );
        }
    }
    pass(
        c,
        &format!("cautious probabilities {probs:?} stable across n in {{256, 1024, 4096}}"),
    );
}

fn lcg(state: &mut u64) -> u64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    *state >> 11
}

fn random_poly(field: CoefficientField, nvars: usize, state: &mut u64, max_terms: usize) -> LaurentPoly {
    let nterms = (lcg(state) % max_terms as u64) as usize;
    let mut poly = LaurentPoly::zero(field, nvars);
    for _ in 0..nterms {
        let e: Vec<i32> = (0..nvars).map(|_| (lcg(state) % 13) as i32 - 6).collect();
        let coef = LaurentPoly::coef_from_i64(&field, (lcg(state) % 19) as i64 - 9);
        poly = poly
            .add(&LaurentPoly::monomial(field, nvars, e, coef))
            .unwrap();
    }
    poly
}

#[test]
fn a7_property_suites() {
    let c = 7;
    let mut state = 0xACCE97u64;

    // exact ring axioms on 1000 random triples
    for i in 0..1000 {
        let field = if i % 2 == 0 {
            CoefficientField::Rationals
        } else {
            CoefficientField::PrimeField(if i % 4 == 1 { 2 } else { 5 })
        };
        let a = random_poly(field, 2, &mut state, 5);
        let b = random_poly(field, 2, &mut state, 5);
        let d = random_poly(field, 2, &mut state, 5);
        check(
            c,
            a.mul(&b).unwrap().mul(&d).unwrap() == a.mul(&b.mul(&d).unwrap()).unwrap(),
            "associativity failed",
        );
        check(
            c,
            a.mul(&b.add(&d).unwrap()).unwrap()
                == a.mul(&b).unwrap().add(&a.mul(&d).unwrap()).unwrap(),
            "distributivity failed",
        );
    }

    // star-division reconstruction on 1000 instances
    for i in 0..1000 {
        let field = if i % 2 == 0 {
            CoefficientField::Rationals
        } else {
            CoefficientField::PrimeField(3)
        };
        let u = random_poly(field, 2, &mut state, 7);
        let one = LaurentPoly::coef_from_i64(&field, 1);
        let shift = (lcg(&mut state) % 5) as i32 - 2;
        let v = LaurentPoly::monomial(field, 2, vec![shift, 1], one.clone())
            .add(&LaurentPoly::monomial(field, 2, vec![shift + 2, 0], one.clone()))
            .unwrap()
            .add(&LaurentPoly::monomial(field, 2, vec![shift + 1, -2], one))
            .unwrap();
        let (t, w) = u.star_divide(&v, 0).unwrap();
        check(
            c,
            v.mul(&t).unwrap().add(&w).unwrap() == u,
            "star-division reconstruction failed",
        );
        check(
            c,
            w.terms.keys().all(|e| e[0] >= shift && e[0] < shift + 2),
            "star-division remainder escaped its window",
        );
    }

    // basis separation on 1000 random finite sets, d <= 4
    for _ in 0..1000 {
        let d = 1 + (lcg(&mut state) % 4) as usize;
        let count = 1 + (lcg(&mut state) % 50) as usize;
        let mut w: Vec<Vec<i32>> = (0..count)
            .map(|_| (0..d).map(|_| (lcg(&mut state) % 15) as i32 - 7).collect())
            .collect();
        w.sort();
        w.dedup();
        let basis = new_basis(&w);
        check(c, det_i64(&basis).abs() == 1, "basis not unimodular");
        let mut coords: Vec<i64> = w.iter().map(|x| b1_coordinate(&basis, x)).collect();
        let n_points = coords.len();
        coords.sort_unstable();
        coords.dedup();
        check(c, coords.len() == n_points, "first coordinate not injective");
    }

    // coordinate filtration closure: 500 instances over sizes 3 and 4
    for i in 0..500 {
        let nsize = if i % 2 == 0 { 3 } else { 4 };
        let field = CoefficientField::Rationals;
        let order = if i % 3 == 0 {
            TOrder::row_major(nsize)
        } else {
            TOrder::col_major(nsize)
        };
        let (bi, bj) = (0usize, 1usize);
        let allowed: Vec<(usize, usize)> = blockwalk::order::all_pairs(nsize)
            .into_iter()
            .filter(|&p| !order.geq(p, (bi, bj)))
            .collect();
        let make_member = |state: &mut u64| -> UTMatrix {
            let mut entries: Vec<RationalFunction> = Vec::new();
            for r in 0..nsize {
                for s in 0..nsize {
                    let v = if r == s {
                        RationalFunction::one(field, 1)
                    } else if allowed.contains(&(r, s)) {
                        RationalFunction::constant(field, 1, (lcg(state) % 7) as i64 - 3)
                    } else {
                        RationalFunction::zero(field, 1)
                    };
                    entries.push(v);
                }
            }
            UTMatrix::from_entries(nsize, entries).unwrap()
        };
        let a = make_member(&mut state);
        let b = make_member(&mut state);
        check(c, in_nt(&a, bi, bj, &order), "member not in the subgroup");
        check(
            c,
            in_nt(&a.mul(&b).unwrap(), bi, bj, &order),
            "closure under product failed",
        );
        check(
            c,
            in_nt(&a.inv().unwrap(), bi, bj, &order),
            "closure under inverse failed",
        );
        // conjugation by an arbitrary unipotent element
        let mut entries: Vec<RationalFunction> = Vec::new();
        for r in 0..nsize {
            for s in 0..nsize {
                entries.push(if r == s {
                    RationalFunction::one(field, 1)
                } else if r < s {
                    RationalFunction::constant(field, 1, (lcg(&mut state) % 5) as i64 - 2)
                } else {
                    RationalFunction::zero(field, 1)
                });
            }
        }
        let g = UTMatrix::from_entries(nsize, entries).unwrap();
        let conj = g.inv().unwrap().mul(&a).unwrap().mul(&g).unwrap();
        check(
            c,
            in_nt(&conj, bi, bj, &order),
            "closure under conjugation failed",
        );
    }

    // randomized vs exact equality: 10^4 pairs of degree <= 20, zero
    // disagreements
    let ctx = FingerprintCtx::new(0xE051, 1);
    let q = CoefficientField::Rationals;
    let mut disagreements = 0;
    for i in 0..10_000 {
        let n1 = random_poly(q, 1, &mut state, 6);
        let d1 = {
            let p = random_poly(q, 1, &mut state, 3);
            if p.is_zero() {
                LaurentPoly::one(q, 1)
            } else {
                p
            }
        };
        let a = RationalFunction::new(n1.clone(), d1.clone()).unwrap();
        let b = if i % 2 == 0 {
            // same function scaled by a common factor
            let s = {
                let p = random_poly(q, 1, &mut state, 2);
                if p.is_zero() {
                    LaurentPoly::one(q, 1)
                } else {
                    p
                }
            };
            RationalFunction::new(n1.mul(&s).unwrap(), d1.mul(&s).unwrap()).unwrap()
        } else {
            RationalFunction::new(
                n1.add(&random_poly(q, 1, &mut state, 3)).unwrap(),
                d1.clone(),
            )
            .unwrap()
        };
        let exact = a.rf_equal(&b, EqMode::Exact, &ctx).unwrap();
        let randomized = a.rf_equal(&b, EqMode::Randomized, &ctx).unwrap();
        if exact != randomized {
            disagreements += 1;
        }
    }
    check(
        c,
        disagreements == 0,
        &format!("{disagreements} randomized/exact equality disagreements"),
    );

    // delta-rank subadditivity within 3 standard errors
    let entry = catalog::lamplighter(2, 2).unwrap();
    let measure = catalog::default_measure(&entry, MeasureKind::BasePlusLamp).unwrap();
    let config =
        WalkConfig::new(entry.spec, measure, 600, 300, 0x71, vec![200, 300, 400, 600]).unwrap();
    let stats = simulate_select(
        &config,
        &AdmissibleRelation::Identity,
        None,
        None,
        &StatSelect {
            delta: true,
            ..Default::default()
        },
    )
    .unwrap();
    let rank = stats.delta_rank.as_ref().unwrap();
    let get = |t: usize| {
        let i = stats.checkpoints.iter().position(|&x| x == t).unwrap();
        rank[i]
    };
    for (t, s) in [(200usize, 400usize), (300, 300)] {
        let lhs = get(t + s);
        let r_t = get(t);
        let r_s = get(s);
        let budget = 3.0 * (lhs.se + r_t.se + r_s.se);
        check(
            c,
            lhs.mean <= r_t.mean + r_s.mean + budget,
            &format!(
                "subadditivity violated: rank({}) = {:.2} > {:.2} + {:.2} + {budget:.2}",
                t + s,
                lhs.mean,
                r_t.mean,
                r_s.mean
            ),
        );
    }

    // determinism: equal seeds give identical artifacts, different seeds do
    // not
    let bin = env!("CARGO_BIN_EXE_blockwalk");
    let dir = tempfile::tempdir().unwrap();
    let digests: Vec<HashMap<String, String>> = [("r1", 7u64), ("r2", 7u64), ("r3", 8u64)]
        .iter()
        .map(|(sub, seed)| {
            let out = dir.path().join(sub);
            let status = Command::new(bin)
                .args([
                    "--seed",
                    &seed.to_string(),
                    "--out",
                    out.to_str().unwrap(),
                    "pipeline",
                    "--name",
                    "lamplighter(2,2)",
                    "--walk-n",
                    "400",
                ])
                .status()
                .unwrap();
            assert!(status.success());
            let mut digests = HashMap::new();
            for artifact in ["pipeline.json", "walk.json", "walk.csv"] {
                let bytes = std::fs::read(out.join(artifact)).unwrap();
                digests.insert(
                    artifact.to_string(),
                    blockwalk_cli::manifest::sha256_hex(&bytes),
                );
            }
            digests
        })
        .collect();
    check(
        c,
        digests[0] == digests[1],
        "identical seeds produced different artifact digests",
    );
    check(
        c,
        digests[0].get("walk.json") != digests[2].get("walk.json"),
        "different seeds produced identical walk artifacts",
    );

    pass(
        c,
        "ring axioms (1000), star division (1000), basis separation (1000), filtration \
         closure (500), equality agreement (10^4, zero disagreements), subadditivity, \
         determinism",
    );
}

#[test]
fn a8_recurrent_measure_stages() {
    let c = 8;
    for degree in [1usize, 2] {
        let stages = recurrent_measure_stages(degree, 2).unwrap();
        check(
            c,
            stages.len() == 2,
            &format!("degree {degree}: expected 2 stages"),
        );
        for s in &stages {
            check(
                c,
                s.b * s.n_horizon as f64 <= 0.5 + 1e-12,
                &format!("degree {degree} stage {}: N*b = {}", s.stage, s.b * s.n_horizon as f64),
            );
            // independent exact convolution re-verification of the partial sum
            let m = ZdMeasure::new(degree, s.truncated_atoms.clone()).unwrap();
            let probs = m.return_probs(s.n_horizon).unwrap();
            let half_sum: f64 = (2..=s.n_horizon)
                .step_by(2)
                .map(|t| probs[t] / 2.0)
                .sum();
            check(
                c,
                half_sum >= s.stage as f64,
                &format!(
                    "degree {degree} stage {}: verified partial sum {half_sum:.3} < {}",
                    s.stage, s.stage
                ),
            );
        }
    }
    pass(c, "stage inequalities hold on Z and Z^2 under exact convolution");
}
