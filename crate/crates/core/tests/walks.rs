//! Oracle-backed validation of the Monte Carlo engine: independent
//! brute-force walkers, the exact convolution, and the documented ordering
//! invariants between the range statistics.

use std::collections::HashSet;

use blockwalk::catalog::{self, MeasureKind};
use blockwalk::convolve::ZdMeasure;
use blockwalk::field::CoefficientField;
use blockwalk::matrix::{parse_word, two_by_two};
use blockwalk::measure::StepMeasure;
use blockwalk::moduledim::{span_dim, ModuleSpec};
use blockwalk::parallel::{with_mode, ExecMode};
use blockwalk::ratfun::RationalFunction;
use blockwalk::walk::{
    simulate, simulate_select, strong_transience_probe, AdmissibleRelation, StatSelect,
    WalkConfig,
};

/// Small deterministic generator, independent of the engine's RNG stack.
struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64)
    }
    fn below(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize % n
    }
}

/// Brute-force oracle: mean range of the simple random walk on Z^d.
fn oracle_srw_range(d: usize, steps: usize, walkers: usize, seed: u64) -> (f64, f64) {
    let mut rng = Lcg(seed | 1);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..walkers {
        let mut pos = vec![0i64; d];
        let mut seen: HashSet<Vec<i64>> = HashSet::new();
        seen.insert(pos.clone());
        for _ in 0..steps {
            let axis = rng.below(d);
            pos[axis] += if rng.next_f64() < 0.5 { 1 } else { -1 };
            seen.insert(pos.clone());
        }
        let r = seen.len() as f64;
        sum += r;
        sumsq += r * r;
    }
    let n = walkers as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

fn zd_config(d: usize, horizon: usize, walkers: usize, seed: u64, cks: Vec<usize>) -> WalkConfig {
    let entry = catalog::lamplighter(d, 2).unwrap();
    let atoms: Vec<_> = entry
        .spec
        .generators
        .iter()
        .filter(|(_, g)| !g.is_unipotent())
        .flat_map(|(name, _)| {
            vec![
                (parse_word(std::slice::from_ref(name)), 0.0),
                (parse_word(&[format!("~{name}")]), 0.0),
            ]
        })
        .collect();
    let w = 1.0 / atoms.len() as f64;
    let atoms = atoms.into_iter().map(|(a, _)| (a, w)).collect();
    let measure = StepMeasure::new(atoms, 0.0).unwrap();
    WalkConfig::new(entry.spec, measure, horizon, walkers, seed, cks).unwrap()
}

#[test]
fn engine_range_matches_brute_force_oracle() {
    let n = 2000;
    let walkers = 150;
    let config = zd_config(3, n, walkers, 0xAB, vec![n]);
    let stats = simulate(&config, &AdmissibleRelation::Identity, None).unwrap();
    let engine = stats.range[0];
    let (oracle_mean, oracle_se) = oracle_srw_range(3, n, walkers, 0x5EED);
    let joint_se = (engine.se * engine.se + oracle_se * oracle_se).sqrt();
    assert!(
        (engine.mean - oracle_mean).abs() < 4.0 * joint_se,
        "engine {} vs oracle {} (joint se {joint_se})",
        engine.mean,
        oracle_mean
    );
}

#[test]
fn return_frequency_matches_exact_convolution() {
    let n = 50;
    let walkers = 40_000;
    let config = zd_config(1, n, walkers, 0xCD, (1..=n).collect());
    let stats = simulate_select(
        &config,
        &AdmissibleRelation::Identity,
        None,
        None,
        &StatSelect {
            return_freq: true,
            ..Default::default()
        },
    )
    .unwrap();
    let exact = ZdMeasure::srw(1, 0.0).return_probs(n).unwrap();
    for (idx, &t) in stats.checkpoints.iter().enumerate() {
        let est = stats.return_freq[idx].mean;
        if t % 2 == 1 {
            assert_eq!(est, 0.0, "odd-time return at t={t}");
            continue;
        }
        let p = exact[t];
        assert!(
            (est - p).abs() / p < 0.05,
            "t={t}: estimate {est} vs exact {p}"
        );
    }
}

#[test]
fn rank_range_ordering_invariant() {
    // delta_rank(t) <= gen_range(t) under the conjugate-vector relation
    // <= range(t) <= t + 1
    let entry = catalog::lamplighter(2, 2).unwrap();
    let measure = catalog::default_measure(&entry, MeasureKind::BasePlusLamp).unwrap();
    let cks = vec![100, 400, 1600];
    let config = WalkConfig::new(entry.spec, measure, 1600, 60, 0x11, cks).unwrap();
    let stats = simulate(&config, &AdmissibleRelation::ConjugateVector, None).unwrap();
    for (i, &t) in stats.checkpoints.iter().enumerate() {
        let dr = stats.delta_rank.as_ref().unwrap()[i].mean;
        let gr = stats.gen_range[i].mean;
        let r = stats.range[i].mean;
        assert!(dr <= gr + 1e-9, "delta_rank {dr} > gen_range {gr} at t={t}");
        assert!(gr <= r + 1e-9, "gen_range {gr} > range {r} at t={t}");
        assert!(r <= (t + 1) as f64 + 1e-9);
    }
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let entry = catalog::lamplighter(3, 2).unwrap();
    let measure = catalog::default_measure(&entry, MeasureKind::BasePlusLamp).unwrap();
    let config = WalkConfig::new(entry.spec, measure, 500, 40, 0x77, vec![100, 500]).unwrap();
    let seq = with_mode(ExecMode::Sequential, || {
        simulate(&config, &AdmissibleRelation::Identity, None).unwrap()
    });
    #[cfg(feature = "parallel")]
    {
        let par = with_mode(ExecMode::Parallel, || {
            simulate(&config, &AdmissibleRelation::Identity, None).unwrap()
        });
        assert_eq!(
            serde_json::to_string(&seq).unwrap(),
            serde_json::to_string(&par).unwrap()
        );
    }
    assert!(seq.range[1].mean > 0.0);
}

#[test]
fn inadmissible_plugin_is_rejected() {
    use std::sync::Arc;
    let config = zd_config(2, 50, 20, 0x31, vec![50]);
    // identifies everything at every time: not admissible
    let relation = AdmissibleRelation::UserPlugin(Arc::new(|_, _| 0));
    let err = simulate(&config, &relation, None);
    assert!(err.is_err(), "constant relation must fail admissibility");
    // a position-keyed plugin with a collision-resistant encoding is fine
    let relation = AdmissibleRelation::UserPlugin(Arc::new(|proj, _t| {
        let mut h = 0x9E3779B97F4A7C15u64;
        for &x in proj {
            h ^= x as u64;
            h = h.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = h;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            h = z ^ (z >> 31);
        }
        h
    }));
    simulate(&config, &relation, None).unwrap();
}

#[test]
fn drifted_walk_hits_its_mean_sequence() {
    // all mass on +1: proj(X_t) = t, so gamma_t = t is hit every step
    let spec = two_by_two(CoefficientField::Rationals, 1, &[("M_X", "X")], false).unwrap();
    let measure = StepMeasure::new(vec![(parse_word(&["M_X".into()]), 1.0)], 0.0).unwrap();
    let n = 100;
    let config = WalkConfig::new(spec, measure, n, 5, 0x4, vec![n]).unwrap();
    let gamma: Vec<Vec<i64>> = (1..=n as i64).map(|t| vec![t]).collect();
    let stats = simulate_select(
        &config,
        &AdmissibleRelation::Identity,
        None,
        Some(&gamma),
        &StatSelect {
            hits: true,
            drift: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(stats.hits.as_ref().unwrap()[0].mean, n as f64);

    // biased walk on Z: the sequence gamma_t = round(drift * t) is hit
    let spec = two_by_two(CoefficientField::Rationals, 1, &[("M_X", "X")], false).unwrap();
    let measure = StepMeasure::new(
        vec![
            (parse_word(&["M_X".into()]), 2.0 / 3.0),
            (parse_word(&["~M_X".into()]), 1.0 / 3.0),
        ],
        0.0,
    )
    .unwrap();
    let n = 3000;
    let config = WalkConfig::new(spec, measure, n, 40, 0x99, vec![n]).unwrap();
    let drift = 1.0 / 3.0;
    let gamma: Vec<Vec<i64>> = (1..=n as i64)
        .map(|t| vec![(drift * t as f64).round() as i64])
        .collect();
    let stats = simulate_select(
        &config,
        &AdmissibleRelation::Identity,
        None,
        Some(&gamma),
        &StatSelect {
            hits: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(
        stats.hits.as_ref().unwrap()[0].mean >= 1.0,
        "biased walk should revisit its drift sequence"
    );
}

#[test]
fn span_rank_is_stable_under_generating_set_change() {
    // free module over two lattices generating the same group: ranks agree
    // after a bounded radius reindexing r -> c r with c <= 4
    let q = CoefficientField::Rationals;
    let rf = |s: &str| RationalFunction::parse(s, q, 2).unwrap();
    let m1 = ModuleSpec::cyclic(q, 2, vec![rf("X"), rf("Y")]).unwrap();
    let m2 = ModuleSpec::cyclic(q, 2, vec![rf("X"), rf("X*Y")]).unwrap();
    let c = 2usize;
    for r in 1..=5 {
        let a = span_dim(&m1, r).unwrap();
        let b = span_dim(&m2, r).unwrap();
        let a_big = span_dim(&m1, c * r).unwrap();
        let b_big = span_dim(&m2, c * r).unwrap();
        assert!(a <= b_big, "rank_1({r})={a} > rank_2({})={b_big}", c * r);
        assert!(b <= a_big, "rank_2({r})={b} > rank_1({})={a_big}", c * r);
    }
}

#[test]
fn monotone_span_and_nondecreasing_range() {
    let q = CoefficientField::Rationals;
    let rf = |s: &str| RationalFunction::parse(s, q, 2).unwrap();
    let m = ModuleSpec::cyclic(q, 2, vec![rf("X"), rf("Y"), rf("X*Y^-1")]).unwrap();
    let mut prev = 0;
    for r in 0..6 {
        let v = span_dim(&m, r).unwrap();
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn transience_flags_z3_not_z() {
    let n = 160;
    let z3 = {
        let mut c = zd_config(3, n, 60_000, 0xE1, (1..=n).collect());
        c.checkpoints = (1..=n).collect();
        c
    };
    let report = strong_transience_probe(&z3).unwrap();
    let e = report.fitted_exponent.unwrap();
    assert!(e > 1.0, "Z^3 exponent {e}");
    assert!(report.uniform_strong_transience_consistent);

    let z1 = zd_config(1, n, 20_000, 0xE2, (1..=n).collect());
    let report = strong_transience_probe(&z1).unwrap();
    let e = report.fitted_exponent.unwrap();
    assert!(e < 1.0, "Z exponent {e}");
    assert!(!report.uniform_strong_transience_consistent);
}

#[test]
fn char0_fingerprint_rank_matches_exact_elimination() {
    // {X, X+1} over Q: compare the randomized fingerprint rank against an
    // exact rational row reduction built independently here
    let q = CoefficientField::Rationals;
    let rf = |s: &str| RationalFunction::parse(s, q, 1).unwrap();
    let m = ModuleSpec::cyclic(q, 1, vec![rf("X"), rf("X+1")]).unwrap();
    for r in 0..4usize {
        let got = span_dim(&m, r).unwrap();
        let expected = exact_rank_x_xplus1(r);
        assert_eq!(got, expected, "radius {r}");
    }
}

/// Independent oracle: exact rank over Q of { X^a (X+1)^b : |a|+|b| <= r }
/// via fraction-free elimination on numerator coefficient vectors after
/// clearing the common denominator X^r (X+1)^r.
fn exact_rank_x_xplus1(r: usize) -> usize {
    use num_bigint::BigInt;
    let ri = r as i32;
    let mut rows: Vec<Vec<BigInt>> = Vec::new();
    let width = 4 * r + 1;
    for a in -ri..=ri {
        for b in -(ri - a.abs())..=(ri - a.abs()) {
            // X^(a+r) (X+1)^(b+r): polynomial of degree (a+r) + (b+r)
            let shift = (a + ri) as usize;
            let pow = (b + ri) as usize;
            let mut coeffs = vec![BigInt::from(0); width];
            // binomial expansion of (X+1)^pow
            let mut binom = BigInt::from(1);
            for k in 0..=pow {
                coeffs[shift + k] += &binom;
                binom = &binom * BigInt::from((pow - k) as i64) / BigInt::from((k + 1) as i64);
            }
            rows.push(coeffs);
        }
    }
    // fraction-free Gaussian elimination
    let mut rank = 0;
    let mut row = 0;
    let nrows = rows.len();
    for col in 0..width {
        let Some(p) = (row..nrows).find(|&i| rows[i][col] != BigInt::from(0)) else {
            continue;
        };
        rows.swap(row, p);
        for i in row + 1..nrows {
            if rows[i][col] != BigInt::from(0) {
                let (num, den) = (rows[i][col].clone(), rows[row][col].clone());
                for c in 0..width {
                    let v = &rows[i][c] * &den - &rows[row][c] * &num;
                    rows[i][c] = v;
                }
            }
        }
        rank += 1;
        row += 1;
        if row == nrows {
            break;
        }
    }
    rank
}

#[test]
fn dimension_never_exceeds_trdeg_in_char_zero() {
    use blockwalk::moduledim::{dimension_estimate, trdeg, DEFAULT_RADII};
    let q = CoefficientField::Rationals;
    let rf = |s: &str, n: usize| RationalFunction::parse(s, q, n).unwrap();
    let cases: Vec<(usize, Vec<RationalFunction>)> = vec![
        (1, vec![rf("X", 1), rf("X+1", 1)]),
        (2, vec![rf("X", 2), rf("Y", 2), rf("2", 2)]),
        (1, vec![rf("2", 1), rf("3", 1), rf("X", 1)]),
    ];
    for (nvars, phis) in cases {
        let bound = trdeg(&phis).unwrap();
        let m = ModuleSpec::cyclic(q, nvars, phis).unwrap();
        let report = dimension_estimate(&m, &DEFAULT_RADII).unwrap();
        if let Some(d) = report.resolved() {
            assert!(d <= bound, "dimension {d} exceeds trdeg bound {bound}");
        }
    }
}

#[test]
fn colored_delta_rank_thins_the_vectors() {
    let entry = catalog::lamplighter(3, 2).unwrap();
    let measure = catalog::default_measure(&entry, MeasureKind::BasePlusLamp).unwrap();
    let config = WalkConfig::new(entry.spec, measure, 1000, 80, 0x13, vec![1000]).unwrap();
    let full = simulate_select(
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
    let colored = simulate_select(
        &config,
        &AdmissibleRelation::Identity,
        None,
        None,
        &StatSelect {
            delta: true,
            delta_color_prob: Some(0.25),
            ..Default::default()
        },
    )
    .unwrap();
    let r_full = full.delta_rank.as_ref().unwrap()[0].mean;
    let r_colored = colored.delta_rank.as_ref().unwrap()[0].mean;
    assert!(r_colored < r_full, "coloring must thin the rank: {r_colored} vs {r_full}");
    assert!(r_colored > 0.1 * r_full, "quarter-colored rank too small: {r_colored}");
}

#[test]
fn span_hypothesis_pairs_with_cautiousness() {
    use blockwalk::moduledim::ModuleSpec;
    use blockwalk::walk::cautiousness_with_span;
    let entry = catalog::lamplighter(2, 2).unwrap();
    let f2 = CoefficientField::PrimeField(2);
    let rf = |s: &str| RationalFunction::parse(s, f2, 2).unwrap();
    let module = ModuleSpec::cyclic(f2, 2, vec![rf("X"), rf("Y")]).unwrap();
    let measure = catalog::default_measure(&entry, MeasureKind::UniformSymmetric).unwrap();
    let config = WalkConfig::new(entry.spec, measure, 1024, 400, 0x21, vec![256, 1024]).unwrap();
    let (cells, rows) = cautiousness_with_span(
        &config,
        blockwalk::walk::CautiousScale::Sqrt,
        &[1.0],
        &module,
    )
    .unwrap();
    assert_eq!(cells.len(), 2);
    assert_eq!(rows.len(), 2);
    for row in &rows {
        // the rank-2 module grows quadratically: some delta = eps/2^k works
        assert!(row.satisfied, "no delta satisfied the span budget: {row:?}");
        assert!(row.log_obtainable <= row.budget);
        assert!(row.delta.unwrap() <= 1.0);
    }
}

#[test]
fn delta_rank_density_separates_transient_from_recurrent() {
    // On the rank-3 base the drop-site rank density converges to a positive
    // constant; on the rank-2 base it decays (logarithmically slowly).
    let run = |d: usize, n: usize| {
        let entry = catalog::lamplighter(d, 2).unwrap();
        let measure = catalog::default_measure(&entry, MeasureKind::BasePlusLamp).unwrap();
        let config =
            WalkConfig::new(entry.spec, measure, n, 60, 0xD5, vec![n / 4, n]).unwrap();
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
        (
            rank[0].mean / (n / 4) as f64,
            rank[1].mean / n as f64,
        )
    };
    let (r3_early, r3_late) = run(3, 16_000);
    let (r2_early, r2_late) = run(2, 16_000);
    // recurrent-base density strictly decays with the horizon
    assert!(
        r2_late < r2_early * 0.97,
        "recurrent density should decay: {r2_early:.4} -> {r2_late:.4}"
    );
    // transient-base density stays within a few percent of its limit
    assert!(
        (r3_late - r3_early).abs() < 0.05 * r3_early,
        "transient density should stabilize: {r3_early:.4} -> {r3_late:.4}"
    );
    assert!(r3_late > r2_late);
}

#[test]
fn order_two_lamp_reaches_uniform_immediately() {
    // single unipotent generator of order 2 with lazification 1/2: the
    // return frequency is exactly 1/2 at every t >= 1 in expectation
    let f2 = CoefficientField::PrimeField(2);
    let spec = two_by_two(f2, 1, &[], true).unwrap();
    let measure = StepMeasure::new(
        vec![(parse_word(&["delta".into()]), 0.5)],
        0.5,
    )
    .unwrap();
    let config = WalkConfig::new(spec, measure, 20, 40_000, 0xF2, (1..=20).collect()).unwrap();
    let stats = simulate_select(
        &config,
        &AdmissibleRelation::Identity,
        None,
        None,
        &StatSelect {
            return_freq: true,
            ..Default::default()
        },
    )
    .unwrap();
    for (i, cell) in stats.return_freq.iter().enumerate() {
        assert!(
            (cell.mean - 0.5).abs() < 0.01,
            "t={}: return frequency {}",
            i + 1,
            cell.mean
        );
    }
}

#[test]
fn element_tests_attach_to_verdicts() {
    use blockwalk::classify::with_element_tests;
    use blockwalk::pipeline::{run_pipeline, PipelineConfig};
    // delta acts non-trivially over the rank-3 base, and there is no
    // evidence over the rank-2 base
    for (d, expect_witness) in [(3usize, true), (2usize, false)] {
        let entry = catalog::lamplighter(d, 2).unwrap();
        let report = run_pipeline(&entry.spec, &PipelineConfig::default()).unwrap();
        let verdict = with_element_tests(
            report.verdict,
            &entry.spec,
            &report.dimensions,
            &[parse_word(&["delta".into()])],
            2,
        )
        .unwrap();
        let per = verdict.per_element.unwrap();
        assert_eq!(per.len(), 1);
        let acts = matches!(
            per[0].1,
            blockwalk::blocks::ActionVerdict::ActsNontrivially { .. }
        );
        assert_eq!(acts, expect_witness, "rank {d}");
    }
}
