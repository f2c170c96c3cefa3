//! Seeded Monte Carlo on matrix groups: range, generalized range, drift,
//! cautiousness, return frequencies, sequence hits and delta-rank.
//!
//! Walkers are independent; every walker draws its own counter-derived RNG
//! stream, and aggregation folds per-chunk partial sums in a fixed order, so
//! results are bit-identical for a given seed regardless of thread count.
//!
//! Three execution modes, picked automatically:
//! - `DiagOnly`: every generator is diagonal with monomial entries; the state
//!   is the exact exponent matrix.
//! - `Lamp2`: 2x2 over `F_p` with monomial diagonals; the unipotent part is
//!   an exact sparse vector updated in O(1) per step through the
//!   `unip * diag` normal form.
//! - `Exact`: arbitrary specs, exact matrix products per step.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::error::CoreError;
use crate::fingerprint::FingerprintCtx;
use crate::matrix::{GroupSpec, UTMatrix, Word};
use crate::measure::StepMeasure;
use crate::parallel;
use crate::poly::Coef;
use crate::rng;

#[derive(Clone, Debug)]
pub struct WalkConfig {
    pub spec: GroupSpec,
    pub measure: StepMeasure,
    pub horizon: usize,
    pub walkers: usize,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
}

impl WalkConfig {
    pub fn new(
        spec: GroupSpec,
        measure: StepMeasure,
        horizon: usize,
        walkers: usize,
        seed: u64,
        mut checkpoints: Vec<usize>,
    ) -> Result<Self, CoreError> {
        if walkers == 0 || horizon == 0 {
            return Err(CoreError::InvalidParameter(
                "need at least one walker and one step".into(),
            ));
        }
        measure.validate(&spec)?;
        checkpoints.sort_unstable();
        checkpoints.dedup();
        if checkpoints.is_empty() {
            checkpoints.push(horizon);
        }
        if *checkpoints.last().unwrap() > horizon {
            return Err(CoreError::InvalidParameter(
                "checkpoints exceed the horizon".into(),
            ));
        }
        Ok(WalkConfig {
            spec,
            measure,
            horizon,
            walkers,
            seed,
            checkpoints,
        })
    }
}

/// Class key of a user-supplied admissible relation: (projection, time) to
/// a collision-resistant label.
pub type RelationPlugin = Arc<dyn Fn(&[i64], usize) -> u64 + Send + Sync>;

/// Equivalence relations on (element, time) pairs that never identify two
/// distinct states at the same time instant.
#[derive(Clone)]
pub enum AdmissibleRelation {
    /// `(x,i) ~ (y,j)` iff `x = y`: the plain range.
    Identity,
    /// Classes are one-dimensional spans of conjugate vectors: states with
    /// the same conjugation action on the unipotent part are identified.
    ConjugateVector,
    /// User-supplied class key on (projection, time).
    UserPlugin(RelationPlugin),
}

impl std::fmt::Debug for AdmissibleRelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdmissibleRelation::Identity => write!(f, "Identity"),
            AdmissibleRelation::ConjugateVector => write!(f, "ConjugateVector"),
            AdmissibleRelation::UserPlugin(_) => write!(f, "UserPlugin"),
        }
    }
}

/// Scaling functions for the cautiousness probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CautiousScale {
    Sqrt,
    Linear,
}

impl CautiousScale {
    pub fn apply(&self, n: usize) -> f64 {
        match self {
            CautiousScale::Sqrt => (n as f64).sqrt(),
            CautiousScale::Linear => n as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

fn mean_se(sum: f64, sumsq: f64, n: usize) -> MeanSe {
    let n_f = n as f64;
    let mean = sum / n_f;
    let var = (sumsq / n_f - mean * mean).max(0.0);
    MeanSe {
        mean,
        se: (var / n_f).sqrt(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkStats {
    pub checkpoints: Vec<usize>,
    pub walkers: usize,
    pub seed: u64,
    /// Mean number of distinct elements visited by each checkpoint.
    pub range: Vec<MeanSe>,
    /// Mean number of equivalence classes hit, for the chosen relation.
    pub gen_range: Vec<MeanSe>,
    /// Mean Euclidean norm of the abelian (diagonal-exponent) projection.
    pub drift: Vec<MeanSe>,
    /// Fraction of walkers exactly at the identity.
    pub return_freq: Vec<MeanSe>,
    /// Mean rank over the coefficient field of conjugate vectors collected
    /// at delta-steps, and the mean number of delta-steps.
    pub delta_rank: Option<Vec<MeanSe>>,
    pub delta_steps: Option<Vec<MeanSe>>,
    /// Mean number of sequence hits `proj(X_t) = gamma_t`, when a target
    /// sequence was supplied.
    pub hits: Option<Vec<MeanSe>>,
    /// Cautiousness table when requested: one row per (checkpoint, epsilon).
    pub cautious: Option<Vec<CautiousCell>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CautiousCell {
    pub checkpoint: usize,
    pub epsilon: f64,
    pub radius: f64,
    pub prob: f64,
    pub se: f64,
}

/// Which statistics the engine accumulates.
#[derive(Clone, Debug, Default)]
pub struct StatSelect {
    pub range: bool,
    pub gen_range: bool,
    pub drift: bool,
    pub return_freq: bool,
    pub delta: bool,
    pub hits: bool,
    pub cautious: Option<(CautiousScale, Vec<f64>)>,
    /// Colored delta-steps: each delta-step independently keeps its
    /// conjugate vector with this probability (still counted as a
    /// delta-step). `None` keeps every vector.
    pub delta_color_prob: Option<f64>,
}

impl StatSelect {
    pub fn all_cheap() -> Self {
        StatSelect {
            range: true,
            gen_range: true,
            drift: true,
            return_freq: true,
            delta: true,
            hits: false,
            cautious: None,
            delta_color_prob: None,
        }
    }
}

// --- precomputation -------------------------------------------------------

#[derive(Clone)]
struct AtomInfo {
    matrix: UTMatrix,
    /// exponent matrix of the diagonal (n rows of nvars), when monomial
    diag_exps: Option<Vec<Vec<i32>>>,
    /// diagonal constants mod p (char p) when monomial
    diag_units_p: Option<Vec<u64>>,
    /// diagonal constant signs over Q, when all constants are +-1
    diag_signs: Option<Vec<i8>>,
    unipotent: bool,
    identity: bool,
    /// terms of m01/m11 for 2x2 over F_p with monomial diagonal: the lamp
    /// contribution before conjugation by the current state
    lamp_terms: Option<Vec<(Vec<i32>, u64)>>,
}

struct Engine {
    spec: GroupSpec,
    atoms: Vec<AtomInfo>,
    lazification: f64,
    cum: Vec<f64>,
    mode: Mode,
    nvars: usize,
    n: usize,
    p: u64, // characteristic, 0 for Q
    ctx: FingerprintCtx,
    /// delta-step atom indices, lazy steps counted when `delta_on_lazy`
    delta_atoms: Vec<bool>,
    delta_on_lazy: bool,
    /// lamp terms of the delta pair difference (for explicit pairs)
    delta_terms: Option<Vec<(Vec<i32>, u64)>>,
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Mode {
    DiagOnly,
    Lamp2,
    Exact,
}

fn atom_info(spec: &GroupSpec, word: &Word, p: u64) -> Result<AtomInfo, CoreError> {
    let m = spec.eval_word(word)?;
    let n = m.n;
    let mut diag_exps = Some(Vec::new());
    let mut diag_units_p = Some(Vec::new());
    let mut diag_signs = Some(Vec::new());
    for i in 0..n {
        let d = m.at(i, i);
        match (d.den.is_one(), d.num.as_monomial()) {
            (true, Some((e, c))) => {
                if let Some(v) = diag_exps.as_mut() {
                    v.push(e.clone());
                }
                match c {
                    Coef::Fp(u) => {
                        if let Some(v) = diag_units_p.as_mut() {
                            v.push(*u);
                        }
                        diag_signs = None;
                    }
                    Coef::Rat(r) => {
                        diag_units_p = None;
                        use num_traits::One;
                        let is_one = r.is_one();
                        let is_neg_one = (-r).is_one();
                        if is_one || is_neg_one {
                            if let Some(v) = diag_signs.as_mut() {
                                v.push(if is_one { 1 } else { -1 });
                            }
                        } else {
                            diag_signs = None;
                        }
                    }
                }
            }
            _ => {
                diag_exps = None;
                diag_units_p = None;
                diag_signs = None;
                break;
            }
        }
    }
    // lamp contribution for 2x2 char p with monomial diagonal: m01 / m11
    let lamp_terms = if n == 2 && p > 0 && diag_exps.is_some() {
        let upper = m.at(0, 1);
        let d11 = m.at(1, 1);
        match upper.mul(&d11.inv()?) {
            Ok(ratio) if ratio.den.is_one() => Some(
                ratio
                    .num
                    .terms
                    .iter()
                    .map(|(e, c)| match c {
                        Coef::Fp(u) => (e.clone(), *u),
                        Coef::Rat(_) => unreachable!("char p poly with rational coefficient"),
                    })
                    .collect(),
            ),
            _ => None,
        }
    } else {
        None
    };
    Ok(AtomInfo {
        identity: m.is_identity(),
        unipotent: m.is_unipotent(),
        matrix: m,
        diag_exps,
        diag_units_p,
        diag_signs,
        lamp_terms,
    })
}

impl Engine {
    fn build(
        config: &WalkConfig,
        delta: Option<&(Word, Word)>,
    ) -> Result<Self, CoreError> {
        let spec = config.spec.clone();
        let p = spec.field.characteristic();
        let mut atoms = Vec::new();
        for (word, _) in &config.measure.atoms {
            atoms.push(atom_info(&spec, word, p)?);
        }
        let mut cum = Vec::with_capacity(atoms.len());
        let mut acc = config.measure.lazification;
        for (_, w) in &config.measure.atoms {
            acc += w;
            cum.push(acc);
        }

        let all_diag_monomial = atoms
            .iter()
            .all(|a| a.diag_exps.is_some() && (a.diag_units_p.is_some() || a.diag_signs.is_some()));
        let all_diagonal_matrices = atoms.iter().all(|a| {
            let m = &a.matrix;
            (0..m.n).all(|i| (i + 1..m.n).all(|j| m.at(i, j).is_zero()))
        });
        let mode = if all_diag_monomial && all_diagonal_matrices {
            Mode::DiagOnly
        } else if spec.n == 2
            && p > 0
            && all_diag_monomial
            && atoms.iter().all(|a| a.lamp_terms.is_some())
        {
            Mode::Lamp2
        } else {
            Mode::Exact
        };

        // Delta steps: an explicit same-coset pair, or by default every atom
        // with trivial diagonal (a unipotent increment).
        let mut delta_atoms = vec![false; atoms.len()];
        let mut delta_on_lazy = false;
        let mut delta_terms = None;
        match delta {
            Some((w1, w2)) => {
                let m1 = spec.eval_word(w1)?;
                let m2 = spec.eval_word(w2)?;
                let diff = m1.inv()?.mul(&m2)?;
                if !diff.is_unipotent() {
                    return Err(CoreError::InvalidParameter(
                        "delta pair does not share a coset modulo the unipotent part".into(),
                    ));
                }
                for (idx, (word, _)) in config.measure.atoms.iter().enumerate() {
                    let m = spec.eval_word(word)?;
                    if m == m1 || m == m2 {
                        delta_atoms[idx] = true;
                    }
                }
                if m1.is_identity() || m2.is_identity() {
                    delta_on_lazy = config.measure.lazification > 0.0;
                }
                if spec.n == 2 && p > 0 {
                    let info = atom_info(
                        &spec,
                        &crate::matrix::invert_word(w1)
                            .into_iter()
                            .chain(w2.iter().cloned())
                            .collect::<Vec<_>>(),
                        p,
                    )?;
                    delta_terms = info.lamp_terms;
                }
            }
            None => {
                for (idx, a) in atoms.iter().enumerate() {
                    if a.unipotent && !a.identity {
                        delta_atoms[idx] = true;
                    }
                }
            }
        }

        Ok(Engine {
            nvars: spec.nvars,
            n: spec.n,
            p,
            ctx: FingerprintCtx::new(rng::derive(config.seed, "walk-fingerprints"), spec.nvars),
            spec,
            atoms,
            lazification: config.measure.lazification,
            cum,
            mode,
            delta_atoms,
            delta_on_lazy,
            delta_terms,
        })
    }

    fn sample(&self, u: f64) -> Option<usize> {
        if u < self.lazification {
            return None;
        }
        match self.cum.iter().position(|&c| u < c) {
            Some(i) => Some(i),
            None => {
                if self.cum.is_empty() {
                    None
                } else {
                    Some(self.cum.len() - 1)
                }
            }
        }
    }
}

// --- walker state ----------------------------------------------------------

#[derive(Clone)]
struct FastState {
    /// exponent matrix of the diagonal: n rows of nvars
    exps: Vec<i32>,
    units_p: Vec<u64>,
    signs: Vec<i8>,
    modulus: u64,
    /// sparse unipotent part over F_p (Lamp2 mode)
    lamp: HashMap<Vec<i32>, u64>,
    lamp_hash: u64,
    lamp_hash2: u64,
}

fn site_hash(e: &[i32], v: u64, salt: u64) -> u64 {
    let mut h = salt;
    for &x in e {
        h = rng::splitmix64(h ^ x as u64);
    }
    rng::splitmix64(h ^ v)
}

impl FastState {
    fn new(n: usize, nvars: usize, p: u64) -> Self {
        FastState {
            exps: vec![0; n * nvars],
            units_p: vec![1; if p > 0 { n } else { 0 }],
            signs: vec![1; if p > 0 { 0 } else { n }],
            modulus: p.max(2),
            lamp: HashMap::new(),
            lamp_hash: 0,
            lamp_hash2: 0,
        }
    }

    fn apply_diag(&mut self, info: &AtomInfo, nvars: usize) {
        let de = info.diag_exps.as_ref().unwrap();
        for (i, row) in de.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                self.exps[i * nvars + k] += v;
            }
        }
        if let Some(units) = &info.diag_units_p {
            let p = self.modulus;
            for (i, &u) in units.iter().enumerate() {
                self.units_p[i] = ((self.units_p[i] as u128 * u as u128) % p as u128) as u64;
            }
        } else if let Some(signs) = &info.diag_signs {
            for (i, &s) in signs.iter().enumerate() {
                self.signs[i] *= s;
            }
        }
    }

    fn is_identity(&self) -> bool {
        self.exps.iter().all(|&x| x == 0)
            && self.units_p.iter().all(|&u| u == 1)
            && self.signs.iter().all(|&s| s == 1)
            && self.lamp.is_empty()
    }

    fn element_key(&self) -> (u64, u64) {
        let mut h1 = 0x6a09e667f3bcc908u64;
        let mut h2 = 0xbb67ae8584caa73bu64;
        for &x in &self.exps {
            h1 = rng::splitmix64(h1 ^ x as u64);
            h2 = rng::splitmix64(h2.rotate_left(13) ^ x as u64);
        }
        for &u in &self.units_p {
            h1 = rng::splitmix64(h1 ^ u);
            h2 = rng::splitmix64(h2.rotate_left(13) ^ u);
        }
        for &s in &self.signs {
            h1 = rng::splitmix64(h1 ^ s as u64);
            h2 = rng::splitmix64(h2.rotate_left(13) ^ s as u64);
        }
        (
            h1 ^ self.lamp_hash,
            h2 ^ self.lamp_hash2 ^ (self.lamp.len() as u64) << 32,
        )
    }
}

#[derive(Clone, Default)]
struct ChunkAcc {
    walkers: usize,
    range_sum: Vec<f64>,
    range_sq: Vec<f64>,
    gen_sum: Vec<f64>,
    gen_sq: Vec<f64>,
    drift_sum: Vec<f64>,
    drift_sq: Vec<f64>,
    return_count: Vec<u64>,
    delta_rank_sum: Vec<f64>,
    delta_rank_sq: Vec<f64>,
    delta_steps_sum: Vec<f64>,
    delta_steps_sq: Vec<f64>,
    hits_sum: Vec<f64>,
    hits_sq: Vec<f64>,
    cautious_count: Vec<u64>, // (checkpoint, epsilon) row-major
}

impl ChunkAcc {
    fn new(n_ck: usize, n_eps: usize) -> Self {
        ChunkAcc {
            walkers: 0,
            range_sum: vec![0.0; n_ck],
            range_sq: vec![0.0; n_ck],
            gen_sum: vec![0.0; n_ck],
            gen_sq: vec![0.0; n_ck],
            drift_sum: vec![0.0; n_ck],
            drift_sq: vec![0.0; n_ck],
            return_count: vec![0; n_ck],
            delta_rank_sum: vec![0.0; n_ck],
            delta_rank_sq: vec![0.0; n_ck],
            delta_steps_sum: vec![0.0; n_ck],
            delta_steps_sq: vec![0.0; n_ck],
            hits_sum: vec![0.0; n_ck],
            hits_sq: vec![0.0; n_ck],
            cautious_count: vec![0; n_ck * n_eps],
        }
    }

    fn merge(&mut self, other: &ChunkAcc) {
        self.walkers += other.walkers;
        let pairs: [(&mut Vec<f64>, &Vec<f64>); 12] = [
            (&mut self.range_sum, &other.range_sum),
            (&mut self.range_sq, &other.range_sq),
            (&mut self.gen_sum, &other.gen_sum),
            (&mut self.gen_sq, &other.gen_sq),
            (&mut self.drift_sum, &other.drift_sum),
            (&mut self.drift_sq, &other.drift_sq),
            (&mut self.delta_rank_sum, &other.delta_rank_sum),
            (&mut self.delta_rank_sq, &other.delta_rank_sq),
            (&mut self.delta_steps_sum, &other.delta_steps_sum),
            (&mut self.delta_steps_sq, &other.delta_steps_sq),
            (&mut self.hits_sum, &other.hits_sum),
            (&mut self.hits_sq, &other.hits_sq),
        ];
        for (dst, src) in pairs {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
        for (a, b) in self.return_count.iter_mut().zip(&other.return_count) {
            *a += b;
        }
        for (a, b) in self.cautious_count.iter_mut().zip(&other.cautious_count) {
            *a += b;
        }
    }
}

/// Run the walk and collect the selected statistics.
pub fn simulate_select(
    config: &WalkConfig,
    relation: &AdmissibleRelation,
    delta: Option<&(Word, Word)>,
    gamma: Option<&[Vec<i64>]>,
    select: &StatSelect,
) -> Result<WalkStats, CoreError> {
    let engine = Engine::build(config, delta)?;
    if select.gen_range {
        validate_relation(&engine, relation, config)?;
    }
    if let Some(g) = gamma {
        if g.len() < config.horizon {
            return Err(CoreError::InvalidParameter(
                "target sequence shorter than the horizon".into(),
            ));
        }
    }

    let n_ck = config.checkpoints.len();
    let epsilons: Vec<f64> = select
        .cautious
        .as_ref()
        .map(|(_, e)| e.clone())
        .unwrap_or_default();
    let n_eps = epsilons.len();
    let scale = select.cautious.as_ref().map(|(s, _)| *s);

    // enough chunks to load every worker, big enough to amortize per-chunk
    // accumulator setup
    let chunk_size = (config.walkers / 64).clamp(1, 1024);
    let n_chunks = config.walkers.div_ceil(chunk_size);

    let chunks = parallel::map_indexed(n_chunks, |chunk| {
        let mut acc = ChunkAcc::new(n_ck, n_eps);
        let lo = chunk * chunk_size;
        let hi = ((chunk + 1) * chunk_size).min(config.walkers);
        for w in lo..hi {
            run_walker(
                &engine, config, relation, gamma, select, &epsilons, scale, w, &mut acc,
            );
            acc.walkers += 1;
        }
        acc
    });
    let mut total = ChunkAcc::new(n_ck, n_eps);
    for c in &chunks {
        total.merge(c);
    }

    let nw = config.walkers;
    let per_ck = |sum: &Vec<f64>, sq: &Vec<f64>| -> Vec<MeanSe> {
        sum.iter()
            .zip(sq)
            .map(|(&s, &s2)| mean_se(s, s2, nw))
            .collect()
    };
    let return_freq: Vec<MeanSe> = total
        .return_count
        .iter()
        .map(|&c| {
            let p = c as f64 / nw as f64;
            MeanSe {
                mean: p,
                se: (p * (1.0 - p) / nw as f64).sqrt(),
            }
        })
        .collect();
    let cautious = select.cautious.as_ref().map(|(sc, eps)| {
        let mut rows = Vec::new();
        for (ci, &ck) in config.checkpoints.iter().enumerate() {
            for (ei, &e) in eps.iter().enumerate() {
                let count = total.cautious_count[ci * n_eps + ei];
                let p = count as f64 / nw as f64;
                rows.push(CautiousCell {
                    checkpoint: ck,
                    epsilon: e,
                    radius: e * sc.apply(ck),
                    prob: p,
                    se: (p * (1.0 - p) / nw as f64).sqrt(),
                });
            }
        }
        rows
    });

    Ok(WalkStats {
        checkpoints: config.checkpoints.clone(),
        walkers: nw,
        seed: config.seed,
        range: per_ck(&total.range_sum, &total.range_sq),
        gen_range: per_ck(&total.gen_sum, &total.gen_sq),
        drift: per_ck(&total.drift_sum, &total.drift_sq),
        return_freq,
        delta_rank: if select.delta {
            Some(per_ck(&total.delta_rank_sum, &total.delta_rank_sq))
        } else {
            None
        },
        delta_steps: if select.delta {
            Some(per_ck(&total.delta_steps_sum, &total.delta_steps_sq))
        } else {
            None
        },
        hits: if select.hits {
            Some(per_ck(&total.hits_sum, &total.hits_sq))
        } else {
            None
        },
        cautious,
    })
}

/// Full default statistics, as used by the pipeline.
pub fn simulate(
    config: &WalkConfig,
    relation: &AdmissibleRelation,
    delta: Option<&(Word, Word)>,
) -> Result<WalkStats, CoreError> {
    simulate_select(config, relation, delta, None, &StatSelect::all_cheap())
}

#[allow(clippy::too_many_arguments)]
fn run_walker(
    engine: &Engine,
    config: &WalkConfig,
    relation: &AdmissibleRelation,
    gamma: Option<&[Vec<i64>]>,
    select: &StatSelect,
    epsilons: &[f64],
    scale: Option<CautiousScale>,
    walker: usize,
    acc: &mut ChunkAcc,
) {
    let mut rng = rng::chacha(rng::derive_indexed(config.seed, "walker", walker as u64));
    let nvars = engine.nvars;
    let n = engine.n;

    let mut exact = match engine.mode {
        Mode::Exact => Some(UTMatrix::identity(engine.spec.field, nvars, n)),
        _ => None,
    };
    let mut fast = FastState::new(n, nvars, engine.p);

    let mut visited: HashSet<(u64, u64)> = HashSet::new();
    let mut classes: HashSet<u64> = HashSet::new();
    let mut dropped: HashSet<Vec<i32>> = HashSet::new();
    let mut rank_rows = FpRank::new(engine.p.max(2));
    let mut monomial_rank_only = true;
    let mut delta_steps = 0u64;
    let mut hits = 0u64;
    let mut max_norm: f64 = 0.0;

    if select.range {
        visited.insert(element_key(engine, &fast, exact.as_ref()));
    }
    if select.gen_range {
        classes.insert(class_key(engine, relation, &fast, exact.as_ref(), 0));
    }

    let mut ck_idx = 0usize;
    for t in 1..=config.horizon {
        let u = rng.gen::<f64>();
        let choice = engine.sample(u);

        // delta bookkeeping uses the state *before* the increment
        let is_delta = match choice {
            None => engine.delta_on_lazy,
            Some(i) => engine.delta_atoms[i],
        };
        if select.delta && is_delta {
            delta_steps += 1;
            let colored = match select.delta_color_prob {
                None => true,
                Some(p) => rng.gen::<f64>() < p,
            };
            let conj_terms: Option<&Vec<(Vec<i32>, u64)>> = if !colored {
                None
            } else {
                match &engine.delta_terms {
                    Some(tms) => Some(tms),
                    None => choice.and_then(|i| engine.atoms[i].lamp_terms.as_ref()),
                }
            };
            match (engine.mode, conj_terms, colored) {
                (_, _, false) => {}
                (Mode::Lamp2, Some(terms), _) => {
                    let phi: Vec<i32> = (0..nvars)
                        .map(|k| fast.exps[k] - fast.exps[nvars + k])
                        .collect();
                    if terms.len() == 1 {
                        let e: Vec<i32> =
                            terms[0].0.iter().zip(&phi).map(|(a, b)| a + b).collect();
                        dropped.insert(e);
                    } else {
                        monomial_rank_only = false;
                        let row: Vec<(Vec<i32>, u64)> = terms
                            .iter()
                            .map(|(e, c)| {
                                (e.iter().zip(&phi).map(|(a, b)| a + b).collect(), *c)
                            })
                            .collect();
                        rank_rows.add_row(row);
                    }
                }
                _ => {
                    // conjugate class keyed by the phi-monomial of the state
                    let phi: Vec<i32> = phi_exps(engine, &fast, exact.as_ref())
                        .iter()
                        .map(|&x| x as i32)
                        .collect();
                    dropped.insert(phi);
                }
            }
        }

        match choice {
            None => {}
            Some(idx) => {
                let info = &engine.atoms[idx];
                match engine.mode {
                    Mode::DiagOnly => fast.apply_diag(info, nvars),
                    Mode::Lamp2 => {
                        // unip * diag normal form: lamp += (b/d) * phi(state)
                        let terms = info.lamp_terms.as_ref().unwrap();
                        if !terms.is_empty() {
                            let phi: Vec<i32> = (0..nvars)
                                .map(|k| fast.exps[k] - fast.exps[nvars + k])
                                .collect();
                            let phi_unit = unit_ratio(&fast, engine.p);
                            for (e, c) in terms {
                                let key: Vec<i32> =
                                    e.iter().zip(&phi).map(|(a, b)| a + b).collect();
                                let add = ((*c as u128 * phi_unit as u128)
                                    % engine.p as u128)
                                    as u64;
                                lamp_add(&mut fast, key, add, engine.p);
                            }
                        }
                        fast.apply_diag(info, nvars);
                    }
                    Mode::Exact => {
                        let m = exact.take().unwrap();
                        exact = Some(m.mul(&info.matrix).expect("same spec"));
                    }
                }
            }
        }

        // statistics at this time step
        if select.range {
            visited.insert(element_key(engine, &fast, exact.as_ref()));
        }
        if select.gen_range {
            classes.insert(class_key(engine, relation, &fast, exact.as_ref(), t));
        }
        let proj = proj_of(engine, &fast, exact.as_ref());
        if select.cautious.is_some() || select.drift {
            let norm = proj.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            max_norm = max_norm.max(norm);
        }
        if select.hits {
            if let Some(g) = gamma {
                if g[t - 1] == proj {
                    hits += 1;
                }
            }
        }

        if ck_idx < config.checkpoints.len() && t == config.checkpoints[ck_idx] {
            record_checkpoint(
                engine, config, select, epsilons, scale, acc, ck_idx, t, &fast,
                exact.as_ref(), &visited, &classes, &dropped, &rank_rows,
                monomial_rank_only, delta_steps, hits, max_norm,
            );
            ck_idx += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn record_checkpoint(
    engine: &Engine,
    _config: &WalkConfig,
    select: &StatSelect,
    epsilons: &[f64],
    scale: Option<CautiousScale>,
    acc: &mut ChunkAcc,
    ck_idx: usize,
    t: usize,
    fast: &FastState,
    exact: Option<&UTMatrix>,
    visited: &HashSet<(u64, u64)>,
    classes: &HashSet<u64>,
    dropped: &HashSet<Vec<i32>>,
    rank_rows: &FpRank,
    monomial_rank_only: bool,
    delta_steps: u64,
    hits: u64,
    max_norm: f64,
) {
    if select.range {
        let r = visited.len() as f64;
        acc.range_sum[ck_idx] += r;
        acc.range_sq[ck_idx] += r * r;
    }
    if select.gen_range {
        let g = classes.len() as f64;
        acc.gen_sum[ck_idx] += g;
        acc.gen_sq[ck_idx] += g * g;
    }
    if select.drift {
        let proj = proj_of(engine, fast, exact);
        let norm = proj
            .iter()
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            .sqrt();
        acc.drift_sum[ck_idx] += norm;
        acc.drift_sq[ck_idx] += norm * norm;
    }
    if select.return_freq {
        let at_id = match exact {
            Some(m) => m.is_identity(),
            None => fast.is_identity(),
        };
        if at_id {
            acc.return_count[ck_idx] += 1;
        }
    }
    if select.delta {
        let rank = if monomial_rank_only {
            dropped.len() as f64
        } else {
            (dropped.len() + rank_rows.rank()) as f64
        };
        acc.delta_rank_sum[ck_idx] += rank;
        acc.delta_rank_sq[ck_idx] += rank * rank;
        let ds = delta_steps as f64;
        acc.delta_steps_sum[ck_idx] += ds;
        acc.delta_steps_sq[ck_idx] += ds * ds;
    }
    if select.hits {
        let h = hits as f64;
        acc.hits_sum[ck_idx] += h;
        acc.hits_sq[ck_idx] += h * h;
    }
    if let Some(sc) = scale {
        for (ei, &e) in epsilons.iter().enumerate() {
            if max_norm < e * sc.apply(t) {
                acc.cautious_count[ck_idx * epsilons.len() + ei] += 1;
            }
        }
    }
}

fn unit_ratio(fast: &FastState, p: u64) -> u64 {
    if fast.units_p.is_empty() {
        return 1;
    }
    let num = fast.units_p[0];
    let den = fast.units_p[1];
    let den_inv = crate::poly::mod_inv_pub(den, p);
    ((num as u128 * den_inv as u128) % p as u128) as u64
}

fn lamp_add(fast: &mut FastState, key: Vec<i32>, add: u64, p: u64) {
    let h1 = site_hash(&key, 0, 0x517cc1b727220a95);
    let h2 = site_hash(&key, 0, 0x2545f4914f6cdd1d);
    match fast.lamp.get_mut(&key) {
        Some(v) => {
            let old = *v;
            let nv = (old + add) % p;
            // rolling hash: remove old (site,value), add new
            fast.lamp_hash ^= rng::splitmix64(h1 ^ old);
            fast.lamp_hash2 ^= rng::splitmix64(h2 ^ old);
            if nv == 0 {
                fast.lamp.remove(&key);
            } else {
                *v = nv;
                fast.lamp_hash ^= rng::splitmix64(h1 ^ nv);
                fast.lamp_hash2 ^= rng::splitmix64(h2 ^ nv);
            }
        }
        None => {
            if !add.is_multiple_of(p) {
                let nv = add % p;
                fast.lamp_hash ^= rng::splitmix64(h1 ^ nv);
                fast.lamp_hash2 ^= rng::splitmix64(h2 ^ nv);
                fast.lamp.insert(key, nv);
            }
        }
    }
}

fn element_key(engine: &Engine, fast: &FastState, exact: Option<&UTMatrix>) -> (u64, u64) {
    match exact {
        None => fast.element_key(),
        Some(m) => {
            if let Some(k) = m.laurent_key() {
                let mut h1 = 0x243f6a8885a308d3u64;
                let mut h2 = 0x13198a2e03707344u64;
                for b in k.bytes() {
                    h1 = rng::splitmix64(h1 ^ b as u64);
                    h2 = rng::splitmix64(h2.rotate_left(7) ^ b as u64);
                }
                (h1, h2)
            } else if let Some(rows) = m.fingerprint_rows(&engine.ctx) {
                let d = FingerprintCtx::digest(rows);
                ((d >> 64) as u64, d as u64)
            } else {
                // pole in stored entries at the session points: fall back to
                // the canonical display, exact but slow
                let mut h1 = 0xa4093822299f31d0u64;
                let mut h2 = 0x082efa98ec4e6c89u64;
                for b in format!("{m}").bytes() {
                    h1 = rng::splitmix64(h1 ^ b as u64);
                    h2 = rng::splitmix64(h2.rotate_left(7) ^ b as u64);
                }
                (h1, h2)
            }
        }
    }
}

fn proj_of(engine: &Engine, fast: &FastState, exact: Option<&UTMatrix>) -> Vec<i64> {
    match exact {
        None => {
            let nvars = engine.nvars;
            let mut out = vec![0i64; nvars];
            for i in 0..engine.n {
                for k in 0..nvars {
                    out[k] += fast.exps[i * nvars + k] as i64;
                }
            }
            out
        }
        Some(m) => {
            let mut out = vec![0i64; engine.nvars];
            for i in 0..m.n {
                let d = m.at(i, i);
                if d.den.is_one() {
                    if let Some((e, _)) = d.num.as_monomial() {
                        for (k, &v) in e.iter().enumerate() {
                            out[k] += v as i64;
                        }
                    }
                }
            }
            out
        }
    }
}

/// Exponent vector of the conjugation monomial phi = d_1/d_2 for 2x2 states
/// (the span label of conjugate vectors); falls back to the full diagonal
/// projection for larger matrices.
fn phi_exps(engine: &Engine, fast: &FastState, exact: Option<&UTMatrix>) -> Vec<i64> {
    if engine.n == 2 {
        match exact {
            None => {
                return (0..engine.nvars)
                    .map(|k| (fast.exps[k] - fast.exps[engine.nvars + k]) as i64)
                    .collect()
            }
            Some(m) => {
                let d0 = m.at(0, 0);
                let d1 = m.at(1, 1);
                if d0.den.is_one() && d1.den.is_one() {
                    if let (Some((e0, _)), Some((e1, _))) =
                        (d0.num.as_monomial(), d1.num.as_monomial())
                    {
                        return e0
                            .iter()
                            .zip(e1)
                            .map(|(a, b)| (*a - *b) as i64)
                            .collect();
                    }
                }
            }
        }
    }
    proj_of(engine, fast, exact)
}

fn class_key(
    engine: &Engine,
    relation: &AdmissibleRelation,
    fast: &FastState,
    exact: Option<&UTMatrix>,
    t: usize,
) -> u64 {
    match relation {
        AdmissibleRelation::Identity => {
            let (a, b) = element_key(engine, fast, exact);
            rng::splitmix64(a ^ b.rotate_left(17))
        }
        AdmissibleRelation::ConjugateVector => {
            // class = the span of the conjugate vector = the phi-monomial of
            // the current diagonal
            let key = phi_exps(engine, fast, exact);
            let mut h = 0x452821e638d01377u64;
            for x in key {
                h = rng::splitmix64(h ^ x as u64);
            }
            h
        }
        AdmissibleRelation::UserPlugin(f) => f(&proj_of(engine, fast, exact), t),
    }
}

/// Sample short walks and verify that the relation never identifies two
/// distinct states at the same time instant.
fn validate_relation(
    engine: &Engine,
    relation: &AdmissibleRelation,
    config: &WalkConfig,
) -> Result<(), CoreError> {
    if matches!(relation, AdmissibleRelation::Identity) {
        return Ok(());
    }
    let steps = config.horizon.min(40);
    let mut seen: HashMap<(usize, u64), (u64, u64)> = HashMap::new();
    let samples = 100usize.min(config.walkers * 4);
    for w in 0..samples {
        let mut rng = rng::chacha(rng::derive_indexed(config.seed, "relation-check", w as u64));
        let mut fast = FastState::new(engine.n, engine.nvars, engine.p);
        let mut exact = match engine.mode {
            Mode::Exact => Some(UTMatrix::identity(engine.spec.field, engine.nvars, engine.n)),
            _ => None,
        };
        for t in 1..=steps {
            let u = rng.gen::<f64>();
            if let Some(idx) = engine.sample(u) {
                let info = &engine.atoms[idx];
                match engine.mode {
                    Mode::DiagOnly | Mode::Lamp2 => fast.apply_diag(info, engine.nvars),
                    Mode::Exact => {
                        let m = exact.take().unwrap();
                        exact = Some(m.mul(&info.matrix).expect("same spec"));
                    }
                }
            }
            // admissibility is about the projected (acting) state: distinct
            // diagonal states at equal times must get distinct class keys
            let state: (u64, u64) = {
                let mut h1 = 0u64;
                let mut h2 = 0u64;
                for &x in &fast.exps {
                    h1 = rng::splitmix64(h1 ^ x as u64);
                    h2 = rng::splitmix64(h2.rotate_left(9) ^ x as u64);
                }
                if let Some(m) = exact.as_ref() {
                    for x in proj_of(engine, &fast, Some(m)) {
                        h1 = rng::splitmix64(h1 ^ x as u64);
                        h2 = rng::splitmix64(h2.rotate_left(9) ^ x as u64);
                    }
                }
                (h1, h2)
            };
            let key = class_key(engine, relation, &fast, exact.as_ref(), t);
            if let Some(prev) = seen.get(&(t, key)) {
                if *prev != state {
                    return Err(CoreError::InadmissibleRelation(
                        format!("{prev:?}"),
                        format!("{state:?}"),
                        t,
                    ));
                }
            } else {
                seen.insert((t, key), state);
            }
        }
    }
    Ok(())
}

// --- sparse rank over F_p ---------------------------------------------------

/// Incremental row-echelon rank accumulator for sparse rows over `F_p`.
pub struct FpRank {
    p: u64,
    /// pivot leading exponent -> normalized row
    pivots: HashMap<Vec<i32>, Vec<(Vec<i32>, u64)>>,
}

impl FpRank {
    pub fn new(p: u64) -> Self {
        FpRank {
            p,
            pivots: HashMap::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Reduce the row against the basis; insert the remainder as a new pivot
    /// if nonzero. Returns true when the rank grew.
    pub fn add_row(&mut self, row: Vec<(Vec<i32>, u64)>) -> bool {
        let p = self.p;
        let mut work: std::collections::BTreeMap<Vec<i32>, u64> = row
            .into_iter()
            .filter(|(_, c)| c % p != 0)
            .map(|(e, c)| (e, c % p))
            .collect();
        loop {
            let Some((lead, &coef)) = work.iter().next_back() else {
                return false;
            };
            let lead = lead.clone();
            match self.pivots.get(&lead) {
                None => {
                    // normalize so the leading coefficient is 1
                    let inv = crate::poly::mod_inv_pub(coef, p);
                    let normalized: Vec<(Vec<i32>, u64)> = work
                        .iter()
                        .map(|(e, c)| (e.clone(), ((*c as u128 * inv as u128) % p as u128) as u64))
                        .collect();
                    self.pivots.insert(lead, normalized);
                    return true;
                }
                Some(pivot) => {
                    for (e, c) in pivot.clone() {
                        let sub = ((c as u128 * coef as u128) % p as u128) as u64;
                        let entry = work.entry(e).or_insert(0);
                        *entry = (*entry + p - sub) % p;
                    }
                    work.retain(|_, v| *v != 0);
                }
            }
        }
    }
}

// --- probes ----------------------------------------------------------------

/// Cautiousness probe: empirical `P[max_{m<=t} |proj(X_m)| < eps * f(t)]`.
pub fn cautiousness_probe(
    config: &WalkConfig,
    f: CautiousScale,
    epsilons: &[f64],
) -> Result<Vec<CautiousCell>, CoreError> {
    let select = StatSelect {
        drift: true,
        cautious: Some((f, epsilons.to_vec())),
        ..Default::default()
    };
    let stats = simulate_select(config, &AdmissibleRelation::Identity, None, None, &select)?;
    Ok(stats.cautious.unwrap())
}

/// One row of the span-criterion hypothesis check: for the cautious radius
/// `delta * f(n)` the obtainable set of the module must stay subexponential,
/// `log |obtainable| <= n log(1 + eps)` for some `delta = eps / 2^k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpanHypothesisRow {
    pub checkpoint: usize,
    pub epsilon: f64,
    /// The largest `delta = epsilon / 2^k` (k <= 6) satisfying the bound,
    /// when one exists.
    pub delta: Option<f64>,
    pub radius: usize,
    pub span_dimension: usize,
    pub log_obtainable: f64,
    pub budget: f64,
    pub satisfied: bool,
}

/// Cautiousness probe paired with the span growth of the associated module:
/// alongside each empirical cell, checks that the obtainable set at radius
/// `delta * f(n)` is small enough for entropy at rate `log(1 + eps)`.
pub fn cautiousness_with_span(
    config: &WalkConfig,
    f: CautiousScale,
    epsilons: &[f64],
    module: &crate::moduledim::ModuleSpec,
) -> Result<(Vec<CautiousCell>, Vec<SpanHypothesisRow>), CoreError> {
    let cells = cautiousness_probe(config, f, epsilons)?;
    // cardinality proxy per element of the spanned space: p in char p, and
    // the coefficient-count bound (n + 2) over Q
    let per_dim_log = |n: usize| match config.spec.field {
        crate::field::CoefficientField::PrimeField(p) => (p as f64).ln(),
        crate::field::CoefficientField::Rationals => ((n + 2) as f64).ln(),
    };
    let mut rows = Vec::new();
    for &n in &config.checkpoints {
        for &eps in epsilons {
            let budget = n as f64 * (1.0 + eps).ln();
            let mut found = None;
            let mut last = (0usize, 0usize, f64::INFINITY);
            for k in 0..=6u32 {
                let delta = eps / f64::powi(2.0, k as i32);
                let radius = (delta * f.apply(n)).ceil() as usize;
                let dim = crate::moduledim::span_dim(module, radius)?;
                let log_obtainable = dim as f64 * per_dim_log(n);
                last = (radius, dim, log_obtainable);
                if log_obtainable <= budget {
                    found = Some((delta, radius, dim, log_obtainable));
                    break;
                }
            }
            match found {
                Some((delta, radius, dim, log_obtainable)) => rows.push(SpanHypothesisRow {
                    checkpoint: n,
                    epsilon: eps,
                    delta: Some(delta),
                    radius,
                    span_dimension: dim,
                    log_obtainable,
                    budget,
                    satisfied: true,
                }),
                None => rows.push(SpanHypothesisRow {
                    checkpoint: n,
                    epsilon: eps,
                    delta: None,
                    radius: last.0,
                    span_dimension: last.1,
                    log_obtainable: last.2,
                    budget,
                    satisfied: false,
                }),
            }
        }
    }
    Ok((cells, rows))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransienceReport {
    pub checkpoints: Vec<usize>,
    /// empirical return frequency per checkpoint; None when no walker
    /// returned (never extrapolated)
    pub return_freq: Vec<Option<MeanSe>>,
    pub partial_sums: Vec<f64>,
    /// least-squares decay exponent of log p_t vs log t over even t
    pub fitted_exponent: Option<f64>,
    pub symmetric: bool,
    pub uniform_strong_transience_consistent: bool,
}

/// Empirical return frequencies, their partial sums and a fitted decay
/// exponent; flags consistency with uniform strong transience (summable
/// returns) when the fitted exponent exceeds 1.
pub fn strong_transience_probe(config: &WalkConfig) -> Result<TransienceReport, CoreError> {
    let select = StatSelect {
        return_freq: true,
        ..Default::default()
    };
    let stats = simulate_select(config, &AdmissibleRelation::Identity, None, None, &select)?;
    let symmetric = config.measure.is_symmetric_on_words();
    let mut return_freq = Vec::new();
    let mut partial = 0.0;
    let mut partial_sums = Vec::new();
    for (i, ck) in stats.checkpoints.iter().enumerate() {
        let cell = stats.return_freq[i];
        let observed = cell.mean > 0.0;
        partial += cell.mean;
        partial_sums.push(partial);
        return_freq.push(if observed { Some(cell) } else { None });
        let _ = ck;
    }
    // fit on even checkpoints with t >= 8 and an observed value
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &ck) in stats.checkpoints.iter().enumerate() {
        if ck % 2 == 0 && ck >= 8 {
            if let Some(cell) = &return_freq[i] {
                if cell.mean > 0.0 {
                    xs.push((ck as f64).ln());
                    ys.push(cell.mean.ln());
                }
            }
        }
    }
    let fitted_exponent = if xs.len() >= 3 {
        Some(-ls_slope(&xs, &ys))
    } else {
        None
    };
    Ok(TransienceReport {
        checkpoints: stats.checkpoints,
        return_freq,
        partial_sums,
        uniform_strong_transience_consistent: fitted_exponent.map(|e| e > 1.0).unwrap_or(false),
        symmetric,
        fitted_exponent,
    })
}

pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
