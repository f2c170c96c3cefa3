//! Staged construction of a recurrent convex-combination measure on a group
//! of at most quadratic growth (here `Z` or `Z^2` at desk scale).
//!
//! Stage `n` fixes a truncation `mu_bar_n` of the infinite convex
//! combination, finds a horizon `N_n` whose partial return-probability sum
//! (halved, absorbing the mass of later stages) reaches `n`, and reserves a
//! tail budget `b_n` with `N_n * b_n <= 1/2` so that later stages cannot
//! disturb the first `N_n` increments with probability more than one half.

use serde::{Deserialize, Serialize};

use crate::convolve::ZdMeasure;
use crate::error::CoreError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTriple {
    pub stage: usize,
    /// Unnormalized weight of this stage's component measure.
    pub a: f64,
    /// Horizon over which the partial sum was verified.
    pub n_horizon: usize,
    /// Tail budget for all later stages combined (normalized mass).
    pub b: f64,
    /// `C_n`: the stage constant with `mu_bar_n^{*t}(e) >= C_n / n` for all
    /// even `t <= N_n`.
    pub c: f64,
    /// `(1/2) * sum over even t <= N_n of mu_bar_n^{*t}(e)`.
    pub half_partial_sum: f64,
    /// The truncated convex-combination measure at this stage.
    pub truncated_atoms: Vec<(Vec<i32>, f64)>,
}

/// Component measure of each stage: the plain simple random walk on `Z`, and
/// a strongly lazified one on `Z^2` (large holding mass keeps the exactly
/// verifiable horizons at desk scale; laziness preserves symmetry and the
/// finite second moment).
fn stage_component(growth_degree: usize) -> ZdMeasure {
    match growth_degree {
        1 => ZdMeasure::srw(1, 0.0),
        _ => ZdMeasure::srw(2, 0.95),
    }
}

/// Build stage triples `(a_n, N_n, b_n)` for the recurrent measure on `Z`
/// (`growth_degree = 1`) or `Z^2` (`growth_degree = 2`).
pub fn recurrent_measure_stages(
    growth_degree: usize,
    stages: usize,
) -> Result<Vec<StageTriple>, CoreError> {
    if growth_degree == 0 || growth_degree > 2 {
        return Err(CoreError::InvalidParameter(
            "growth degree must be 1 or 2".into(),
        ));
    }
    let mut out = Vec::new();
    if stages == 0 {
        return Ok(out);
    }
    let component = stage_component(growth_degree);
    let horizon_cap = if growth_degree == 1 { 40_000 } else { 4_000 };

    let mut weights: Vec<f64> = vec![1.0];
    let mut prev_b = f64::INFINITY;
    for stage in 1..=stages {
        // mu_bar_n: normalized combination of the first `stage` components
        // (identical components here, so the mixture is the component; the
        // inequalities are still verified against the mixture for honesty).
        let total: f64 = weights.iter().sum();
        let parts: Vec<(f64, &ZdMeasure)> = weights
            .iter()
            .map(|w| (*w / total, &component))
            .collect();
        let truncated = ZdMeasure::mix(&parts)?;

        // grow the horizon until (1/2) * sum_{even t <= N} p_t >= stage
        let mut n_horizon = 0usize;
        let mut half_sum = 0.0;
        let mut min_even = f64::INFINITY;
        let mut probs = truncated.return_probs(64.min(horizon_cap))?;
        loop {
            let mut reached = false;
            let start = n_horizon + 1;
            for t in start..probs.len() {
                if t % 2 == 0 {
                    half_sum += probs[t] / 2.0;
                    min_even = min_even.min(probs[t]);
                }
                n_horizon = t;
                if half_sum >= stage as f64 {
                    reached = true;
                    break;
                }
            }
            if reached {
                break;
            }
            if probs.len() > horizon_cap {
                return Err(CoreError::StageInfeasible(format!(
                    "partial return-probability sum reached only {half_sum:.3} < {stage} \
                     by horizon {horizon_cap}"
                )));
            }
            let next_len = ((probs.len() - 1) * 2).min(horizon_cap);
            probs = truncated.return_probs(next_len)?;
        }
        // keep the verified horizon even: returns of the plain walk live on
        // even times
        if n_horizon % 2 == 1 {
            n_horizon += 1;
            if n_horizon < probs.len() {
                half_sum += probs[n_horizon] / 2.0;
                min_even = min_even.min(probs[n_horizon]);
            } else {
                probs = truncated.return_probs(n_horizon)?;
                half_sum += probs[n_horizon] / 2.0;
                min_even = min_even.min(probs[n_horizon]);
            }
        }

        let b = 1.0 / (2.0 * n_horizon as f64);
        let c = stage as f64 * min_even;
        out.push(StageTriple {
            stage,
            a: *weights.last().unwrap(),
            n_horizon,
            b,
            c,
            half_partial_sum: half_sum,
            truncated_atoms: truncated.atoms.clone(),
        });

        // next weight: stay within this stage's tail budget and keep the
        // per-stage weights at least halving so all tail budgets hold
        let total_now: f64 = weights.iter().sum();
        let next = (b.min(prev_b) * total_now / 2.0).min(weights.last().unwrap() / 2.0);
        weights.push(next);
        prev_b = b.min(prev_b);
    }
    Ok(out)
}
