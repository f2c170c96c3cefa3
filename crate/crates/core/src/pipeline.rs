//! End-to-end orchestration: blocks -> dimensions -> wreath certificates ->
//! verdict, producing one consolidated, serializable report with the rule
//! trail. All stage seeds derive from the single run seed.

use serde::{Deserialize, Serialize};

use crate::blocks::{self, BlockReport};
use crate::classify::{classify, Verdict};
use crate::error::CoreError;
use crate::matrix::{GroupSpec, GroupSpecJson};
use crate::moduledim::{
    dimension_estimate, is_wreath_block, DimensionReport, ModuleSpec, WreathCheck, DEFAULT_RADII,
};
use crate::order::{Pair, TOrder};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub depth: usize,
    pub radii: Vec<usize>,
    pub exponent_bound: i64,
    pub wreath_radius: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            depth: 4,
            radii: DEFAULT_RADII.to_vec(),
            exponent_bound: 6,
            wreath_radius: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub spec: GroupSpecJson,
    pub config: PipelineConfig,
    pub blocks: BlockReport,
    pub dimensions: Vec<(Pair, DimensionReport)>,
    pub wreath: Vec<(Pair, WreathCheck)>,
    pub verdict: Verdict,
}

/// Per-module radius grid: six-generator blocks get smaller radii to keep
/// the exact rank computations at desk scale (the fit discards small radii
/// anyway, and the top pair already resolves the exponent).
pub fn radii_for(base: &[usize], n_action_gens: usize) -> Vec<usize> {
    if n_action_gens >= 5 {
        vec![2, 3, 4, 6]
    } else {
        base.to_vec()
    }
}

pub fn run_pipeline(spec: &GroupSpec, config: &PipelineConfig) -> Result<PipelineReport, CoreError> {
    let order = TOrder::U;
    let report = blocks::decompose(spec, config.depth, &order)?;

    let mut dimensions = Vec::new();
    let mut wreath = Vec::new();
    for pair in report.valid_pairs() {
        let block = report.block(pair).unwrap();
        let phis: Vec<_> = block.phi_values.iter().map(|(_, f)| f.clone()).collect();
        let module = ModuleSpec::cyclic(spec.field, spec.nvars, phis.clone())?;
        let radii = radii_for(&config.radii, phis.len());
        let dim = dimension_estimate(&module, &radii)?;
        if dim.resolved() == Some(2) {
            wreath.push((
                pair,
                is_wreath_block(
                    spec.field,
                    spec.nvars,
                    &phis,
                    config.exponent_bound,
                    config.wreath_radius,
                )?,
            ));
        }
        dimensions.push((pair, dim));
    }

    let verdict = classify(spec, &report, &dimensions, &wreath)?;
    Ok(PipelineReport {
        spec: spec.to_json(),
        config: config.clone(),
        blocks: report,
        dimensions,
        wreath,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::classify::{MomentClass, Outcome};

    #[test]
    fn two_dim_lamplighter_is_trivial_wreath() {
        let entry = catalog::lamplighter(2, 2).unwrap();
        let report = run_pipeline(&entry.spec, &PipelineConfig::default()).unwrap();
        assert_eq!(report.verdict.outcome, Outcome::Trivial);
        assert_eq!(
            report.verdict.moment_class,
            MomentClass::CenteredSecondMoment
        );
        assert_eq!(report.dimensions.len(), 1);
        assert_eq!(report.dimensions[0].1.resolved(), Some(2));
        assert!(report.wreath[0].1.is_wreath);
    }

    #[test]
    fn pipeline_report_serializes_deterministically() {
        let entry = catalog::g23x().unwrap();
        let a = run_pipeline(&entry.spec, &PipelineConfig::default()).unwrap();
        let b = run_pipeline(&entry.spec, &PipelineConfig::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
