//! Human-readable table rendering next to the machine JSON artifacts.

use blockwalk::blocks::{BlockReport, Validity};
use blockwalk::classify::Verdict;
use blockwalk::moduledim::{DimensionReport, DimensionValue};
use blockwalk::order::Pair;
use blockwalk::walk::WalkStats;

pub fn blocks_table(report: &BlockReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "block decomposition (search depth {}):\n",
        report.depth
    ));
    for b in &report.pairs {
        let status = match &b.status {
            Validity::Valid { witness } => format!("valid, witness = {}", witness.join(" ")),
            Validity::NoWitnessUpToDepth(d) => format!("no witness up to depth {d}"),
        };
        let phis: Vec<String> = b
            .phi_values
            .iter()
            .map(|(n, f)| format!("{n}: {f}"))
            .collect();
        out.push_str(&format!(
            "  ({},{})  {status}\n         phi: {}\n",
            b.pair.0 + 1,
            b.pair.1 + 1,
            phis.join(", ")
        ));
    }
    out.push_str(&format!("  searched set: {}\n", report.search_description));
    out
}

pub fn dimension_table(dims: &[(Pair, DimensionReport)]) -> String {
    let mut out = String::new();
    out.push_str("block dimensions:\n");
    out.push_str("  pair   dim  exponent  provenance     span table\n");
    for (pair, d) in dims {
        let dim = match d.dimension {
            DimensionValue::Resolved(v) => v.to_string(),
            DimensionValue::Ambiguous(a, b) => format!("{a}or{b}"),
        };
        let spans: Vec<String> = d
            .span_table
            .iter()
            .map(|(r, v)| format!("{r}:{v}"))
            .collect();
        out.push_str(&format!(
            "  ({},{})  {:<4} {:<9.3} {:<14} {}\n",
            pair.0 + 1,
            pair.1 + 1,
            dim,
            d.fitted_exponent,
            format!("{:?}", d.provenance),
            spans.join(" ")
        ));
    }
    out
}

pub fn verdict_text(verdict: &Verdict) -> String {
    let mut out = format!(
        "verdict: {:?} (moment class {:?})\n",
        verdict.outcome, verdict.moment_class
    );
    for b in &verdict.basis {
        let loc = match b.pair {
            Some((i, j)) => format!("block ({},{})", i + 1, j + 1),
            None => "group".to_string(),
        };
        let dim = match b.dimension {
            Some(d) => format!(" [dim {d}]"),
            None => String::new(),
        };
        out.push_str(&format!("  - {loc}{dim}: {}\n", b.rule));
    }
    out
}

pub fn walk_table(stats: &WalkStats) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "walk statistics over {} walkers (seed {}):\n",
        stats.walkers, stats.seed
    ));
    out.push_str("  t        range           drift           return          delta_rank\n");
    for (i, ck) in stats.checkpoints.iter().enumerate() {
        let dr = stats
            .delta_rank
            .as_ref()
            .map(|v| format!("{:.2}+-{:.2}", v[i].mean, v[i].se))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "  {:<8} {:<15} {:<15} {:<15} {}\n",
            ck,
            format!("{:.2}+-{:.2}", stats.range[i].mean, stats.range[i].se),
            format!("{:.3}+-{:.3}", stats.drift[i].mean, stats.drift[i].se),
            format!(
                "{:.5}+-{:.5}",
                stats.return_freq[i].mean, stats.return_freq[i].se
            ),
            dr
        ));
    }
    out
}

pub fn walk_csv(stats: &WalkStats) -> String {
    let mut out = String::from(
        "checkpoint,range_mean,range_se,gen_range_mean,gen_range_se,drift_mean,drift_se,\
         return_freq,return_se,delta_rank_mean,delta_rank_se,delta_steps_mean,hits_mean\n",
    );
    for (i, ck) in stats.checkpoints.iter().enumerate() {
        let opt = |v: &Option<Vec<blockwalk::walk::MeanSe>>, f: fn(&blockwalk::walk::MeanSe) -> f64| {
            v.as_ref().map(|x| f(&x[i]).to_string()).unwrap_or_default()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            ck,
            stats.range[i].mean,
            stats.range[i].se,
            stats.gen_range[i].mean,
            stats.gen_range[i].se,
            stats.drift[i].mean,
            stats.drift[i].se,
            stats.return_freq[i].mean,
            stats.return_freq[i].se,
            opt(&stats.delta_rank, |m| m.mean),
            opt(&stats.delta_rank, |m| m.se),
            opt(&stats.delta_steps, |m| m.mean),
            opt(&stats.hits, |m| m.mean),
        ));
    }
    out
}
