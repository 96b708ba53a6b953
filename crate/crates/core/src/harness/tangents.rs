//! Tangent-point distributions: per-layer, per-side histograms and a KS
//! comparison of baseline against configured tangents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::search::Side;
use crate::verification::{ModeTag, TangentRow};

use super::ks::{ks_statistic, KsResult};

pub const HISTOGRAM_BINS: usize = 50;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Uniform bins over `[edges[0], edges[last]]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAnalysis {
    pub layer: usize,
    pub side: Side,
    pub baseline: Histogram,
    pub configured: Histogram,
    pub ks: KsResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub layer: usize,
    pub side: Side,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TangentAnalysis {
    pub groups: Vec<GroupAnalysis>,
    pub skipped: Vec<SkippedGroup>,
}

/// Groups rows by `(layer, side)` and compares the two modes within each group.
pub fn analyze_tangents(rows: &[TangentRow]) -> TangentAnalysis {
    let mut groups: BTreeMap<(usize, Side), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry((r.layer, r.side)).or_default();
        match r.mode {
            ModeTag::Baseline => entry.0.push(r.tangent),
            ModeTag::Configured => entry.1.push(r.tangent),
        }
    }

    let mut out = TangentAnalysis::default();
    for ((layer, side), (base, conf)) in groups {
        if base.is_empty() || conf.is_empty() {
            let missing = if base.is_empty() { "baseline" } else { "configured" };
            warn!(layer, side = side.name(), missing, "skipping tangent group");
            out.skipped.push(SkippedGroup {
                layer,
                side,
                reason: format!("no {missing} tangents"),
            });
            continue;
        }
        let (lo, hi) = base
            .iter()
            .chain(&conf)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let ks = ks_statistic(&base, &conf).expect("both samples are non-empty");
        out.groups.push(GroupAnalysis {
            layer,
            side,
            baseline: Histogram::new(&base, lo, hi, HISTOGRAM_BINS),
            configured: Histogram::new(&conf, lo, hi, HISTOGRAM_BINS),
            significant: ks.p_value < SIGNIFICANCE_LEVEL,
            ks,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(mode: ModeTag, layer: usize, side: Side, values: &[f64]) -> Vec<TangentRow> {
        values
            .iter()
            .map(|&tangent| TangentRow {
                layer,
                side,
                tangent,
                mode,
            })
            .collect()
    }

    #[test]
    fn identical_modes_are_not_significant() {
        let vals = [0.1, 0.5, 0.9, 1.3, 2.0];
        let mut all = rows(ModeTag::Baseline, 0, Side::Upper, &vals);
        all.extend(rows(ModeTag::Configured, 0, Side::Upper, &vals));
        let a = analyze_tangents(&all);
        assert_eq!(a.groups.len(), 1);
        assert_eq!(a.groups[0].ks.statistic, 0.0);
        assert!(!a.groups[0].significant);
        assert_eq!(a.groups[0].baseline.counts.iter().sum::<usize>(), 5);
        assert_eq!(a.groups[0].baseline.counts.len(), HISTOGRAM_BINS);
    }

    #[test]
    fn one_sided_groups_are_skipped() {
        let mut all = rows(ModeTag::Baseline, 1, Side::Lower, &[-0.3, -0.2]);
        all.extend(rows(ModeTag::Configured, 0, Side::Upper, &[0.2]));
        let a = analyze_tangents(&all);
        assert!(a.groups.is_empty());
        assert_eq!(a.skipped.len(), 2);
    }

    #[test]
    fn separated_samples_are_significant() {
        let base: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let conf: Vec<f64> = base.iter().map(|v| v + 2.0).collect();
        let mut all = rows(ModeTag::Baseline, 0, Side::Upper, &base);
        all.extend(rows(ModeTag::Configured, 0, Side::Upper, &conf));
        let g = &analyze_tangents(&all).groups[0];
        assert_eq!(g.ks.statistic, 1.0);
        assert!(g.significant);
        assert_eq!(g.baseline.counts.iter().sum::<usize>(), 200);
    }
}
