//! Experiment harness: benchmark tables, the improvement metric and
//! tangent-distribution analysis.

mod bench;
mod ks;
mod tangents;

pub use bench::{
    load_instances, read_records_jsonl, run_benchmark, write_csv, write_records_jsonl, BenchmarkReport, BenchmarkRow,
    ConfiguredSettings, ExperimentSpec, Instance, InstanceRecord, NetworkEntry,
};
pub use ks::{kolmogorov_survival, ks_statistic, KsResult};
pub use tangents::{
    analyze_tangents, GroupAnalysis, Histogram, SkippedGroup, TangentAnalysis, HISTOGRAM_BINS, SIGNIFICANCE_LEVEL,
};

use crate::error::{Error, Result};

/// Relative improvement of a configured average over a baseline average, in
/// percent: `(base / conf - 1) · 100`.
///
/// Only defined when both averages are negative; returns `Ok(None)` otherwise.
pub fn improvement_pct(base: f64, conf: f64) -> Result<Option<f64>> {
    if conf == 0.0 {
        return Err(Error::InvalidArgument("configured average is zero".into()));
    }
    if !(base < 0.0 && conf < 0.0) {
        return Ok(None);
    }
    Ok(Some((base / conf - 1.0) * 100.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_examples() {
        assert!((improvement_pct(-15.611, -5.506).unwrap().unwrap() - 183.5).abs() < 0.05);
        assert!((improvement_pct(-1.727, -1.633).unwrap().unwrap() - 5.8).abs() < 0.05);
        assert_eq!(improvement_pct(-2.0, -2.0).unwrap(), Some(0.0));
        assert_eq!(improvement_pct(2.753, 2.756).unwrap(), None);
        assert!(improvement_pct(-1.0, 0.0).is_err());
    }
}
