//! Local robustness queries.
//!
//! An input `x0` with label `y0` is robust on the ℓ∞ ball of radius `ε` when
//! `f_y0(x) - f_j(x) ≥ 0` for every other label `j` and every `x` in the ball.
//! Each competing label gets its own margin network and its own lower bound;
//! the instance is certified when the smallest of them is non-negative.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::configurator::{configure, ConfigSpace, ConfiguratorResult, ConfigureOptions};
use crate::error::{Error, Result};
use crate::model::{append_margin_layer, InputRegion, Network};
use crate::propagation::{global_lower_bound, GlobalBound};
use crate::relaxation::ActivationCase;
use crate::search::{Baseline, MultiplicativeSearch, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum VerificationMode {
    Baseline,
    Configured { n_max: usize, n_init: usize, seed: u64 },
}

impl VerificationMode {
    pub fn configured(n_max: usize, seed: u64) -> Self {
        VerificationMode::Configured {
            n_max,
            n_init: crate::configurator::DEFAULT_INITIAL_DESIGN,
            seed,
        }
    }

    pub fn tag(&self) -> ModeTag {
        match self {
            VerificationMode::Baseline => ModeTag::Baseline,
            VerificationMode::Configured { .. } => ModeTag::Configured,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeTag {
    Baseline,
    Configured,
}

impl ModeTag {
    pub fn name(self) -> &'static str {
        match self {
            ModeTag::Baseline => "baseline",
            ModeTag::Configured => "configured",
        }
    }
}

/// One tangent point used while bounding a margin network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentRecord {
    /// Competing label of the margin network the tangent belongs to.
    pub label: usize,
    pub layer: usize,
    pub index: usize,
    pub side: Side,
    pub case: ActivationCase,
    pub tangent: f64,
}

fn tangent_records(label: usize, bound: &GlobalBound) -> Vec<TangentRecord> {
    let mut out = Vec::new();
    for (layer, relax) in bound.propagation.relaxations.iter().enumerate() {
        let Some(relax) = relax else { continue };
        for (index, r) in relax.iter().enumerate() {
            let sides = [(Side::Lower, r.tangent_lower), (Side::Upper, r.tangent_upper)];
            for (side, tangent) in sides {
                if let Some(tangent) = tangent {
                    out.push(TangentRecord {
                        label,
                        layer,
                        index,
                        side,
                        case: r.case,
                        tangent,
                    });
                }
            }
        }
    }
    out
}

/// The configuration run behind one competing label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfiguration {
    pub label: usize,
    pub result: ConfiguratorResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub mode: ModeTag,
    pub true_label: usize,
    pub epsilon: f64,
    pub per_label_g_star: BTreeMap<usize, f64>,
    pub g_star: f64,
    pub certified: bool,
    /// The clean input is not classified as `true_label`.
    pub misclassified: bool,
    pub tangent_records: Vec<TangentRecord>,
    /// Present in configured mode, one entry per competing label.
    pub config_used: Option<Vec<LabelConfiguration>>,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best })
}

struct LabelResult {
    label: usize,
    g_star: f64,
    records: Vec<TangentRecord>,
    config: Option<ConfiguratorResult>,
}

fn verify_label(
    net: &Network,
    region: &InputRegion,
    y0: usize,
    j: usize,
    mode: VerificationMode,
) -> Result<LabelResult> {
    let margin = append_margin_layer(net, y0, j)?;
    match mode {
        VerificationMode::Baseline => {
            let bound = global_lower_bound(&margin, region, &Baseline)?;
            Ok(LabelResult {
                label: j,
                g_star: bound.g_star,
                records: tangent_records(j, &bound),
                config: None,
            })
        }
        VerificationMode::Configured { n_max, n_init, seed } => {
            // Decorrelate labels while staying reproducible.
            let label_seed = seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let result = configure(
                &margin,
                region,
                &ConfigSpace::default(),
                ConfigureOptions {
                    n_max,
                    n_init,
                    seed: label_seed,
                },
            )?;
            let records = global_lower_bound(&margin, region, &MultiplicativeSearch::new(result.best_config))
                .map(|b| tangent_records(j, &b))
                .unwrap_or_default();
            Ok(LabelResult {
                label: j,
                g_star: result.g_star,
                records,
                config: Some(result),
            })
        }
    }
}

/// Bounds every margin `f_y0 - f_j`, `j ≠ y0`, over the ball of radius `epsilon` around `x0`.
pub fn verify_instance(
    net: &Network,
    x0: &[f64],
    y0: usize,
    epsilon: f64,
    mode: VerificationMode,
) -> Result<VerificationOutcome> {
    let start = Instant::now();
    let outputs = net.output_dim();
    if y0 >= outputs {
        return Err(Error::LabelOutOfRange { label: y0, outputs });
    }
    if outputs < 2 {
        return Err(Error::InvalidArgument(
            "robustness queries need at least two outputs".into(),
        ));
    }
    let region = InputRegion::new(x0.to_vec(), epsilon)?;
    region.check_dim(net)?;
    let clean = net.eval(x0)?;
    let misclassified = argmax(&clean) != y0;
    if misclassified {
        warn!(y0, predicted = argmax(&clean), "clean input is misclassified");
    }

    let labels: Vec<usize> = (0..outputs).filter(|&j| j != y0).collect();
    let results = labels
        .par_iter()
        .map(|&j| verify_label(net, &region, y0, j, mode))
        .collect::<Result<Vec<_>>>()?;

    let per_label_g_star: BTreeMap<usize, f64> = results.iter().map(|r| (r.label, r.g_star)).collect();
    let g_star = per_label_g_star.values().copied().fold(f64::INFINITY, f64::min);
    let config_used = match mode {
        VerificationMode::Baseline => None,
        VerificationMode::Configured { .. } => Some(
            results
                .iter()
                .map(|r| LabelConfiguration {
                    label: r.label,
                    result: r.config.clone().expect("configured label has a result"),
                })
                .collect(),
        ),
    };
    let tangent_records = results.into_iter().flat_map(|r| r.records).collect();
    Ok(VerificationOutcome {
        mode: mode.tag(),
        true_label: y0,
        epsilon,
        per_label_g_star,
        g_star,
        certified: g_star >= 0.0,
        misclassified,
        tangent_records,
        config_used,
        wall_time: start.elapsed(),
    })
}

/// One tangent value, tagged for distribution analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentRow {
    pub layer: usize,
    pub side: Side,
    pub tangent: f64,
    pub mode: ModeTag,
}

/// Flattens the tangent records of many outcomes, in record order.
pub fn collect_tangent_distribution(outcomes: &[VerificationOutcome]) -> Vec<TangentRow> {
    outcomes
        .iter()
        .flat_map(|o| {
            o.tangent_records.iter().map(move |r| TangentRow {
                layer: r.layer,
                side: r.side,
                tangent: r.tangent,
                mode: o.mode,
            })
        })
        .collect()
}
