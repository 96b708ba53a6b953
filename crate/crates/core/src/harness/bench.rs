//! Batch runs over (network, ε) pairs, paired baseline vs configured.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::configurator::{DEFAULT_INITIAL_DESIGN, DEFAULT_TRIALS};
use crate::error::{Error, Result};
use crate::model::{load_network, ActivationKind, Network};
use crate::verification::{verify_instance, VerificationMode, VerificationOutcome};

use super::improvement_pct;

/// One verification query as stored in an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub x0: Vec<f64>,
    pub label: usize,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

pub fn load_instances<R: std::io::Read>(source: R) -> Result<Vec<Instance>> {
    Ok(serde_json::from_reader(source)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub tag: String,
    #[serde(default)]
    pub dataset: String,
    /// Network JSON, relative to the experiment file.
    pub path: PathBuf,
    /// Instance JSON, relative to the experiment file.
    pub instances: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfiguredSettings {
    #[serde(default = "default_trials")]
    pub n_max: usize,
    #[serde(default = "default_init")]
    pub n_init: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_init() -> usize {
    DEFAULT_INITIAL_DESIGN
}

impl Default for ConfiguredSettings {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_TRIALS,
            n_init: DEFAULT_INITIAL_DESIGN,
            seed: 0,
        }
    }
}

/// Experiment description read by `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub networks: Vec<NetworkEntry>,
    /// Radii to evaluate; when empty each instance's own `epsilon` is used.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub configured: ConfiguredSettings,
    /// Drop instances whose clean input is misclassified.
    #[serde(default)]
    pub correctly_classified_only: bool,
    /// Use only the first N instances of each file.
    #[serde(default)]
    pub max_instances: Option<usize>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub network: String,
    pub activation: String,
    pub epsilon: f64,
    pub instances: usize,
    pub avg_g_star_baseline: f64,
    pub avg_g_star_configured: f64,
    pub improvement_pct: Option<f64>,
    pub certified_baseline: usize,
    pub certified_configured: usize,
}

/// Both outcomes for one instance at one radius, or the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub network: String,
    pub dataset: String,
    pub epsilon: f64,
    pub instance: usize,
    pub label: usize,
    pub baseline: Option<VerificationOutcome>,
    pub configured: Option<VerificationOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub records: Vec<InstanceRecord>,
}

fn network_activation(net: &Network) -> ActivationKind {
    net.layers()
        .iter()
        .map(|l| l.activation)
        .find(|a| *a != ActivationKind::Identity)
        .unwrap_or(ActivationKind::Identity)
}

fn instance_seed(base: u64, network: usize, eps_index: usize, instance: usize) -> u64 {
    let mut h = base ^ 0x51_7C_C1_B7_27_22_0A_95;
    for v in [network, eps_index, instance] {
        h = (h ^ v as u64).wrapping_mul(0x100_0000_01B3);
    }
    h
}

fn run_instance(
    net: &Network,
    inst: &Instance,
    epsilon: f64,
    configured: VerificationMode,
) -> Result<(VerificationOutcome, VerificationOutcome)> {
    let base = verify_instance(net, &inst.x0, inst.label, epsilon, VerificationMode::Baseline)?;
    let conf = verify_instance(net, &inst.x0, inst.label, epsilon, configured)?;
    Ok((base, conf))
}

/// Runs every (network, ε) pair of `spec` in both modes. Paths are resolved
/// against `base_dir`; `jobs` bounds the worker threads (0 = rayon default).
pub fn run_benchmark(spec: &ExperimentSpec, base_dir: &Path, jobs: usize) -> Result<BenchmarkReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let mut report = BenchmarkReport::default();

    for (net_index, entry) in spec.networks.iter().enumerate() {
        let net = load_network(BufReader::new(File::open(base_dir.join(&entry.path))?))?;
        let mut instances = load_instances(BufReader::new(File::open(base_dir.join(&entry.instances))?))?;
        if let Some(max) = spec.max_instances {
            instances.truncate(max);
        }
        let activation = network_activation(&net).name().to_string();

        let mut radii: Vec<f64> = spec.epsilons.clone();
        if radii.is_empty() {
            for inst in &instances {
                let eps = inst.epsilon.ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "network `{}`: instance without epsilon and no epsilon list in the experiment",
                        entry.tag
                    ))
                })?;
                if !radii.contains(&eps) {
                    radii.push(eps);
                }
            }
        }

        for (eps_index, &epsilon) in radii.iter().enumerate() {
            let selected: Vec<(usize, &Instance)> = instances
                .iter()
                .enumerate()
                .filter(|(_, inst)| !spec.epsilons.is_empty() || inst.epsilon == Some(epsilon))
                .collect();
            info!(network = %entry.tag, epsilon, instances = selected.len(), "running");

            let results: Vec<InstanceRecord> = pool.install(|| {
                selected
                    .par_iter()
                    .map(|&(idx, inst)| {
                        let mode = VerificationMode::Configured {
                            n_max: spec.configured.n_max,
                            n_init: spec.configured.n_init,
                            seed: instance_seed(spec.configured.seed, net_index, eps_index, idx),
                        };
                        let mut record = InstanceRecord {
                            network: entry.tag.clone(),
                            dataset: entry.dataset.clone(),
                            epsilon,
                            instance: idx,
                            label: inst.label,
                            baseline: None,
                            configured: None,
                            error: None,
                        };
                        match run_instance(&net, inst, epsilon, mode) {
                            Ok((b, c)) => {
                                record.baseline = Some(b);
                                record.configured = Some(c);
                            }
                            Err(e) => {
                                warn!(network = %entry.tag, instance = idx, error = %e, "instance failed");
                                record.error = Some(e.to_string());
                            }
                        }
                        record
                    })
                    .collect()
            });

            let kept: Vec<&InstanceRecord> = results
                .iter()
                .filter(|r| r.error.is_none())
                .filter(|r| !spec.correctly_classified_only || !r.baseline.as_ref().is_some_and(|b| b.misclassified))
                .collect();
            report.rows.push(aggregate_row(entry, &activation, epsilon, &kept));
            report.records.extend(results);
        }
    }
    Ok(report)
}

fn aggregate_row(entry: &NetworkEntry, activation: &str, epsilon: f64, kept: &[&InstanceRecord]) -> BenchmarkRow {
    let outcomes = |pick: fn(&InstanceRecord) -> &Option<VerificationOutcome>| -> Vec<&VerificationOutcome> {
        kept.iter().filter_map(|r| pick(r).as_ref()).collect()
    };
    let base = outcomes(|r| &r.baseline);
    let conf = outcomes(|r| &r.configured);
    let mean = |v: &[&VerificationOutcome]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().map(|o| o.g_star).sum::<f64>() / v.len() as f64
        }
    };
    let (avg_b, avg_c) = (mean(&base), mean(&conf));
    BenchmarkRow {
        dataset: entry.dataset.clone(),
        network: entry.tag.clone(),
        activation: activation.to_string(),
        epsilon,
        instances: kept.len(),
        avg_g_star_baseline: avg_b,
        avg_g_star_configured: avg_c,
        improvement_pct: improvement_pct(avg_b, avg_c).ok().flatten(),
        certified_baseline: base.iter().filter(|o| o.certified).count(),
        certified_configured: conf.iter().filter(|o| o.certified).count(),
    }
}

const CSV_HEADER: &str = "dataset,network,activation,epsilon,instances,avg_g_star_baseline,avg_g_star_configured,improvement_pct,certified_baseline,certified_configured";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes the summary table. Non-applicable improvements print as `-`.
pub fn write_csv<W: Write>(rows: &[BenchmarkRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let improvement = r.improvement_pct.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{},{},{}",
            csv_field(&r.dataset),
            csv_field(&r.network),
            r.activation,
            r.epsilon,
            r.instances,
            r.avg_g_star_baseline,
            r.avg_g_star_configured,
            improvement,
            r.certified_baseline,
            r.certified_configured
        )?;
    }
    Ok(())
}

/// One JSON object per line.
pub fn write_records_jsonl<W: Write>(records: &[InstanceRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_records_jsonl<R: std::io::BufRead>(source: R) -> Result<Vec<InstanceRecord>> {
    let mut out = Vec::new();
    for line in source.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
