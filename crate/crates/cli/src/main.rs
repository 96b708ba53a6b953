use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sigbound::harness::{
    analyze_tangents, read_records_jsonl, run_benchmark, write_csv, write_records_jsonl, ExperimentSpec,
};
use sigbound::model::{gen_random_network, load_network, ActivationKind, RandomNetSpec};
use sigbound::verification::{collect_tangent_distribution, verify_instance, VerificationMode};

#[derive(Parser)]
#[command(
    name = "sigbound",
    version,
    about = "Linear-bound robustness verification for sigmoid and tanh networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Baseline,
    Configured,
}

#[derive(Subcommand)]
enum Command {
    /// Bound the robustness margin of one input.
    Verify {
        #[arg(long)]
        net: PathBuf,
        /// JSON array with the clean input.
        #[arg(long)]
        x0: PathBuf,
        #[arg(long)]
        label: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "baseline")]
        mode: Mode,
        /// Configurator budget (configured mode).
        #[arg(long, default_value_t = sigbound::configurator::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment file in both modes; writes results.csv and records.jsonl.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Compare tangent-point distributions of the two modes.
    AnalyzeTangents {
        /// records.jsonl written by `bench`.
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded random network.
    GenNet {
        /// Layer widths, input first, e.g. 2,3,1.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value = "sigmoid")]
        activation: ActivationKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Weights and biases are drawn from [-scale, scale].
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Verify {
            net,
            x0,
            label,
            eps,
            mode,
            trials,
            seed,
            out,
        } => {
            let network = load_network(open(&net)?).context("loading network")?;
            let x: Vec<f64> = serde_json::from_reader(open(&x0)?).context("reading x0")?;
            let mode = match mode {
                Mode::Baseline => VerificationMode::Baseline,
                Mode::Configured => VerificationMode::configured(trials, seed),
            };
            let outcome = verify_instance(&network, &x, label, eps, mode)?;
            eprintln!(
                "g* = {:.6}  certified = {}  ({:.2}s)",
                outcome.g_star,
                outcome.certified,
                outcome.wall_time.as_secs_f64()
            );
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    serde_json::to_writer_pretty(&mut w, &outcome)?;
                    w.flush()?;
                }
                None => println!("{}", serde_json::to_string_pretty(&outcome)?),
            }
        }
        Command::Bench { spec, out, jobs } => {
            let experiment = ExperimentSpec::load(&spec).context("loading experiment")?;
            let base_dir = spec.parent().unwrap_or(Path::new("."));
            let report = run_benchmark(&experiment, base_dir, jobs)?;
            fs::create_dir_all(&out)?;
            let mut csv = create(&out.join("results.csv"))?;
            write_csv(&report.rows, &mut csv)?;
            csv.flush()?;
            let mut jsonl = create(&out.join("records.jsonl"))?;
            write_records_jsonl(&report.records, &mut jsonl)?;
            jsonl.flush()?;
            let failed = report.records.iter().filter(|r| r.error.is_some()).count();
            eprintln!(
                "{} rows, {} instance records ({failed} failed) written to {}",
                report.rows.len(),
                report.records.len(),
                out.display()
            );
        }
        Command::AnalyzeTangents { records, out } => {
            let records = read_records_jsonl(open(&records)?)?;
            let outcomes: Vec<_> = records
                .into_iter()
                .flat_map(|r| [r.baseline, r.configured])
                .flatten()
                .collect();
            let analysis = analyze_tangents(&collect_tangent_distribution(&outcomes));
            for g in &analysis.groups {
                eprintln!(
                    "layer {} {}: D = {:.4}, p = {:.4}{}",
                    g.layer,
                    g.side.name(),
                    g.ks.statistic,
                    g.ks.p_value,
                    if g.significant { " (significant)" } else { "" }
                );
            }
            let mut w = create(&out)?;
            serde_json::to_writer_pretty(&mut w, &analysis)?;
            w.flush()?;
        }
        Command::GenNet {
            sizes,
            activation,
            seed,
            scale,
            out,
        } => {
            if activation == ActivationKind::Identity {
                bail!("hidden activation must be sigmoid or tanh");
            }
            let net = gen_random_network(&RandomNetSpec::new(sizes, activation, scale), seed)?;
            let mut w = create(&out)?;
            serde_json::to_writer_pretty(&mut w, &net.to_json())?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
