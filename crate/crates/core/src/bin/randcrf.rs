use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use randcrf::bounds::{BoundInputs, BoundRow};
use randcrf::harness::{self, ExperimentConfig, MetricsRecord, THREADS_ENV};
use randcrf::io;
use randcrf::losses::{exact_crf_loss, hamming_loss};
use randcrf::seeding::{stream_seed, Stream};
use randcrf::spaces::{NeighborTable, OutputSpace, StructureFamily};
use randcrf::trainer::{resolve_beta, train, Method};
use randcrf::WeightVector;

#[derive(Parser)]
#[command(name = "randcrf", version, about = "Exact and randomized CRF training on synthetic structured data")]
struct Cli {
    /// Worker threads (overrides the environment variable).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a ground-truth predictor and sample a labelled dataset from it.
    GenData {
        #[arg(long)]
        family: StructureFamily,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth weights here.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Fit one method on a dataset.
    Train {
        #[arg(long)]
        method: Method,
        /// JSON experiment config; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out_weights: PathBuf,
        /// Per-iteration CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score weights on a dataset and write one metrics row.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        /// Label for the method column.
        #[arg(long, default_value = "crf_all")]
        method: Method,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Tabulate the error bounds over a grid of sample counts.
    Bounds {
        /// Comma-separated sample counts.
        #[arg(long, value_delimiter = ',', default_value = "10,30,100,300,1000,3000,10000")]
        grid: Vec<usize>,
        #[arg(long, default_value = "set:4:15")]
        family: StructureFamily,
        #[arg(long)]
        sparsity: Option<usize>,
        /// Candidates per sample; defaults to ⌈√m⌉.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full comparison for several families.
    Reproduce {
        #[arg(long, value_delimiter = ',', default_value = "tree,dag,set")]
        families: Vec<StructureFamily>,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Mean and 95% interval table.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output family of the dataset; defaults to the config's family.
    #[arg(long)]
    family: Option<StructureFamily>,
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => io::read_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_data(args: &DataArgs, cfg: &ExperimentConfig) -> Result<(OutputSpace, randcrf::Dataset)> {
    let family = args.family.unwrap_or(cfg.family);
    let data = io::read_dataset(&args.data, family).with_context(|| format!("reading {}", args.data.display()))?;
    let space = OutputSpace::with_budget(family, cfg.enumeration_budget)?;
    Ok((space, data))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }

    match cli.command {
        Command::GenData { family, seed, m, out, truth } => {
            let space = OutputSpace::enumerate(family)?;
            let w_star = harness::generate_ground_truth(&family, stream_seed(seed, Stream::GroundTruth));
            let data = harness::generate_dataset(&space, &w_star, m, stream_seed(seed, Stream::TrainInputs))?;
            io::write_dataset(&out, &data)?;
            if let Some(path) = truth {
                io::write_weights(&path, &w_star)?;
            }
        }
        Command::Train { method, config, data, out_weights, trace } => {
            let cfg = load_config(config.as_ref())?;
            let (space, dataset) = load_data(&data, &cfg)?;
            let mut exp = cfg.clone();
            exp.m_train = dataset.m();
            let neighbors = NeighborTable::build(&space, exp.k);
            let train_cfg = exp.train_config(method, stream_seed(exp.master_seed, Stream::Proposal));
            let outcome = train(&space, Some(&neighbors), &dataset, &train_cfg, &exp.proposal_config()?)?;
            io::write_weights(&out_weights, &outcome.weights)?;
            if let Some(path) = trace {
                let file = std::fs::File::create(&path)?;
                outcome.trace.write_csv(file, &format!("{}/train", space.family()), method)?;
            }
            eprintln!(
                "{method}: objective {:.6}, nnz {}, {:.3}s",
                outcome.train_loss,
                outcome.weights.support_size(),
                outcome.train_seconds
            );
        }
        Command::Eval { weights, method, config, data, metrics } => {
            let cfg = load_config(config.as_ref())?;
            let (space, dataset) = load_data(&data, &cfg)?;
            let w: WeightVector = io::read_weights(&weights)?;
            let beta = resolve_beta(cfg.beta_policy, dataset.m(), space.len())?;
            let crf = exact_crf_loss(&space, &w, &dataset, beta)?;
            let record = MetricsRecord {
                run_id: format!("{}/eval", space.family()),
                repetition: 0,
                method,
                family: *space.family(),
                beta,
                train_loss: f64::NAN,
                train_loss_exact: f64::NAN,
                test_crf_loss: crf.value,
                test_hamming: hamming_loss(&space, &w, &dataset)?.value,
                train_seconds: 0.0,
                set_size_mean: f64::NAN,
                set_size_max: 0,
                w_nnz: w.support_size(),
                w_l1: w.l1_norm(),
                bound_total: f64::NAN,
                status: "ok".into(),
            };
            io::write_csv(&metrics, &[record])?;
        }
        Command::Bounds { grid, family, sparsity, n, delta, out } => {
            let d = family.feature_dim();
            let r = OutputSpace::enumerate(family)?.len();
            let s = sparsity.unwrap_or(((d as f64).sqrt().ceil() as usize).min(d));
            let rows = grid
                .iter()
                .map(|&m| {
                    let n = n.unwrap_or(((m as f64).sqrt().ceil()) as usize);
                    BoundRow::compute(BoundInputs { d, s, m, n, r, delta }, &WeightVector::zeros(d))
                })
                .collect::<randcrf::Result<Vec<_>>>()?;
            match out {
                Some(path) => io::write_csv(&path, &rows)?,
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for row in &rows {
                        w.serialize(row)?;
                    }
                    w.flush()?;
                }
            }
        }
        Command::Reproduce { families, reps, config, out, summary } => {
            let base = load_config(config.as_ref())?;
            let mut records = Vec::new();
            for family in families {
                let cfg = ExperimentConfig { family, repetitions: reps, threads: cli.threads.or(base.threads), ..base.clone() };
                eprintln!("{family}: {reps} repetitions");
                records.extend(harness::run_experiment(&cfg)?);
            }
            let failed = records.iter().filter(|r| !r.is_ok()).count();
            io::write_csv(&out, &records)?;
            if let Some(path) = summary {
                io::write_csv(&path, &harness::summarize(&records))?;
            }
            if failed > 0 {
                eprintln!("{failed} runs failed; see the status column");
            }
        }
    }
    Ok(())
}
