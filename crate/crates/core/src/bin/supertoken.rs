use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use supertoken::bench::{BenchConfig, BenchSize};
use supertoken::commands::{self, with_threads};
use supertoken::config::PipelineConfig;
use supertoken::Result;

#[derive(Parser)]
#[command(name = "supertoken", version, about = "Spectral supertoken clustering and token classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a cube into supertokens.
    Cluster {
        #[arg(long)]
        cube: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Report center filtering scores.
    Filter {
        #[arg(long)]
        cube: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Derive per-token soft labels.
    Softlabel {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Predict a class map with a trained checkpoint.
    Classify {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Predict and score against ground truth.
    Eval {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Time global association against the tiled baseline.
    Bench {
        /// Comma-separated HxWxB sizes.
        #[arg(long, default_value = "256x256x32", value_delimiter = ',')]
        sizes: Vec<BenchSize>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 64)]
        patch_size: usize,
        #[arg(long, default_value_t = 1)]
        baseline_iterations: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train the classifier on a small cube (a generated one when --cube is omitted).
    TrainToy {
        #[arg(long, requires = "labels")]
        cube: Option<PathBuf>,
        #[arg(long, requires = "cube")]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0.5)]
        learning_rate: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Cluster { cube, common } => {
            let cfg = common.config()?;
            let c = with_threads(common.threads, || commands::cmd_cluster(&cube, &cfg, &common.out))??;
            println!("{} tokens -> {}", c.tokens.len(), common.out.display());
        }
        Command::Filter { cube, common } => {
            let cfg = common.config()?;
            let c = with_threads(common.threads, || commands::cmd_filter(&cube, &cfg, &common.out))??;
            println!(
                "kept {} of {} centers, separation loss {}",
                c.filter.kept_indices.len(),
                cfg.m1,
                c.separation_loss()
            );
        }
        Command::Softlabel { cube, labels, common } => {
            let cfg = common.config()?;
            with_threads(common.threads, || commands::cmd_softlabel(&cube, &labels, &cfg, &common.out))??;
            println!("soft labels -> {}", common.out.join(commands::SOFT_LABELS).display());
        }
        Command::Classify { cube, checkpoint, common } => {
            let cfg = common.config()?;
            with_threads(common.threads, || commands::cmd_classify(&cube, &cfg, &checkpoint, &common.out))??;
            println!("class map -> {}", common.out.join(commands::CLASS_MAP).display());
        }
        Command::Eval { cube, labels, checkpoint, common } => {
            let cfg = common.config()?;
            let (cm, s) =
                with_threads(common.threads, || commands::cmd_eval(&cube, &labels, &cfg, &checkpoint, &common.out))??;
            print!("{}", s.to_kv_text(&cm));
        }
        Command::Bench { sizes, repetitions, patch_size, baseline_iterations, common } => {
            let cfg = common.config()?;
            let bench = BenchConfig {
                sizes,
                repetitions,
                centers: cfg.m1,
                mask_size: cfg.mask_size,
                channels: cfg.channels,
                patch_size,
                baseline_iterations,
                seed: cfg.seed,
            };
            let report = with_threads(common.threads, || commands::cmd_bench(&bench, &common.out))??;
            for s in &report.sizes {
                println!(
                    "{}x{}x{}: global {:.4}s, baseline {:.4}s, speedup {:.2}",
                    s.size.height,
                    s.size.width,
                    s.size.bands,
                    s.global.timing.median_s,
                    s.baseline.timing.median_s,
                    s.speedup
                );
            }
        }
        Command::TrainToy { cube, labels, steps, learning_rate, common } => {
            let cfg = common.config()?;
            let inputs = cube.as_deref().zip(labels.as_deref());
            let report = with_threads(common.threads, || {
                commands::cmd_train_toy(inputs, &cfg, steps, learning_rate, &common.out)
            })??;
            println!("loss {} -> {}", report.initial_loss(), report.final_loss());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
