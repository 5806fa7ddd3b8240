use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use scan4d_cli::config::{config_hash, PipelineConfig};
use scan4d_cli::pipeline::{self, LabelSource};

#[derive(Parser)]
#[command(
    name = "scan4d",
    about = "Synchronize asynchronous multi-camera 4D captures and register a template mesh",
    version
)]
struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an asynchronous capture session with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Session seed (overrides the config).
        #[arg(long)]
        seed: u64,
    },
    /// Build per-camera dynamic graphs from a session.
    Graph {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a pairwise synchronization model.
    Train {
        #[arg(long)]
        graphs: PathBuf,
        /// Reference camera id.
        #[arg(long, default_value_t = 1)]
        reference: u8,
        /// Camera to synchronize.
        #[arg(long)]
        other: u8,
        /// Label source: cpgd or truth.
        #[arg(long, default_value = "cpgd")]
        labels: String,
        /// Session directory (needed for truth labels).
        #[arg(long)]
        session: Option<PathBuf>,
        /// Training seed (overrides the config).
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curves: PathBuf,
    },
    /// Synchronize all cameras to the reference timeline.
    Sync {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Method: learned, raw, or exhaustive.
        #[arg(long, default_value = "learned")]
        method: String,
        /// Label source for per-stage training: cpgd or truth.
        #[arg(long, default_value = "cpgd")]
        labels: String,
        /// Reuse one trained model across all stages instead of retraining.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Skip writing merged per-timestamp clouds.
        #[arg(long)]
        no_merged: bool,
    },
    /// Register a template mesh onto merged clouds.
    Register {
        #[arg(long)]
        clouds: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-camera-out CPGD metrics for raw, exhaustive, and learned.
    Eval {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        graphs: PathBuf,
        /// Directory with the learned mappings (a `sync` output).
        #[arg(long)]
        sync: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a dynamic graph's node trajectories as per-frame PLY clouds.
    Export {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<(PipelineConfig, String)> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => {
            let config = PipelineConfig::default();
            let hash = config_hash(&config.to_toml());
            Ok((config, hash))
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (mut config, hash) = load_config(&cli.config)?;

    match cli.command {
        Command::Synth { out, seed } => {
            config.seed = seed;
            pipeline::cmd_synth(&config, &out)?;
        }
        Command::Graph { session, out } => {
            pipeline::cmd_graph(&config, &session, &out)?;
        }
        Command::Train { graphs, reference, other, labels, session, seed, out, curves } => {
            let labels = LabelSource::parse(&labels)?;
            pipeline::cmd_train(
                &config,
                &graphs,
                reference,
                other,
                labels,
                session.as_deref(),
                seed,
                &out,
                &curves,
            )?;
        }
        Command::Sync { graphs, session, out, method, labels, model, no_merged } => {
            let labels = LabelSource::parse(&labels)?;
            pipeline::cmd_sync(
                &config,
                &graphs,
                &session,
                &out,
                &method,
                labels,
                model.as_deref(),
                !no_merged,
            )?;
        }
        Command::Register { clouds, template, out } => {
            pipeline::cmd_register(&config, &clouds, &template, &out)?;
        }
        Command::Eval { session, graphs, sync, out } => {
            let report = pipeline::cmd_eval(&config, &hash, &session, &graphs, &sync, &out)?;
            for m in &report.methods {
                let pi = report.percent_improvement(&m.method).unwrap_or(0.0);
                println!(
                    "{}: rmse {:.4} mm, improvement {:.1}%",
                    m.method, m.rmse_directional, pi
                );
            }
        }
        Command::Export { graph, out } => {
            pipeline::cmd_export_graph(&graph, &out)?;
        }
    }
    Ok(())
}
