//! `gpnn` command-line tool.

mod commands;
mod config;
mod report;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gpnn::kernels::KernelSpec;

use crate::config::{ExperimentConfig, SimulationConfig};

#[derive(Parser)]
#[command(name = "gpnn", version, about = "Nearest-neighbour Gaussian process regression")]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true, env = "GPNN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, train, calibrate and save one model per seed.
    Fit(FitArgs),
    /// Predict `id,mean,variance` rows for a feature CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Recipe file; its target and dropped columns are excluded from the features.
        #[arg(long)]
        recipe: Option<PathBuf>,
        /// Output file (stdout if omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Report predictions in whitened output units.
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        no_header: bool,
    },
    /// Metrics of saved models on labelled test data, with mean and sd across models.
    Evaluate {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// One test file for all models, or one per model.
        #[arg(long = "test", required = true)]
        tests: Vec<PathBuf>,
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[arg(long, default_value = "gpnn-eval")]
        output_dir: PathBuf,
    },
    /// Monte-Carlo sweep over training sizes and assumed models.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Also run the full-joint sampler for every n up to 500.
        #[arg(long)]
        oracle: bool,
        /// Write gnuplot-style `.dat` files next to the sweep CSV.
        #[arg(long)]
        plot_data: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write the whitened version of a dataset and its transform.
    Whiten {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    recipe: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<KernelSpec>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    calibration_size: Option<usize>,
    /// Skip the variance recalibration step.
    #[arg(long)]
    no_calibrate: bool,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl FitArgs {
    fn effective_config(self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(v) = self.dataset {
            cfg.dataset = v;
        }
        if let Some(v) = self.recipe {
            cfg.recipe = Some(v);
        }
        if let Some(v) = self.kernel {
            cfg.kernel = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.calibration_size {
            cfg.calibration_size = v;
        }
        if self.no_calibrate {
            cfg.calibrate = false;
        }
        if let Some(v) = self.train_fraction {
            cfg.train_fraction = v;
        }
        if let Some(v) = self.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Fit(args) => commands::fit(&args.effective_config()?),
        Command::Predict {
            model,
            input,
            recipe,
            output,
            normalized,
            no_header,
        } => commands::predict(commands::PredictArgs {
            model: &model,
            input: &input,
            recipe: recipe.as_deref(),
            output: output.as_deref(),
            normalized,
            no_header,
        }),
        Command::Evaluate {
            models,
            tests,
            recipe,
            output_dir,
        } => commands::evaluate_models(&models, &tests, recipe.as_deref(), &output_dir),
        Command::Simulate {
            config,
            oracle,
            plot_data,
            output_dir,
        } => {
            let mut cfg = SimulationConfig::load(&config)?;
            cfg.oracle |= oracle;
            cfg.plot_data |= plot_data;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            commands::simulate(&cfg)
        }
        Command::Whiten { input, recipe, output } => commands::whiten(&input, recipe.as_deref(), &output),
    }
}
