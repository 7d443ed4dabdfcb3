//! Command-line entry point wiring dataset generation, training, evaluation,
//! surrogate search and the experiment harnesses into reproducible runs.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numeric
//! fault.

mod commands;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use beamsight::dataset::DatasetError;
use beamsight::model::ModelError;
use beamsight::nn::NnError;
use beamsight::search::SearchError;

#[derive(Parser)]
#[command(
    name = "beamsight",
    version,
    about = "Cantilever-beam property prediction from cross-section images and surrogate shape search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled cross-section dataset from a JSON spec.
    Generate {
        /// JSON file mirroring the dataset spec.
        #[arg(long)]
        config: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a generated dataset.
    Train {
        /// JSON file with arch_kind, labels and train settings.
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory (from `generate`).
        #[arg(long)]
        data: PathBuf,
        /// Output directory for the checkpoint and history.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one split of a dataset.
    Eval {
        /// Checkpoint stem (without .ckpt.json/.ckpt.bin).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Expected label columns; errors if the checkpoint disagrees.
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<String>>,
        /// Output directory for metrics.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Random search for sections matching target eigenfrequencies.
    Optimize {
        /// JSON file with targets/budget/restarts/seed.
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint stem of the surrogate model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset directory providing sampling ranges, beam and targets.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fitness source: the trained CNN or the closed-form oracle.
        #[arg(long, value_enum, default_value_t = SurrogateArg::Cnn)]
        surrogate: SurrogateArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dataset-size, resolution and analytical-comparison studies.
    Experiment {
        #[arg(long, value_enum)]
        kind: ExperimentKind,
        /// Base dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON overriding the experiment defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge externally computed labels (e.g. FEA results) into a manifest.
    ImportLabels {
        #[arg(long)]
        data: PathBuf,
        /// CSV keyed by sample id with label-name columns.
        #[arg(long)]
        csv: PathBuf,
        /// Provenance tag recorded in the manifest.
        #[arg(long, default_value = "fea")]
        source: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for beamsight::dataset::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => beamsight::dataset::Split::Train,
            SplitArg::Val => beamsight::dataset::Split::Val,
            SplitArg::Test => beamsight::dataset::Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SurrogateArg {
    Cnn,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    DataEfficiency,
    Resolution,
    AnalyticalCompare,
}

/// Anything a subcommand can fail with, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<beamsight::geometry::GeometryError> for CliError {
    fn from(e: beamsight::geometry::GeometryError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match &e {
            ModelError::NumericFault { .. } | ModelError::Nn(NnError::NonFinite { .. }) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match &e {
            SearchError::Model(m) => match m {
                ModelError::NumericFault { .. } | ModelError::Nn(NnError::NonFinite { .. }) => {
                    CliError::Numeric(e.to_string())
                }
                _ => CliError::Data(e.to_string()),
            },
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { config, out, seed } => commands::generate(&config, &out, seed),
        Command::Train {
            config,
            data,
            out,
            seed,
        } => commands::train(&config, &data, &out, seed),
        Command::Eval {
            checkpoint,
            data,
            split,
            labels,
            out,
        } => commands::eval(&checkpoint, &data, split.into(), labels.as_deref(), &out),
        Command::Optimize {
            config,
            checkpoint,
            data,
            out,
            surrogate,
            seed,
        } => commands::optimize(
            &config,
            checkpoint.as_deref(),
            &data,
            &out,
            matches!(surrogate, SurrogateArg::Oracle),
            seed,
        ),
        Command::Experiment {
            kind,
            data,
            out,
            config,
            seed,
        } => match kind {
            ExperimentKind::DataEfficiency => {
                experiments::data_efficiency(&data, &out, config.as_deref(), seed)
            }
            ExperimentKind::Resolution => {
                experiments::resolution(&data, &out, config.as_deref(), seed)
            }
            ExperimentKind::AnalyticalCompare => {
                experiments::analytical_compare(&data, &out, config.as_deref())
            }
        },
        Command::ImportLabels { data, csv, source } => {
            commands::import_labels(&data, &csv, &source)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
