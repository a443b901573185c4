use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "vfdetect",
    version,
    about = "Ventricular fibrillation detection from single-lead ECG"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML file with pipeline settings; unset keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides `episode_length_s` from the config.
    #[arg(long, global = true, value_name = "SECONDS")]
    pub episode_length: Option<f64>,

    /// Output path. Artifact-producing commands require it; report commands
    /// print to stdout without it.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Cache format. `csv` is an export for inspection and cannot be read back
    /// as a cache.
    #[arg(long, global = true, value_enum, default_value_t = Format::Binary)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Binary,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Window WFDB records and CSV episodes into a labeled episode cache.
    Ingest {
        /// WFDB records (`.hea` or base path), `.csv` episodes with `.meta`
        /// sidecars, or directories holding either.
        inputs: Vec<PathBuf>,
    },
    /// Compute the 2N similarity features of every episode in a cache.
    Features { episodes: PathBuf },
    /// Rank features with a random forest and write the selected mask.
    /// Importances go to `<out>.importances`.
    Rank {
        features: PathBuf,
        /// Also write the fitted forest here.
        #[arg(long, value_name = "FILE")]
        forest: Option<PathBuf>,
    },
    /// Train the SVM on masked (and SMOTE-balanced) features.
    Train {
        features: PathBuf,
        #[arg(long, value_name = "FILE")]
        mask: PathBuf,
    },
    /// k-fold cross-validation on masked features.
    Evaluate {
        features: PathBuf,
        #[arg(long, value_name = "FILE")]
        mask: PathBuf,
        /// Print `key=value` lines instead of the table.
        #[arg(long)]
        key_values: bool,
    },
    /// Label every episode of an episode or feature cache with a saved model.
    Predict {
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
    /// Generate synthetic signals or a labeled two-class corpus.
    Synth(SynthArgs),
    /// Holdout search over the config's C and gamma grids.
    GridSearch {
        features: PathBuf,
        #[arg(long, value_name = "FILE")]
        mask: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// VF-like and QRS-like episodes as an episode cache.
    Corpus,
    /// One sinusoid.
    Tone,
    /// Sum of sinusoids given by `--tones`.
    Mixture,
    /// QRS-like impulse train.
    Qrs,
    /// Gaussian white noise.
    Noise,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Corpus)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 500)]
    pub n_vf: usize,
    #[arg(long, default_value_t = 500)]
    pub n_not_vf: usize,
    /// Noise standard deviation (mV).
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 250.0)]
    pub fs: f64,
    /// Signal length for single-signal kinds (default: the episode length).
    #[arg(long, value_name = "SECONDS")]
    pub length: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub freq: f64,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// `freq:amplitude[:phase]` list for `--kind mixture`, comma separated.
    #[arg(long, value_name = "LIST")]
    pub tones: Option<String>,
    #[arg(long, default_value_t = 75.0)]
    pub rate_bpm: f64,
}
