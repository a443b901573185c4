//! Command-line driver for the `vfdetect` pipeline.
//!
//! Exit codes: 0 success, 2 input error (bad arguments, unreadable or corrupt
//! files, config hash mismatches, invalid settings), 3 internal failure.

pub mod args;
pub mod artifact;
pub mod commands;

use anyhow::Result;
use thiserror::Error;

use crate::args::{Cli, Command};
use crate::artifact::ArtifactError;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// A problem with what the user supplied rather than with the pipeline.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct InputError(pub String);

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<InputError>() || cause.is::<ArtifactError>() || cause.is::<std::io::Error>() {
            return EXIT_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<vfdetect::Error>() {
            return match e {
                vfdetect::Error::NonConvergence { .. } => EXIT_INTERNAL,
                _ => EXIT_INPUT,
            };
        }
    }
    EXIT_INTERNAL
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(jobs) = g.jobs {
        if jobs == 0 {
            return Err(InputError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    match &cli.command {
        Command::Ingest { inputs } => commands::ingest(g, inputs),
        Command::Features { episodes } => commands::features(g, episodes),
        Command::Rank { features, forest } => commands::rank(g, features, forest.as_deref()),
        Command::Train { features, mask } => commands::train(g, features, mask),
        Command::Evaluate {
            features,
            mask,
            key_values,
        } => commands::evaluate(g, features, mask, *key_values),
        Command::Predict { input, model } => commands::predict(g, input, model),
        Command::Synth(a) => commands::synth(g, a),
        Command::GridSearch { features, mask } => commands::grid(g, features, mask),
    }
}
