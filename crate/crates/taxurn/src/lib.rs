//! Hierarchical taxonomic annotation of nucleotide sequences.
//!
//! `taxurn` trains a classifier on a reference library of rank-labeled DNA
//! sequences and assigns calibrated posterior probabilities to every node of
//! the taxonomic tree, including coherently priced "new" taxa at every rank.
//! The prior over taxa is a tree of Pitman-Yor urns fitted level by level;
//! the sequence likelihood is one of three conjugate Dirichlet-multinomial
//! kernels (per-locus nucleotides, per-locus overlapping dinucleotides, or
//! global k-mer counts). Posteriors are tempered with a held-out-selected
//! exponent so that reported probabilities track empirical accuracy.
//!
//! The crate is organized as a library; the `taxurn` binary is a thin
//! wrapper over [`cli`]. Each major capability has a runnable example:
//!
//! ```text
//! cargo run --example urn_probabilities      # Pitman-Yor urn basics
//! cargo run --example fit_prior_params       # per-level (alpha, sigma) fitting
//! cargo run --example simulate_library       # synthetic library generation
//! cargo run --example train_and_classify     # end-to-end annotation
//! cargo run --example calibrate_temperature  # temperature selection
//! cargo run --example evaluate_scenarios     # held-out scoring with novelty
//! ```
//!
//! Module map:
//! - [`taxonomy`]: taxonomic tree, counts, candidate-leaf enumeration.
//! - [`species_prior`]: Pitman-Yor urn, EPPF, parameter fitting, leaf priors.
//! - [`sequence_model`]: encodings, kernels, sufficient statistics,
//!   method-of-moments hyperparameters, predictive log-probabilities.
//! - [`classifier`]: training, posterior computation, tempering, aggregation,
//!   top-down annotation.
//! - [`calibration`]: temperature selection and calibration diagnostics.
//! - [`evaluation`]: accuracy tables and novelty-outcome summaries.
//! - [`synth`]: generative simulation of libraries and holdout splits.
//! - [`data_io`]: FASTA/TSV ingestion, model persistence, report writers.
//! - [`cli`]: the `train`/`classify`/`evaluate`/`simulate` subcommands.

pub mod calibration;
pub mod classifier;
pub mod cli;
pub mod data_io;
pub mod evaluation;
mod optim;
pub mod sequence_model;
pub mod species_prior;
pub mod synth;
pub mod taxonomy;

use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
