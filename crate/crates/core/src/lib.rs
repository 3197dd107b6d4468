//! Scoring power, sentiment and agency of words and entities from contextual
//! embeddings.
//!
//! Two backends are provided: kernel ridge regression over lexicon words
//! ([`krr`]) and a polar subspace projection ([`asp`]). Entity scoring,
//! evaluation metrics and report commands build on either.

pub mod asp;
pub mod backend;
pub mod commands;
pub mod embeddings;
pub mod entities;
pub mod error;
pub mod krr;
pub mod lexicon;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod synth;

pub use backend::{Backend, BackendKind, DimScores, Scorer};
pub use error::{Error, Result};
pub use lexicon::AffectDimension;
