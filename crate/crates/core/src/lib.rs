//! Entity-level adverse drug reaction (ADR) classification with
//! pseudo-annotated training data.
//!
//! The pipeline trains an entity tagger and a binary ADR classifier on a
//! gold corpus, pseudo-labels a raw review collection with them, selects a
//! subset of the pseudo-labeled reviews, retrains, and evaluates both
//! in-dataset and across corpora under k-fold cross-validation.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod ner;
pub mod pseudo;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
