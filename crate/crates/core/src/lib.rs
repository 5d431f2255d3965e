//! Tucker-decomposition knowledge graph embeddings.
//!
//! The crate trains and evaluates TuckER link-prediction models from scratch:
//!
//! - [`tensor`]: dense matrices, rank-3 tensors and mode-n contractions;
//! - [`model`]: parameters, scoring, relation matrices, constrained cores for
//!   DistMult / ComplEx / SimplE / RESCAL, and checkpoints;
//! - [`data`]: TSV datasets, vocabularies, reciprocal relations, filter indexes,
//!   1-N batches and a synthetic world generator;
//! - [`train`]: Bernoulli loss, analytic gradients, Adam and the epoch driver;
//! - [`eval`]: filtered ranking, MRR and hits@k;
//! - [`expressiveness`]: the exact-separation construction and its verifier;
//! - [`verify`]: self-check suites run by `tucker verify`;
//! - [`cli`]: the command-line front end.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod expressiveness;
pub mod model;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
