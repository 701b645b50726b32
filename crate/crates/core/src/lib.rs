//! Collaborative filtering with classical and language-model-generated hard
//! negatives.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`dataset`] loads interaction logs, splits them and builds synthetic
//!   worlds with a planted preference structure.
//! * [`backbone`] holds the embedding tables, matrix factorization scoring
//!   and layer-mean graph propagation.
//! * [`sampling`] implements the ID-based samplers (RNS, DNS, MixGCF, AHNS).
//! * [`semantic`] builds prompts, talks to providers, caches responses and
//!   projects provider vectors into the latent space.
//! * [`objective`] contains the losses, their gradients and the trainer.
//! * [`eval`] computes ranking metrics and the study procedures.
//! * [`experiment`] and [`cli`] wire everything into reproducible runs.

pub mod backbone;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod objective;
pub mod sampling;
pub mod semantic;

pub use error::{Error, Result};
