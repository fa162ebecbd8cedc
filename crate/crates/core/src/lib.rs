//! Bayesian record linkage and de-duplication of categorical records.
//!
//! Records from one or more files are linked to latent individuals under a
//! hit-miss distortion model and the posterior over linkage structures is
//! explored with split-merge MCMC. See the crate examples for end-to-end
//! use.

pub mod analysis;
pub mod blocking;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod partition;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{
    FieldSchema, FileLayout, Hyperparameters, LatentState, Mode, RecordId, RecordStore,
};
pub use partition::Partition;
