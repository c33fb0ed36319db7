//! Unsupervised fusion of crowd or ensemble labels under independent,
//! sequential and networked data models.

pub mod app;
pub mod error;
pub mod eval;
pub mod iid;
pub mod io;
pub mod moments;
pub mod networked;
pub mod numeric;
pub mod optim;
pub mod sequential;
pub mod synth;
pub mod types;

pub use error::{FusionError, Result};
pub use types::{
    ConfusionMatrix, DataGraph, FusionResult, Prior, ResponseMatrix, SequencePartition, TransitionMatrix,
};
