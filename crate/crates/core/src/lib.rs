//! Coupled dictionary learning (CDL) for zero-shot recognition.
//!
//! Class prototypes are learned in a visual space and a semantic space that
//! share a common code through a pair of coupled dictionaries. Unseen classes
//! are then recognized by nearest-prototype search in the visual, aligned
//! (code) or semantic space, or any sum of those similarity scores.
//!
//! Matrices store one item per column: features are `d × n`, semantic
//! prototypes `m × classes`, dictionaries `dim × n_b`, codes `n_b × classes`.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod gridsearch;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod recognition;

pub use error::{CdlError, Result};
pub use model::{AblationVariant, CdlModel, Hyperparams, TrainingTrace};

/// Dense real matrix used for every quantity in the pipeline.
pub type Matrix = nalgebra::DMatrix<f64>;
