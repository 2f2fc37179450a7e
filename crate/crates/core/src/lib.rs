//! Skeleton action recognition with dual attention, plus fuzzy indexing of
//! action intensity.

pub mod bell;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod export;
pub mod fuzzifier;
pub mod inference;
pub mod kinetics;
pub mod math;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod skeleton;
pub mod syngen;

pub use error::{KifaError, Result};
