//! Visibility-transform truncated path signatures for turn-structured
//! feature sequences, plus the evaluation pipeline around them: z-normalization,
//! correlation-based selection, interaction screening, and L2 logistic
//! regression under nested leave-one-subject-out cross-validation.

#![allow(clippy::type_complexity)]

pub mod aggregate;
pub mod data;
pub mod dialogue;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod logreg;
pub mod manifest;
pub mod metrics;
pub mod signature;
pub mod stats;
pub mod synth;
pub mod visibility;

pub use error::{Error, Result};
