//! Weakly supervised aspect classification for short text segments.
//!
//! Given a corpus of text segments and a handful of seed words per aspect,
//! this crate builds a classifier over K user-defined aspects plus an induced
//! miscellaneous aspect, with no labeled training data. The loop alternates
//! between attention-based pseudo labeling, CNN training against soft labels,
//! entropy-based misc estimation, and frequency-driven seed refinement, until
//! the seed sets stop changing.

pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod misc;
pub mod pipeline;
pub mod pseudo_label;
pub mod seed_update;
pub mod synth;

mod error;

pub use error::{Error, Result};
