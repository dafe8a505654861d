//! Forced alignment of untimed chord sequences to music audio.
//!
//! A conformer frame classifier turns CQT features into per-frame chord
//! posteriors; a CTC Viterbi pass then places a given chord list on the
//! timeline. Harmonic-change detection and DTW baselines, evaluation metrics
//! and a synthetic corpus generator live alongside.

pub mod baselines;
pub mod chord;
pub mod dsp;
pub mod ctc;
pub mod datagen;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;

pub use error::{Error, Result};
