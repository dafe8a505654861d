//! Audio ingestion and feature extraction.

mod audio;
mod augment;
mod cqt;
mod grid;
mod segment;

pub use audio::{resample, AudioBuffer};
pub use augment::{augment, freq_mask, time_mask, AugmentPolicy, MaskChoice};
pub use cqt::{
    bin_frequency, chroma, cqt, cqt_magnitudes, log_compress, longest_window, quality_factor,
    CqtMatrix, BINS_PER_OCTAVE, FMIN, LOG_GAMMA, N_BINS,
};
pub use grid::{FrameGrid, HOP, SAMPLE_RATE};
pub use segment::{segment, FeatureWindow, SegmentSpec, WindowSpan, OVERLAP_SECONDS, WINDOW_SECONDS};

/// Resample to the analysis rate if needed, then compute the CQT.
pub fn analyze(audio: &AudioBuffer) -> crate::Result<CqtMatrix> {
    if audio.sample_rate == SAMPLE_RATE {
        cqt(audio)
    } else {
        cqt(&resample(audio, SAMPLE_RATE)?)
    }
}
