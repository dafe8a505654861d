use ndarray::{s, Array2};

use super::grid::FrameGrid;

pub const WINDOW_SECONDS: f64 = 15.0;
pub const OVERLAP_SECONDS: f64 = 3.0;

/// Fixed-length window over a frame sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    pub start: usize,
    /// Frames of real input; the rest of the window is padding.
    pub valid: usize,
}

impl WindowSpan {
    pub fn end(&self) -> usize {
        self.start + self.valid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub window_seconds: f64,
    pub overlap_seconds: f64,
}

impl Default for SegmentSpec {
    fn default() -> Self {
        SegmentSpec {
            window_seconds: WINDOW_SECONDS,
            overlap_seconds: OVERLAP_SECONDS,
        }
    }
}

impl SegmentSpec {
    /// Frames produced by `window_seconds` of audio.
    pub fn window_frames(&self, grid: &FrameGrid) -> usize {
        let samples = (self.window_seconds * f64::from(grid.sample_rate)).round() as usize;
        samples / grid.hop + 1
    }

    fn start_frame(&self, k: usize, grid: &FrameGrid) -> usize {
        let stride = self.window_seconds - self.overlap_seconds;
        grid.frames_in(k as f64 * stride)
    }

    /// Windows starting every `window - overlap` seconds. A new window is
    /// opened only while the previous one stops short of the last frame.
    pub fn spans(&self, grid: &FrameGrid) -> Vec<WindowSpan> {
        let n = grid.n_frames;
        let w = self.window_frames(grid);
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let start = self.start_frame(k, grid);
            if start >= n && k > 0 {
                break;
            }
            let valid = w.min(n.saturating_sub(start));
            out.push(WindowSpan { start, valid });
            if start + w >= n {
                break;
            }
            k += 1;
        }
        out
    }
}

/// A window cut from a `features x frames` matrix, zero-padded to full length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub span: WindowSpan,
    pub data: Array2<f32>,
}

impl FeatureWindow {
    /// The unpadded part.
    pub fn valid(&self) -> ndarray::ArrayView2<'_, f32> {
        self.data.slice(s![.., ..self.span.valid])
    }
}

pub fn segment(features: &Array2<f32>, grid: &FrameGrid, spec: &SegmentSpec) -> Vec<FeatureWindow> {
    let w = spec.window_frames(grid);
    spec.spans(&grid.with_frames(features.ncols()))
        .into_iter()
        .map(|span| {
            let mut data = Array2::zeros((features.nrows(), w));
            data.slice_mut(s![.., ..span.valid])
                .assign(&features.slice(s![.., span.start..span.end()]));
            FeatureWindow { span, data }
        })
        .collect()
}
