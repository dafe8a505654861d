use serde::{Deserialize, Serialize};

pub const SAMPLE_RATE: u32 = 22050;
pub const HOP: usize = 2048;

/// Mapping between feature frames and seconds. Frame `i` is centered on
/// sample `i * hop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub sample_rate: u32,
    pub hop: usize,
    pub n_frames: usize,
}

impl FrameGrid {
    pub fn new(sample_rate: u32, hop: usize, n_frames: usize) -> Self {
        FrameGrid {
            sample_rate,
            hop,
            n_frames,
        }
    }

    /// Grid for `n_samples` of audio: `n_samples / hop + 1` frames.
    pub fn for_samples(n_samples: usize, sample_rate: u32, hop: usize) -> Self {
        FrameGrid::new(sample_rate, hop, n_samples / hop + 1)
    }

    /// Standard-rate grid for a duration in seconds.
    pub fn for_duration(seconds: f64) -> Self {
        let n = (seconds * f64::from(SAMPLE_RATE)).round() as usize;
        FrameGrid::for_samples(n, SAMPLE_RATE, HOP)
    }

    pub fn with_frames(&self, n_frames: usize) -> Self {
        FrameGrid { n_frames, ..*self }
    }

    pub fn period(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        (i * self.hop) as f64 / f64::from(self.sample_rate)
    }

    /// Time covered by all frames, `n_frames * period`.
    pub fn duration(&self) -> f64 {
        self.frame_time(self.n_frames)
    }

    /// First frame whose center is at or after `t`.
    pub fn frame_at_or_after(&self, t: f64) -> usize {
        let x = t / self.period();
        let mut i = x.ceil().max(0.0) as usize;
        // guard against ceil landing one past an exact frame time
        while i > 0 && self.frame_time(i - 1) >= t {
            i -= 1;
        }
        while self.frame_time(i) < t {
            i += 1;
        }
        i
    }

    /// Number of frames in `seconds`, rounded.
    pub fn frames_in(&self, seconds: f64) -> usize {
        (seconds / self.period()).round() as usize
    }
}

impl Default for FrameGrid {
    fn default() -> Self {
        FrameGrid::new(SAMPLE_RATE, HOP, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_and_times() {
        let g = FrameGrid::for_samples(22050 * 15, SAMPLE_RATE, HOP);
        assert_eq!(g.n_frames, 22050 * 15 / 2048 + 1);
        assert_eq!(g.frame_time(0), 0.0);
        assert!((g.frame_time(3) - 3.0 * 2048.0 / 22050.0).abs() < 1e-15);
    }

    #[test]
    fn frame_at_or_after_is_ceil() {
        let g = FrameGrid::for_duration(10.0);
        for &t in &[0.0, 0.05, g.frame_time(7), g.frame_time(7) + 1e-9, 3.3] {
            let i = g.frame_at_or_after(t);
            assert!(g.frame_time(i) >= t);
            assert!(i == 0 || g.frame_time(i - 1) < t);
        }
    }
}
