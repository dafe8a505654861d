//! Time and frequency masking on CQT windows.

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub max_freq_mask_bins: usize,
    pub max_time_mask_frames: usize,
    pub masks_per_axis: usize,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            max_freq_mask_bins: 24,
            max_time_mask_frames: 20,
            masks_per_axis: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskChoice {
    Frequency,
    Time,
    Both,
}

/// Set `width` rows starting at `start` to `fill`.
pub fn freq_mask(m: &mut Array2<f32>, start: usize, width: usize, fill: f32) {
    let end = (start + width).min(m.nrows());
    m.slice_mut(s![start..end, ..]).fill(fill);
}

/// Set `width` columns starting at `start` to `fill`.
pub fn time_mask(m: &mut Array2<f32>, start: usize, width: usize, fill: f32) {
    let end = (start + width).min(m.ncols());
    m.slice_mut(s![.., start..end]).fill(fill);
}

fn random_masks<R: Rng + ?Sized>(
    rng: &mut R,
    extent: usize,
    max_width: usize,
    count: usize,
) -> Vec<(usize, usize)> {
    let max_width = max_width.min(extent);
    (0..count)
        .map(|_| {
            let width = rng.gen_range(0..=max_width);
            let start = rng.gen_range(0..=extent - width);
            (start, width)
        })
        .collect()
}

/// Apply frequency masking, time masking, or both (each with probability
/// 1/3). Masked cells take the mean of the input window. Works on a
/// `bins x frames` matrix.
pub fn augment<R: Rng + ?Sized>(m: &Array2<f32>, policy: &AugmentPolicy, rng: &mut R) -> Array2<f32> {
    let choice = match rng.gen_range(0..3) {
        0 => MaskChoice::Frequency,
        1 => MaskChoice::Time,
        _ => MaskChoice::Both,
    };
    let mut out = m.clone();
    if m.is_empty() {
        return out;
    }
    let fill = m.mean().unwrap_or(0.0);
    if matches!(choice, MaskChoice::Frequency | MaskChoice::Both) {
        for (start, width) in random_masks(rng, m.nrows(), policy.max_freq_mask_bins, policy.masks_per_axis) {
            freq_mask(&mut out, start, width, fill);
        }
    }
    if matches!(choice, MaskChoice::Time | MaskChoice::Both) {
        for (start, width) in random_masks(rng, m.ncols(), policy.max_time_mask_frames, policy.masks_per_axis) {
            time_mask(&mut out, start, width, fill);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp() -> Array2<f32> {
        Array2::from_shape_fn((144, 50), |(i, j)| (i * 50 + j) as f32 * 0.001)
    }

    #[test]
    fn zero_width_policy_is_identity() {
        let policy = AugmentPolicy {
            max_freq_mask_bins: 0,
            max_time_mask_frames: 0,
            ..Default::default()
        };
        let m = ramp();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(augment(&m, &policy, &mut rng), m);
        }
    }

    #[test]
    fn seeded_calls_agree() {
        let m = ramp();
        let p = AugmentPolicy::default();
        let a = augment(&m, &p, &mut ChaCha8Rng::seed_from_u64(11));
        let b = augment(&m, &p, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn freq_mask_width_counts() {
        let m = ramp();
        let fill = m.mean().unwrap();
        for w in [1, 5, 24] {
            let mut out = m.clone();
            freq_mask(&mut out, 30, w, fill);
            let masked: Vec<usize> = (0..out.nrows())
                .filter(|&r| out.row(r).iter().all(|&v| v == fill))
                .collect();
            assert_eq!(masked.len(), w);
            assert!(masked.windows(2).all(|p| p[1] == p[0] + 1));
            assert_eq!(masked[0], 30);
        }
    }

    #[test]
    fn cells_outside_masks_untouched() {
        let m = ramp();
        let fill = m.mean().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let out = augment(&m, &AugmentPolicy::default(), &mut rng);
            for (a, b) in out.iter().zip(m.iter()) {
                assert!(a == b || *a == fill);
            }
        }
    }
}
