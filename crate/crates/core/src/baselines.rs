//! Harmonic change detection and chroma DTW, for comparison.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::chord::{frame_labels_from_timed, structured_targets, ChordSegment};
use crate::dsp::{analyze, chroma, AudioBuffer, FrameGrid};
use crate::error::{Error, Result};

const RADII: [f64; 3] = [1.0, 1.0, 0.5];
const ANGLES: [f64; 3] = [7.0 * PI / 6.0, 3.0 * PI / 2.0, 2.0 * PI / 3.0];

/// Fifths, minor-thirds and major-thirds circle coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TonalCentroid(pub [f64; 6]);

impl TonalCentroid {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Project L1-normalized chroma onto the three circles.
pub fn tonal_centroid(chroma: ArrayView1<f32>) -> TonalCentroid {
    let total: f64 = chroma.iter().map(|&v| f64::from(v).abs()).sum();
    let mut out = [0.0; 6];
    if total <= 0.0 {
        return TonalCentroid(out);
    }
    for (l, &c) in chroma.iter().enumerate().take(12) {
        let w = f64::from(c) / total;
        for k in 0..3 {
            let a = ANGLES[k] * l as f64;
            out[2 * k] += w * RADII[k] * a.sin();
            out[2 * k + 1] += w * RADII[k] * a.cos();
        }
    }
    TonalCentroid(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcdfParams {
    /// Gaussian smoothing width in frames.
    pub sigma: f64,
    /// Peaks must exceed `threshold * mean(xi)`.
    pub threshold: f64,
    /// Peaks must also exceed this absolute value.
    pub floor: f64,
}

impl Default for HcdfParams {
    fn default() -> Self {
        HcdfParams {
            sigma: 8.0,
            threshold: 1.0,
            floor: 0.02,
        }
    }
}

/// Gaussian smoothing along time with edge values repeated.
fn smooth(x: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return x.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let n = x.nrows() as isize;
    Array2::from_shape_fn(x.dim(), |(t, d)| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let src = (t as isize + i as isize - radius).clamp(0, n - 1) as usize;
                w * x[[src, d]]
            })
            .sum::<f64>()
            / norm
    })
}

/// Harmonic change curve `xi_n = |c_{n+1} - c_{n-1}|` over smoothed
/// centroids of a `12 x N` chroma matrix. Ends are zero.
pub fn hcdf_curve(chroma: &Array2<f32>, sigma: f64) -> Vec<f64> {
    let n = chroma.ncols();
    let mut c = Array2::<f64>::zeros((n, 6));
    for (t, col) in chroma.axis_iter(Axis(1)).enumerate() {
        let tc = tonal_centroid(col);
        for d in 0..6 {
            c[[t, d]] = tc.0[d];
        }
    }
    let c = smooth(&c, sigma);
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 >= n {
                return 0.0;
            }
            (0..6).map(|d| (c[[i + 1, d]] - c[[i - 1, d]]).powi(2)).sum::<f64>().sqrt()
        })
        .collect()
}

/// Local maxima of the curve above both thresholds, as frame indices.
/// The first and last two frames are skipped: the outermost CQT frames see
/// half a window and show a spurious jump.
pub fn curve_peaks(xi: &[f64], params: &HcdfParams) -> Vec<usize> {
    if xi.len() < 5 {
        return Vec::new();
    }
    let mean = xi.iter().sum::<f64>() / xi.len() as f64;
    let limit = (params.threshold * mean).max(params.floor);
    (2..xi.len() - 2)
        .filter(|&n| xi[n] > xi[n - 1] && xi[n] >= xi[n + 1] && xi[n] > limit)
        .collect()
}

pub fn hcdf_from_chroma(chroma: &Array2<f32>, grid: &FrameGrid, params: &HcdfParams) -> Vec<f64> {
    let xi = hcdf_curve(chroma, params.sigma);
    curve_peaks(&xi, params).into_iter().map(|n| grid.frame_time(n)).collect()
}

/// Detected harmonic change times in seconds, strictly increasing.
pub fn hcdf(audio: &AudioBuffer, params: &HcdfParams) -> Result<Vec<f64>> {
    let cqt = analyze(audio)?;
    Ok(hcdf_from_chroma(&chroma(&cqt), &cqt.grid, params))
}

/// `(reference, performance)` index pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpingPath {
    pub points: Vec<(usize, usize)>,
}

pub const DTW_STEPS: [((usize, usize), f64); 3] = [((1, 1), 2.0), ((2, 1), 3.0), ((1, 2), 3.0)];

impl WarpingPath {
    pub fn validate(&self, r: usize, p: usize) -> Result<()> {
        let pts = &self.points;
        if pts.first() != Some(&(0, 0)) || pts.last() != Some(&(r.wrapping_sub(1), p.wrapping_sub(1))) {
            return Err(Error::InvalidPath("warping path must run corner to corner".into()));
        }
        for w in pts.windows(2) {
            let step = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !DTW_STEPS.iter().any(|(s, _)| *s == step) {
                return Err(Error::InvalidPath(format!("step {:?} -> {:?}", w[0], w[1])));
            }
        }
        Ok(())
    }

    /// Weighted cost of the path under `DTW_STEPS`.
    pub fn cost(&self, cost: &Array2<f64>) -> f64 {
        let mut total = self.points.first().map_or(0.0, |&(i, j)| cost[[i, j]]);
        for w in self.points.windows(2) {
            let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            let weight = DTW_STEPS.iter().find(|(s, _)| *s == step).map_or(f64::INFINITY, |(_, w)| *w);
            total += weight * cost[[w[1].0, w[1].1]];
        }
        total
    }
}

/// `1 - cos` between columns. Silent columns count as flat chroma.
pub fn cosine_cost(reference: &Array2<f32>, performance: &Array2<f32>) -> Array2<f64> {
    let unit = |m: &Array2<f32>| {
        let mut out = m.mapv(f64::from);
        for mut col in out.axis_iter_mut(Axis(1)) {
            let n = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                col /= n;
            } else {
                col.fill(1.0 / 12f64.sqrt());
            }
        }
        out
    };
    let mut c = 1.0 - unit(reference).t().dot(&unit(performance));
    c.mapv_inplace(|v| v.max(0.0));
    c
}

/// Minimum-cost warping path with the weighted step set. Ties prefer the
/// diagonal step.
pub fn dtw(cost: &Array2<f64>) -> Result<(WarpingPath, f64)> {
    let (r, p) = cost.dim();
    if r == 0 || p == 0 {
        return Err(Error::Empty { what: "DTW cost matrix" });
    }
    let mut acc = Array2::from_elem((r, p), f64::INFINITY);
    let mut back = Array2::<u8>::from_elem((r, p), u8::MAX);
    acc[[0, 0]] = cost[[0, 0]];
    for i in 0..r {
        for j in 0..p {
            if i == 0 && j == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = u8::MAX;
            for (k, ((di, dj), w)) in DTW_STEPS.iter().enumerate() {
                if i < *di || j < *dj {
                    continue;
                }
                let v = acc[[i - di, j - dj]] + w * cost[[i, j]];
                if v < best {
                    best = v;
                    arg = k as u8;
                }
            }
            acc[[i, j]] = best;
            back[[i, j]] = arg;
        }
    }
    let total = acc[[r - 1, p - 1]];
    if !total.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "no warping path between {r} and {p} frames (lengths differ by more than 2x)"
        )));
    }
    let mut points = vec![(r - 1, p - 1)];
    let (mut i, mut j) = (r - 1, p - 1);
    while (i, j) != (0, 0) {
        let ((di, dj), _) = DTW_STEPS[usize::from(back[[i, j]])];
        i -= di;
        j -= dj;
        points.push((i, j));
    }
    points.reverse();
    Ok((WarpingPath { points }, total))
}

/// Binary chord templates laid out on the frame grid by the weak timings.
/// No-chord frames are all zero.
pub fn reference_chroma(weak: &[ChordSegment], grid: &FrameGrid) -> Array2<f32> {
    let labels = frame_labels_from_timed(weak, grid);
    let mut out = Array2::<f32>::zeros((12, grid.n_frames));
    for (t, c) in labels.classes.iter().enumerate() {
        for (pc, &on) in structured_targets(*c).pitches.iter().enumerate() {
            if on {
                out[[pc, t]] = 1.0;
            }
        }
    }
    out
}

/// Onsets inside a run of identical chords have no acoustic evidence; place
/// them between the mapped ends of the run in proportion to the weak timing.
fn interpolate_repeats(weak: &[ChordSegment], onsets: &mut [f64], end: f64) {
    let weak_end = weak.iter().map(|s| s.end()).fold(0.0, f64::max);
    let mut a = 0;
    while a < weak.len() {
        let mut b = a + 1;
        while b < weak.len() && weak[b].class == weak[a].class {
            b += 1;
        }
        if b > a + 1 {
            let (wa, ta) = (weak[a].onset, onsets[a]);
            let (wb, tb) = if b < weak.len() { (weak[b].onset, onsets[b]) } else { (weak_end, end) };
            if wb > wa {
                for m in a + 1..b {
                    onsets[m] = ta + (weak[m].onset - wa) * (tb - ta) / (wb - wa);
                }
            }
        }
        a = b;
    }
}

/// Align weakly timed chords to a performance chroma (`12 x P`).
///
/// Each weak onset is placed on its nearest reference frame, carried through
/// the path to the first performance frame matched to it, and keeps its
/// sub-frame offset from that reference frame.
pub fn dtw_align_chroma(
    performance: &Array2<f32>,
    grid: &FrameGrid,
    weak: &[ChordSegment],
) -> Result<(Vec<ChordSegment>, WarpingPath)> {
    if weak.is_empty() {
        return Err(Error::Empty {
            what: "weak annotation (DTW needs approximate chord timings)",
        });
    }
    let p = performance.ncols();
    if p < weak.len() {
        return Err(Error::TooFewFrames {
            needed: weak.len(),
            got: p,
        });
    }
    let weak_end = weak.iter().map(|s| s.end()).fold(0.0, f64::max);
    let ref_grid = grid.with_frames(((weak_end / grid.period()).round() as usize).max(1));
    let reference = reference_chroma(weak, &ref_grid);
    let cost = cosine_cost(&reference, performance);
    let (path, _) = dtw(&cost)?;
    let r = ref_grid.n_frames;

    let mut onsets = Vec::with_capacity(weak.len());
    for (m, seg) in weak.iter().enumerate() {
        if m == 0 {
            onsets.push(0.0);
            continue;
        }
        let fr = ((seg.onset / grid.period()).round() as usize).min(r - 1);
        let j = path.points.iter().find(|(i, _)| *i >= fr).map_or(p - 1, |&(_, j)| j);
        let offset = seg.onset - ref_grid.frame_time(fr);
        onsets.push((grid.frame_time(j) + offset).max(0.0));
    }
    interpolate_repeats(weak, &mut onsets, grid.duration());
    // strictly increasing, leaving one frame per remaining chord
    let period = grid.period();
    let n = weak.len();
    for m in 1..n {
        let hi = grid.duration() - (n - m) as f64 * period;
        onsets[m] = onsets[m].max(onsets[m - 1] + period).min(hi.max(onsets[m - 1] + period * 1e-3));
    }
    let end = grid.duration();
    let segments = weak
        .iter()
        .enumerate()
        .map(|(m, seg)| {
            let next = onsets.get(m + 1).copied().unwrap_or(end);
            ChordSegment::new(onsets[m], next - onsets[m], seg.class).with_label(seg.label.clone())
        })
        .collect();
    Ok((segments, path))
}

pub fn dtw_align(audio: &AudioBuffer, weak: &[ChordSegment]) -> Result<Vec<ChordSegment>> {
    if weak.is_empty() {
        return Err(Error::Empty {
            what: "weak annotation (DTW needs approximate chord timings)",
        });
    }
    let cqt = analyze(audio)?;
    Ok(dtw_align_chroma(&chroma(&cqt), &cqt.grid, weak)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array1};

    #[test]
    fn centroid_of_pure_c() {
        let mut c = Array1::<f32>::zeros(12);
        c[0] = 1.0;
        let tc = tonal_centroid(c.view());
        let want = [0.0, 1.0, 0.0, 1.0, 0.0, 0.5];
        for (a, b) in tc.0.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(tonal_centroid(Array1::zeros(12).view()).0, [0.0; 6]);
    }

    #[test]
    fn centroid_scale_and_rotation() {
        let c = arr1(&[0.5f32, 0.0, 0.1, 0.0, 0.7, 0.2, 0.0, 0.9, 0.0, 0.3, 0.0, 0.05]);
        let a = tonal_centroid(c.view());
        let b = tonal_centroid((&c * 3.7).view());
        for (x, y) in a.0.iter().zip(b.0) {
            assert!((x - y).abs() < 1e-7);
        }
        let sum_r: f64 = RADII.iter().map(|r| 2f64.sqrt() * r).sum();
        assert!(a.norm() <= sum_r);
        for k in 1..12 {
            let rot = Array1::from_shape_fn(12, |i| c[(i + 12 - k) % 12]);
            let r = tonal_centroid(rot.view());
            for circle in 0..3 {
                let n = |t: &TonalCentroid| t.0[2 * circle].hypot(t.0[2 * circle + 1]);
                assert!((n(&a) - n(&r)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn diagonal_for_identical_sequences() {
        let x = Array2::from_shape_fn((12, 30), |(i, j)| ((i * 3 + j * 7) % 11) as f32 + 0.1);
        let (path, cost) = dtw(&cosine_cost(&x, &x)).unwrap();
        assert!(cost.abs() < 1e-9);
        assert_eq!(path.points, (0..30).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn path_beats_diagonal_and_is_valid() {
        let a = Array2::from_shape_fn((12, 20), |(i, j)| ((i + j) % 5) as f32);
        let b = Array2::from_shape_fn((12, 26), |(i, j)| ((i * 2 + j) % 7) as f32);
        let cost = cosine_cost(&a, &b);
        let (path, total) = dtw(&cost).unwrap();
        path.validate(20, 26).unwrap();
        assert!((path.cost(&cost) - total).abs() < 1e-9);
    }

    #[test]
    fn cosine_cost_treats_silence_as_flat() {
        let a = Array2::from_shape_vec((12, 1), vec![0.0f32; 12]).unwrap();
        let mut b = Array2::from_elem((12, 2), 0.5f32);
        b.column_mut(1).fill(0.0);
        b[[3, 1]] = 1.0;
        let c = cosine_cost(&a, &b);
        assert!(c[[0, 0]].abs() < 1e-12);
        assert!((c[[0, 1]] - (1.0 - 1.0 / 12f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn peaks_respect_floor() {
        let xi = vec![0.0, 0.9, 0.001, 0.0, 0.5, 0.0, 0.0];
        assert_eq!(curve_peaks(&xi, &HcdfParams::default()), vec![4]);
        assert!(curve_peaks(&[0.0; 10], &HcdfParams::default()).is_empty());
    }
}
