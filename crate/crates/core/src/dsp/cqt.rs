//! Constant-Q transform and chroma.
//!
//! Each bin is a Hann-windowed complex exponential whose length follows the
//! constant quality factor `Q = 1 / (2^(1/24) - 1)`. Frames are centered on
//! multiples of the hop, with reflect padding at both ends.

use std::f64::consts::PI;
use std::sync::OnceLock;

use ndarray::{Array2, Axis};

use super::audio::AudioBuffer;
use super::grid::{FrameGrid, HOP, SAMPLE_RATE};
use crate::error::{Error, Result};

/// C1 in Hz.
pub const FMIN: f64 = 32.703_195_662_574_83;
pub const BINS_PER_OCTAVE: usize = 24;
pub const N_BINS: usize = 144;
/// Gain inside `ln(1 + gamma * |X|)`.
pub const LOG_GAMMA: f64 = 100.0;

pub fn bin_frequency(k: usize) -> f64 {
    FMIN * 2f64.powf(k as f64 / BINS_PER_OCTAVE as f64)
}

pub fn quality_factor() -> f64 {
    1.0 / (2f64.powf(1.0 / BINS_PER_OCTAVE as f64) - 1.0)
}

/// Time-frequency features: `N_BINS x n_frames`, log-compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtMatrix {
    pub data: Array2<f32>,
    pub grid: FrameGrid,
}

impl CqtMatrix {
    pub fn n_frames(&self) -> usize {
        self.data.ncols()
    }
}

struct Kernel {
    /// (offset into `re`/`im`, length) per bin
    spans: Vec<(usize, usize)>,
    re: Vec<f32>,
    im: Vec<f32>,
    max_len: usize,
}

impl Kernel {
    fn build(sample_rate: u32) -> Kernel {
        let sr = f64::from(sample_rate);
        let q = quality_factor();
        let mut spans = Vec::with_capacity(N_BINS);
        let mut re = Vec::new();
        let mut im = Vec::new();
        let mut max_len = 0;
        for k in 0..N_BINS {
            let f = bin_frequency(k);
            let len = (q * sr / f).ceil() as usize;
            let window: Vec<f64> = (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * (n as f64 + 0.5) / len as f64).cos())
                .collect();
            let norm: f64 = window.iter().sum();
            let center = len as f64 / 2.0;
            spans.push((re.len(), len));
            for (n, w) in window.iter().enumerate() {
                let phase = -2.0 * PI * f * (n as f64 - center) / sr;
                re.push((w * phase.cos() / norm) as f32);
                im.push((w * phase.sin() / norm) as f32);
            }
            max_len = max_len.max(len);
        }
        Kernel {
            spans,
            re,
            im,
            max_len,
        }
    }

    fn standard() -> &'static Kernel {
        static KERNEL: OnceLock<Kernel> = OnceLock::new();
        KERNEL.get_or_init(|| Kernel::build(SAMPLE_RATE))
    }
}

/// Length in samples of the longest (lowest) analysis window.
pub fn longest_window() -> usize {
    Kernel::standard().max_len
}

#[inline]
fn complex_dot(x: &[f32], re: &[f32], im: &[f32]) -> (f32, f32) {
    const LANES: usize = 8;
    let mut acc_re = [0f32; LANES];
    let mut acc_im = [0f32; LANES];
    let xs = x.chunks_exact(LANES);
    let rs = re.chunks_exact(LANES);
    let is = im.chunks_exact(LANES);
    let (xt, rt, it) = (xs.remainder(), rs.remainder(), is.remainder());
    for ((xc, rc), ic) in xs.zip(rs).zip(is) {
        for l in 0..LANES {
            acc_re[l] += xc[l] * rc[l];
            acc_im[l] += xc[l] * ic[l];
        }
    }
    let mut sr: f32 = acc_re.iter().sum();
    let mut si: f32 = acc_im.iter().sum();
    for ((x, r), i) in xt.iter().zip(rt).zip(it) {
        sr += x * r;
        si += x * i;
    }
    (sr, si)
}

fn reflect_pad(samples: &[f32], pad: usize) -> Vec<f32> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| samples[i]));
    out.extend_from_slice(samples);
    out.extend((0..pad).map(|i| samples[n - 2 - i]));
    out
}

/// Raw CQT magnitudes (before log compression), `N_BINS x n_frames`.
pub fn cqt_magnitudes(audio: &AudioBuffer) -> Result<Array2<f32>> {
    if audio.sample_rate != SAMPLE_RATE {
        return Err(Error::InvalidArgument(format!(
            "cqt expects {SAMPLE_RATE} Hz audio, got {}",
            audio.sample_rate
        )));
    }
    let kernel = Kernel::standard();
    if audio.len() < kernel.max_len {
        return Err(Error::AudioTooShort {
            needed: kernel.max_len,
            got: audio.len(),
        });
    }
    let grid = FrameGrid::for_samples(audio.len(), SAMPLE_RATE, HOP);
    let pad = kernel.max_len / 2 + 1;
    let padded = reflect_pad(&audio.samples, pad);
    let mut out = Array2::<f32>::zeros((N_BINS, grid.n_frames));
    for t in 0..grid.n_frames {
        let center = t * HOP + pad;
        for (k, &(offset, len)) in kernel.spans.iter().enumerate() {
            let start = center - len / 2;
            let (re, im) = complex_dot(
                &padded[start..start + len],
                &kernel.re[offset..offset + len],
                &kernel.im[offset..offset + len],
            );
            out[[k, t]] = (re * re + im * im).sqrt();
        }
    }
    Ok(out)
}

pub fn log_compress(x: f32) -> f32 {
    (LOG_GAMMA as f32 * x).ln_1p()
}

/// Log-compressed CQT of 22050 Hz audio.
pub fn cqt(audio: &AudioBuffer) -> Result<CqtMatrix> {
    let mut data = cqt_magnitudes(audio)?;
    data.mapv_inplace(log_compress);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite CQT value".into()));
    }
    Ok(CqtMatrix {
        data,
        grid: FrameGrid::for_samples(audio.len(), SAMPLE_RATE, HOP),
    })
}

/// Fold CQT bins onto 12 pitch classes (two bins per semitone) and
/// L2-normalize each frame. Returns `12 x n_frames`.
pub fn chroma(cqt: &CqtMatrix) -> Array2<f32> {
    let n = cqt.n_frames();
    let per_semitone = BINS_PER_OCTAVE / 12;
    let mut out = Array2::<f32>::zeros((12, n));
    for (k, row) in cqt.data.axis_iter(Axis(0)).enumerate() {
        let pc = (k / per_semitone) % 12;
        let mut dst = out.row_mut(pc);
        dst += &row;
    }
    for mut col in out.axis_iter_mut(Axis(1)) {
        let norm = col.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    out
}
