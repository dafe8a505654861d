use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate,
        }
    }

    /// Mix interleaved channels down to mono.
    pub fn from_interleaved(interleaved: &[f32], channels: usize, sample_rate: u32) -> Self {
        let channels = channels.max(1);
        let samples = interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect();
        AudioBuffer::new(samples, sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| f64::from(s).powi(2)).sum();
        (sum / self.samples.len() as f64).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }
}

/// Zero crossings of the interpolation kernel on each side.
const SINC_ZEROS: f64 = 16.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let u = 0.5 * (x + 1.0);
    0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos()
}

/// Band-limited resampling with a Blackman-windowed sinc.
///
/// Output length is `round(n * target / source)`.
pub fn resample(audio: &AudioBuffer, target: u32) -> Result<AudioBuffer> {
    if audio.is_empty() {
        return Err(Error::Empty { what: "audio" });
    }
    if audio.sample_rate == 0 || target == 0 {
        return Err(Error::InvalidArgument("sample rate must be positive".into()));
    }
    if audio.sample_rate == target {
        return Ok(audio.clone());
    }
    let source = f64::from(audio.sample_rate);
    let ratio = f64::from(target) / source;
    let cutoff = ratio.min(1.0);
    let half_width = SINC_ZEROS / cutoff;
    let n_out = (audio.len() as f64 * ratio).round() as usize;
    let input = &audio.samples;
    let last = input.len() as isize - 1;

    let samples = (0..n_out)
        .map(|j| {
            let x = j as f64 / ratio;
            let lo = (x - half_width).ceil().max(0.0) as isize;
            let hi = ((x + half_width).floor() as isize).min(last);
            let mut acc = 0.0;
            for n in lo..=hi {
                let d = x - n as f64;
                let w = blackman(d / half_width);
                acc += f64::from(input[n as usize]) * cutoff * sinc(cutoff * d) * w;
            }
            acc as f32
        })
        .collect();
    Ok(AudioBuffer::new(samples, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn sine(freq: f64, sr: u32, n: usize) -> AudioBuffer {
        let samples = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / f64::from(sr)).sin() as f32 * 0.5)
            .collect();
        AudioBuffer::new(samples, sr)
    }

    fn peak_hz(audio: &AudioBuffer) -> f64 {
        let n = audio.len();
        let mut buf: Vec<Complex<f64>> = audio
            .samples
            .iter()
            .map(|&s| Complex::new(f64::from(s), 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k = (1..n / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap();
        k as f64 * f64::from(audio.sample_rate) / n as f64
    }

    #[test]
    fn decimation_length() {
        let a = AudioBuffer::new(vec![0.1; 44100], 44100);
        assert_eq!(resample(&a, 22050).unwrap().len(), 22050);
    }

    #[test]
    fn identity_rate() {
        let a = sine(440.0, 22050, 1000);
        assert_eq!(resample(&a, 22050).unwrap(), a);
    }

    #[test]
    fn spectral_peak_survives() {
        let a = sine(440.0, 48000, 48000);
        let b = resample(&a, 22050).unwrap();
        assert_eq!(b.len(), 22050);
        // one FFT bin is 1 Hz for one second of audio
        assert!((peak_hz(&a) - 440.0).abs() <= 1.0);
        assert!((peak_hz(&b) - 440.0).abs() <= 1.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(resample(&AudioBuffer::new(vec![], 44100), 22050).is_err());
    }

    #[test]
    fn stereo_mixdown() {
        let a = AudioBuffer::from_interleaved(&[1.0, 0.0, 0.5, 0.5], 2, 8000);
        assert_eq!(a.samples, vec![0.5, 0.5]);
    }
}
