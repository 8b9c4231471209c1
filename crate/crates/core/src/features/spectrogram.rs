//! Built-in log-frequency spectrogram, used as the harmonic repetition
//! feature when no precomputed constant-Q matrix is supplied.
//!
//! Frames are centred on multiples of the hop with zero padding at both ends,
//! Hann-windowed, and their power spectrum is pooled into log-spaced bands.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{FeatureMatrix, REPETITION_CQT};
use crate::audio::AudioBuffer;
use crate::{Error, Result};

pub const FALLBACK_HOP: usize = 512;
pub const FALLBACK_FFT_SIZE: usize = 4096;
pub const FALLBACK_BANDS: usize = 36;
pub const FALLBACK_FMIN: f64 = 32.7;
pub const FALLBACK_FMAX: f64 = 8000.0;
/// Value of a band with no energy, in dB.
pub const FALLBACK_FLOOR_DB: f32 = -100.0;

const MIN_SAMPLE_RATE: u32 = 8000;

/// The `FALLBACK_BANDS + 1` band edges in Hz, geometrically spaced.
pub fn band_edges() -> Vec<f64> {
    let ratio = FALLBACK_FMAX / FALLBACK_FMIN;
    (0..=FALLBACK_BANDS)
        .map(|k| FALLBACK_FMIN * ratio.powf(k as f64 / FALLBACK_BANDS as f64))
        .collect()
}

/// FFT bins pooled by each band. A band too narrow to contain a bin centre
/// borrows the bin closest to its geometric centre.
fn band_bins(sample_rate: u32) -> Vec<Vec<usize>> {
    let bin_hz = sample_rate as f64 / FALLBACK_FFT_SIZE as f64;
    let nyquist_bin = FALLBACK_FFT_SIZE / 2;
    band_edges()
        .windows(2)
        .map(|edge| {
            let bins: Vec<usize> = (0..=nyquist_bin)
                .filter(|&b| {
                    let f = b as f64 * bin_hz;
                    f >= edge[0] && f < edge[1]
                })
                .collect();
            if bins.is_empty() {
                let centre = (edge[0] * edge[1]).sqrt();
                vec![((centre / bin_hz).round() as usize).min(nyquist_bin)]
            } else {
                bins
            }
        })
        .collect()
}

pub fn compute_fallback_repetition_feature(audio: &AudioBuffer) -> Result<FeatureMatrix> {
    if audio.sample_rate < MIN_SAMPLE_RATE {
        return Err(Error::InvalidAudio(format!(
            "sample rate {} Hz is below {MIN_SAMPLE_RATE} Hz",
            audio.sample_rate
        )));
    }
    if audio.frames() == 0 {
        return Err(Error::InvalidAudio("empty audio".into()));
    }
    let mono = audio.to_mono();
    let n_frames = 1 + mono.len() / FALLBACK_HOP;
    let half = FALLBACK_FFT_SIZE / 2;

    let window: Vec<f64> = (0..FALLBACK_FFT_SIZE)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / FALLBACK_FFT_SIZE as f64;
            0.5 - 0.5 * phase.cos()
        })
        .collect();
    let norm = window.iter().sum::<f64>().powi(2);
    let bands = band_bins(audio.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FALLBACK_FFT_SIZE);

    let mut values = Array2::<f32>::zeros((n_frames, FALLBACK_BANDS));
    let mut buf = vec![Complex::new(0.0, 0.0); FALLBACK_FFT_SIZE];
    let mut power = vec![0.0f64; half + 1];
    for t in 0..n_frames {
        let centre = t * FALLBACK_HOP;
        for (i, slot) in buf.iter_mut().enumerate() {
            let sample = (centre + i)
                .checked_sub(half)
                .and_then(|idx| mono.get(idx))
                .copied()
                .unwrap_or(0.0);
            *slot = Complex::new(sample as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr() / norm;
        }
        for (k, bins) in bands.iter().enumerate() {
            let mean = bins.iter().map(|&b| power[b]).sum::<f64>() / bins.len() as f64;
            let db = 10.0 * mean.max(1e-10).log10();
            values[[t, k]] = (db as f32).max(FALLBACK_FLOOR_DB);
        }
    }
    let frame_times = (0..n_frames)
        .map(|t| (t * FALLBACK_HOP) as f64 / audio.sample_rate as f64)
        .collect();
    FeatureMatrix::frames(REPETITION_CQT, values, frame_times)
}
