//! Short-time Fourier magnitude with a periodic Hann window.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;

pub const DEFAULT_WINDOW: usize = 128;
pub const DEFAULT_HOP: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// frames × (window_len / 2 + 1)
    pub magnitudes: Vec<Vec<f64>>,
    pub window_len: usize,
    pub hop: usize,
    pub rate_hz: f64,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.rate_hz / self.window_len as f64
    }

    /// Energy of one frame recovered from its one-sided spectrum.
    pub fn frame_energy(&self, frame: usize) -> f64 {
        one_sided_energy(&self.magnitudes[frame], self.window_len)
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// The Hann-windowed samples of frame `index`.
pub fn windowed_frame(signal: &[f64], index: usize, window_len: usize, hop: usize) -> Vec<f64> {
    let start = index * hop;
    hann(window_len)
        .iter()
        .zip(&signal[start..start + window_len])
        .map(|(w, x)| w * x)
        .collect()
}

/// Parseval on a real frame: Σx² = (1/N) Σ|X_k|² with the one-sided bins
/// between DC and Nyquist counted twice.
pub fn one_sided_energy(mags: &[f64], n: usize) -> f64 {
    let mut e = 0.0;
    for (k, m) in mags.iter().enumerate() {
        let twice = k != 0 && !(n % 2 == 0 && k == n / 2);
        e += if twice { 2.0 } else { 1.0 } * m * m;
    }
    e / n as f64
}

pub fn spectrogram(signal: &[f64], rate_hz: f64, window_len: usize, hop: usize) -> Result<Spectrogram, AnalyticsError> {
    if window_len == 0 || hop == 0 || window_len > signal.len() || !(rate_hz > 0.0) {
        return Err(AnalyticsError::Domain(format!(
            "window {window_len} / hop {hop} invalid for {} samples",
            signal.len()
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);
    let frames = (signal.len() - window_len) / hop + 1;
    let mut magnitudes = Vec::with_capacity(frames);
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    for f in 0..frames {
        for (b, x) in buf.iter_mut().zip(windowed_frame(signal, f, window_len, hop)) {
            *b = Complex::new(x, 0.0);
        }
        fft.process(&mut buf);
        magnitudes.push(buf[..window_len / 2 + 1].iter().map(|c| c.norm()).collect());
    }
    Ok(Spectrogram {
        magnitudes,
        window_len,
        hop,
        rate_hz,
    })
}
