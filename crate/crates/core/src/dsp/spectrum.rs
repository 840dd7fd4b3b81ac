use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::FrameGrid;
use crate::audio::AudioBuffer;

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude spectrum for frames of a fixed length, zero-padded to the next
/// power of two. The plan is shared and `Send + Sync`.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer").field("n_fft", &self.n_fft).finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(frame_length: usize) -> Self {
        let n_fft = frame_length.max(1).next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        SpectrumAnalyzer { n_fft, fft }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// `|FFT|` bins `0..=n_fft/2` of an already-windowed frame.
    pub fn magnitude(&self, frame: &[f64]) -> Vec<f64> {
        assert!(frame.len() <= self.n_fft, "frame longer than FFT size");
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.n_fft)
            .collect();
        self.fft.process(&mut buf);
        buf[..=self.n_fft / 2].iter().map(|c| c.norm()).collect()
    }
}

/// One-off magnitude spectrum of a windowed frame (length `N/2 + 1` after
/// padding to a power of two `N`).
pub fn magnitude_spectrum(frame: &[f64]) -> Vec<f64> {
    SpectrumAnalyzer::new(frame.len()).magnitude(frame)
}

/// Hann-windowed magnitude spectra of every frame on the grid.
pub fn frame_spectra(buf: &AudioBuffer, grid: &FrameGrid) -> Vec<Vec<f64>> {
    let analyzer = SpectrumAnalyzer::new(grid.frame_length);
    let window = hann_window(grid.frame_length);
    let mut scratch = vec![0.0; grid.frame_length];
    (0..grid.n_frames)
        .map(|i| {
            for ((s, x), w) in scratch.iter_mut().zip(&buf.samples[grid.frame_range(i)]).zip(&window) {
                *s = x * w;
            }
            analyzer.magnitude(&scratch)
        })
        .collect()
}

fn l2_normalized(spec: &[f64]) -> Vec<f64> {
    let norm = spec.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        spec.iter().map(|x| x / norm).collect()
    } else {
        vec![0.0; spec.len()]
    }
}

/// Positive spectral change between consecutive L2-normalized spectra.
/// `flux[0] = 0`.
pub fn spectral_flux(spectra: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(spectra.len());
    let mut prev: Option<Vec<f64>> = None;
    for spec in spectra {
        let cur = l2_normalized(spec);
        let value = match &prev {
            None => 0.0,
            Some(p) => cur.iter().zip(p).map(|(c, p)| (c - p).max(0.0)).sum(),
        };
        out.push(value);
        prev = Some(cur);
    }
    out
}
