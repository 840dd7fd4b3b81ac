//! Smoothed cepstral peak prominence.
//!
//! Per frame: Hann window, FFT, natural-log magnitude, inverse FFT to the
//! real cepstrum, converted to dB as `10 log10(c^2)`. The dB cepstrogram is
//! smoothed over time and then over quefrency; a least-squares line is fit
//! over the pitch quefrency range and CPPS is the peak's height above it.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{hann_window, DspConfig, FrameGrid};
use crate::audio::AudioBuffer;
use crate::stats::boxcar_smooth;

#[derive(Debug, Clone, PartialEq)]
pub struct CppsTrack {
    /// Peak prominence above the regression line, dB.
    pub cpps: Vec<f64>,
    /// Quefrency of the selected peak, seconds.
    pub peak_quefrency_s: Vec<f64>,
}

pub fn cpps(buf: &AudioBuffer, grid: &FrameGrid, cfg: &DspConfig) -> Vec<f64> {
    cpps_detailed(buf, grid, cfg).cpps
}

pub fn cpps_detailed(buf: &AudioBuffer, grid: &FrameGrid, cfg: &DspConfig) -> CppsTrack {
    let sr = buf.sample_rate as f64;
    let q_lo = (sr / cfg.cpps_f0_max_hz).ceil() as usize;
    let q_hi = (sr / cfg.cpps_f0_min_hz).floor() as usize;
    let n_fft = grid.frame_length.max(2 * q_hi + 2).next_power_of_two();
    let n_quef = n_fft / 2;
    let q_hi = q_hi.min(n_quef - 1);

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n_fft);
    let inverse = planner.plan_fft_inverse(n_fft);
    let window = hann_window(grid.frame_length);

    let mut cepstrogram: Vec<Vec<f64>> = Vec::with_capacity(grid.n_frames);
    let mut scratch = vec![Complex::new(0.0, 0.0); n_fft];
    for i in 0..grid.n_frames {
        scratch.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for ((s, x), w) in scratch.iter_mut().zip(&buf.samples[grid.frame_range(i)]).zip(&window) {
            s.re = x * w;
        }
        forward.process(&mut scratch);
        for c in scratch.iter_mut() {
            *c = Complex::new((c.norm() + 1e-10).ln(), 0.0);
        }
        inverse.process(&mut scratch);
        let scale = 1.0 / n_fft as f64;
        cepstrogram.push(
            scratch[..n_quef]
                .iter()
                .map(|c| {
                    let v = c.re * scale;
                    10.0 * (v * v + 1e-20).log10()
                })
                .collect(),
        );
    }

    // Smooth across time per quefrency bin, then across quefrency per frame.
    let t_width = cfg.cpps_time_smoothing_frames.max(1);
    let mut smoothed = vec![vec![0.0; n_quef]; grid.n_frames];
    for q in 0..n_quef {
        let column: Vec<f64> = cepstrogram.iter().map(|row| row[q]).collect();
        for (i, v) in boxcar_smooth(&column, t_width).into_iter().enumerate() {
            smoothed[i][q] = v;
        }
    }

    let mut out = CppsTrack {
        cpps: Vec::with_capacity(grid.n_frames),
        peak_quefrency_s: Vec::with_capacity(grid.n_frames),
    };
    for row in &smoothed {
        let row = boxcar_smooth(row, cfg.cpps_quefrency_smoothing_bins.max(1));
        let (slope, intercept) = fit_line(q_lo, &row[q_lo..=q_hi]);
        let peak = (q_lo..=q_hi).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(q_lo);
        let prominence = row[peak] - (intercept + slope * peak as f64);
        out.cpps.push(if prominence.is_finite() { prominence } else { 0.0 });
        out.peak_quefrency_s.push(peak as f64 / sr);
    }
    out
}

/// Least-squares line `y = slope * q + intercept` for `ys` at `q0, q0+1, ...`.
fn fit_line(q0: usize, ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let mx = q0 as f64 + (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = (q0 + k) as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}
