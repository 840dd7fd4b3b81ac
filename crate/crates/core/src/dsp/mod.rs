//! Frame-level signal primitives.
//!
//! All features share one [`FrameGrid`] (32 ms frames, 10 ms hop by default).
//! Frame `i` covers samples `[i * hop, i * hop + frame_length)`; its center
//! time is used wherever a frame must be placed on the time axis.

mod cepstrum;
mod pitch;
mod spectrum;

pub use cepstrum::{cpps, cpps_detailed, CppsTrack};
pub use pitch::{autocorr_pitch, PitchTrack};
pub use spectrum::{frame_spectra, hann_window, magnitude_spectrum, spectral_flux, SpectrumAnalyzer};

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Floor added to the mean square before taking the log.
pub const ENERGY_EPSILON: f64 = 1e-10;

/// Tunable constants for the frame-level measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Analysis window for pitch, centered on each frame.
    pub pitch_window_ms: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
    /// A shorter-lag peak scoring at least this fraction of the best peak wins.
    pub octave_factor: f64,
    pub cpps_time_smoothing_frames: usize,
    pub cpps_quefrency_smoothing_bins: usize,
    pub cpps_f0_min_hz: f64,
    pub cpps_f0_max_hz: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            frame_ms: 32.0,
            hop_ms: 10.0,
            pitch_window_ms: 40.0,
            f0_min_hz: 50.0,
            f0_max_hz: 500.0,
            voicing_threshold: 0.45,
            octave_factor: 0.9,
            cpps_time_smoothing_frames: 10,
            cpps_quefrency_smoothing_bins: 10,
            cpps_f0_min_hz: 60.0,
            cpps_f0_max_hz: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub frame_length: usize,
    pub hop: usize,
    pub n_frames: usize,
    pub sample_rate: u32,
}

impl FrameGrid {
    /// Builds the grid for `n_samples`; errors if not even one frame fits.
    pub fn new(n_samples: usize, frame_length: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        if frame_length == 0 || hop == 0 || hop > frame_length {
            return Err(Error::InvalidArgument(format!(
                "need frame_length >= hop > 0, got frame_length={frame_length} hop={hop}"
            )));
        }
        if n_samples < frame_length {
            return Err(Error::SignalTooShort {
                samples: n_samples,
                needed: frame_length,
            });
        }
        Ok(FrameGrid {
            frame_length,
            hop,
            n_frames: (n_samples - frame_length) / hop + 1,
            sample_rate,
        })
    }

    pub fn frame_range(&self, i: usize) -> std::ops::Range<usize> {
        let start = i * self.hop;
        start..start + self.frame_length
    }

    /// Center of frame `i` in seconds.
    pub fn center_s(&self, i: usize) -> f64 {
        (i * self.hop) as f64 / self.sample_rate as f64 + self.frame_length as f64 / (2.0 * self.sample_rate as f64)
    }

    pub fn hop_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    /// Number of frames spanning `ms` milliseconds, at least 1.
    pub fn frames_for_ms(&self, ms: f64) -> usize {
        ((ms / 1000.0) / self.hop_s()).round().max(1.0) as usize
    }
}

pub fn frame_signal(buf: &AudioBuffer, frame_ms: f64, hop_ms: f64) -> Result<FrameGrid> {
    if !(hop_ms > 0.0 && frame_ms >= hop_ms) {
        return Err(Error::InvalidArgument(format!(
            "need frame_ms >= hop_ms > 0, got {frame_ms} / {hop_ms}"
        )));
    }
    let sr = buf.sample_rate as f64;
    let frame_length = (frame_ms * sr / 1000.0).round() as usize;
    let hop = ((hop_ms * sr / 1000.0).round() as usize).max(1);
    FrameGrid::new(buf.samples.len(), frame_length, hop, buf.sample_rate)
}

/// `10 * log10(mean square + 1e-10)`.
pub fn log_energy(frame: &[f64]) -> f64 {
    let ms = if frame.is_empty() {
        0.0
    } else {
        frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64
    };
    10.0 * (ms + ENERGY_EPSILON).log10()
}

/// Per-frame log energy over a grid.
pub fn frame_log_energy(buf: &AudioBuffer, grid: &FrameGrid) -> Vec<f64> {
    (0..grid.n_frames)
        .map(|i| log_energy(&buf.samples[grid.frame_range(i)]))
        .collect()
}
