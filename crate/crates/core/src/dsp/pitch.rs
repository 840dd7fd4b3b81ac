//! Normalized-autocorrelation pitch tracker.
//!
//! Each frame is analyzed over a window of `pitch_window_ms` centered on the
//! frame center (shifted inward at the signal edges). The autocorrelation is
//! computed by FFT and normalized by the energies of the two overlapping
//! segments, so a perfectly periodic signal scores 1 at its period.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{DspConfig, FrameGrid};
use crate::audio::AudioBuffer;

#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    /// F0 in Hz for voiced frames, `None` for unvoiced.
    pub f0: Vec<Option<f64>>,
    /// Best normalized autocorrelation peak, clamped to `[0, 1]`.
    pub voicing_strength: Vec<f64>,
    /// Frequency of the raw autocorrelation maximum before octave
    /// correction; `None` for silent frames.
    pub peak_hz: Vec<Option<f64>>,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.f0.iter().filter(|f| f.is_some()).count()
    }

    pub fn voiced_f0(&self) -> Vec<f64> {
        self.f0.iter().flatten().copied().collect()
    }
}

struct FrameAnalyzer {
    n_fft: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    min_lag: usize,
    max_lag: usize,
}

struct FramePitch {
    f0: Option<f64>,
    strength: f64,
    peak_hz: Option<f64>,
}

impl FrameAnalyzer {
    fn new(window: usize, sample_rate: f64, cfg: &DspConfig) -> Self {
        let n_fft = (2 * window).next_power_of_two();
        let mut planner = FftPlanner::new();
        let min_lag = ((sample_rate / cfg.f0_max_hz).floor() as usize).max(2);
        let max_lag = ((sample_rate / cfg.f0_min_hz).ceil() as usize).min(window.saturating_sub(2)).max(min_lag + 2);
        FrameAnalyzer {
            n_fft,
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
            min_lag,
            max_lag,
        }
    }

    /// Normalized autocorrelation for lags `0..=max_lag + 1`.
    fn nccf(&self, seg: &[f64]) -> Option<Vec<f64>> {
        let n = seg.len();
        let mean = seg.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = seg.iter().map(|x| x - mean).collect();
        let energy: f64 = centered.iter().map(|x| x * x).sum();
        if energy <= 1e-10 * n as f64 {
            return None;
        }
        let mut buf: Vec<Complex<f64>> = centered
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.n_fft)
            .collect();
        self.forward.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut buf);

        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for x in &centered {
            prefix.push(prefix.last().unwrap() + x * x);
        }
        let top = (self.max_lag + 1).min(n - 1);
        let scale = 1.0 / self.n_fft as f64;
        Some(
            (0..=top)
                .map(|lag| {
                    let head = prefix[n - lag];
                    let tail = prefix[n] - prefix[lag];
                    let denom = (head * tail).sqrt();
                    if denom <= 1e-12 {
                        0.0
                    } else {
                        buf[lag].re * scale / denom
                    }
                })
                .collect(),
        )
    }

    fn analyze(&self, seg: &[f64], sample_rate: f64, cfg: &DspConfig) -> FramePitch {
        let unvoiced = FramePitch {
            f0: None,
            strength: 0.0,
            peak_hz: None,
        };
        let Some(r) = self.nccf(seg) else {
            return unvoiced;
        };
        let hi = self.max_lag.min(r.len().saturating_sub(2));
        if hi <= self.min_lag {
            return unvoiced;
        }
        let lags = self.min_lag..=hi;
        let best = lags.clone().max_by(|&a, &b| r[a].total_cmp(&r[b]).then(b.cmp(&a))).unwrap();
        let best_score = r[best];
        let peak_hz = Some(sample_rate / best as f64);

        // Octave-error suppression: take the shortest-lag local maximum that
        // scores close enough to the global one.
        let mut chosen = best;
        if best_score > 0.0 {
            for lag in self.min_lag.max(1)..best {
                if r[lag] >= cfg.octave_factor * best_score && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] {
                    chosen = lag;
                    break;
                }
            }
        }
        let score = r[chosen];
        let strength = score.clamp(0.0, 1.0);
        if score < cfg.voicing_threshold {
            return FramePitch {
                f0: None,
                strength,
                peak_hz,
            };
        }
        let (a, b, c) = (r[chosen - 1], r[chosen], r[chosen + 1]);
        let curvature = a - 2.0 * b + c;
        let offset = if curvature < 0.0 {
            (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let f0 = (sample_rate / (chosen as f64 + offset)).clamp(cfg.f0_min_hz, cfg.f0_max_hz);
        FramePitch {
            f0: Some(f0),
            strength,
            peak_hz,
        }
    }
}

/// Frame-synchronous F0 and voicing strength.
pub fn autocorr_pitch(buf: &AudioBuffer, grid: &FrameGrid, cfg: &DspConfig) -> PitchTrack {
    let sr = buf.sample_rate as f64;
    let n = buf.samples.len();
    let window = ((cfg.pitch_window_ms * sr / 1000.0).round() as usize).clamp(4, n.max(4));
    let window = window.min(n);
    let analyzer = FrameAnalyzer::new(window, sr, cfg);

    let mut track = PitchTrack {
        f0: Vec::with_capacity(grid.n_frames),
        voicing_strength: Vec::with_capacity(grid.n_frames),
        peak_hz: Vec::with_capacity(grid.n_frames),
    };
    for i in 0..grid.n_frames {
        let center = i * grid.hop + grid.frame_length / 2;
        let start = center.saturating_sub(window / 2).min(n - window);
        let fp = analyzer.analyze(&buf.samples[start..start + window], sr, cfg);
        track.f0.push(fp.f0);
        track.voicing_strength.push(fp.strength);
        track.peak_hz.push(fp.peak_hz);
    }
    track
}
