//! Per-frame base features.
//!
//! The formulas are frame-level reconstructions built on the primitives in
//! [`crate::dsp`]:
//!
//! | feature | per-frame value |
//! |---|---|
//! | intensity | log energy, dB |
//! | speaking_rate | spectral flux averaged over ±300 ms |
//! | lengthening | voicing strength × (95th-pct flux − flux)⁺, averaged over ±150 ms |
//! | creakiness | share of frames within ±100 ms that are low-F0 voiced or have a sub-60 Hz autocorrelation peak |
//! | cpps | smoothed cepstral peak prominence |
//! | pitch_highness / lowness | F0 above p50 (below) scaled by p90−p50 (p50−p10), clamped to [0, 2] |
//! | pitch_wideness | local voiced F0 range over ±300 ms / (p90 − p10) |
//! | pitch_narrowness | (1 − wideness)⁺ where the context is at least half voiced |
//! | peak_disalignment | seconds from the local intensity peak to the local F0 peak (positive = late) |

use log::warn;

use super::{ExtractorConfig, FeatureType, N_FEATURES};
use crate::audio::{AudioBuffer, CANONICAL_RATE};
use crate::dsp::{self, FrameGrid, PitchTrack};
use crate::error::{Error, Result};
use crate::stats::{self, moving_average};

/// Ten per-frame feature rows on one frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseFeatureMatrix {
    pub grid: FrameGrid,
    /// Track length in seconds.
    pub duration_s: f64,
    /// `rows[feature.index()][frame]`.
    pub rows: Vec<Vec<f64>>,
    pub voiced_frames: usize,
}

impl BaseFeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.grid.n_frames
    }

    pub fn row(&self, feature: FeatureType) -> &[f64] {
        &self.rows[feature.index()]
    }
}

pub fn base_features(buf: &AudioBuffer, cfg: &ExtractorConfig) -> Result<BaseFeatureMatrix> {
    if buf.sample_rate != CANONICAL_RATE {
        return Err(Error::InvalidArgument(format!(
            "base features expect {CANONICAL_RATE} Hz input, got {} Hz",
            buf.sample_rate
        )));
    }
    let fc = &cfg.features;
    let grid = dsp::frame_signal(buf, cfg.dsp.frame_ms, cfg.dsp.hop_ms)?;
    let n = grid.n_frames;

    let intensity = dsp::frame_log_energy(buf, &grid);
    let spectra = dsp::frame_spectra(buf, &grid);
    let flux = dsp::spectral_flux(&spectra);
    drop(spectra);
    let pitch = dsp::autocorr_pitch(buf, &grid, &cfg.dsp);
    let cpps = dsp::cpps(buf, &grid, &cfg.dsp);

    let speaking_rate = moving_average(&flux, grid.frames_for_ms(fc.speaking_rate_half_ms));

    let flux_ref = stats::percentile(&flux, fc.lengthening_flux_percentile).unwrap_or(0.0);
    let sustained: Vec<f64> = flux
        .iter()
        .zip(&pitch.voicing_strength)
        .map(|(f, v)| v * (flux_ref - f).max(0.0))
        .collect();
    let lengthening = moving_average(&sustained, grid.frames_for_ms(fc.lengthening_half_ms));

    let voiced = pitch.voiced_f0();
    let mut rows = vec![Vec::new(); N_FEATURES];
    rows[FeatureType::Intensity.index()] = intensity.clone();
    rows[FeatureType::SpeakingRate.index()] = speaking_rate;
    rows[FeatureType::Lengthening.index()] = lengthening;
    rows[FeatureType::Cpps.index()] = cpps;

    if voiced.is_empty() {
        warn!("{}: no voiced frames; pitch features set to 0", buf.source_path);
        let creaky: Vec<f64> = (0..n).map(|i| low_peak(&pitch, i, fc) as u8 as f64).collect();
        rows[FeatureType::Creakiness.index()] = moving_average(&creaky, grid.frames_for_ms(fc.creak_half_ms));
        for t in [
            FeatureType::PeakDisalignment,
            FeatureType::PitchHighness,
            FeatureType::PitchLowness,
            FeatureType::PitchWideness,
            FeatureType::PitchNarrowness,
        ] {
            rows[t.index()] = vec![0.0; n];
        }
    } else {
        let mut sorted = voiced.clone();
        sorted.sort_by(f64::total_cmp);
        let p10 = stats::percentile_sorted(&sorted, 10.0);
        let p50 = stats::percentile_sorted(&sorted, 50.0);
        let p90 = stats::percentile_sorted(&sorted, 90.0);

        let creaky: Vec<f64> = (0..n)
            .map(|i| {
                let low_f0 = pitch.f0[i].is_some_and(|f| f < fc.creak_f0_ratio * p50);
                (low_f0 || low_peak(&pitch, i, fc)) as u8 as f64
            })
            .collect();
        rows[FeatureType::Creakiness.index()] = moving_average(&creaky, grid.frames_for_ms(fc.creak_half_ms));

        let up = (p90 - p50).max(fc.min_pitch_spread_hz);
        let down = (p50 - p10).max(fc.min_pitch_spread_hz);
        rows[FeatureType::PitchHighness.index()] = pitch
            .f0
            .iter()
            .map(|f| f.map_or(0.0, |f| ((f - p50) / up).clamp(0.0, 2.0)))
            .collect();
        rows[FeatureType::PitchLowness.index()] = pitch
            .f0
            .iter()
            .map(|f| f.map_or(0.0, |f| ((p50 - f) / down).clamp(0.0, 2.0)))
            .collect();

        let spread = (p90 - p10).max(fc.min_pitch_spread_hz);
        let half = grid.frames_for_ms(fc.pitch_context_half_ms);
        let mut wide = Vec::with_capacity(n);
        let mut narrow = Vec::with_capacity(n);
        let mut disalign = Vec::with_capacity(n);
        for i in 0..n {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let ctx = lo..hi;
            let mut fmin = f64::INFINITY;
            let mut fmax = f64::NEG_INFINITY;
            let mut f_peak = None::<(usize, f64)>;
            let mut voiced_count = 0usize;
            for j in ctx.clone() {
                if let Some(f) = pitch.f0[j] {
                    voiced_count += 1;
                    fmin = fmin.min(f);
                    fmax = fmax.max(f);
                    if f_peak.is_none_or(|(_, best)| f > best) {
                        f_peak = Some((j, f));
                    }
                }
            }
            let voicing = voiced_count as f64 / ctx.len() as f64;
            let w = if voiced_count > 0 { (fmax - fmin) / spread } else { 0.0 };
            wide.push(w);
            narrow.push(if voicing >= fc.narrowness_min_voicing { (1.0 - w).max(0.0) } else { 0.0 });

            let d = match f_peak {
                Some((jf, _)) if voicing >= fc.disalignment_min_voicing => {
                    let ji = ctx
                        .clone()
                        .max_by(|&a, &b| intensity[a].total_cmp(&intensity[b]).then(b.cmp(&a)))
                        .unwrap();
                    (jf as f64 - ji as f64) * grid.hop_s()
                }
                _ => 0.0,
            };
            disalign.push(d);
        }
        rows[FeatureType::PitchWideness.index()] = wide;
        rows[FeatureType::PitchNarrowness.index()] = narrow;
        rows[FeatureType::PeakDisalignment.index()] = disalign;
    }

    for (t, row) in FeatureType::ALL.iter().zip(rows.iter_mut()) {
        debug_assert_eq!(row.len(), n, "{t}");
        for v in row.iter_mut() {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
    }

    Ok(BaseFeatureMatrix {
        grid,
        duration_s: buf.duration_s(),
        rows,
        voiced_frames: pitch.voiced_count(),
    })
}

fn low_peak(pitch: &PitchTrack, i: usize, fc: &super::FeatureConfig) -> bool {
    pitch.peak_hz[i].is_some_and(|hz| hz < fc.creak_peak_hz) && pitch.voicing_strength[i] >= fc.creak_min_peak
}

/// Z-normalizes every row using statistics from speech frames only.
///
/// Speech frames are those ranked above the `speech_percentile` of the
/// intensity row (ties broken by frame index). Rows with a standard
/// deviation below `sd_floor` come out as all zeros.
pub fn normalize_per_track(m: &BaseFeatureMatrix, cfg: &super::FeatureConfig) -> Result<BaseFeatureMatrix> {
    let n = m.n_frames();
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "per-track normalization needs at least 10 frames, got {n}"
        )));
    }
    let mask = speech_mask(m.row(FeatureType::Intensity), cfg.speech_percentile);
    let rows = m
        .rows
        .iter()
        .map(|row| {
            let sel: Vec<f64> = row.iter().zip(&mask).filter(|(_, &s)| s).map(|(v, _)| *v).collect();
            let mu = stats::mean(&sel);
            let sd = stats::std_dev(&sel);
            if sd < cfg.sd_floor {
                vec![0.0; n]
            } else {
                row.iter().map(|v| (v - mu) / sd).collect()
            }
        })
        .collect();
    Ok(BaseFeatureMatrix {
        rows,
        ..m.clone()
    })
}

fn speech_mask(intensity: &[f64], pct: f64) -> Vec<bool> {
    let n = intensity.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| intensity[a].total_cmp(&intensity[b]).then(a.cmp(&b)));
    let skip = ((pct / 100.0) * n as f64).floor() as usize;
    let skip = skip.min(n.saturating_sub(2));
    let mut mask = vec![false; n];
    for &i in &order[skip..] {
        mask[i] = true;
    }
    mask
}
