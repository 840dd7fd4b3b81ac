//! The 100-dimensional prosodic representation.
//!
//! Ten per-frame base features are computed over a track, z-normalized per
//! track, and each utterance is summarized by averaging every feature over
//! ten fixed percentage windows of its duration. Coordinate
//! `feature_index * 10 + window_index` holds feature `feature_index`
//! averaged over window `window_index`.

mod base;
mod tiling;

pub use base::{base_features, normalize_per_track, BaseFeatureMatrix};
pub use tiling::{delta_vector, tile_utterance, DeltaMode};

use serde::{Deserialize, Serialize};

use crate::dsp::DspConfig;
use crate::error::{Error, Result};

/// Bumped whenever a change to extraction alters feature values.
pub const EXTRACTOR_VERSION: &str = "pragsim-features/1";

pub const N_FEATURES: usize = 10;
pub const N_WINDOWS: usize = 10;
pub const N_DIMS: usize = N_FEATURES * N_WINDOWS;

/// Window boundaries in percent of utterance duration.
pub const WINDOW_BOUNDS: [u32; N_WINDOWS + 1] = [0, 5, 10, 20, 30, 50, 70, 80, 90, 95, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureType {
    Intensity,
    Lengthening,
    Creakiness,
    SpeakingRate,
    PeakDisalignment,
    Cpps,
    PitchHighness,
    PitchLowness,
    PitchWideness,
    PitchNarrowness,
}

impl FeatureType {
    pub const ALL: [FeatureType; N_FEATURES] = [
        FeatureType::Intensity,
        FeatureType::Lengthening,
        FeatureType::Creakiness,
        FeatureType::SpeakingRate,
        FeatureType::PeakDisalignment,
        FeatureType::Cpps,
        FeatureType::PitchHighness,
        FeatureType::PitchLowness,
        FeatureType::PitchWideness,
        FeatureType::PitchNarrowness,
    ];

    pub const PITCH: [FeatureType; 4] = [
        FeatureType::PitchHighness,
        FeatureType::PitchLowness,
        FeatureType::PitchWideness,
        FeatureType::PitchNarrowness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureType::Intensity => "intensity",
            FeatureType::Lengthening => "lengthening",
            FeatureType::Creakiness => "creakiness",
            FeatureType::SpeakingRate => "speaking_rate",
            FeatureType::PeakDisalignment => "peak_disalignment",
            FeatureType::Cpps => "cpps",
            FeatureType::PitchHighness => "pitch_highness",
            FeatureType::PitchLowness => "pitch_lowness",
            FeatureType::PitchWideness => "pitch_wideness",
            FeatureType::PitchNarrowness => "pitch_narrowness",
        }
    }

    pub fn from_name(name: &str) -> Option<FeatureType> {
        FeatureType::ALL.into_iter().find(|t| t.name() == name)
    }

    /// The ten coordinates belonging to this feature type.
    pub fn dims(self) -> impl Iterator<Item = usize> {
        let base = self.index() * N_WINDOWS;
        base..base + N_WINDOWS
    }
}

impl std::fmt::Display for FeatureType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn dim_index(feature: FeatureType, window: usize) -> usize {
    feature.index() * N_WINDOWS + window
}

/// Inverse of [`dim_index`].
pub fn dim_parts(dim: usize) -> (FeatureType, usize) {
    (FeatureType::ALL[dim / N_WINDOWS], dim % N_WINDOWS)
}

/// Coordinates at one window position, across all feature types.
pub fn position_dims(window: usize) -> impl Iterator<Item = usize> {
    (0..N_FEATURES).map(move |f| f * N_WINDOWS + window)
}

/// Column labels `<feature>_w<k>` in coordinate order.
pub fn feature_labels() -> Vec<String> {
    (0..N_DIMS)
        .map(|d| {
            let (t, w) = dim_parts(d);
            format!("{}_w{}", t.name(), w)
        })
        .collect()
}

pub fn window_label(window: usize) -> String {
    format!("{}-{}%", WINDOW_BOUNDS[window], WINDOW_BOUNDS[window + 1])
}

/// Exactly [`N_DIMS`] finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != N_DIMS {
            return Err(Error::InvalidArgument(format!(
                "feature vector needs {N_DIMS} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("feature vector value {i} is not finite")));
        }
        Ok(FeatureVector(values))
    }

    pub fn zeros() -> Self {
        FeatureVector(vec![0.0; N_DIMS])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, feature: FeatureType, window: usize) -> f64 {
        self.0[dim_index(feature, window)]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        FeatureVector::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Constants for the base-feature formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Half-width of the speaking-rate flux average.
    pub speaking_rate_half_ms: f64,
    pub lengthening_half_ms: f64,
    /// Percentile of track flux used as the "no change" reference.
    pub lengthening_flux_percentile: f64,
    pub creak_half_ms: f64,
    /// Voiced frames below this fraction of the track median F0 count as creaky.
    pub creak_f0_ratio: f64,
    /// Autocorrelation peaks below this frequency count as creaky...
    pub creak_peak_hz: f64,
    /// ...when the peak is at least this strong.
    pub creak_min_peak: f64,
    /// Half-width of the context for wideness, narrowness and disalignment.
    pub pitch_context_half_ms: f64,
    /// Floor on the F0 percentile spreads used as denominators.
    pub min_pitch_spread_hz: f64,
    pub narrowness_min_voicing: f64,
    pub disalignment_min_voicing: f64,
    /// Frames with intensity in the bottom part of the track are excluded
    /// from the normalization statistics.
    pub speech_percentile: f64,
    pub sd_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            speaking_rate_half_ms: 300.0,
            lengthening_half_ms: 150.0,
            lengthening_flux_percentile: 95.0,
            creak_half_ms: 100.0,
            creak_f0_ratio: 0.6,
            creak_peak_hz: 60.0,
            creak_min_peak: 0.3,
            pitch_context_half_ms: 300.0,
            min_pitch_spread_hz: 10.0,
            narrowness_min_voicing: 0.5,
            disalignment_min_voicing: 0.25,
            speech_percentile: 30.0,
            sd_floor: 1e-8,
        }
    }
}

/// Everything that determines feature values for a given input.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub dsp: DspConfig,
    pub features: FeatureConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_roundtrips() {
        for d in 0..N_DIMS {
            let (t, w) = dim_parts(d);
            assert_eq!(dim_index(t, w), d);
        }
        let labels = feature_labels();
        assert_eq!(labels.len(), 100);
        assert_eq!(labels[0], "intensity_w0");
        assert_eq!(labels[37], "speaking_rate_w7");
        assert_eq!(labels[99], "pitch_narrowness_w9");
    }

    #[test]
    fn windows_partition_the_unit_interval() {
        assert_eq!(WINDOW_BOUNDS[0], 0);
        assert_eq!(WINDOW_BOUNDS[N_WINDOWS], 100);
        assert!(WINDOW_BOUNDS.windows(2).all(|w| w[0] < w[1]));
        let total: u32 = WINDOW_BOUNDS.windows(2).map(|w| w[1] - w[0]).sum();
        assert_eq!(total, 100);
        // symmetric around 50%
        for i in 0..=N_WINDOWS {
            assert_eq!(WINDOW_BOUNDS[i] + WINDOW_BOUNDS[N_WINDOWS - i], 100);
        }
    }

    #[test]
    fn types_and_positions_partition_dims() {
        let mut seen = vec![0; N_DIMS];
        for t in FeatureType::ALL {
            t.dims().for_each(|d| seen[d] += 1);
        }
        assert!(seen.iter().all(|&c| c == 1));
        let mut seen = vec![0; N_DIMS];
        for w in 0..N_WINDOWS {
            position_dims(w).for_each(|d| seen[d] += 1);
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn names_roundtrip() {
        for t in FeatureType::ALL {
            assert_eq!(FeatureType::from_name(t.name()), Some(t));
        }
        assert_eq!(FeatureType::from_name("nasality"), None);
    }

    #[test]
    fn vector_validation() {
        assert!(FeatureVector::new(vec![0.0; 99]).is_err());
        let mut v = vec![0.0; 100];
        v[3] = f64::INFINITY;
        assert!(FeatureVector::new(v).is_err());
        let json = serde_json::to_string(&FeatureVector::zeros()).unwrap();
        let back: FeatureVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, FeatureVector::zeros());
        assert!(serde_json::from_str::<FeatureVector>("[1.0, 2.0]").is_err());
    }
}
