use serde::{Deserialize, Serialize};

use super::{BaseFeatureMatrix, FeatureVector, N_DIMS, N_FEATURES, N_WINDOWS, WINDOW_BOUNDS};
use crate::error::{Error, Result};

/// Minimum number of frame centers an utterance span must contain.
pub const MIN_SPAN_FRAMES: usize = 20;

// Relative positions computed from seconds can land a hair below a window
// boundary; nudge them up so boundary frames go to the later window.
const POSITION_NUDGE: f64 = 1e-9;

/// Window index for a (nudged) percentage position in `[0, 100)`.
fn window_of(pct: f64) -> usize {
    (0..N_WINDOWS)
        .rev()
        .find(|&w| pct >= WINDOW_BOUNDS[w] as f64)
        .unwrap_or(0)
}

/// Averages every feature row over the ten percentage windows of
/// `[start_s, end_s)`. Frames are assigned by center time; a window that
/// catches no frame center takes the value of the frame nearest its middle.
pub fn tile_utterance(m: &BaseFeatureMatrix, start_s: f64, end_s: f64) -> Result<FeatureVector> {
    if !(start_s >= 0.0 && end_s > start_s && end_s <= m.duration_s + 1e-9) {
        return Err(Error::SpanOutsideTrack {
            start_s,
            end_s,
            track_s: m.duration_s,
        });
    }
    let dur = end_s - start_s;
    let grid = &m.grid;
    let mut sums = [[0.0f64; N_WINDOWS]; N_FEATURES];
    let mut counts = [0usize; N_WINDOWS];
    let mut frames = 0usize;
    for i in 0..grid.n_frames {
        let pct = (grid.center_s(i) - start_s) / dur * 100.0 + POSITION_NUDGE;
        if !(0.0..100.0).contains(&pct) {
            continue;
        }
        frames += 1;
        let w = window_of(pct);
        counts[w] += 1;
        for (f, row) in m.rows.iter().enumerate() {
            sums[f][w] += row[i];
        }
    }
    if frames < MIN_SPAN_FRAMES {
        return Err(Error::SpanTooShort {
            start_s,
            end_s,
            frames,
            needed: MIN_SPAN_FRAMES,
        });
    }

    let mut values = vec![0.0; N_DIMS];
    for w in 0..N_WINDOWS {
        let fallback = (counts[w] == 0).then(|| {
            let mid = start_s + dur * (WINDOW_BOUNDS[w] + WINDOW_BOUNDS[w + 1]) as f64 / 200.0;
            (0..grid.n_frames)
                .min_by(|&a, &b| (grid.center_s(a) - mid).abs().total_cmp(&(grid.center_s(b) - mid).abs()))
                .unwrap()
        });
        for f in 0..N_FEATURES {
            values[f * N_WINDOWS + w] = match fallback {
                Some(i) => m.rows[f][i],
                None => sums[f][w] / counts[w] as f64,
            };
        }
    }
    FeatureVector::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    #[default]
    Signed,
    Absolute,
}

/// `seed - reenactment` (or its absolute value), elementwise.
pub fn delta_vector(seed: &FeatureVector, reenactment: &FeatureVector, mode: DeltaMode) -> FeatureVector {
    let values = seed
        .as_slice()
        .iter()
        .zip(reenactment.as_slice())
        .map(|(s, r)| match mode {
            DeltaMode::Signed => s - r,
            DeltaMode::Absolute => (s - r).abs(),
        })
        .collect();
    FeatureVector(values)
}
