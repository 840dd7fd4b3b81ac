//! Synthetic speech-like corpus with known prosodic manipulations.
//!
//! Utterances are trains of vowel-like syllables: a glottal impulse train
//! through three formant resonators under a raised-cosine envelope, over a
//! low noise floor. Each pair manipulates speaking rate (syllables per
//! second) and pitch (semitone offset) between seed and re-enactment, and
//! the judgment is a noisy increasing function of both signed deltas, with
//! rate dominating.
//!
//! Seeds and re-enactments are packed into multi-utterance tracks so that
//! per-track normalization still leaves differences between utterances.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, WavEncoding, CANONICAL_RATE};
use crate::dataset::{load_manifest, write_manifest, PairRecord, UtteranceSpan, JUDGMENT_MAX, JUDGMENT_MIN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub utterances_per_track: usize,
    /// Share of tracks assigned to session "1"; the rest are session "2".
    pub train_share: f64,
    pub judgment_noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pairs: 300,
            utterances_per_track: 20,
            train_share: 0.6,
            judgment_noise_sd: 0.3,
            seed: 0,
        }
    }
}

/// Prosodic settings of one synthetic utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSpec {
    pub duration_s: f64,
    pub syllables_per_s: f64,
    /// Speaker base F0 in Hz.
    pub base_f0: f64,
    /// Offset from the base, semitones.
    pub pitch_st: f64,
}

/// Ground truth behind one generated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPair {
    pub pair_id: String,
    pub seed: UtteranceSpec,
    pub reenactment: UtteranceSpec,
    pub rate_delta: f64,
    pub pitch_delta_st: f64,
    pub judgment: f64,
}

/// Noise-free judgment for signed seed-minus-reenactment deltas.
pub fn judgment_mean(rate_delta: f64, pitch_delta_st: f64) -> f64 {
    3.0 + 1.5 * (1.2 * rate_delta).tanh() + 0.5 * (pitch_delta_st / 3.0).tanh()
}

const VOWELS: [(f64, f64, f64); 5] = [
    (730.0, 1090.0, 2440.0),
    (270.0, 2290.0, 3010.0),
    (530.0, 1840.0, 2480.0),
    (300.0, 870.0, 2240.0),
    (570.0, 840.0, 2410.0),
];
const FORMANT_BW: [f64; 3] = [90.0, 110.0, 170.0];
const NOISE_FLOOR: f64 = 1e-3;
const SYLLABLE_RMS: f64 = 0.08;
const TRACK_GAP_S: f64 = 0.4;

/// Two-pole resonator with unit gain at its center frequency.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bw: f64, sr: f64) -> Self {
        let r = (-PI * bw / sr).exp();
        let theta = 2.0 * PI * freq / sr;
        let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
        // |H(e^{j theta})| for y = x + a1 y1 + a2 y2
        let re = 1.0 - a1 * theta.cos() - a2 * (2.0 * theta).cos();
        let im = a1 * theta.sin() + a2 * (2.0 * theta).sin();
        Resonator {
            a1,
            a2,
            gain: (re * re + im * im).sqrt(),
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Samples of one utterance at the canonical rate, without the noise floor.
pub fn synth_utterance(spec: &UtteranceSpec, rng: &mut impl Rng) -> Vec<f64> {
    let sr = CANONICAL_RATE as f64;
    let n = (spec.duration_s * sr).round() as usize;
    let n_syl = ((spec.syllables_per_s * spec.duration_s).round() as usize).max(2);
    let period = n as f64 / n_syl as f64;
    let mut out = vec![0.0; n];
    for s in 0..n_syl {
        let start = (s as f64 * period) as usize;
        let len = ((0.65 * period) as usize).min(n - start);
        let (f1, f2, f3) = VOWELS[rng.random_range(0..VOWELS.len())];
        let mut filters: Vec<Resonator> = [f1, f2, f3].iter().zip(FORMANT_BW).map(|(&f, bw)| Resonator::new(f, bw, sr)).collect();
        // gentle declination plus per-syllable jitter
        let decl = -1.5 * s as f64 / n_syl as f64;
        let st = spec.pitch_st + decl + rng.random_range(-0.4..0.4);
        let f0 = spec.base_f0 * 2f64.powf(st / 12.0);
        let level = 10f64.powf(rng.random_range(-3.0..3.0) / 20.0);
        let mut phase = rng.random_range(0.0..1.0);
        let ramp = ((0.015 * sr) as usize).min(len / 2).max(1);
        let mut syl = Vec::with_capacity(len);
        for i in 0..len {
            phase += f0 / sr;
            let mut y = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            for f in filters.iter_mut() {
                y = f.step(y);
            }
            let env = if i < ramp {
                0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
            } else if len - i <= ramp {
                0.5 - 0.5 * (PI * (len - i) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            syl.push(env * y);
        }
        let rms = (syl.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64).sqrt();
        if rms > 0.0 {
            let scale = SYLLABLE_RMS * level / rms;
            for (o, y) in out[start..start + len].iter_mut().zip(&syl) {
                *o = scale * y;
            }
        }
    }
    out
}

/// Writes `<dir>/manifest.csv` plus its WAV tracks and returns the ground
/// truth for every pair alongside the loaded manifest records.
pub fn generate_corpus(dir: &Path, cfg: &SynthConfig) -> Result<(Vec<PairRecord>, Vec<SynthPair>)> {
    if cfg.n_pairs == 0 || cfg.utterances_per_track == 0 {
        return Err(Error::InvalidArgument("synthetic corpus needs pairs and tracks".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.judgment_noise_sd.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let floor = Normal::new(0.0, NOISE_FLOOR).expect("valid sd");

    let mut truth = Vec::with_capacity(cfg.n_pairs);
    let mut records = Vec::with_capacity(cfg.n_pairs);
    let n_tracks = cfg.n_pairs.div_ceil(cfg.utterances_per_track);
    let n_train_tracks = ((n_tracks as f64 * cfg.train_share).round() as usize).clamp(1, n_tracks.max(2) - 1);
    for t in 0..n_tracks {
        let session = if t < n_train_tracks { "1" } else { "2" };
        let base_seed = rng.random_range(95.0..220.0);
        let base_reen = rng.random_range(95.0..220.0);
        let (mut seed_track, mut reen_track) = (Vec::new(), Vec::new());
        let seed_name = format!("track{t:03}_seed.wav");
        let reen_name = format!("track{t:03}_reen.wav");
        let first = t * cfg.utterances_per_track;
        for p in first..(first + cfg.utterances_per_track).min(cfg.n_pairs) {
            let seed_rate: f64 = rng.random_range(2.5..6.5);
            let reen_rate = (seed_rate - rng.random_range(-2.0..2.0)).clamp(2.0, 7.0);
            let seed_st = rng.random_range(-3.0..3.0);
            let reen_st = seed_st - 2.0 * rng.random_range(-2.0..2.0);
            let seed = UtteranceSpec {
                duration_s: rng.random_range(1.4..2.0),
                syllables_per_s: seed_rate,
                base_f0: base_seed,
                pitch_st: seed_st,
            };
            let reen = UtteranceSpec {
                duration_s: rng.random_range(1.4..2.0),
                syllables_per_s: reen_rate,
                base_f0: base_reen,
                pitch_st: reen_st,
            };
            let seed_span = append(&mut seed_track, &synth_utterance(&seed, &mut rng));
            let reen_span = append(&mut reen_track, &synth_utterance(&reen, &mut rng));
            let (rate_delta, pitch_delta_st) = (seed_rate - reen_rate, seed_st - reen_st);
            let judgment = (judgment_mean(rate_delta, pitch_delta_st) + noise.sample(&mut rng)).clamp(JUDGMENT_MIN, JUDGMENT_MAX);
            let pair_id = format!("p{p:04}");
            records.push(PairRecord {
                pair_id: pair_id.clone(),
                seed: UtteranceSpan::new(&seed_name, seed_span.0, seed_span.1)?,
                reenactment: UtteranceSpan::new(&reen_name, reen_span.0, reen_span.1)?,
                judgment,
                session: session.to_string(),
                language: "en".to_string(),
            });
            truth.push(SynthPair {
                pair_id,
                seed,
                reenactment: reen,
                rate_delta,
                pitch_delta_st,
                judgment,
            });
        }
        for (name, mut track) in [(seed_name, seed_track), (reen_name, reen_track)] {
            pad(&mut track);
            for s in track.iter_mut() {
                *s += floor.sample(&mut rng);
            }
            write_wav(dir.join(name), &track, CANONICAL_RATE, WavEncoding::Pcm16)?;
        }
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &records)?;
    Ok((load_manifest(&manifest)?, truth))
}

fn pad(track: &mut Vec<f64>) {
    track.extend(std::iter::repeat_n(0.0, (TRACK_GAP_S * CANONICAL_RATE as f64) as usize));
}

/// Appends after a silent gap; returns the utterance span in seconds.
fn append(track: &mut Vec<f64>, utt: &[f64]) -> (f64, f64) {
    pad(track);
    let sr = CANONICAL_RATE as f64;
    let start = track.len() as f64 / sr;
    track.extend_from_slice(utt);
    (start, track.len() as f64 / sr)
}
