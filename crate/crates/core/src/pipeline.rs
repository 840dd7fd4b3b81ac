//! Manifest to feature vectors: per-track extraction, normalization and
//! tiling, with an on-disk cache keyed by audio content and settings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{load_canonical, ChannelPolicy};
use crate::dataset::{PairRecord, UtteranceSpan};
use crate::dsp::FrameGrid;
use crate::error::{Error, Result};
use crate::features::{
    base_features, delta_vector, feature_labels, normalize_per_track, tile_utterance, BaseFeatureMatrix, DeltaMode,
    ExtractorConfig, FeatureType, FeatureVector, EXTRACTOR_VERSION, N_DIMS,
};
use crate::models::{TrainedModel, TrainingSet};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractOptions {
    pub extractor: ExtractorConfig,
    pub channel: ChannelPolicy,
}

pub fn seed_id(pair_id: &str) -> String {
    format!("{pair_id}:seed")
}

pub fn reen_id(pair_id: &str) -> String {
    format!("{pair_id}:reen")
}

/// A pair that could not be turned into a delta, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub pair_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    /// Keyed by `<pair_id>:seed` / `<pair_id>:reen`.
    pub utterances: BTreeMap<String, FeatureVector>,
    pub failures: Vec<PairFailure>,
    pub tracks_computed: usize,
    pub tracks_cached: usize,
}

impl Extraction {
    /// Deltas for every pair whose two utterances were extracted.
    pub fn training_set(&self, records: &[PairRecord], mode: DeltaMode) -> TrainingSet {
        let mut set = TrainingSet {
            ids: Vec::new(),
            deltas: Vec::new(),
            targets: Vec::new(),
        };
        for r in records {
            let (Some(s), Some(e)) = (
                self.utterances.get(&seed_id(&r.pair_id)),
                self.utterances.get(&reen_id(&r.pair_id)),
            ) else {
                continue;
            };
            set.ids.push(r.pair_id.clone());
            set.deltas.push(delta_vector(s, e, mode));
            set.targets.push(r.judgment);
        }
        set
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheSidecar {
    extractor_version: String,
    source: String,
    grid: FrameGrid,
    duration_s: f64,
    voiced_frames: usize,
}

/// Hex SHA-256 of the audio bytes, extractor version and options.
pub fn cache_key(audio_path: &Path, opts: &ExtractOptions) -> Result<String> {
    let bytes = std::fs::read(audio_path).map_err(|e| Error::io(audio_path, e))?;
    let mut h = Sha256::new();
    h.update(EXTRACTOR_VERSION.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(opts)?);
    h.update([0]);
    h.update(&bytes);
    Ok(hex::encode(h.finalize()))
}

fn track_csv_header() -> Vec<String> {
    std::iter::once("time_s".to_string())
        .chain(FeatureType::ALL.iter().map(|t| t.name().to_string()))
        .collect()
}

fn write_track_cache(dir: &Path, key: &str, m: &BaseFeatureMatrix, source: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{key}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(track_csv_header())?;
    for i in 0..m.n_frames() {
        let mut rec = vec![m.grid.center_s(i).to_string()];
        rec.extend(m.rows.iter().map(|row| row[i].to_string()));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let side = CacheSidecar {
        extractor_version: EXTRACTOR_VERSION.to_string(),
        source: source.to_string_lossy().into_owned(),
        grid: m.grid,
        duration_s: m.duration_s,
        voiced_frames: m.voiced_frames,
    };
    let json_path = dir.join(format!("{key}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(&json_path, e))
}

fn read_track_cache(dir: &Path, key: &str) -> Option<BaseFeatureMatrix> {
    let side: CacheSidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{key}.json"))).ok()?).ok()?;
    if side.extractor_version != EXTRACTOR_VERSION {
        return None;
    }
    let mut r = csv::Reader::from_path(dir.join(format!("{key}.csv"))).ok()?;
    let mut rows = vec![Vec::with_capacity(side.grid.n_frames); FeatureType::ALL.len()];
    for rec in r.records() {
        let rec = rec.ok()?;
        for (f, row) in rows.iter_mut().enumerate() {
            row.push(rec.get(f + 1)?.parse::<f64>().ok()?);
        }
    }
    if rows[0].len() != side.grid.n_frames {
        return None;
    }
    Some(BaseFeatureMatrix {
        grid: side.grid,
        duration_s: side.duration_s,
        rows,
        voiced_frames: side.voiced_frames,
    })
}

/// Normalized per-frame features of a whole track; returns whether the
/// cache supplied them.
pub fn track_features(path: &Path, opts: &ExtractOptions, cache_dir: Option<&Path>) -> Result<(BaseFeatureMatrix, bool)> {
    let key = match cache_dir {
        Some(_) => Some(cache_key(path, opts)?),
        None => None,
    };
    if let (Some(dir), Some(key)) = (cache_dir, &key) {
        if let Some(m) = read_track_cache(dir, key) {
            return Ok((m, true));
        }
    }
    let buf = load_canonical(path, opts.channel)?;
    let m = normalize_per_track(&base_features(&buf, &opts.extractor)?, &opts.extractor.features)?;
    if let (Some(dir), Some(key)) = (cache_dir, &key) {
        write_track_cache(dir, key, &m, path)?;
    }
    Ok((m, false))
}

/// Extracts every utterance in the manifest. Tracks run in parallel; a
/// failing track or span fails only the pairs that use it.
pub fn extract(records: &[PairRecord], opts: &ExtractOptions, cache_dir: Option<&Path>) -> Extraction {
    let tracks: BTreeSet<PathBuf> = records
        .iter()
        .flat_map(|r| [r.seed.track_path.clone(), r.reenactment.track_path.clone()])
        .collect();
    let computed: BTreeMap<PathBuf, std::result::Result<(BaseFeatureMatrix, bool), String>> = tracks
        .into_par_iter()
        .map(|p| {
            let res = track_features(&p, opts, cache_dir).map_err(|e| e.to_string());
            (p, res)
        })
        .collect();

    let mut out = Extraction::default();
    for res in computed.values().flatten() {
        if res.1 {
            out.tracks_cached += 1;
        } else {
            out.tracks_computed += 1;
        }
    }
    let tile = |span: &UtteranceSpan| -> std::result::Result<FeatureVector, String> {
        let (m, _) = computed[&span.track_path].as_ref().map_err(Clone::clone)?;
        tile_utterance(m, span.start_s, span.end_s).map_err(|e| format!("{}: {e}", span.track_path.display()))
    };
    for r in records {
        match (tile(&r.seed), tile(&r.reenactment)) {
            (Ok(s), Ok(e)) => {
                out.utterances.insert(seed_id(&r.pair_id), s);
                out.utterances.insert(reen_id(&r.pair_id), e);
            }
            (Err(msg), _) | (_, Err(msg)) => {
                warn!("pair {}: {msg}", r.pair_id);
                out.failures.push(PairFailure {
                    pair_id: r.pair_id.clone(),
                    message: msg,
                });
            }
        }
    }
    info!(
        "extracted {} utterances ({} tracks computed, {} from cache, {} pairs failed)",
        out.utterances.len(),
        out.tracks_computed,
        out.tracks_cached,
        out.failures.len()
    );
    out
}

fn vectors_csv(vectors: &BTreeMap<String, FeatureVector>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("utterance_id".to_string()).chain(feature_labels()))?;
    for (id, v) in vectors {
        w.write_record(std::iter::once(id.clone()).chain(v.as_slice().iter().map(|x| x.to_string())))?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Writes `path` only if its content would change; returns whether it did.
pub fn write_if_changed(path: &Path, content: &[u8]) -> Result<bool> {
    if std::fs::read(path).is_ok_and(|old| old == content) {
        return Ok(false);
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e))?;
    Ok(true)
}

/// One row per utterance: id then the 100 labelled dimensions.
pub fn write_vectors(path: &Path, vectors: &BTreeMap<String, FeatureVector>) -> Result<bool> {
    write_if_changed(path, &vectors_csv(vectors)?)
}

pub fn read_vectors(path: &Path) -> Result<BTreeMap<String, FeatureVector>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() != N_DIMS + 1 || header[1..] != feature_labels()[..] {
        return Err(Error::LayoutMismatch(format!(
            "{} does not have the 100-column feature layout",
            path.display()
        )));
    }
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        out.insert(rec[0].to_string(), FeatureVector::new(values)?);
    }
    Ok(out)
}

/// Feature vector of one utterance; `span = None` means the whole file.
pub fn utterance_vector(path: &Path, span: Option<(f64, f64)>, opts: &ExtractOptions) -> Result<FeatureVector> {
    let (m, _) = track_features(path, opts, None)?;
    let (start, end) = span.unwrap_or((0.0, m.duration_s));
    tile_utterance(&m, start, end)
}

/// Applies a trained model to a seed / re-enactment pair of recordings,
/// extracting with the settings the model was trained under.
pub fn score_pair(
    model: &TrainedModel,
    seed: (&Path, Option<(f64, f64)>),
    reenactment: (&Path, Option<(f64, f64)>),
    channel: ChannelPolicy,
) -> Result<f64> {
    model.check_compatible()?;
    let opts = ExtractOptions {
        extractor: model.extractor.clone(),
        channel,
    };
    let s = utterance_vector(seed.0, seed.1, &opts)?;
    let r = utterance_vector(reenactment.0, reenactment.1, &opts)?;
    Ok(model.predict(&delta_vector(&s, &r, model.delta_mode)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_linear;
    use crate::synth::{generate_corpus, SynthConfig};

    fn small_corpus(dir: &Path) -> Vec<PairRecord> {
        let cfg = SynthConfig {
            n_pairs: 6,
            utterances_per_track: 3,
            ..SynthConfig::default()
        };
        generate_corpus(dir, &cfg).unwrap().0
    }

    #[test]
    fn extraction_yields_two_vectors_per_pair() {
        let dir = tempfile::tempdir().unwrap();
        let records = small_corpus(dir.path());
        let ex = extract(&records, &ExtractOptions::default(), None);
        assert!(ex.failures.is_empty(), "{:?}", ex.failures);
        assert_eq!(ex.utterances.len(), 12);
        assert_eq!(ex.tracks_computed, 4);
        let set = ex.training_set(&records, DeltaMode::Signed);
        assert_eq!(set.len(), 6);
        assert!(set.deltas.iter().all(|d| d.as_slice().iter().all(|x| x.is_finite())));
    }

    #[test]
    fn cache_reproduces_fresh_extraction_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let records = small_corpus(dir.path());
        let cache = dir.path().join("cache");
        let fresh = extract(&records, &ExtractOptions::default(), Some(&cache));
        let cached = extract(&records, &ExtractOptions::default(), Some(&cache));
        assert_eq!((cached.tracks_cached, cached.tracks_computed), (4, 0));
        assert_eq!(fresh.utterances, cached.utterances);
        let uncached = extract(&records, &ExtractOptions::default(), None);
        assert_eq!(fresh.utterances, uncached.utterances);
    }

    #[test]
    fn cache_key_changes_with_settings() {
        let dir = tempfile::tempdir().unwrap();
        let records = small_corpus(dir.path());
        let p = &records[0].seed.track_path;
        let a = cache_key(p, &ExtractOptions::default()).unwrap();
        let mut opts = ExtractOptions::default();
        opts.extractor.dsp.voicing_threshold = 0.5;
        assert_ne!(a, cache_key(p, &opts).unwrap());
        assert_eq!(a, cache_key(p, &ExtractOptions::default()).unwrap());
    }

    #[test]
    fn missing_track_fails_only_its_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = small_corpus(dir.path());
        records[5].reenactment.track_path = dir.path().join("gone.wav");
        let ex = extract(&records, &ExtractOptions::default(), None);
        assert_eq!(ex.failures.len(), 1);
        assert_eq!(ex.failures[0].pair_id, records[5].pair_id);
        assert_eq!(ex.training_set(&records, DeltaMode::Signed).len(), 5);
    }

    #[test]
    fn vectors_roundtrip_and_skip_unchanged_writes() {
        let dir = tempfile::tempdir().unwrap();
        let records = small_corpus(dir.path());
        let ex = extract(&records, &ExtractOptions::default(), None);
        let path = dir.path().join("out/vectors.csv");
        assert!(write_vectors(&path, &ex.utterances).unwrap());
        assert!(!write_vectors(&path, &ex.utterances).unwrap());
        assert_eq!(read_vectors(&path).unwrap(), ex.utterances);
    }

    #[test]
    fn identical_audio_scores_at_zero_delta() {
        let dir = tempfile::tempdir().unwrap();
        let records = small_corpus(dir.path());
        let ex = extract(&records, &ExtractOptions::default(), None);
        let set = ex.training_set(&records, DeltaMode::Signed);
        let model = fit_linear(&set, 1e-3).unwrap();
        let p = &records[0].seed.track_path;
        let span = Some((records[0].seed.start_s, records[0].seed.end_s));
        let got = score_pair(&model, (p, span), (p, span), ChannelPolicy::Average).unwrap();
        assert_eq!(got, model.predict(&FeatureVector::zeros()));
    }
}
