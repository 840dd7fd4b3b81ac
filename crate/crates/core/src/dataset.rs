//! Pair manifests and train/test split plans.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 10] = [
    "pair_id",
    "seed_wav",
    "seed_start",
    "seed_end",
    "reen_wav",
    "reen_start",
    "reen_end",
    "judgment",
    "session",
    "language",
];

pub const JUDGMENT_MIN: f64 = 1.0;
pub const JUDGMENT_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSpan {
    pub track_path: PathBuf,
    pub start_s: f64,
    pub end_s: f64,
}

impl UtteranceSpan {
    pub fn new(track_path: impl Into<PathBuf>, start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s >= 0.0 && end_s > start_s) || !end_s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "utterance span needs 0 <= start < end, got {start_s}..{end_s}"
            )));
        }
        Ok(UtteranceSpan {
            track_path: track_path.into(),
            start_s,
            end_s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub seed: UtteranceSpan,
    pub reenactment: UtteranceSpan,
    /// Mean human similarity rating on the 1-5 scale.
    pub judgment: f64,
    pub session: String,
    pub language: String,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    pair_id: String,
    seed_wav: String,
    seed_start: f64,
    seed_end: f64,
    reen_wav: String,
    reen_start: f64,
    reen_end: f64,
    judgment: f64,
    session: String,
    language: String,
}

/// Loads and validates a manifest, checking that referenced audio exists.
/// Relative audio paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    load_manifest_with(path, true)
}

pub fn load_manifest_with(path: impl AsRef<Path>, check_audio: bool) -> Result<Vec<PairRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(file, path, base, check_audio)
}

/// Parses manifest CSV from any reader. `origin` is used only in error
/// messages.
pub fn parse_manifest(reader: impl Read, origin: &Path, base_dir: &Path, check_audio: bool) -> Result<Vec<PairRecord>> {
    let manifest_err = |line: u64, cause: String| Error::Manifest {
        path: origin.to_path_buf(),
        line,
        cause,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| manifest_err(1, e.to_string()))?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != MANIFEST_HEADER {
        return Err(manifest_err(
            1,
            format!("header must be `{}`, got `{}`", MANIFEST_HEADER.join(","), got.join(",")),
        ));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for result in rdr.records() {
        let raw = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            manifest_err(line, e.to_string())
        })?;
        let line = raw.position().map_or(0, |p| p.line());
        let row: ManifestRow = raw.deserialize(Some(&header)).map_err(|e| manifest_err(line, e.to_string()))?;
        if row.pair_id.is_empty() {
            return Err(manifest_err(line, "empty pair_id".into()));
        }
        if !(JUDGMENT_MIN..=JUDGMENT_MAX).contains(&row.judgment) {
            return Err(manifest_err(
                line,
                format!(
                    "pair {:?}: judgment {} outside [{JUDGMENT_MIN}, {JUDGMENT_MAX}]",
                    row.pair_id, row.judgment
                ),
            ));
        }
        if !seen.insert(row.pair_id.clone()) {
            return Err(Error::DuplicatePair {
                path: origin.to_path_buf(),
                pair_id: row.pair_id,
            });
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let seed = UtteranceSpan::new(resolve(&row.seed_wav), row.seed_start, row.seed_end)
            .map_err(|e| manifest_err(line, format!("pair {:?} seed: {e}", row.pair_id)))?;
        let reenactment = UtteranceSpan::new(resolve(&row.reen_wav), row.reen_start, row.reen_end)
            .map_err(|e| manifest_err(line, format!("pair {:?} reenactment: {e}", row.pair_id)))?;
        if check_audio {
            for span in [&seed, &reenactment] {
                if !span.track_path.is_file() {
                    return Err(Error::MissingAudio {
                        path: origin.to_path_buf(),
                        pair_id: row.pair_id.clone(),
                        audio: span.track_path.clone(),
                    });
                }
            }
        }
        records.push(PairRecord {
            pair_id: row.pair_id,
            seed,
            reenactment,
            judgment: row.judgment,
            session: row.session,
            language: row.language,
        });
    }
    Ok(records)
}

/// Writes records in manifest format. Paths are written as given.
pub fn write_manifest(path: impl AsRef<Path>, records: &[PairRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    for r in records {
        w.write_record([
            r.pair_id.clone(),
            r.seed.track_path.to_string_lossy().into_owned(),
            r.seed.start_s.to_string(),
            r.seed.end_s.to_string(),
            r.reenactment.track_path.to_string_lossy().into_owned(),
            r.reenactment.start_s.to_string(),
            r.reenactment.end_s.to_string(),
            r.judgment.to_string(),
            r.session.clone(),
            r.language.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// How to split pairs into train and test sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Train on one session's judgments, test on another's. Unset labels
    /// default to the first and second session in sorted order.
    SessionHoldout {
        #[serde(default)]
        train_session: Option<String>,
        #[serde(default)]
        test_session: Option<String>,
    },
    KFold { k: usize },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::KFold { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub spec: SplitSpec,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Session labels ordered numerically when they all parse as numbers,
/// lexically otherwise.
pub fn sessions(records: &[PairRecord]) -> Vec<String> {
    let set: BTreeSet<&str> = records.iter().map(|r| r.session.as_str()).collect();
    let mut labels: Vec<String> = set.into_iter().map(str::to_owned).collect();
    if labels.iter().all(|l| l.parse::<f64>().is_ok()) {
        labels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    labels
}

/// Builds a split plan. The result depends only on the set of records
/// (they are ordered by `pair_id` first), the spec and the seed.
pub fn make_split(records: &[PairRecord], spec: &SplitSpec, seed: u64) -> Result<SplitPlan> {
    let mut ids: Vec<&PairRecord> = records.iter().collect();
    ids.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let folds = match spec {
        SplitSpec::SessionHoldout {
            train_session,
            test_session,
        } => {
            let labels = sessions(records);
            if labels.len() < 2 {
                return Err(Error::Split(format!(
                    "session holdout needs at least 2 sessions, found {}",
                    labels.len()
                )));
            }
            let train_label = train_session.clone().unwrap_or_else(|| labels[0].clone());
            let test_label = test_session.clone().unwrap_or_else(|| {
                labels.iter().find(|l| **l != train_label).cloned().unwrap_or_default()
            });
            for l in [&train_label, &test_label] {
                if !labels.contains(l) {
                    return Err(Error::Split(format!("no pairs with session {l:?}")));
                }
            }
            if train_label == test_label {
                return Err(Error::Split(format!("train and test session are both {train_label:?}")));
            }
            let pick = |label: &str| -> Vec<String> {
                ids.iter().filter(|r| r.session == label).map(|r| r.pair_id.clone()).collect()
            };
            vec![Fold {
                train: pick(&train_label),
                test: pick(&test_label),
            }]
        }
        SplitSpec::KFold { k } => {
            let n = ids.len();
            if *k < 2 || *k > n {
                return Err(Error::Split(format!("k-fold needs 2 <= k <= n, got k={k}, n={n}")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut folds = Vec::with_capacity(*k);
            let mut start = 0;
            for f in 0..*k {
                let size = n / k + usize::from(f < n % k);
                let mut in_test = vec![false; n];
                for &i in &order[start..start + size] {
                    in_test[i] = true;
                }
                start += size;
                let (test, train): (Vec<_>, Vec<_>) = (0..n).partition(|&i| in_test[i]);
                folds.push(Fold {
                    train: train.into_iter().map(|i| ids[i].pair_id.clone()).collect(),
                    test: test.into_iter().map(|i| ids[i].pair_id.clone()).collect(),
                });
            }
            folds
        }
    };
    Ok(SplitPlan {
        spec: spec.clone(),
        seed,
        folds,
    })
}
