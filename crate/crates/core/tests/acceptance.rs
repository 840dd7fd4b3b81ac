//! Acceptance criteria, one pass/fail line each. Runs without the libtest
//! harness so the lines always reach the output.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pragsim::audio::AudioBuffer;
use pragsim::dataset::{make_split, SplitSpec};
use pragsim::dsp::{autocorr_pitch, cpps, frame_signal, frame_spectra, spectral_flux, DspConfig, FrameGrid};
use pragsim::experiment::{run_experiment, RunConfig};
use pragsim::features::{
    tile_utterance, BaseFeatureMatrix, DeltaMode, FeatureType, FeatureVector, N_DIMS, N_WINDOWS, WINDOW_BOUNDS,
};
use pragsim::importance::{
    evaluate_on_split, fold_averaged_forest_importance, subset_experiment, Selector, SubsetMode,
};
use pragsim::models::{
    fit, fit_forest, fit_knn, fit_linear, ForestConfig, LinearModel, ModelConfig, ModelKind, ModelParams,
    TrainedModel, TrainingSet, ZStats,
};
use pragsim::pipeline::{extract, ExtractOptions};
use pragsim::synth::{generate_corpus, SynthConfig};

type Check = Result<String, String>;
type Criterion = (u32, &'static str, Duration, Box<dyn Fn() -> Check>);

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn buffer(samples: Vec<f64>) -> AudioBuffer {
    AudioBuffer::new(samples, 16000, "acceptance").unwrap()
}

fn grid(buf: &AudioBuffer) -> FrameGrid {
    frame_signal(buf, 32.0, 10.0).unwrap()
}

fn criterion_1() -> Check {
    let cfg = DspConfig::default();
    let mut worst = 1.0f64;
    for freq in [100.0, 150.0, 220.0, 330.0] {
        let b = buffer((0..16000).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16000.0).sin()).collect());
        let f0 = autocorr_pitch(&b, &grid(&b), &cfg).voiced_f0();
        if f0.is_empty() {
            return Err(format!("{freq} Hz tone has no voiced frames"));
        }
        let good = f0.iter().filter(|f| (*f - freq).abs() <= 2.0).count() as f64 / f0.len() as f64;
        worst = worst.min(good);
    }
    if worst < 0.95 {
        return Err(format!("worst tone has {:.1}% of voiced frames within 2 Hz", 100.0 * worst));
    }

    let mut pulses = vec![0.0; 16000];
    let mut t = 0.0;
    while (t as usize) < pulses.len() {
        pulses[t as usize] = 0.9;
        t += 16000.0 / 150.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise: Vec<f64> = (0..16000).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let pb = buffer(pulses);
    let nb = buffer(noise.clone());
    let (cp, cn) = (mean(cpps(&pb, &grid(&pb), &cfg)), mean(cpps(&nb, &grid(&nb), &cfg)));
    if cp <= cn {
        return Err(format!("pulse-train CPPS {cp:.2} does not exceed noise CPPS {cn:.2}"));
    }

    let scaled = buffer(noise.iter().map(|x| x * 0.37).collect());
    let fa = spectral_flux(&frame_spectra(&nb, &grid(&nb)));
    let fb = spectral_flux(&frame_spectra(&scaled, &grid(&scaled)));
    let dev = fa.iter().zip(&fb).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(
        dev <= 1e-9,
        format!(
            "tones >= {:.1}% within 2 Hz; CPPS pulse {cp:.2} dB > noise {cn:.2} dB; flux gain deviation {dev:.1e}",
            100.0 * worst
        ),
    )
}

fn matrix(rows: Vec<Vec<f64>>) -> BaseFeatureMatrix {
    let n = rows[0].len();
    BaseFeatureMatrix {
        grid: FrameGrid {
            frame_length: 512,
            hop: 160,
            n_frames: n,
            sample_rate: 16000,
        },
        duration_s: (512 + 160 * (n - 1)) as f64 / 16000.0,
        rows,
        voiced_frames: 0,
    }
}

fn criterion_2() -> Check {
    // Windows tile [0, 100] without gaps or overlap.
    if WINDOW_BOUNDS[0] != 0 || WINDOW_BOUNDS[N_WINDOWS] != 100 || WINDOW_BOUNDS.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("window bounds {WINDOW_BOUNDS:?} do not partition 0..100"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..300).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let m = matrix(rows.clone());
        let first = rng.random_range(0..50);
        let n_span = rng.random_range(20..240);
        let start = m.grid.center_s(first);
        let v = tile_utterance(&m, start, start + n_span as f64 * 0.01).map_err(|e| e.to_string())?;
        for (f, row) in rows.iter().enumerate() {
            for w in 0..N_WINDOWS {
                // frame k of n belongs to window w iff lo*n <= 100k < hi*n
                let members: Vec<f64> = (0..n_span)
                    .filter(|&k| {
                        let k100 = 100 * k as u64;
                        WINDOW_BOUNDS[w] as u64 * n_span as u64 <= k100
                            && k100 < WINDOW_BOUNDS[w + 1] as u64 * n_span as u64
                    })
                    .map(|k| row[first + k])
                    .collect();
                let want = members.iter().sum::<f64>() / members.len() as f64;
                worst = worst.max((v[f * N_WINDOWS + w] - want).abs());
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("tiling deviates from the arithmetic oracle by {worst:.2e}"));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SynthConfig {
        n_pairs: 20,
        utterances_per_track: 10,
        seed: 2,
        ..SynthConfig::default()
    };
    let (records, _) = generate_corpus(dir.path(), &cfg).map_err(|e| e.to_string())?;
    let ex = extract(&records, &ExtractOptions::default(), None);
    let all_finite = ex.utterances.values().all(|v| v.as_slice().len() == N_DIMS && v.as_slice().iter().all(|x| x.is_finite()));
    ensure(
        ex.failures.is_empty() && ex.utterances.len() == 40 && all_finite,
        format!(
            "bounds partition 0..100; 50 random rows match the oracle (max dev {worst:.1e}); {} extracted vectors all 100 finite values",
            ex.utterances.len()
        ),
    )
}

fn random_set(n: usize, seed: u64, target: impl Fn(&[f64]) -> f64) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::new();
    let mut deltas = Vec::new();
    let mut targets = Vec::new();
    for i in 0..n {
        let v: Vec<f64> = (0..N_DIMS).map(|_| rng.random_range(-2.0..2.0)).collect();
        targets.push(target(&v));
        deltas.push(FeatureVector::new(v).unwrap());
        ids.push(format!("pair{i:04}"));
    }
    TrainingSet::new(ids, deltas, targets).unwrap()
}

fn criterion_3() -> Check {
    // KNN against a full sort by (distance, id)
    let train = random_set(200, 3, |v| v[0] - 0.5 * v[9] + v[31] * v[32]);
    let model = fit_knn(&train, 50).map_err(|e| e.to_string())?;
    let stats = ZStats::from_deltas(&train.deltas);
    let queries = random_set(100, 4, |_| 0.0).deltas;
    let mut mismatches = 0;
    for q in &queries {
        let zq = stats.zscore(q.as_slice());
        let mut all: Vec<(f64, &str, f64)> = (0..train.len())
            .map(|i| {
                let zp = stats.zscore(train.deltas[i].as_slice());
                (zp.iter().zip(&zq).map(|(a, b)| (a - b) * (a - b)).sum(), train.ids[i].as_str(), train.targets[i])
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let want = all[..50].iter().map(|x| x.2).sum::<f64>() / 50.0;
        if model.predict(q) != want {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(format!("KNN differs from brute force on {mismatches}/100 queries"));
    }

    let planted = [(4usize, 0.8), (27, -1.3), (63, 0.25)];
    let train = random_set(300, 5, |v| 2.0 + planted.iter().map(|&(d, c)| c * v[d]).sum::<f64>());
    let model = fit_linear(&train, 1e-3).map_err(|e| e.to_string())?;
    let ModelParams::Linear(lm) = &model.params else {
        return Err("linear fit returned another kind".into());
    };
    let coef = LinearModel::raw_coefficients(lm, &model.training_stats);
    let mut coef_err = 0.0f64;
    for (d, c) in coef.iter().enumerate() {
        let want = planted.iter().find(|p| p.0 == d).map_or(0.0, |p| p.1);
        coef_err = coef_err.max((c - want).abs());
    }
    if coef_err > 1e-3 {
        return Err(format!("ridge coefficient error {coef_err:.2e} > 1e-3"));
    }

    let train = random_set(600, 6, |v| if v[7] > 0.4 { 4.0 } else { 2.0 });
    let model = fit_forest(&train, &ForestConfig::default()).map_err(|e| e.to_string())?;
    let imp = model.importances().unwrap();
    let total: f64 = imp.iter().sum();
    ensure(
        (total - 1.0).abs() <= 1e-9 && imp[7] > 0.8,
        format!(
            "KNN exact on 100/100 queries (n=200, k=50); ridge max coefficient error {coef_err:.1e}; forest importance sum {total:.12}, planted dim {:.3}",
            imp[7]
        ),
    )
}

struct SeedResult {
    eu: f64,
    lin: f64,
    rf: f64,
    top: FeatureType,
    pitch_only: f64,
    all_types: f64,
}

fn protocol_seed(seed: u64) -> Result<SeedResult, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let (records, _) = generate_corpus(dir.path(), &cfg).map_err(|e| e.to_string())?;
    let ex = extract(&records, &ExtractOptions::default(), None);
    let data = ex.training_set(&records, DeltaMode::Signed);
    let split = SplitSpec::SessionHoldout {
        train_session: None,
        test_session: None,
    };
    let plan = make_split(&records, &split, seed).map_err(|e| e.to_string())?;
    let mc = ModelConfig {
        forest: ForestConfig {
            rng_seed: seed,
            ..ForestConfig::default()
        },
        ..ModelConfig::default()
    };
    let r = |kind| -> Result<f64, String> {
        let e = evaluate_on_split(&data, &plan, kind, &mc).map_err(|e| e.to_string())?;
        Ok(e.pooled.pearson.unwrap_or(0.0))
    };
    let imp = fold_averaged_forest_importance(&data, &plan, &mc.forest).map_err(|e| e.to_string())?;
    let top = FeatureType::ALL
        .iter()
        .copied()
        .max_by(|a, b| {
            let s = |t: &FeatureType| t.dims().map(|d| imp[d]).sum::<f64>();
            s(a).total_cmp(&s(b))
        })
        .unwrap();
    let subset = |sel: &Selector| -> Result<f64, String> {
        Ok(subset_experiment(&data, &plan, &mc.forest, sel, SubsetMode::Only)
            .map_err(|e| e.to_string())?
            .unwrap_or(0.0))
    };
    Ok(SeedResult {
        eu: r(ModelKind::Euclidean)?,
        lin: r(ModelKind::Linear)?,
        rf: r(ModelKind::Forest)?,
        top,
        pitch_only: subset(&Selector::pitch())?,
        all_types: subset(&Selector::Types(FeatureType::ALL.to_vec()))?,
    })
}

fn criterion_4() -> Check {
    let (mut a, mut b, mut c) = (0, 0, 0);
    let mut lines = Vec::new();
    for seed in 0..10 {
        let s = protocol_seed(seed)?;
        a += (s.rf >= s.lin && s.lin >= s.eu.abs()) as usize;
        b += (s.top == FeatureType::SpeakingRate) as usize;
        c += (s.pitch_only < s.all_types) as usize;
        lines.push(format!(
            "seed {seed}: forest {:.3} linear {:.3} |euclid| {:.3} top {} pitch-only {:.3} all {:.3}",
            s.rf,
            s.lin,
            s.eu.abs(),
            s.top,
            s.pitch_only,
            s.all_types
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    ensure(
        a >= 9 && b >= 9 && c >= 9,
        format!("forest>=linear>=|euclid| in {a}/10 seeds; speaking rate tops importance in {b}/10; pitch-only < full in {c}/10"),
    )
}

fn small_run_config(manifest: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        manifest_path: manifest.to_path_buf(),
        output_dir: out.to_path_buf(),
        split: SplitSpec::KFold { k: 5 },
        split_seed: 9,
        ..RunConfig::default()
    };
    cfg.models.forest.n_trees = 30;
    cfg.models.forest.rng_seed = 9;
    cfg.models.knn_k = 10;
    cfg
}

const REPORT_CSVS: [&str; 4] = [
    "model_scores.csv",
    "type_importance.csv",
    "dimension_correlations.csv",
    "position_analysis.csv",
];

fn criterion_5(corpus: &Path) -> Check {
    let outs = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = corpus.join("manifest.csv");
    for name in ["a", "b"] {
        run_experiment(&small_run_config(&manifest, &outs.path().join(name))).map_err(|e| e.to_string())?;
    }
    for f in REPORT_CSVS {
        let a = std::fs::read(outs.path().join("a").join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(outs.path().join("b").join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs between identical runs"));
        }
    }

    let train = random_set(150, 7, |v| v[3].sin() + v[80] * v[81]);
    let queries = random_set(100, 8, |_| 0.0).deltas;
    let cfg = ModelConfig::default();
    let mut worst = 0.0f64;
    for kind in ModelKind::ALL {
        let model = fit(kind, &train, &cfg).map_err(|e| e.to_string())?;
        let back = TrainedModel::from_json(&model.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        for q in &queries {
            worst = worst.max((model.predict(q) - back.predict(q)).abs());
        }
    }
    // Saved report models also load and predict.
    let saved = TrainedModel::load(outs.path().join("a/models/forest.json")).map_err(|e| e.to_string())?;
    ensure(
        worst <= 1e-12 && saved.predict(&FeatureVector::zeros()).is_finite(),
        format!("4 report CSVs byte-identical across two runs; JSON round-trip max prediction change {worst:.1e}"),
    )
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = r.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| e.to_string())?;
    Ok((header, rows))
}

fn criterion_6(corpus: &Path) -> Check {
    let outs = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = outs.path().join("report");
    run_experiment(&small_run_config(&corpus.join("manifest.csv"), &out)).map_err(|e| e.to_string())?;
    let expect: [(&str, &[&str], usize); 4] = [
        ("model_scores.csv", &["model", "pearson", "mse", "n_test"], 4),
        (
            "type_importance.csv",
            &["feature_type", "importance", "type_only_correlation", "ablation_correlation"],
            10,
        ),
        (
            "dimension_correlations.csv",
            &["dimension", "feature_type", "window", "correlation", "forest_importance"],
            100,
        ),
        (
            "position_analysis.csv",
            &["window", "span_percent", "position_only_correlation", "summed_importance"],
            10,
        ),
    ];
    for (file, header, rows) in expect {
        let (h, r) = read_csv(&out.join(file))?;
        if h != header || r.len() != rows {
            return Err(format!("{file}: header {h:?} with {} rows", r.len()));
        }
    }
    let (_, scores) = read_csv(&out.join("model_scores.csv"))?;
    let names: Vec<&str> = scores.iter().map(|r| r[0].as_str()).collect();
    if names != ["euclidean_distance", "linear_regression", "knn_regression", "random_forest_regression"] {
        return Err(format!("model rows {names:?}"));
    }
    let (_, types) = read_csv(&out.join("type_importance.csv"))?;
    let imps: Vec<f64> = types.iter().map(|r| r[1].parse().unwrap()).collect();
    if imps.windows(2).any(|w| w[0] < w[1]) {
        return Err("type_importance.csv is not sorted by importance".into());
    }
    for fig in ["fig_correlation_by_position.svg", "fig_importance_by_position.svg"] {
        let svg = std::fs::read_to_string(out.join(fig)).map_err(|e| format!("{fig}: {e}"))?;
        if !svg.starts_with("<svg") || !svg.trim_end().ends_with("</svg>") || !svg.contains("<path") {
            return Err(format!("{fig} is not a line chart"));
        }
    }
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("run_metadata.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    for key in ["config", "split_plan", "extractor_version", "model_results"] {
        if meta.get(key).is_none() {
            return Err(format!("run_metadata.json lacks {key}"));
        }
    }
    Ok("6 report files present; 4/10/100/10 rows with the specified columns; figures are SVG line charts".into())
}

fn main() {
    let corpus_dir = tempfile::tempdir().expect("temp dir");
    let corpus_cfg = SynthConfig {
        n_pairs: 120,
        seed: 11,
        ..SynthConfig::default()
    };
    generate_corpus(corpus_dir.path(), &corpus_cfg).expect("synthetic corpus");
    let corpus = corpus_dir.path().to_path_buf();

    let criteria: Vec<Criterion> = vec![
        (1, "DSP oracles", Duration::from_secs(30), Box::new(criterion_1)),
        (2, "representation invariants", Duration::from_secs(10), Box::new(criterion_2)),
        (3, "model oracles", Duration::from_secs(120), Box::new(criterion_3)),
        (4, "protocol fidelity on a generated corpus", Duration::from_secs(600), Box::new(criterion_4)),
        (5, "determinism and round-trip", Duration::from_secs(600), Box::new({
            let c = corpus.clone();
            move || criterion_5(&c)
        })),
        (6, "report shape", Duration::from_secs(600), Box::new({
            let c = corpus.clone();
            move || criterion_6(&c)
        })),
    ];
    let mut failed = 0;
    for (n, name, limit, check) in &criteria {
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t0.elapsed();
        let result = match result {
            Ok(msg) if elapsed > *limit => Err(format!("{msg}; took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs())),
            r => r,
        };
        match result {
            Ok(msg) => println!("criterion {n} ({name}): PASS [{:.1}s] {msg}", elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{:.1}s] {msg}", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
