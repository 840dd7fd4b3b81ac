use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pragsim::audio::ChannelPolicy;
use pragsim::dataset::{load_manifest_with, make_split, SplitSpec};
use pragsim::experiment::{run_experiment, RunConfig, SubsetRequest, CACHE_DIR, VECTORS};
use pragsim::features::{DeltaMode, FeatureType, N_WINDOWS};
use pragsim::importance::{Selector, SubsetMode};
use pragsim::models::TrainedModel;
use pragsim::pipeline::{extract, score_pair, write_vectors, ExtractOptions};
use pragsim::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "pragsim", version, about = "Prosodic similarity models for seed / re-enactment utterance pairs")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitKind {
    Kfold,
    Session,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DeltaArg {
    Signed,
    Absolute,
}

#[derive(clap::Args, Debug, Default)]
struct SplitArgs {
    /// `kfold` (default) or `session` holdout.
    #[arg(long, value_enum)]
    split: Option<SplitKind>,
    /// Number of folds for k-fold splits.
    #[arg(long)]
    k: Option<usize>,
    /// Session used for training in a session holdout.
    #[arg(long)]
    train_session: Option<String>,
    /// Session used for testing in a session holdout.
    #[arg(long)]
    test_session: Option<String>,
    #[arg(long)]
    split_seed: Option<u64>,
}

impl SplitArgs {
    fn apply(&self, current: SplitSpec) -> SplitSpec {
        let kind = self.split.unwrap_or(match current {
            SplitSpec::KFold { .. } => SplitKind::Kfold,
            SplitSpec::SessionHoldout { .. } => SplitKind::Session,
        });
        match (kind, current) {
            (SplitKind::Kfold, SplitSpec::KFold { k }) => SplitSpec::KFold { k: self.k.unwrap_or(k) },
            (SplitKind::Kfold, _) => SplitSpec::KFold { k: self.k.unwrap_or(10) },
            (SplitKind::Session, SplitSpec::SessionHoldout { train_session, test_session }) => SplitSpec::SessionHoldout {
                train_session: self.train_session.clone().or(train_session),
                test_session: self.test_session.clone().or(test_session),
            },
            (SplitKind::Session, _) => SplitSpec::SessionHoldout {
                train_session: self.train_session.clone(),
                test_session: self.test_session.clone(),
            },
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract per-utterance feature vectors for every pair in a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON run config; only its extraction settings are used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train and evaluate all models, run the importance analyses, write a report.
    Experiment {
        /// JSON run config (or a previous run's run_metadata.json).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        forest_seed: Option<u64>,
        #[arg(long)]
        knn_k: Option<usize>,
        #[arg(long, value_enum)]
        delta_mode: Option<DeltaArg>,
        /// Extra subset run on only these types (`pitch`, type names) or windows (`w0`..`w9`), comma separated.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Extra subset run excluding these types or windows.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
    },
    /// Score one seed / re-enactment pair with a trained model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: PathBuf,
        /// `START:END` in seconds; defaults to the whole file.
        #[arg(long, value_parser = parse_span)]
        seed_span: Option<(f64, f64)>,
        #[arg(long)]
        reen: PathBuf,
        #[arg(long, value_parser = parse_span)]
        reen_span: Option<(f64, f64)>,
    },
    /// Print (or write) the train/test split plan for a manifest as JSON.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_span(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("bad start: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("bad end: {e}"))?;
    if !(a >= 0.0 && b > a) {
        return Err(format!("span needs 0 <= START < END, got {a}:{b}"));
    }
    Ok((a, b))
}

fn parse_selector(items: &[String]) -> Result<Selector, Error> {
    let windows: Option<Vec<usize>> = items
        .iter()
        .map(|s| s.strip_prefix('w').and_then(|n| n.parse().ok()).filter(|&w: &usize| w < N_WINDOWS))
        .collect();
    if let Some(ws) = windows {
        return Ok(Selector::Positions(ws));
    }
    let mut types = Vec::new();
    for item in items {
        match item.as_str() {
            "pitch" => types.extend(FeatureType::PITCH),
            name => types.push(
                FeatureType::from_name(name)
                    .ok_or_else(|| Error::Config(format!("unknown feature type or window {name:?}")))?,
            ),
        }
    }
    Ok(Selector::Types(types))
}

/// Usage problems are 1, bad or missing data 2, everything else 3.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::Manifest { .. }
        | Error::DuplicatePair { .. }
        | Error::Split(_)
        | Error::LayoutMismatch(_)
        | Error::Json(_) => EXIT_USAGE,
        Error::AudioRead { .. }
        | Error::UnsupportedAudio { .. }
        | Error::EmptyAudio { .. }
        | Error::MissingAudio { .. }
        | Error::SignalTooShort { .. }
        | Error::SpanOutsideTrack { .. }
        | Error::SpanTooShort { .. }
        | Error::Io { .. } => EXIT_PARTIAL,
        _ => EXIT_INTERNAL,
    }
}

fn read_config(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Extract { manifest, out, config } => {
            let opts = match config {
                Some(p) => read_config(&p)?.extraction,
                None => ExtractOptions::default(),
            };
            let records = load_manifest_with(&manifest, false)?;
            let ex = extract(&records, &opts, Some(&out.join(CACHE_DIR)));
            let written = write_vectors(&out.join(VECTORS), &ex.utterances)?;
            println!(
                "{} utterances from {} pairs ({} tracks computed, {} cached){}",
                ex.utterances.len(),
                records.len(),
                ex.tracks_computed,
                ex.tracks_cached,
                if written { "" } else { "; vectors unchanged" }
            );
            for f in &ex.failures {
                eprintln!("failed pair {}: {}", f.pair_id, f.message);
            }
            Ok(if ex.failures.is_empty() { 0 } else { EXIT_PARTIAL })
        }
        Command::Experiment {
            config,
            manifest,
            out,
            split,
            trees,
            forest_seed,
            knn_k,
            delta_mode,
            only,
            exclude,
        } => {
            let mut cfg = match config {
                Some(p) => read_config(&p)?,
                None => RunConfig::default(),
            };
            if let Some(m) = manifest {
                cfg.manifest_path = m;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.split = split.apply(cfg.split);
            if let Some(s) = split.split_seed {
                cfg.split_seed = s;
            }
            if let Some(t) = trees {
                cfg.models.forest.n_trees = t;
            }
            if let Some(s) = forest_seed {
                cfg.models.forest.rng_seed = s;
            }
            if let Some(k) = knn_k {
                cfg.models.knn_k = k;
            }
            if let Some(d) = delta_mode {
                cfg.delta_mode = match d {
                    DeltaArg::Signed => DeltaMode::Signed,
                    DeltaArg::Absolute => DeltaMode::Absolute,
                };
            }
            for (items, mode) in [(&only, SubsetMode::Only), (&exclude, SubsetMode::Exclude)] {
                if !items.is_empty() {
                    cfg.subsets.push(SubsetRequest {
                        selector: parse_selector(items)?,
                        mode,
                    });
                }
            }
            let outcome = run_experiment(&cfg)?;
            println!("{:<26} {:>9} {:>9} {:>6}", "model", "pearson", "mse", "n");
            for m in &outcome.models {
                let p = &m.evaluation.pooled;
                let r = p.pearson.map(|r| format!("{r:.3}")).unwrap_or_else(|| "-".into());
                println!("{:<26} {:>9} {:>9.3} {:>6}", m.model.display_name(), r, p.mse, p.n);
            }
            println!("report written to {}", cfg.output_dir.display());
            for f in &outcome.failures {
                eprintln!("skipped pair {}: {}", f.pair_id, f.message);
            }
            Ok(if outcome.failures.is_empty() { 0 } else { EXIT_PARTIAL })
        }
        Command::Score {
            model,
            seed,
            seed_span,
            reen,
            reen_span,
        } => {
            let m = TrainedModel::load(&model)?;
            let value = score_pair(&m, (&seed, seed_span), (&reen, reen_span), ChannelPolicy::Average)?;
            let what = if m.kind().is_distance() { "distance" } else { "similarity" };
            println!("{} {what} {value:.4}", m.kind().name());
            Ok(0)
        }
        Command::Split { manifest, split, out } => {
            let records = load_manifest_with(&manifest, false)?;
            let plan = make_split(&records, &split.apply(SplitSpec::KFold { k: 10 }), split.split_seed.unwrap_or(0))?;
            let json = serde_json::to_string_pretty(&plan).map_err(Error::Json)? + "\n";
            match out {
                Some(p) => std::fs::write(&p, json).map_err(|e| Error::Io { path: p, source: e })?,
                None => print!("{json}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
