//! The six pipeline commands. Each reads its prerequisites from the output
//! directory, writes its artifacts plus a JSON manifest echoing the
//! effective configuration, and stays byte-identical across reruns with the
//! same inputs and seeds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use waymode::arch::{
    benchmark_library, enumerate_library, library_manifest, GridVocab, NetworkCatalogEntry,
};
use waymode::channels::{segment_trip, segment_trips, ChannelConfig, Segment, N_CHANNELS};
use waymode::ensemble::{
    average_vote, fit_meta_learner, fit_optimal_weights, load_stack, majority_vote, predict_stack,
    save_stack, weighted_vote, ProbMatrix, StackConfig,
};
use waymode::eval::{confusion_matrix, format_report, precision_recall_f1, stratified_split};
use waymode::forest::ForestConfig;
use waymode::geo::BearingRateMode;
use waymode::io::{
    group_by_user, mode_counts, read_gps_csv, read_infrastructure_csv, read_segments_bin,
    write_segments_bin, write_trips_csv,
};
use waymode::nn::{load_model, save_model, train, LayerSpec, Model, TrainConfig};
use waymode::synth::{default_profiles, generate_dataset};
use waymode::trip::{break_trips, BreakConfig, TransitInfrastructure, Trip};
use waymode::{Error, Mode, Result};

use crate::config::{EnsembleMethod, LibraryScale, PipelineConfig};

/// Share of the training split carved off (stratified) for early stopping.
const VALID_FRACTION: f64 = 1.0 / 6.0;

// Tags feeding `derived_seed`, so each purpose gets an independent stream.
const SEED_TAG_VALID_CARVE: u64 = 1;
const SEED_TAG_STACK: u64 = 2;
const SEED_TAG_ENTRY_BASE: u64 = 0x100;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic per-purpose seed derived from the master seed, so adding
/// or removing one consumer never shifts another's randomness.
fn derived_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ splitmix64(tag))
}

fn require_file(path: &Path, produced_by: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::data(format!(
            "missing artifact {} (run `waymode {produced_by}` first)",
            path.display()
        )))
    }
}

fn channel_config(cfg: &PipelineConfig) -> ChannelConfig {
    ChannelConfig {
        segment_len: cfg.segment_length,
        min_points: cfg.filters.min_points,
        max_speed_mps: cfg.filters.max_speed,
        max_accel_mps2: cfg.filters.max_accel,
        bearing_rate_mode: BearingRateMode::Literal,
    }
}

fn load_infrastructure(cfg: &PipelineConfig) -> Result<TransitInfrastructure> {
    match &cfg.infrastructure_csv {
        Some(p) if !p.as_os_str().is_empty() => {
            if !p.exists() {
                return Err(Error::data(format!(
                    "infrastructure CSV {} does not exist",
                    p.display()
                )));
            }
            read_infrastructure_csv(p)
        }
        _ => Ok(TransitInfrastructure::empty()),
    }
}

fn break_all(cfg: &PipelineConfig, input: &Path) -> Result<Vec<Trip>> {
    if !input.exists() {
        return Err(Error::data(format!(
            "input CSV {} does not exist",
            input.display()
        )));
    }
    let records = read_gps_csv(input)?;
    let infra = load_infrastructure(cfg)?;
    let bcfg = BreakConfig::default();
    let mut trips = Vec::new();
    for (user, points, labels) in group_by_user(&records) {
        trips.extend(break_trips(&user, &points, Some(&labels), &infra, &bcfg)?);
    }
    Ok(trips)
}

fn segment_labels(segments: &[Segment]) -> Result<Vec<Mode>> {
    segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.label.ok_or_else(|| {
                Error::data(format!(
                    "segment {i} has no mode label; labeled data required"
                ))
            })
        })
        .collect()
}

/// The base-learner catalog with the configured epoch and dropout
/// overrides applied.
fn build_library(cfg: &PipelineConfig) -> Result<Vec<NetworkCatalogEntry>> {
    let mut entries = match cfg.library.scale {
        LibraryScale::Desk => benchmark_library(cfg.library.size, cfg.library.master_seed)?,
        LibraryScale::Full => enumerate_library(
            &GridVocab::default(),
            cfg.library.size,
            cfg.library.master_seed,
        )?,
    };
    for entry in &mut entries {
        if let Some(epochs) = cfg.training.epochs {
            entry.epochs = epochs;
        }
        for layer in &mut entry.layers {
            if let LayerSpec::Dropout { p } = layer {
                *p = cfg.training.dropout;
            }
        }
    }
    Ok(entries)
}

fn library_names(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let path = cfg.library_manifest_path();
    require_file(&path, "train")?;
    let text = fs::read_to_string(&path)?;
    let names: Vec<String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').next().unwrap_or("").to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::data(format!(
            "library manifest {} is empty",
            path.display()
        )));
    }
    Ok(names)
}

fn load_models(cfg: &PipelineConfig) -> Result<Vec<(String, Model)>> {
    let names = library_names(cfg)?;
    let mut models = Vec::with_capacity(names.len());
    for name in names {
        let path = cfg.models_dir().join(format!("{name}.mnet"));
        require_file(&path, "train")?;
        models.push((name, load_model(&path)?));
    }
    Ok(models)
}

fn prob_matrices(models: &[(String, Model)], segments: &[Segment]) -> Result<Vec<ProbMatrix>> {
    models
        .iter()
        .map(|(name, model)| ProbMatrix::new(name.clone(), model.predict_probs(segments)?))
        .collect()
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    config: &'a PipelineConfig,
    details: T,
}

fn write_manifest<T: Serialize>(
    path: &Path,
    command: &str,
    cfg: &PipelineConfig,
    details: T,
) -> Result<()> {
    let manifest = Manifest {
        command,
        config: cfg,
        details,
    };
    let mut text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct ModeTally {
    walk: usize,
    bike: usize,
    transit: usize,
    car: usize,
    unlabeled: usize,
}

impl ModeTally {
    fn from_counts(c: [usize; 5]) -> ModeTally {
        ModeTally {
            walk: c[0],
            bike: c[1],
            transit: c[2],
            car: c[3],
            unlabeled: c[4],
        }
    }

    fn from_labels(labels: &[Mode]) -> ModeTally {
        let mut c = [0usize; 5];
        for l in labels {
            c[l.index()] += 1;
        }
        ModeTally::from_counts(c)
    }
}

#[derive(Serialize)]
struct PreprocessDetails {
    n_records: usize,
    n_users: usize,
    n_trips: usize,
    n_segments: usize,
    mode_counts: ModeTally,
}

pub fn cmd_preprocess(cfg: &PipelineConfig) -> Result<()> {
    if cfg.input_csv.as_os_str().is_empty() {
        return Err(Error::config("input_csv is not set; point it at a GPS CSV"));
    }
    if !cfg.input_csv.exists() {
        return Err(Error::data(format!(
            "input CSV {} does not exist",
            cfg.input_csv.display()
        )));
    }
    let records = read_gps_csv(&cfg.input_csv)?;
    let n_users = group_by_user(&records).len();
    let trips = break_all(cfg, &cfg.input_csv)?;
    let segments = segment_trips(&trips, &channel_config(cfg));
    if segments.is_empty() {
        return Err(Error::data(format!(
            "zero surviving segments: {} trips from {} records, none with at least {} points \
             after filtering",
            trips.len(),
            records.len(),
            cfg.filters.min_points
        )));
    }
    fs::create_dir_all(&cfg.output_dir)?;
    write_segments_bin(&cfg.segments_path(), &segments)?;
    let details = PreprocessDetails {
        n_records: records.len(),
        n_users,
        n_trips: trips.len(),
        n_segments: segments.len(),
        mode_counts: ModeTally::from_counts(mode_counts(&segments)),
    };
    write_manifest(
        &cfg.output_dir.join("preprocess.manifest.json"),
        "preprocess",
        cfg,
        details,
    )?;
    println!(
        "preprocess: {} records -> {} trips -> {} segments ({})",
        records.len(),
        trips.len(),
        segments.len(),
        cfg.segments_path().display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SynthDetails {
    trips_per_mode: usize,
    n_trips: usize,
    n_points: usize,
    seed: u64,
    output: String,
}

pub fn cmd_synth(cfg: &PipelineConfig, trips_per_mode: usize, out: Option<PathBuf>) -> Result<()> {
    if trips_per_mode == 0 {
        return Err(Error::config("--trips-per-mode must be at least 1"));
    }
    let out = out.unwrap_or_else(|| cfg.output_dir.join("synthetic.csv"));
    let trips = generate_dataset(&default_profiles(), trips_per_mode, cfg.library.master_seed);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_trips_csv(&out, &trips)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let n_points: usize = trips.iter().map(|t| t.points.len()).sum();
    let details = SynthDetails {
        trips_per_mode,
        n_trips: trips.len(),
        n_points,
        seed: cfg.library.master_seed,
        output: out.display().to_string(),
    };
    write_manifest(
        &cfg.output_dir.join("synth.manifest.json"),
        "synth",
        cfg,
        details,
    )?;
    println!(
        "synth: wrote {} trips ({} points) to {}",
        trips.len(),
        n_points,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainedEntry {
    name: String,
    spec: String,
    epochs_budget: usize,
    epochs_run: usize,
    best_epoch: usize,
    train_accuracy: f64,
    valid_accuracy: f64,
    file: String,
}

#[derive(Serialize)]
struct TrainDetails {
    n_segments: usize,
    n_train: usize,
    n_fit: usize,
    n_valid: usize,
    entries: Vec<TrainedEntry>,
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<()> {
    let seg_path = cfg.segments_path();
    require_file(&seg_path, "preprocess")?;
    let segments = read_segments_bin(&seg_path)?;
    let labels = segment_labels(&segments)?;
    let entries = build_library(cfg)?;

    let (train_idx, _) = stratified_split(&labels, cfg.eval.test_fraction, cfg.eval.seed)?;
    let train_labels: Vec<Mode> = train_idx.iter().map(|&i| labels[i]).collect();
    let carve_seed = derived_seed(cfg.library.master_seed, SEED_TAG_VALID_CARVE);
    let (fit_rel, valid_rel) = stratified_split(&train_labels, VALID_FRACTION, carve_seed)?;
    let fit_set: Vec<Segment> = fit_rel
        .iter()
        .map(|&i| segments[train_idx[i]].clone())
        .collect();
    let valid_set: Vec<Segment> = valid_rel
        .iter()
        .map(|&i| segments[train_idx[i]].clone())
        .collect();

    fs::create_dir_all(cfg.models_dir())?;
    let mut rows = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let network = entry.build(cfg.segment_length, N_CHANNELS)?;
        let tcfg = TrainConfig {
            batch_size: cfg.training.batch_size,
            epochs: entry.epochs,
            patience: cfg.training.patience,
            learning_rate: cfg.training.learning_rate,
            seed: derived_seed(cfg.library.master_seed, SEED_TAG_ENTRY_BASE + i as u64),
        };
        let (model, history) = train(network, &fit_set, &valid_set, &tcfg)?;
        let file = cfg.models_dir().join(format!("{}.mnet", entry.name));
        save_model(&model, &file)?;
        let valid_accuracy = history.valid_accuracy[history.best_epoch];
        let train_accuracy = model.accuracy(&fit_set)?;
        println!(
            "train: {} epochs {}/{} train accuracy {:.3} valid accuracy {:.3}",
            entry.name,
            history.epochs_run(),
            entry.epochs,
            train_accuracy,
            valid_accuracy
        );
        rows.push(TrainedEntry {
            name: entry.name.clone(),
            spec: entry.spec_string(),
            epochs_budget: entry.epochs,
            epochs_run: history.epochs_run(),
            best_epoch: history.best_epoch,
            train_accuracy,
            valid_accuracy,
            file: file.display().to_string(),
        });
    }
    fs::write(cfg.library_manifest_path(), library_manifest(&entries))?;
    let details = TrainDetails {
        n_segments: segments.len(),
        n_train: train_idx.len(),
        n_fit: fit_set.len(),
        n_valid: valid_set.len(),
        entries: rows,
    };
    write_manifest(
        &cfg.output_dir.join("train.manifest.json"),
        "train",
        cfg,
        details,
    )?;
    println!(
        "train: {} models -> {}",
        entries.len(),
        cfg.models_dir().display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct MethodArtifact {
    pub method: String,
    pub members: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct WeightsArtifact {
    pub method: String,
    pub members: Vec<String>,
    pub weights: Vec<f64>,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_weights_artifact(cfg: &PipelineConfig) -> Result<WeightsArtifact> {
    let path = cfg.ensemble_dir().join("weights.json");
    require_file(&path, "ensemble")?;
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("bad weights artifact {}: {e}", path.display())))
}

#[derive(Serialize)]
struct EnsembleDetails {
    method: &'static str,
    n_train: usize,
    artifact: String,
    excluded: Vec<String>,
    weights: Option<Vec<f64>>,
}

pub fn cmd_ensemble(cfg: &PipelineConfig) -> Result<()> {
    let seg_path = cfg.segments_path();
    require_file(&seg_path, "preprocess")?;
    let segments = read_segments_bin(&seg_path)?;
    let labels = segment_labels(&segments)?;
    let (train_idx, _) = stratified_split(&labels, cfg.eval.test_fraction, cfg.eval.seed)?;
    let train_segments: Vec<Segment> = train_idx.iter().map(|&i| segments[i].clone()).collect();
    let train_labels: Vec<Mode> = train_idx.iter().map(|&i| labels[i]).collect();

    fs::create_dir_all(cfg.ensemble_dir())?;
    let method = cfg.ensemble.method;
    let mut excluded = Vec::new();
    let mut weights = None;
    let artifact = match method {
        EnsembleMethod::Average | EnsembleMethod::Majority => {
            let members = library_names(cfg)?;
            let path = cfg.ensemble_dir().join("method.json");
            write_json(
                &path,
                &MethodArtifact {
                    method: method.name().to_string(),
                    members,
                },
            )?;
            path
        }
        EnsembleMethod::Weights => {
            let models = load_models(cfg)?;
            let mats = prob_matrices(&models, &train_segments)?;
            let fit = fit_optimal_weights(&mats, &train_labels)?;
            println!(
                "ensemble: fitted weights {:?} (mse {:.6}, {} iterations, converged {})",
                fit.weights, fit.mse, fit.iterations, fit.converged
            );
            weights = Some(fit.weights.clone());
            let path = cfg.ensemble_dir().join("weights.json");
            write_json(
                &path,
                &WeightsArtifact {
                    method: method.name().to_string(),
                    members: models.into_iter().map(|(n, _)| n).collect(),
                    weights: fit.weights,
                    mse: fit.mse,
                    iterations: fit.iterations,
                    converged: fit.converged,
                },
            )?;
            path
        }
        EnsembleMethod::Stack => {
            let entries = build_library(cfg)?;
            let stack_cfg = StackConfig {
                k_folds: cfg.ensemble.k_folds,
                valid_fraction: VALID_FRACTION,
                train: TrainConfig {
                    batch_size: cfg.training.batch_size,
                    epochs: cfg.training.epochs.unwrap_or(50),
                    patience: cfg.training.patience,
                    learning_rate: cfg.training.learning_rate,
                    seed: 0,
                },
                forest: ForestConfig {
                    n_trees: cfg.ensemble.meta_trees,
                    ..ForestConfig::meta_learner(0)
                },
                seed: derived_seed(cfg.library.master_seed, SEED_TAG_STACK),
            };
            let model = fit_meta_learner(&entries, &train_segments, &stack_cfg)?;
            excluded = model.excluded.clone();
            if !excluded.is_empty() {
                println!("ensemble: excluded learners that failed to train: {excluded:?}");
            }
            let dir = cfg.ensemble_dir().join("stack");
            save_stack(&model, &dir)?;
            dir
        }
    };
    let details = EnsembleDetails {
        method: method.name(),
        n_train: train_segments.len(),
        artifact: artifact.display().to_string(),
        excluded,
        weights,
    };
    write_manifest(
        &cfg.output_dir.join("ensemble.manifest.json"),
        "ensemble",
        cfg,
        details,
    )?;
    println!(
        "ensemble: method {} -> {}",
        method.name(),
        artifact.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ClassRow {
    class: &'static str,
    precision_pct: f64,
    recall_pct: f64,
    f_score_pct: f64,
}

#[derive(Serialize)]
struct EvaluateDetails {
    method: &'static str,
    n_test: usize,
    accuracy_pct: f64,
    per_class: Vec<ClassRow>,
    per_model_accuracy_pct: Vec<(String, f64)>,
    weights: Option<Vec<f64>>,
}

/// Ensemble test labels plus per-base-model test accuracies for the report.
fn ensemble_predictions(
    cfg: &PipelineConfig,
    test_segments: &[Segment],
) -> Result<(Vec<Mode>, Vec<(String, f64)>, Option<Vec<f64>>)> {
    let method = cfg.ensemble.method;
    if method == EnsembleMethod::Stack {
        let dir = cfg.ensemble_dir().join("stack");
        require_file(&dir, "ensemble")?;
        let model = load_stack(&dir)?;
        let mut accs = Vec::with_capacity(model.base.len());
        for base in &model.base {
            accs.push((
                base.name.clone(),
                100.0 * base.model.accuracy(test_segments)?,
            ));
        }
        let (labels, _) = predict_stack(&model, test_segments)?;
        return Ok((labels, accs, None));
    }
    let models = load_models(cfg)?;
    let mut accs = Vec::with_capacity(models.len());
    for (name, model) in &models {
        accs.push((name.clone(), 100.0 * model.accuracy(test_segments)?));
    }
    let mats = prob_matrices(&models, test_segments)?;
    let (labels, weights) = match method {
        EnsembleMethod::Average => {
            let path = cfg.ensemble_dir().join("method.json");
            require_file(&path, "ensemble")?;
            (average_vote(&mats)?.0, None)
        }
        EnsembleMethod::Majority => {
            let path = cfg.ensemble_dir().join("method.json");
            require_file(&path, "ensemble")?;
            (majority_vote(&mats)?, None)
        }
        EnsembleMethod::Weights => {
            let artifact = read_weights_artifact(cfg)?;
            if artifact.weights.len() != mats.len() {
                return Err(Error::data(format!(
                    "weights artifact covers {} learners but {} models are present",
                    artifact.weights.len(),
                    mats.len()
                )));
            }
            (
                weighted_vote(&mats, &artifact.weights)?.0,
                Some(artifact.weights),
            )
        }
        EnsembleMethod::Stack => unreachable!("handled above"),
    };
    Ok((labels, accs, weights))
}

pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<()> {
    let seg_path = cfg.segments_path();
    require_file(&seg_path, "preprocess")?;
    let segments = read_segments_bin(&seg_path)?;
    let labels = segment_labels(&segments)?;
    let (_, test_idx) = stratified_split(&labels, cfg.eval.test_fraction, cfg.eval.seed)?;
    let test_segments: Vec<Segment> = test_idx.iter().map(|&i| segments[i].clone()).collect();
    let test_labels: Vec<Mode> = test_idx.iter().map(|&i| labels[i]).collect();

    let method = cfg.ensemble.method;
    let (ens_labels, per_model, weights) = ensemble_predictions(cfg, &test_segments)?;
    let cm = confusion_matrix(&test_labels, &ens_labels)?;
    let metrics = precision_recall_f1(&cm);

    let mut report = format!(
        "evaluation: method {}  test segments {}\n\nper-model test accuracy\n",
        method.name(),
        test_segments.len()
    );
    for (name, acc) in &per_model {
        report.push_str(&format!("{name:<10} {acc:>6.1}%\n"));
    }
    if let Some(w) = &weights {
        let formatted: Vec<String> = w.iter().map(|v| format!("{v:.6}")).collect();
        let sum: f64 = w.iter().sum();
        report.push_str(&format!(
            "\nfitted weights: [{}] (sum {sum:.6})\n",
            formatted.join(", ")
        ));
    }
    report.push('\n');
    report.push_str(&format_report(&cm));

    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("evaluation.txt"), &report)?;

    let mut metrics_csv = String::from("class,precision_pct,recall_pct,f_score_pct\n");
    let mut per_class = Vec::with_capacity(4);
    for mode in Mode::ALL {
        let c = &metrics.per_class[mode.index()];
        metrics_csv.push_str(&format!(
            "{},{:.4},{:.4},{:.4}\n",
            mode.name(),
            100.0 * c.precision,
            100.0 * c.recall,
            100.0 * c.f_score
        ));
        per_class.push(ClassRow {
            class: mode.name(),
            precision_pct: 100.0 * c.precision,
            recall_pct: 100.0 * c.recall,
            f_score_pct: 100.0 * c.f_score,
        });
    }
    metrics_csv.push_str(&format!(
        "overall_accuracy,{:.4},,\n",
        100.0 * metrics.accuracy
    ));
    fs::write(cfg.output_dir.join("evaluation_metrics.csv"), metrics_csv)?;

    let mut cm_csv = String::from("actual_predicted,walk,bike,transit,car\n");
    for a in Mode::ALL {
        cm_csv.push_str(a.name());
        for p in Mode::ALL {
            cm_csv.push_str(&format!(",{}", cm.count(a, p)));
        }
        cm_csv.push('\n');
    }
    fs::write(cfg.output_dir.join("evaluation_confusion.csv"), cm_csv)?;

    let details = EvaluateDetails {
        method: method.name(),
        n_test: test_segments.len(),
        accuracy_pct: 100.0 * metrics.accuracy,
        per_class,
        per_model_accuracy_pct: per_model,
        weights,
    };
    write_manifest(
        &cfg.output_dir.join("evaluate.manifest.json"),
        "evaluate",
        cfg,
        details,
    )?;
    print!("{report}");
    Ok(())
}

#[derive(Serialize)]
struct PredictDetails {
    input: String,
    output: String,
    n_trips: usize,
    n_segments: usize,
    predicted_counts: ModeTally,
}

pub fn cmd_predict(cfg: &PipelineConfig, input: &Path, out: Option<PathBuf>) -> Result<()> {
    let trips = break_all(cfg, input)?;
    let ccfg = channel_config(cfg);
    let mut meta: Vec<(String, usize, usize)> = Vec::new();
    let mut segs: Vec<Segment> = Vec::new();
    for (ti, trip) in trips.iter().enumerate() {
        if let Some(trip_segments) = segment_trip(trip, &ccfg) {
            for (si, s) in trip_segments.into_iter().enumerate() {
                meta.push((trip.user_id.clone(), ti, si));
                segs.push(s);
            }
        }
    }
    if segs.is_empty() {
        return Err(Error::data(format!(
            "zero surviving segments in {} ({} trips)",
            input.display(),
            trips.len()
        )));
    }

    let predicted: Vec<Mode> = match cfg.ensemble.method {
        EnsembleMethod::Stack => {
            let dir = cfg.ensemble_dir().join("stack");
            require_file(&dir, "ensemble")?;
            predict_stack(&load_stack(&dir)?, &segs)?.0
        }
        EnsembleMethod::Average => {
            let mats = prob_matrices(&load_models(cfg)?, &segs)?;
            average_vote(&mats)?.0
        }
        EnsembleMethod::Majority => {
            let mats = prob_matrices(&load_models(cfg)?, &segs)?;
            majority_vote(&mats)?
        }
        EnsembleMethod::Weights => {
            let artifact = read_weights_artifact(cfg)?;
            let mats = prob_matrices(&load_models(cfg)?, &segs)?;
            weighted_vote(&mats, &artifact.weights)?.0
        }
    };

    let out = out.unwrap_or_else(|| cfg.output_dir.join("predictions.csv"));
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut csv = String::from("user_id,trip,segment,mode\n");
    for ((user, ti, si), mode) in meta.iter().zip(&predicted) {
        csv.push_str(&format!("{user},{ti},{si},{mode}\n"));
    }
    fs::write(&out, csv)?;

    fs::create_dir_all(&cfg.output_dir)?;
    let details = PredictDetails {
        input: input.display().to_string(),
        output: out.display().to_string(),
        n_trips: trips.len(),
        n_segments: segs.len(),
        predicted_counts: ModeTally::from_labels(&predicted),
    };
    write_manifest(
        &cfg.output_dir.join("predict.manifest.json"),
        "predict",
        cfg,
        details,
    )?;
    println!("predict: {} segments -> {}", segs.len(), out.display());
    Ok(())
}
