//! The four combination methods over a library of base learners: average
//! vote, majority vote, fitted simplex weights, and random-forest stacking
//! with out-of-fold meta-features.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{spec_string_of, NetworkCatalogEntry};
use crate::channels::{Segment, N_CHANNELS};
use crate::eval::{stratified_kfold, stratified_split};
use crate::forest::{predict_forest, train_forest, ForestConfig, ForestModel};
use crate::nn::{load_model, save_model, train, Model, TrainConfig};
use crate::{Error, Mode, Result, N_CLASSES};

/// Per-learner class probabilities, one row per sample. Rows sum to
/// 1 ± 1e-6 with entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub learner_id: String,
    pub rows: Vec<[f64; N_CLASSES]>,
}

fn argmax_lowest(p: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for i in 1..N_CLASSES {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

impl ProbMatrix {
    pub fn new(learner_id: impl Into<String>, rows: Vec<[f64; N_CLASSES]>) -> Result<ProbMatrix> {
        let learner_id = learner_id.into();
        for (r, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::data(format!(
                    "learner {learner_id} row {r} sums to {sum}, not 1"
                )));
            }
            if row.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
                return Err(Error::data(format!(
                    "learner {learner_id} row {r} has entries outside [0, 1]"
                )));
            }
        }
        Ok(ProbMatrix { learner_id, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Argmax per row, lowest class index on ties.
    pub fn labels(&self) -> Vec<Mode> {
        self.rows
            .iter()
            .map(|r| Mode::from_index(argmax_lowest(r)).expect("index in range"))
            .collect()
    }
}

fn check_same_len(mats: &[ProbMatrix]) -> Result<usize> {
    let Some(first) = mats.first() else {
        return Err(Error::data("no probability matrices to combine"));
    };
    for m in mats {
        if m.len() != first.len() {
            return Err(Error::shape(format!(
                "learner {} has {} rows, learner {} has {}",
                m.learner_id,
                m.len(),
                first.learner_id,
                first.len()
            )));
        }
    }
    Ok(first.len())
}

fn combine(mats: &[ProbMatrix], weights: &[f64], id: &str) -> Result<(Vec<Mode>, ProbMatrix)> {
    let n = check_same_len(mats)?;
    let mut rows = vec![[0.0f64; N_CLASSES]; n];
    for (m, &w) in mats.iter().zip(weights) {
        for (acc, row) in rows.iter_mut().zip(&m.rows) {
            for c in 0..N_CLASSES {
                acc[c] += w * row[c];
            }
        }
    }
    let combined = ProbMatrix::new(id, rows)?;
    Ok((combined.labels(), combined))
}

/// Elementwise mean of the learners' probabilities; labels by argmax with
/// lowest-index tie-break. Implemented as a uniform weighted vote, so it is
/// exactly `weighted_vote` with equal weights.
pub fn average_vote(mats: &[ProbMatrix]) -> Result<(Vec<Mode>, ProbMatrix)> {
    if mats.is_empty() {
        return Err(Error::data("no probability matrices to combine"));
    }
    let w = vec![1.0 / mats.len() as f64; mats.len()];
    combine(mats, &w, "average")
}

/// Per-row modal label over the learners' argmax votes. Ties go to the
/// class with the highest mean probability among the tied classes, then to
/// the lowest class index.
pub fn majority_vote(mats: &[ProbMatrix]) -> Result<Vec<Mode>> {
    let n = check_same_len(mats)?;
    let k = mats.len() as f64;
    let mut out = Vec::with_capacity(n);
    for r in 0..n {
        let mut votes = [0usize; N_CLASSES];
        let mut mean = [0.0f64; N_CLASSES];
        for m in mats {
            votes[argmax_lowest(&m.rows[r])] += 1;
            for c in 0..N_CLASSES {
                mean[c] += m.rows[r][c] / k;
            }
        }
        let top = *votes.iter().max().expect("four classes");
        let mut winner = None;
        for c in 0..N_CLASSES {
            if votes[c] != top {
                continue;
            }
            winner = match winner {
                None => Some(c),
                Some(best) if mean[c] > mean[best] => Some(c),
                keep => keep,
            };
        }
        out.push(Mode::from_index(winner.expect("non-empty votes")).expect("index in range"));
    }
    Ok(out)
}

/// Majority vote over bare label vectors (no probabilities); ties break to
/// the lowest class index.
pub fn majority_vote_labels(label_sets: &[Vec<Mode>]) -> Result<Vec<Mode>> {
    let Some(first) = label_sets.first() else {
        return Err(Error::data("no label vectors to combine"));
    };
    for s in label_sets {
        if s.len() != first.len() {
            return Err(Error::shape("label vectors have unequal lengths"));
        }
    }
    let mut out = Vec::with_capacity(first.len());
    for r in 0..first.len() {
        let mut votes = [0usize; N_CLASSES];
        for s in label_sets {
            votes[s[r].index()] += 1;
        }
        let top = *votes.iter().max().expect("four classes");
        let c = votes
            .iter()
            .position(|&v| v == top)
            .expect("some class has the top count");
        out.push(Mode::from_index(c).expect("index in range"));
    }
    Ok(out)
}

/// Result of a weight fit: the weights, the mean squared error they attain
/// against one-hot targets, and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub weights: Vec<f64>,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

struct QuadraticObjective {
    gram: Vec<Vec<f64>>,
    cross: Vec<f64>,
    target_sq: f64,
    scale: f64,
}

impl QuadraticObjective {
    /// MSE as a quadratic in learner space: precomputing the Gram matrix
    /// makes each evaluation O(n_learners²).
    fn build(mats: &[ProbMatrix], y: &[Mode]) -> QuadraticObjective {
        let n = mats.len();
        let rows = mats[0].len();
        let mut gram = vec![vec![0.0; n]; n];
        let mut cross = vec![0.0; n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for r in 0..rows {
                    for c in 0..N_CLASSES {
                        s += mats[i].rows[r][c] * mats[j].rows[r][c];
                    }
                }
                gram[i][j] = s;
                gram[j][i] = s;
            }
            cross[i] = (0..rows).map(|r| mats[i].rows[r][y[r].index()]).sum();
        }
        QuadraticObjective {
            gram,
            cross,
            target_sq: rows as f64,
            scale: 1.0 / (rows * N_CLASSES) as f64,
        }
    }

    fn mse(&self, w: &[f64]) -> f64 {
        let n = w.len();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..n {
            lin += w[i] * self.cross[i];
            for j in 0..n {
                quad += w[i] * self.gram[i][j] * w[j];
            }
        }
        self.scale * (quad - 2.0 * lin + self.target_sq)
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        (0..n)
            .map(|i| {
                let gw: f64 = (0..n).map(|j| self.gram[i][j] * w[j]).sum();
                2.0 * self.scale * (gw - self.cross[i])
            })
            .collect()
    }
}

const WEIGHT_TOL: f64 = 1e-8;
const WEIGHT_MAX_ITERS: usize = 10_000;

fn fit_weights(mats: &[ProbMatrix], y: &[Mode], simplex: bool) -> Result<WeightFit> {
    let rows = check_same_len(mats)?;
    if rows == 0 || rows != y.len() {
        return Err(Error::shape(format!(
            "{rows} probability rows but {} labels",
            y.len()
        )));
    }
    let n = mats.len();
    let objective = QuadraticObjective::build(mats, y);
    let mut w = vec![1.0 / n as f64; n];
    let mut current = objective.mse(&w);
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=WEIGHT_MAX_ITERS {
        iterations = iter;
        let g = objective.gradient(&w);
        // Stationarity: the unit-step projected-gradient residual on the
        // simplex, the plain gradient norm otherwise.
        let residual = if simplex {
            let moved =
                project_simplex(&w.iter().zip(&g).map(|(wi, gi)| wi - gi).collect::<Vec<_>>());
            moved
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            g.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        if residual <= WEIGHT_TOL {
            converged = true;
            break;
        }
        // Monotone backtracking line search.
        let mut accepted = false;
        while step >= 1e-18 {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let cand = if simplex {
                project_simplex(&cand)
            } else {
                cand
            };
            let value = objective.mse(&cand);
            if value <= current {
                w = cand;
                current = value;
                step = (step * 1.5).min(1e6);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(WeightFit {
        weights: w,
        mse: current,
        iterations,
        converged,
    })
}

/// Fit per-learner weights minimizing the MSE between the weighted
/// probability combination and one-hot targets, constrained to the
/// simplex. Deterministic: projected gradient descent from uniform
/// weights, monotone line search, stopping at residual 1e-8 or 10,000
/// iterations.
pub fn fit_optimal_weights(mats: &[ProbMatrix], y: &[Mode]) -> Result<WeightFit> {
    fit_weights(mats, y, true)
}

/// Unconstrained variant for comparison; the weights may leave the simplex
/// and are not accepted by [`weighted_vote`].
pub fn fit_unconstrained_weights(mats: &[ProbMatrix], y: &[Mode]) -> Result<WeightFit> {
    fit_weights(mats, y, false)
}

/// Argmax of the weighted probability combination. Weights must lie on the
/// simplex so the combination stays a probability distribution.
pub fn weighted_vote(mats: &[ProbMatrix], weights: &[f64]) -> Result<(Vec<Mode>, ProbMatrix)> {
    if weights.len() != mats.len() {
        return Err(Error::shape(format!(
            "{} weights for {} learners",
            weights.len(),
            mats.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || weights.iter().any(|&w| w < -1e-9) {
        return Err(Error::data(format!(
            "weights must lie on the simplex (sum {sum})"
        )));
    }
    combine(mats, weights, "weighted")
}

/// Configuration for out-of-fold stacking.
#[derive(Debug, Clone)]
pub struct StackConfig {
    pub k_folds: usize,
    /// Share of each training subset carved off (stratified) as the early
    /// stopping validation set.
    pub valid_fraction: f64,
    /// Template for base-learner training; each entry's own epoch budget
    /// overrides `train.epochs`, and seeds are derived per task.
    pub train: TrainConfig,
    /// Meta-learner head; its seed is derived from `seed`.
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for StackConfig {
    fn default() -> StackConfig {
        StackConfig {
            k_folds: 5,
            valid_fraction: 1.0 / 6.0,
            train: TrainConfig::default(),
            forest: ForestConfig::meta_learner(0),
            seed: 0,
        }
    }
}

struct DerivedSeeds {
    fold_seed: u64,
    /// Per learner, per fold: (validation-carve seed, training seed).
    oof: Vec<Vec<(u64, u64)>>,
    /// Per learner: seeds for the full-set retraining pass.
    full: Vec<(u64, u64)>,
    forest_seed: u64,
}

/// All seeds are drawn up front in a fixed order, so an excluded learner
/// never shifts the seeds of the others.
fn derive_seeds(n_learners: usize, k: usize, seed: u64) -> DerivedSeeds {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let fold_seed = rng.random();
    let mut oof = Vec::with_capacity(n_learners);
    let mut full = Vec::with_capacity(n_learners);
    for _ in 0..n_learners {
        oof.push((0..k).map(|_| (rng.random(), rng.random())).collect());
        full.push((rng.random(), rng.random()));
    }
    DerivedSeeds {
        fold_seed,
        oof,
        full,
        forest_seed: rng.random(),
    }
}

fn segment_labels(segments: &[Segment]) -> Result<Vec<Mode>> {
    segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.label
                .ok_or_else(|| Error::data(format!("segment {i} has no label")))
        })
        .collect()
}

fn uniform_segment_len(segments: &[Segment]) -> Result<usize> {
    let Some(first) = segments.first() else {
        return Err(Error::data("no segments to train on"));
    };
    let len = first.segment_len();
    if segments.iter().any(|s| s.segment_len() != len) {
        return Err(Error::shape("segments have differing lengths"));
    }
    Ok(len)
}

/// Train one catalog entry on the given rows, carving a stratified
/// validation subset for early stopping.
fn train_one(
    entry: &NetworkCatalogEntry,
    segments: &[Segment],
    rows: &[usize],
    segment_len: usize,
    config: &StackConfig,
    seeds: (u64, u64),
) -> Result<Model> {
    let labels: Vec<Mode> = rows
        .iter()
        .map(|&i| segments[i].label.expect("validated"))
        .collect();
    let (train_rel, valid_rel) = stratified_split(&labels, config.valid_fraction, seeds.0)?;
    let train_set: Vec<Segment> = train_rel
        .iter()
        .map(|&i| segments[rows[i]].clone())
        .collect();
    let valid_set: Vec<Segment> = valid_rel
        .iter()
        .map(|&i| segments[rows[i]].clone())
        .collect();
    let network = entry.build(segment_len, N_CHANNELS)?;
    let cfg = TrainConfig {
        epochs: entry.epochs,
        seed: seeds.1,
        ..config.train.clone()
    };
    let (model, _) = train(network, &train_set, &valid_set, &cfg)?;
    Ok(model)
}

/// Out-of-fold probabilities for every learner that trains successfully.
pub struct OofProbabilities {
    /// Indices into the library, in library order.
    pub learner_indices: Vec<usize>,
    pub learner_names: Vec<String>,
    pub excluded: Vec<String>,
    /// One matrix per surviving learner; row i holds the prediction made
    /// for segment i by the model whose training folds excluded it.
    pub per_learner: Vec<ProbMatrix>,
}

impl OofProbabilities {
    /// N × 4·n_learners meta-feature rows, learner-major.
    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        let n = self.per_learner.first().map_or(0, |m| m.len());
        (0..n)
            .map(|r| {
                let mut row = Vec::with_capacity(N_CLASSES * self.per_learner.len());
                for m in &self.per_learner {
                    row.extend_from_slice(&m.rows[r]);
                }
                row
            })
            .collect()
    }
}

/// Produce each learner's held-out-fold predictions under fixed fold
/// assignments. A learner whose training fails on any fold is excluded
/// with a warning on stderr. Fold contents are taken as given, so a held
/// -out fold's own labels never reach the models predicting it.
pub fn oof_probabilities(
    library: &[NetworkCatalogEntry],
    segments: &[Segment],
    folds: &[Vec<usize>],
    config: &StackConfig,
) -> Result<OofProbabilities> {
    if library.is_empty() {
        return Err(Error::data("empty base-learner library"));
    }
    let segment_len = uniform_segment_len(segments)?;
    segment_labels(segments)?;
    let n = segments.len();
    let seeds = derive_seeds(library.len(), folds.len(), config.seed);
    let mut learner_indices = Vec::new();
    let mut learner_names = Vec::new();
    let mut excluded = Vec::new();
    let mut per_learner = Vec::new();
    for (li, entry) in library.iter().enumerate() {
        let mut rows = vec![[0.0f64; N_CLASSES]; n];
        let mut failure = None;
        for (j, fold) in folds.iter().enumerate() {
            let mut held = vec![false; n];
            for &i in fold {
                held[i] = true;
            }
            let train_rows: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
            let outcome = train_one(
                entry,
                segments,
                &train_rows,
                segment_len,
                config,
                seeds.oof[li][j],
            )
            .and_then(|model| {
                let held_set: Vec<Segment> = fold.iter().map(|&i| segments[i].clone()).collect();
                model.predict_probs(&held_set)
            });
            match outcome {
                Ok(probs) => {
                    for (pos, &i) in fold.iter().enumerate() {
                        rows[i] = probs[pos];
                    }
                }
                Err(e) => {
                    failure = Some((j, e));
                    break;
                }
            }
        }
        match failure {
            None => {
                learner_indices.push(li);
                learner_names.push(entry.name.clone());
                per_learner.push(ProbMatrix::new(entry.name.clone(), rows)?);
            }
            Some((fold, e)) => {
                eprintln!(
                    "warning: learner {} excluded (fold {fold}): {e}",
                    entry.name
                );
                excluded.push(entry.name.clone());
            }
        }
    }
    Ok(OofProbabilities {
        learner_indices,
        learner_names,
        excluded,
        per_learner,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedBase {
    pub name: String,
    pub model: Model,
}

/// Base learners retrained on the full training set plus the forest that
/// combines their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedModel {
    pub base: Vec<StackedBase>,
    pub meta: ForestModel,
    pub k_folds: usize,
    pub seed: u64,
    pub excluded: Vec<String>,
}

/// Out-of-fold stacking: k stratified folds; each base learner trained on
/// k−1 folds predicts the held-out fold; the concatenated out-of-fold
/// probabilities train the forest; base learners are then retrained on the
/// full set for inference.
pub fn fit_meta_learner(
    library: &[NetworkCatalogEntry],
    segments: &[Segment],
    config: &StackConfig,
) -> Result<StackedModel> {
    if library.is_empty() {
        return Err(Error::data("empty base-learner library"));
    }
    let segment_len = uniform_segment_len(segments)?;
    let labels = segment_labels(segments)?;
    let seeds = derive_seeds(library.len(), config.k_folds, config.seed);
    let folds = stratified_kfold(&labels, config.k_folds, seeds.fold_seed)?;
    let oof = oof_probabilities(library, segments, &folds, config)?;
    let all_rows: Vec<usize> = (0..segments.len()).collect();
    let mut base = Vec::new();
    let mut kept_mats = Vec::new();
    let mut excluded = oof.excluded.clone();
    for ((&li, name), mat) in oof
        .learner_indices
        .iter()
        .zip(&oof.learner_names)
        .zip(oof.per_learner)
    {
        match train_one(
            &library[li],
            segments,
            &all_rows,
            segment_len,
            config,
            seeds.full[li],
        ) {
            Ok(model) => {
                base.push(StackedBase {
                    name: name.clone(),
                    model,
                });
                kept_mats.push(mat);
            }
            Err(e) => {
                eprintln!("warning: learner {name} excluded (full retrain): {e}");
                excluded.push(name.clone());
            }
        }
    }
    if base.is_empty() {
        return Err(Error::data("every base learner failed to train"));
    }
    let survivors = OofProbabilities {
        learner_indices: Vec::new(),
        learner_names: base.iter().map(|b| b.name.clone()).collect(),
        excluded: excluded.clone(),
        per_learner: kept_mats,
    };
    let meta_x = survivors.feature_rows();
    let forest_cfg = ForestConfig {
        seed: seeds.forest_seed,
        ..config.forest.clone()
    };
    let meta = train_forest(&meta_x, &labels, &forest_cfg)?;
    Ok(StackedModel {
        base,
        meta,
        k_folds: config.k_folds,
        seed: config.seed,
        excluded,
    })
}

/// Base learners produce probabilities, concatenated into meta-features,
/// and the forest predicts the final labels.
pub fn predict_stack(
    model: &StackedModel,
    segments: &[Segment],
) -> Result<(Vec<Mode>, ProbMatrix)> {
    if segments.is_empty() {
        return Err(Error::data("no segments to predict"));
    }
    let n = segments.len();
    let mut rows = vec![Vec::with_capacity(N_CLASSES * model.base.len()); n];
    for b in &model.base {
        let probs = b.model.predict_probs(segments)?;
        for (row, p) in rows.iter_mut().zip(&probs) {
            row.extend_from_slice(p);
        }
    }
    let (probs, labels) = predict_forest(&model.meta, &rows)?;
    Ok((labels, ProbMatrix::new("stack", probs)?))
}

#[derive(Serialize, Deserialize)]
struct BundleLearner {
    name: String,
    file: String,
    spec: String,
}

#[derive(Serialize, Deserialize)]
struct BundleIndex {
    format: String,
    version: u32,
    seed: u64,
    k_folds: usize,
    learners: Vec<BundleLearner>,
    meta_file: String,
    excluded: Vec<String>,
}

const BUNDLE_FORMAT: &str = "stack-bundle";
const BUNDLE_VERSION: u32 = 1;
const BUNDLE_INDEX: &str = "index.json";

/// Write the stacked model as a directory: one file per base model, the
/// forest, and `index.json` tying them together.
pub fn save_stack(model: &StackedModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut learners = Vec::new();
    for (i, b) in model.base.iter().enumerate() {
        let file = format!("base_{i:02}_{}.mnet", b.name);
        save_model(&b.model, &dir.join(&file))?;
        learners.push(BundleLearner {
            name: b.name.clone(),
            file,
            spec: spec_string_of(&b.model.network.layers),
        });
    }
    let meta_file = "meta.frst".to_string();
    crate::forest::save_forest(&model.meta, &dir.join(&meta_file))?;
    let index = BundleIndex {
        format: BUNDLE_FORMAT.to_string(),
        version: BUNDLE_VERSION,
        seed: model.seed,
        k_folds: model.k_folds,
        learners,
        meta_file,
        excluded: model.excluded.clone(),
    };
    let json = serde_json::to_string_pretty(&index)
        .map_err(|e| Error::format(format!("index serialization: {e}")))?;
    std::fs::write(dir.join(BUNDLE_INDEX), json)?;
    Ok(())
}

pub fn load_stack(dir: &Path) -> Result<StackedModel> {
    let raw = std::fs::read_to_string(dir.join(BUNDLE_INDEX))?;
    let index: BundleIndex =
        serde_json::from_str(&raw).map_err(|e| Error::format(format!("bad bundle index: {e}")))?;
    if index.format != BUNDLE_FORMAT {
        return Err(Error::format(format!(
            "not a stack bundle: format {}",
            index.format
        )));
    }
    if index.version != BUNDLE_VERSION {
        return Err(Error::format(format!(
            "unsupported bundle version {}",
            index.version
        )));
    }
    let mut base = Vec::with_capacity(index.learners.len());
    for l in &index.learners {
        let model = load_model(&dir.join(&l.file))?;
        base.push(StackedBase {
            name: l.name.clone(),
            model,
        });
    }
    if base.is_empty() {
        return Err(Error::format("bundle has no base models"));
    }
    let meta = crate::forest::load_forest(&dir.join(&index.meta_file))?;
    if meta.n_features != N_CLASSES * base.len() {
        return Err(Error::format(format!(
            "meta-learner expects {} features but {} base models provide {}",
            meta.n_features,
            base.len(),
            N_CLASSES * base.len()
        )));
    }
    Ok(StackedModel {
        base,
        meta,
        k_folds: index.k_folds,
        seed: index.seed,
        excluded: index.excluded,
    })
}
