//! CART decision trees and seeded random forests.
//!
//! Serves two roles: a classical baseline over hand-crafted per-segment
//! features, and the final stage of the stacking combiner, where a forest
//! classifies concatenated base-learner probabilities.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::channels::{Segment, CH_ACCEL, CH_DISTANCE, CH_SPEED};
use crate::nn::{Reader, Writer};
use crate::par;
use crate::{Error, Mode, Result, N_CLASSES};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Non-empty per-class sample counts of the training rows that landed
    /// here.
    Leaf { counts: [u64; N_CLASSES] },
    /// Rows with `feature <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub n_features: usize,
    pub seed: u64,
    pub trees: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; clamped to the feature count.
    pub max_features_per_split: usize,
    /// Nodes smaller than this are not split further.
    pub min_node_size: usize,
    /// Resample N rows with replacement per tree. Disabled for the
    /// single-tree baseline so the tree sees every row.
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestConfig {
    /// Stacking combiner head: 800 trees, up to 8 features per split.
    pub fn meta_learner(seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: 800,
            max_features_per_split: 8,
            min_node_size: 1,
            bootstrap: true,
            seed,
        }
    }

    /// Stand-alone forest baseline: 1000 trees.
    pub fn baseline_forest(seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: 1000,
            max_features_per_split: 8,
            min_node_size: 1,
            bootstrap: true,
            seed,
        }
    }

    /// Single unbagged CART tree with a 20-row split floor.
    pub fn baseline_tree(seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            max_features_per_split: usize::MAX,
            min_node_size: 20,
            bootstrap: false,
            seed,
        }
    }
}

/// `1 - sum((n_c / N)^2)` over the class counts.
pub fn gini_impurity(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    assert!(total > 0, "gini of an empty node");
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn mode_counts(y: &[Mode], rows: &[usize]) -> [u64; N_CLASSES] {
    let mut counts = [0u64; N_CLASSES];
    for &r in rows {
        counts[y[r].index()] += 1;
    }
    counts
}

/// Exhaustive scan over the candidate features and the midpoints between
/// consecutive distinct values. Returns the split with the largest Gini
/// decrease, ties broken by lowest feature index then lowest threshold, or
/// `None` when no split has positive gain.
pub fn best_split(
    x: &[Vec<f64>],
    y: &[Mode],
    rows: &[usize],
    features: &[usize],
) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let parent = mode_counts(y, rows);
    let parent_gini = gini_impurity(&parent);
    let total = n as f64;
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x[r][f], y[r].index())));
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("features must be finite"));
        let mut left = [0u64; N_CLASSES];
        let mut right = parent;
        for i in 1..n {
            let (v_prev, c_prev) = pairs[i - 1];
            left[c_prev] += 1;
            right[c_prev] -= 1;
            let v = pairs[i].0;
            if v <= v_prev {
                continue;
            }
            let n_left = i as f64;
            let weighted =
                (n_left * gini_impurity(&left) + (total - n_left) * gini_impurity(&right)) / total;
            let gain = parent_gini - weighted;
            if gain <= 0.0 {
                continue;
            }
            // Strict comparison keeps the first maximum; features ascend
            // and thresholds ascend within a feature, so ties resolve to
            // the lowest feature then the lowest threshold.
            if best.map_or(true, |b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: (v_prev + v) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

fn sample_features(rng: &mut ChaCha20Rng, n_features: usize, k: usize) -> Vec<usize> {
    if k >= n_features {
        return (0..n_features).collect();
    }
    let mut pool: Vec<usize> = (0..n_features).collect();
    for i in 0..k {
        let j = rng.random_range(i..n_features);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

fn grow(
    x: &[Vec<f64>],
    y: &[Mode],
    rows: Vec<usize>,
    min_node_size: usize,
    max_features: usize,
    n_features: usize,
    rng: &mut ChaCha20Rng,
) -> TreeNode {
    let counts = mode_counts(y, &rows);
    let classes_present = counts.iter().filter(|&&c| c > 0).count();
    if rows.len() < min_node_size.max(2) || classes_present < 2 {
        return TreeNode::Leaf { counts };
    }
    let features = sample_features(rng, n_features, max_features);
    let Some(split) = best_split(x, y, &rows, &features) else {
        return TreeNode::Leaf { counts };
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| x[r][split.feature] <= split.threshold);
    if left_rows.is_empty() || right_rows.is_empty() {
        return TreeNode::Leaf { counts };
    }
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(
            x,
            y,
            left_rows,
            min_node_size,
            max_features,
            n_features,
            rng,
        )),
        right: Box::new(grow(
            x,
            y,
            right_rows,
            min_node_size,
            max_features,
            n_features,
            rng,
        )),
    }
}

fn validate_features(x: &[Vec<f64>], n_features: usize) -> Result<()> {
    for (i, row) in x.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::shape(format!(
                "row {i} has {} features, expected {n_features}",
                row.len()
            )));
        }
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite feature {bad} in row {i}")));
        }
    }
    Ok(())
}

/// Train a forest: per-tree seeds derive from `config.seed` up front, so
/// parallel and sequential training produce identical models.
pub fn train_forest(x: &[Vec<f64>], y: &[Mode], config: &ForestConfig) -> Result<ForestModel> {
    if x.is_empty() {
        return Err(Error::data("cannot train a forest on zero rows"));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if config.n_trees == 0 {
        return Err(Error::config("n_trees must be at least 1"));
    }
    if config.max_features_per_split == 0 {
        return Err(Error::config("max_features_per_split must be at least 1"));
    }
    let n_features = x[0].len();
    if n_features == 0 {
        return Err(Error::shape("feature rows are empty"));
    }
    validate_features(x, n_features)?;
    let full = mode_counts(y, &(0..y.len()).collect::<Vec<_>>());
    if full.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::data("training labels contain fewer than 2 classes"));
    }
    if x.len() < config.min_node_size {
        return Err(Error::data(format!(
            "{} rows is below min_node_size {}",
            x.len(),
            config.min_node_size
        )));
    }
    let mut master = ChaCha20Rng::seed_from_u64(config.seed);
    let tree_seeds: Vec<u64> = (0..config.n_trees).map(|_| master.random()).collect();
    let max_features = config.max_features_per_split.min(n_features);
    let n = x.len();
    let trees = par::map_slice(&tree_seeds, |&tree_seed| {
        let mut rng = ChaCha20Rng::seed_from_u64(tree_seed);
        let rows: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        grow(
            x,
            y,
            rows,
            config.min_node_size,
            max_features,
            n_features,
            &mut rng,
        )
    });
    Ok(ForestModel {
        n_features,
        seed: config.seed,
        trees,
    })
}

fn leaf_counts<'a>(mut node: &'a TreeNode, row: &[f64]) -> &'a [u64; N_CLASSES] {
    loop {
        match node {
            TreeNode::Leaf { counts } => return counts,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                node = if row[*feature] <= *threshold {
                    left
                } else {
                    right
                };
            }
        }
    }
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

/// Per-row class probabilities (mean of the trees' leaf distributions) and
/// argmax labels with lowest-index tie-break.
pub fn predict_forest(
    model: &ForestModel,
    x: &[Vec<f64>],
) -> Result<(Vec<[f64; N_CLASSES]>, Vec<Mode>)> {
    validate_features(x, model.n_features)?;
    let n_trees = model.trees.len() as f64;
    let probs = par::map_slice(x, |row| {
        let mut acc = [0.0f64; N_CLASSES];
        for tree in &model.trees {
            let counts = leaf_counts(tree, row);
            let total: u64 = counts.iter().sum();
            for c in 0..N_CLASSES {
                acc[c] += counts[c] as f64 / total as f64;
            }
        }
        for v in acc.iter_mut() {
            *v /= n_trees;
        }
        acc
    });
    let labels = probs
        .iter()
        .map(|p| Mode::from_index(argmax_lowest(p)).expect("index in range"))
        .collect();
    Ok((probs, labels))
}

pub const N_HANDCRAFTED_FEATURES: usize = 6;

/// Names of the hand-crafted features, index-aligned with
/// [`handcrafted_features`]. Written into manifests next to trained
/// baselines.
pub const HANDCRAFTED_FEATURE_NAMES: [&str; N_HANDCRAFTED_FEATURES] = [
    "average_speed_mps",
    "pct85_speed_mps",
    "max_accel_mps2",
    "min_accel_mps2",
    "travel_time_s",
    "distance_m",
];

/// Per-segment summary features for the classical baseline, computed from
/// the valid channel rows. The 85th-percentile speed uses the nearest-rank
/// method; travel time is recovered as distance/speed summed over moving
/// rows, so fully stationary spans contribute no time.
pub fn handcrafted_features(seg: &Segment) -> [f64; N_HANDCRAFTED_FEATURES] {
    let n = seg.n_valid.max(1);
    let mut speeds: Vec<f64> = (0..n).map(|r| seg.get(r, CH_SPEED)).collect();
    let avg_speed = speeds.iter().sum::<f64>() / n as f64;
    speeds.sort_by(|a, b| a.partial_cmp(b).expect("finite speeds"));
    let rank = ((0.85 * n as f64).ceil() as usize).clamp(1, n) - 1;
    let pct85 = speeds[rank];
    let mut max_accel = f64::NEG_INFINITY;
    let mut min_accel = f64::INFINITY;
    let mut distance = 0.0;
    let mut time = 0.0;
    for r in 0..n {
        let a = seg.get(r, CH_ACCEL);
        max_accel = max_accel.max(a);
        min_accel = min_accel.min(a);
        let d = seg.get(r, CH_DISTANCE);
        distance += d;
        let v = seg.get(r, CH_SPEED);
        if v > 0.0 {
            time += d / v;
        }
    }
    [avg_speed, pct85, max_accel, min_accel, time, distance]
}

pub fn segment_features(segments: &[Segment]) -> Vec<Vec<f64>> {
    par::map_slice(segments, |s| handcrafted_features(s).to_vec())
}

const MAGIC: &[u8; 4] = b"FRST";
const VERSION: u8 = 1;
const TAG_LEAF: u8 = 0;
const TAG_SPLIT: u8 = 1;

fn write_node(w: &mut Writer, node: &TreeNode) {
    match node {
        TreeNode::Leaf { counts } => {
            w.u8(TAG_LEAF);
            for &c in counts {
                w.u64(c);
            }
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            w.u8(TAG_SPLIT);
            w.u32(*feature as u32);
            w.f64(*threshold);
            write_node(w, left);
            write_node(w, right);
        }
    }
}

fn read_node(r: &mut Reader<'_>, n_features: usize) -> Result<TreeNode> {
    match r.u8()? {
        TAG_LEAF => {
            let mut counts = [0u64; N_CLASSES];
            for c in counts.iter_mut() {
                *c = r.u64()?;
            }
            if counts.iter().all(|&c| c == 0) {
                return Err(Error::format("leaf with empty class counts"));
            }
            Ok(TreeNode::Leaf { counts })
        }
        TAG_SPLIT => {
            let feature = r.u32()? as usize;
            if feature >= n_features {
                return Err(Error::format(format!(
                    "split feature {feature} out of range (n_features {n_features})"
                )));
            }
            let threshold = r.f64()?;
            if !threshold.is_finite() {
                return Err(Error::format("non-finite split threshold"));
            }
            let left = Box::new(read_node(r, n_features)?);
            let right = Box::new(read_node(r, n_features)?);
            Ok(TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            })
        }
        other => Err(Error::format(format!("unknown tree node tag {other}"))),
    }
}

/// `FRST` version 1: header, then each tree serialized preorder.
pub fn forest_to_bytes(model: &ForestModel) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u8(VERSION);
    w.u64(model.seed);
    w.u32(model.n_features as u32);
    w.u8(N_CLASSES as u8);
    w.u32(model.trees.len() as u32);
    for tree in &model.trees {
        write_node(&mut w, tree);
    }
    w.buf
}

pub fn forest_from_bytes(bytes: &[u8]) -> Result<ForestModel> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC, "forest model")?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported forest version {version}"
        )));
    }
    let seed = r.u64()?;
    let n_features = r.u32()? as usize;
    if n_features == 0 {
        return Err(Error::format("forest with zero features"));
    }
    let n_classes = r.u8()? as usize;
    if n_classes != N_CLASSES {
        return Err(Error::format(format!(
            "forest built for {n_classes} classes, expected {N_CLASSES}"
        )));
    }
    let n_trees = r.u32()? as usize;
    if n_trees == 0 {
        return Err(Error::format("forest with zero trees"));
    }
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        trees.push(read_node(&mut r, n_features)?);
    }
    r.done()?;
    Ok(ForestModel {
        n_features,
        seed,
        trees,
    })
}

pub fn save_forest(model: &ForestModel, path: &Path) -> Result<()> {
    std::fs::write(path, forest_to_bytes(model))?;
    Ok(())
}

pub fn load_forest(path: &Path) -> Result<ForestModel> {
    forest_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::N_CHANNELS;
    use rand::rngs::StdRng;
    use rand_distr::{Distribution, Normal};

    fn rows(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn gini_cases() {
        assert_eq!(gini_impurity(&[10, 0, 0, 0]), 0.0);
        assert!((gini_impurity(&[5, 5]) - 0.5).abs() < 1e-15);
        let counts = [3u64, 5, 2, 6];
        let total = 16.0;
        let oracle = 1.0
            - counts
                .iter()
                .map(|&c| c as f64 / total)
                .map(|p| p * p)
                .sum::<f64>();
        assert!((gini_impurity(&counts) - oracle).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn gini_empty_panics() {
        gini_impurity(&[0, 0]);
    }

    #[test]
    fn split_separates_one_dimension() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 6.0, 7.0, 9.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let y = vec![
            Mode::Walk,
            Mode::Walk,
            Mode::Walk,
            Mode::Car,
            Mode::Car,
            Mode::Car,
        ];
        let s = best_split(&x, &y, &rows(6), &[0]).unwrap();
        assert_eq!(s.feature, 0);
        assert!((s.threshold - 5.0).abs() < 1e-12);
        assert!((s.gain - 0.5).abs() < 1e-12, "gain equals parent impurity");
    }

    #[test]
    fn identical_features_yield_no_split() {
        let x = vec![vec![3.0, 3.0]; 6];
        let y = vec![
            Mode::Walk,
            Mode::Car,
            Mode::Walk,
            Mode::Car,
            Mode::Walk,
            Mode::Car,
        ];
        assert!(best_split(&x, &y, &rows(6), &[0, 1]).is_none());
    }

    #[test]
    fn pure_node_yields_no_split() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y = vec![Mode::Bike; 6];
        assert!(best_split(&x, &y, &rows(6), &[0]).is_none());
    }

    fn oracle_split(
        x: &[Vec<f64>],
        y: &[Mode],
        rows: &[usize],
        features: &[usize],
    ) -> Option<SplitChoice> {
        let parent = mode_counts(y, rows);
        let parent_gini = gini_impurity(&parent);
        let mut best: Option<SplitChoice> = None;
        for &f in features {
            let mut vals: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let threshold = (w[0] + w[1]) / 2.0;
                let mut left = [0u64; N_CLASSES];
                let mut right = [0u64; N_CLASSES];
                for &r in rows {
                    if x[r][f] <= threshold {
                        left[y[r].index()] += 1;
                    } else {
                        right[y[r].index()] += 1;
                    }
                }
                let nl: u64 = left.iter().sum();
                let nr: u64 = right.iter().sum();
                if nl == 0 || nr == 0 {
                    continue;
                }
                let weighted = (nl as f64 * gini_impurity(&left)
                    + nr as f64 * gini_impurity(&right))
                    / rows.len() as f64;
                let gain = parent_gini - weighted;
                if gain <= 0.0 {
                    continue;
                }
                if best.map_or(true, |b| gain > b.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    #[test]
    fn split_matches_brute_force_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for case in 0..60 {
            let n = rng.random_range(2..=12);
            let f = rng.random_range(1..=3);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..f).map(|_| rng.random_range(0..4) as f64).collect())
                .collect();
            let y: Vec<Mode> = (0..n)
                .map(|_| Mode::from_index(rng.random_range(0..N_CLASSES)).unwrap())
                .collect();
            let features: Vec<usize> = (0..f).collect();
            let got = best_split(&x, &y, &rows(n), &features);
            let want = oracle_split(&x, &y, &rows(n), &features);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => {
                    assert_eq!(g.feature, w.feature, "case {case}");
                    assert!((g.threshold - w.threshold).abs() < 1e-12, "case {case}");
                    assert!((g.gain - w.gain).abs() < 1e-12, "case {case}");
                }
                other => panic!("case {case}: {other:?}"),
            }
        }
    }

    fn consistent_dataset() -> (Vec<Vec<f64>>, Vec<Mode>) {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![4.0, 0.0],
            vec![4.0, 1.0],
            vec![5.0, 0.0],
            vec![5.0, 5.0],
        ];
        let y = vec![
            Mode::Walk,
            Mode::Walk,
            Mode::Bike,
            Mode::Bike,
            Mode::Transit,
            Mode::Transit,
            Mode::Car,
            Mode::Car,
        ];
        (x, y)
    }

    #[test]
    fn unbagged_tree_memorizes_consistent_data() {
        let (x, y) = consistent_dataset();
        let cfg = ForestConfig {
            n_trees: 1,
            max_features_per_split: 2,
            min_node_size: 1,
            bootstrap: false,
            seed: 3,
        };
        let model = train_forest(&x, &y, &cfg).unwrap();
        let (probs, labels) = predict_forest(&model, &x).unwrap();
        assert_eq!(labels, y);
        for (p, label) in probs.iter().zip(&y) {
            assert!((p[label.index()] - 1.0).abs() < 1e-12, "pure leaves");
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = consistent_dataset();
        let cfg = ForestConfig {
            n_trees: 12,
            max_features_per_split: 1,
            min_node_size: 1,
            bootstrap: true,
            seed: 11,
        };
        let a = train_forest(&x, &y, &cfg).unwrap();
        let b = train_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&x, &y, &ForestConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parallel_matches_sequential() {
        let (x, y) = consistent_dataset();
        let cfg = ForestConfig {
            n_trees: 8,
            max_features_per_split: 1,
            min_node_size: 1,
            bootstrap: true,
            seed: 21,
        };
        let parallel = train_forest(&x, &y, &cfg).unwrap();
        par::force_sequential(true);
        let sequential = train_forest(&x, &y, &cfg).unwrap();
        par::force_sequential(false);
        assert_eq!(parallel, sequential);
    }

    fn blobs(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Mode>) {
        let centers = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0), (6.0, 6.0)];
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..per_class {
                x.push(vec![
                    cx + noise.sample(&mut rng),
                    cy + noise.sample(&mut rng),
                ]);
                y.push(Mode::from_index(c).unwrap());
            }
        }
        (x, y)
    }

    #[test]
    fn blob_benchmark_reaches_95_percent() {
        let (xtr, ytr) = blobs(50, 500);
        let (xte, yte) = blobs(50, 501);
        let cfg = ForestConfig {
            n_trees: 25,
            max_features_per_split: 2,
            min_node_size: 1,
            bootstrap: true,
            seed: 7,
        };
        let model = train_forest(&xtr, &ytr, &cfg).unwrap();
        let (probs, labels) = predict_forest(&model, &xte).unwrap();
        let correct = labels.iter().zip(&yte).filter(|(a, b)| a == b).count();
        let acc = correct as f64 / yte.len() as f64;
        assert!(acc >= 0.95, "blob accuracy {acc}");
        for p in &probs {
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blob_prediction_trace_is_stable() {
        let (xtr, ytr) = blobs(50, 500);
        let (xte, _) = blobs(50, 501);
        let cfg = ForestConfig {
            n_trees: 25,
            max_features_per_split: 2,
            min_node_size: 1,
            bootstrap: true,
            seed: 7,
        };
        let model = train_forest(&xtr, &ytr, &cfg).unwrap();
        let (_, labels) = predict_forest(&model, &xte[..20]).unwrap();
        let trace: String = labels
            .iter()
            .map(|m| m.name().chars().next().unwrap().to_ascii_uppercase())
            .collect();
        assert_eq!(trace, "WWWWWWWWWWWWWWWWWWWW");
    }

    fn structure_signature(node: &TreeNode, out: &mut Vec<(usize, [u64; N_CLASSES])>) {
        match node {
            TreeNode::Leaf { counts } => out.push((usize::MAX, *counts)),
            TreeNode::Split {
                feature,
                left,
                right,
                ..
            } => {
                out.push((*feature, [0; N_CLASSES]));
                structure_signature(left, out);
                structure_signature(right, out);
            }
        }
    }

    #[test]
    fn monotone_transform_leaves_structure_and_predictions_unchanged() {
        let (x, y) = blobs(30, 42);
        let transformed: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * r[0] * r[0], r[1]]).collect();
        let cfg = ForestConfig {
            n_trees: 10,
            max_features_per_split: 2,
            min_node_size: 1,
            bootstrap: true,
            seed: 13,
        };
        let plain = train_forest(&x, &y, &cfg).unwrap();
        let cubed = train_forest(&transformed, &y, &cfg).unwrap();
        for (a, b) in plain.trees.iter().zip(&cubed.trees) {
            let mut sa = Vec::new();
            let mut sb = Vec::new();
            structure_signature(a, &mut sa);
            structure_signature(b, &mut sb);
            assert_eq!(sa, sb);
        }
        let (_, la) = predict_forest(&plain, &x).unwrap();
        let (_, lb) = predict_forest(&cubed, &transformed).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn duplicated_trees_do_not_change_labels() {
        let (x, y) = blobs(20, 77);
        let cfg = ForestConfig {
            n_trees: 5,
            max_features_per_split: 2,
            min_node_size: 1,
            bootstrap: true,
            seed: 5,
        };
        let model = train_forest(&x, &y, &cfg).unwrap();
        let mut doubled = model.clone();
        doubled.trees.extend(model.trees.iter().cloned());
        let (_, la) = predict_forest(&model, &x).unwrap();
        let (_, lb) = predict_forest(&doubled, &x).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, y) = consistent_dataset();
        let cfg = ForestConfig {
            n_trees: 1,
            max_features_per_split: 2,
            min_node_size: 1,
            bootstrap: false,
            seed: 0,
        };
        assert!(train_forest(&[], &[], &cfg).is_err());
        assert!(train_forest(&x, &y[..4], &cfg).is_err());
        assert!(train_forest(&x, &vec![Mode::Walk; 8], &cfg).is_err());
        let mut bad = x.clone();
        bad[3][1] = f64::NAN;
        assert!(train_forest(&bad, &y, &cfg).is_err());
        let small_cfg = ForestConfig {
            min_node_size: 100,
            ..cfg
        };
        assert!(train_forest(&x, &y, &small_cfg).is_err());
        let model = train_forest(&x, &y, &cfg).unwrap();
        assert!(predict_forest(&model, &[vec![1.0]]).is_err());
    }

    #[test]
    fn min_node_size_limits_growth() {
        let (x, y) = blobs(25, 9);
        let big = ForestConfig {
            n_trees: 1,
            max_features_per_split: 2,
            min_node_size: 100,
            bootstrap: false,
            seed: 1,
        };
        let model = train_forest(&x, &y, &big).unwrap();
        // All 100 rows sit at the root, which may split exactly once; the
        // children are below the floor and must stay leaves.
        match &model.trees[0] {
            TreeNode::Split { left, right, .. } => {
                assert!(matches!(**left, TreeNode::Leaf { .. }));
                assert!(matches!(**right, TreeNode::Leaf { .. }));
            }
            TreeNode::Leaf { counts } => assert_eq!(*counts, [25, 25, 25, 25]),
        }
    }

    fn toy_segment(speeds: &[f64], accels: &[f64], dists: &[f64]) -> Segment {
        let n = speeds.len();
        let mut seg = Segment::zeros(n, None);
        for r in 0..n {
            seg.values[r * N_CHANNELS + CH_DISTANCE] = dists[r];
            seg.values[r * N_CHANNELS + CH_SPEED] = speeds[r];
            seg.values[r * N_CHANNELS + CH_ACCEL] = accels[r];
        }
        seg.n_valid = n;
        seg
    }

    #[test]
    fn handcrafted_feature_values() {
        let seg = toy_segment(
            &[0.0, 2.0, 4.0, 6.0, 8.0],
            &[0.0, 0.5, -1.5, 0.25, 0.0],
            &[0.0, 20.0, 40.0, 60.0, 80.0],
        );
        let f = handcrafted_features(&seg);
        assert!((f[0] - 4.0).abs() < 1e-12, "average speed");
        // Nearest rank: ceil(0.85 * 5) = 5th smallest of the sorted speeds.
        assert!((f[1] - 8.0).abs() < 1e-12, "85th percentile speed");
        assert!((f[2] - 0.5).abs() < 1e-12, "max accel");
        assert!((f[3] - (-1.5)).abs() < 1e-12, "min accel");
        assert!(
            (f[4] - 40.0).abs() < 1e-12,
            "travel time sums distance/speed"
        );
        assert!((f[5] - 200.0).abs() < 1e-12, "distance");
    }

    #[test]
    fn features_ignore_padding() {
        let mut seg = toy_segment(&[1.0; 10], &[0.0; 10], &[5.0; 10]);
        seg.n_valid = 4;
        let f = handcrafted_features(&seg);
        assert!((f[5] - 20.0).abs() < 1e-12, "only valid rows counted");
        assert_eq!(segment_features(&[seg])[0].len(), N_HANDCRAFTED_FEATURES);
    }

    #[test]
    fn persistence_round_trip() {
        let (x, y) = blobs(20, 123);
        let cfg = ForestConfig {
            n_trees: 6,
            max_features_per_split: 2,
            min_node_size: 1,
            bootstrap: true,
            seed: 31,
        };
        let model = train_forest(&x, &y, &cfg).unwrap();
        let bytes = forest_to_bytes(&model);
        let back = forest_from_bytes(&bytes).unwrap();
        assert_eq!(model, back);
        assert_eq!(forest_to_bytes(&back), bytes);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.frst");
        save_forest(&model, &path).unwrap();
        assert_eq!(load_forest(&path).unwrap(), model);
    }

    #[test]
    fn persistence_rejects_corruption() {
        let (x, y) = consistent_dataset();
        let cfg = ForestConfig {
            n_trees: 2,
            max_features_per_split: 2,
            min_node_size: 1,
            bootstrap: false,
            seed: 1,
        };
        let model = train_forest(&x, &y, &cfg).unwrap();
        let bytes = forest_to_bytes(&model);
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(forest_from_bytes(&bad_magic).is_err());
        assert!(forest_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(forest_from_bytes(&trailing).is_err());
        let mut bad_version = bytes;
        bad_version[4] = 9;
        assert!(forest_from_bytes(&bad_version).is_err());
    }
}
