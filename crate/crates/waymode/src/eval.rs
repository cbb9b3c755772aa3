//! Classification metrics and resampling: confusion matrices, per-class
//! precision/recall/F-score, stratified train/test splits and k-fold
//! partitions. Splits are pure functions of (labels, parameters, seed).

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::{Error, Mode, Result, N_CLASSES};

/// 4×4 count matrix; rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> ConfusionMatrix {
        ConfusionMatrix::default()
    }

    pub fn from_counts(counts: [[u64; N_CLASSES]; N_CLASSES]) -> ConfusionMatrix {
        ConfusionMatrix { counts }
    }

    pub fn add(&mut self, actual: Mode, predicted: Mode) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn count(&self, actual: Mode, predicted: Mode) -> u64 {
        self.counts[actual.index()][predicted.index()]
    }

    pub fn counts(&self) -> &[[u64; N_CLASSES]; N_CLASSES] {
        &self.counts
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }
}

/// Build a confusion matrix from parallel actual/predicted label vectors.
pub fn confusion_matrix(actual: &[Mode], predicted: &[Mode]) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(Error::shape(format!(
            "actual has {} labels, predicted has {}",
            actual.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::new();
    for (&a, &p) in actual.iter().zip(predicted) {
        cm.add(a, p);
    }
    Ok(cm)
}

/// Per-class metrics as fractions in [0, 1]. `precision_defined` /
/// `recall_defined` are false when the corresponding denominator (predicted
/// column, actual row) was empty; the metric is then reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: [ClassMetrics; N_CLASSES],
    pub accuracy: f64,
}

/// Precision per predicted column, recall per actual row, F-score as their
/// harmonic mean, overall accuracy as the diagonal share.
pub fn precision_recall_f1(cm: &ConfusionMatrix) -> MetricsReport {
    let per_class = std::array::from_fn(|c| {
        let col = cm.col_sum(c);
        let row = cm.row_sum(c);
        let diag = cm.counts()[c][c] as f64;
        let precision = if col > 0 { diag / col as f64 } else { 0.0 };
        let recall = if row > 0 { diag / row as f64 } else { 0.0 };
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics {
            precision,
            recall,
            f_score,
            precision_defined: col > 0,
            recall_defined: row > 0,
        }
    });
    MetricsReport {
        per_class,
        accuracy: cm.accuracy(),
    }
}

/// Plain-text report: counts matrix plus per-class percentages to one
/// decimal place.
pub fn format_report(cm: &ConfusionMatrix) -> String {
    let m = precision_recall_f1(cm);
    let mut out = String::new();
    out.push_str("confusion matrix (rows = actual, cols = predicted)\n");
    out.push_str(&format!("{:>9}", ""));
    for mode in Mode::ALL {
        out.push_str(&format!("{:>9}", mode.name()));
    }
    out.push('\n');
    for a in Mode::ALL {
        out.push_str(&format!("{:>9}", a.name()));
        for p in Mode::ALL {
            out.push_str(&format!("{:>9}", cm.count(a, p)));
        }
        out.push('\n');
    }
    out.push_str("\nclass      precision%   recall%  f-score%\n");
    for mode in Mode::ALL {
        let c = &m.per_class[mode.index()];
        out.push_str(&format!(
            "{:<10} {:>9.1} {:>9.1} {:>9.1}\n",
            mode.name(),
            100.0 * c.precision,
            100.0 * c.recall,
            100.0 * c.f_score,
        ));
    }
    out.push_str(&format!(
        "\naccuracy {:>6.1}%  ({} / {})\n",
        100.0 * m.accuracy,
        cm.trace(),
        cm.total()
    ));
    out
}

fn class_indices(labels: &[Mode]) -> [Vec<usize>; N_CLASSES] {
    let mut by_class: [Vec<usize>; N_CLASSES] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    by_class
}

/// Largest-remainder allocation of `total` test samples across classes
/// proportionally to class sizes.
fn test_quota(class_sizes: &[usize; N_CLASSES], fraction: f64) -> [usize; N_CLASSES] {
    let n: usize = class_sizes.iter().sum();
    let target = (n as f64 * fraction).round() as usize;
    let mut base = [0usize; N_CLASSES];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut allocated = 0;
    for c in 0..N_CLASSES {
        let ideal = class_sizes[c] as f64 * fraction;
        base[c] = ideal.floor() as usize;
        allocated += base[c];
        remainders.push((c, ideal - ideal.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (c, _) in remainders {
        if allocated >= target {
            break;
        }
        if base[c] < class_sizes[c] {
            base[c] += 1;
            allocated += 1;
        }
    }
    base
}

/// Split indices into disjoint, exhaustive train/test sets preserving class
/// proportions. Every class needs at least 2 samples.
pub fn stratified_split(
    labels: &[Mode],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::config(format!(
            "test_fraction {test_fraction} outside [0, 1)"
        )));
    }
    let by_class = class_indices(labels);
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() == 1 {
            return Err(Error::data(format!(
                "class {} has a single sample; cannot stratify",
                Mode::from_index(c).unwrap()
            )));
        }
    }
    let sizes = std::array::from_fn(|c| by_class[c].len());
    let quota = test_quota(&sizes, test_fraction);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..N_CLASSES {
        let mut idx = by_class[c].clone();
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..quota[c]]);
        train.extend_from_slice(&idx[quota[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Partition indices into `k` stratified folds: per-class fold counts
/// differ by at most one. Every present class needs at least `k` samples.
pub fn stratified_kfold(labels: &[Mode], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config(format!("k = {k} folds; need at least 2")));
    }
    let by_class = class_indices(labels);
    for (c, idx) in by_class.iter().enumerate() {
        if !idx.is_empty() && idx.len() < k {
            return Err(Error::data(format!(
                "class {} has {} samples; need at least {k} for {k}-fold",
                Mode::from_index(c).unwrap(),
                idx.len()
            )));
        }
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for (c, class_idx) in by_class.iter().enumerate() {
        let mut idx = class_idx.clone();
        idx.shuffle(&mut rng);
        // Stagger the starting fold per class so remainder samples spread
        // over folds instead of piling into fold 0.
        for (j, i) in idx.into_iter().enumerate() {
            folds[(j + c) % k].push(i);
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Opt-in class balancer: returns indices of an exactly balanced subsample
/// (min class count from every class), seeded.
pub fn balanced_downsample(labels: &[Mode], seed: u64) -> Vec<usize> {
    let by_class = class_indices(labels);
    let n = by_class
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.len())
        .min()
        .unwrap_or(0);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class_idx in by_class.iter() {
        if class_idx.is_empty() {
            continue;
        }
        let mut idx = class_idx.clone();
        idx.shuffle(&mut rng);
        out.extend_from_slice(&idx[..n]);
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn reference_matrix() -> ConfusionMatrix {
        ConfusionMatrix::from_counts([
            [708, 32, 29, 0],
            [32, 1573, 60, 38],
            [30, 66, 1296, 91],
            [7, 42, 142, 2864],
        ])
    }

    #[test]
    fn perfect_predictions_give_perfect_metrics() {
        let labels = vec![Mode::Walk, Mode::Bike, Mode::Transit, Mode::Car, Mode::Car];
        let cm = confusion_matrix(&labels, &labels).unwrap();
        let m = precision_recall_f1(&cm);
        assert_eq!(m.accuracy, 1.0);
        for c in &m.per_class {
            assert_eq!(c.precision, 1.0);
            assert_eq!(c.recall, 1.0);
            assert_eq!(c.f_score, 1.0);
        }
    }

    #[test]
    fn matrix_round_trips_through_label_pairs() {
        let want = reference_matrix();
        let mut actual = Vec::new();
        let mut predicted = Vec::new();
        for a in Mode::ALL {
            for p in Mode::ALL {
                for _ in 0..want.count(a, p) {
                    actual.push(a);
                    predicted.push(p);
                }
            }
        }
        let got = confusion_matrix(&actual, &predicted).unwrap();
        assert_eq!(got, want);
        assert_eq!(got.total(), actual.len() as u64);
    }

    #[test]
    fn metrics_match_direct_formula() {
        let cm = reference_matrix();
        let m = precision_recall_f1(&cm);
        for c in 0..N_CLASSES {
            let diag = cm.counts()[c][c] as f64;
            let p = diag / cm.col_sum(c) as f64;
            let r = diag / cm.row_sum(c) as f64;
            assert_relative_eq!(m.per_class[c].precision, p, max_relative = 1e-12);
            assert_relative_eq!(m.per_class[c].recall, r, max_relative = 1e-12);
            assert_relative_eq!(
                m.per_class[c].f_score,
                2.0 * p * r / (p + r),
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(
            m.accuracy,
            cm.trace() as f64 / cm.total() as f64,
            max_relative = 1e-12
        );
    }

    #[test]
    fn accuracy_is_row_weighted_recall() {
        let cm = reference_matrix();
        let m = precision_recall_f1(&cm);
        let total = cm.total() as f64;
        let weighted: f64 = (0..N_CLASSES)
            .map(|c| m.per_class[c].recall * cm.row_sum(c) as f64 / total)
            .sum();
        assert_abs_diff_eq!(m.accuracy, weighted, epsilon = 1e-12);
    }

    #[test]
    fn empty_predicted_column_flags_precision() {
        // Nothing is ever predicted as walk.
        let actual = vec![Mode::Walk, Mode::Bike, Mode::Bike];
        let predicted = vec![Mode::Bike, Mode::Bike, Mode::Bike];
        let m = precision_recall_f1(&confusion_matrix(&actual, &predicted).unwrap());
        let walk = &m.per_class[Mode::Walk.index()];
        assert_eq!(walk.precision, 0.0);
        assert!(!walk.precision_defined);
        assert!(walk.recall_defined);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(confusion_matrix(&[Mode::Walk], &[]).is_err());
    }

    fn balanced_labels(per_class: usize) -> Vec<Mode> {
        let mut v = Vec::new();
        for mode in Mode::ALL {
            v.extend(std::iter::repeat(mode).take(per_class));
        }
        v
    }

    #[test]
    fn split_exact_division() {
        let labels = balanced_labels(25);
        let (train, test) = stratified_split(&labels, 0.2, 9).unwrap();
        assert_eq!(test.len(), 20);
        assert_eq!(train.len(), 80);
        for mode in Mode::ALL {
            let n = test.iter().filter(|&&i| labels[i] == mode).count();
            assert_eq!(n, 5);
        }
    }

    #[test]
    fn split_deterministic_and_disjoint() {
        let labels = balanced_labels(13);
        let (tr1, te1) = stratified_split(&labels, 0.25, 5).unwrap();
        let (tr2, te2) = stratified_split(&labels, 0.25, 5).unwrap();
        assert_eq!((&tr1, &te1), (&tr2, &te2));
        let (tr3, te3) = stratified_split(&labels, 0.25, 6).unwrap();
        assert!(tr1 != tr3 || te1 != te3);
        let mut all: Vec<usize> = tr1.iter().chain(&te1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_singleton_class() {
        let mut labels = balanced_labels(5);
        labels.push(Mode::Walk); // 6 walk
        let mut one = vec![Mode::Walk, Mode::Walk, Mode::Bike];
        assert!(stratified_split(&one, 0.3, 1).is_err());
        one.push(Mode::Bike);
        assert!(stratified_split(&one, 0.3, 1).is_ok());
        assert!(stratified_split(&labels, 0.3, 1).is_ok());
    }

    #[test]
    fn kfold_exact_division() {
        let labels = balanced_labels(25);
        let folds = stratified_kfold(&labels, 5, 4).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.len(), 20);
            for mode in Mode::ALL {
                assert_eq!(f.iter().filter(|&&i| labels[i] == mode).count(), 5);
            }
        }
    }

    #[test]
    fn kfold_rejects_small_class() {
        let mut labels = balanced_labels(10);
        labels.truncate(30 + 3); // car has 3 < 5 samples
        assert!(stratified_kfold(&labels, 5, 0).is_err());
    }

    #[test]
    fn downsample_balances_classes() {
        let mut labels = balanced_labels(10);
        labels.extend(std::iter::repeat(Mode::Car).take(15)); // car now 25
        let idx = balanced_downsample(&labels, 3);
        assert_eq!(idx.len(), 40);
        for mode in Mode::ALL {
            assert_eq!(idx.iter().filter(|&&i| labels[i] == mode).count(), 10);
        }
    }

    fn arb_labels() -> impl Strategy<Value = Vec<Mode>> {
        prop::collection::vec(0usize..4, 24..200).prop_map(|v| {
            let mut labels: Vec<Mode> = v
                .into_iter()
                .map(|i| Mode::from_index(i).unwrap())
                .collect();
            // Guarantee every class has at least k = 5 samples.
            for mode in Mode::ALL {
                for _ in 0..5 {
                    labels.push(mode);
                }
            }
            labels
        })
    }

    proptest! {
        #[test]
        fn kfold_partitions_with_balanced_classes(labels in arb_labels(), seed in 0u64..1000) {
            let k = 5;
            let folds = stratified_kfold(&labels, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for mode in Mode::ALL {
                let counts: Vec<usize> = folds
                    .iter()
                    .map(|f| f.iter().filter(|&&i| labels[i] == mode).count())
                    .collect();
                let lo = counts.iter().min().unwrap();
                let hi = counts.iter().max().unwrap();
                prop_assert!(hi - lo <= 1, "class {} fold counts {:?}", mode, counts);
            }
        }

        #[test]
        fn split_proportions_within_one(labels in arb_labels(), seed in 0u64..1000) {
            let frac = 0.2;
            let (train, test) = stratified_split(&labels, frac, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), labels.len());
            for mode in Mode::ALL {
                let n_class = labels.iter().filter(|&&l| l == mode).count();
                let n_test = test.iter().filter(|&&i| labels[i] == mode).count();
                let ideal = n_class as f64 * frac;
                prop_assert!((n_test as f64 - ideal).abs() <= 1.0,
                    "class {} test {} vs ideal {:.2}", mode, n_test, ideal);
            }
        }
    }

    #[test]
    fn report_formats_percentages() {
        let cm = reference_matrix();
        let report = format_report(&cm);
        assert!(report.contains("walk"));
        assert!(report.contains("91.9%"), "report was: {report}");
    }
}
