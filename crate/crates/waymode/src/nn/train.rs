//! Mini-batch training with Adam, dropout, and early stopping on
//! validation accuracy, restoring the best epoch's weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{argmax, AdamState, DropoutPlan, Network, Standardizer, Tensor2D};
use crate::channels::Segment;
use crate::par;
use crate::{Error, Mode, Result, N_CLASSES};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Number of consecutive non-improving validation epochs tolerated
    /// before stopping; 0 stops at the first non-improvement.
    pub patience: usize,
    pub learning_rate: f64,
    /// Drives shuffling and dropout; independent of the network's
    /// weight-initialization seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            epochs: 50,
            patience: 5,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub valid_accuracy: Vec<f64>,
    /// Epoch whose weights were restored. Among epochs tied at the best
    /// validation accuracy this is the latest, so a model that saturates a
    /// small validation set early still keeps its most-trained weights.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.valid_accuracy.len()
    }
}

/// A trained network bundled with the input standardization fitted on its
/// training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: Network,
    pub standardizer: Standardizer,
}

impl Model {
    fn transform_checked(&self, s: &Segment) -> Result<Tensor2D> {
        if s.segment_len() != self.network.input_len {
            return Err(Error::shape(format!(
                "segment length {} does not match model input {}",
                s.segment_len(),
                self.network.input_len
            )));
        }
        Ok(self.standardizer.transform(s))
    }

    pub fn predict_probs(&self, segments: &[Segment]) -> Result<Vec<[f64; N_CLASSES]>> {
        par::map_slice(segments, |s| {
            let x = self.transform_checked(s)?;
            let p = self.network.forward(&x)?;
            let mut row = [0.0; N_CLASSES];
            row.copy_from_slice(&p);
            Ok(row)
        })
        .into_iter()
        .collect()
    }

    pub fn predict_labels(&self, segments: &[Segment]) -> Result<Vec<Mode>> {
        Ok(self
            .predict_probs(segments)?
            .iter()
            .map(|p| Mode::from_index(argmax(p)).unwrap())
            .collect())
    }

    pub fn accuracy(&self, segments: &[Segment]) -> Result<f64> {
        let labels = self.predict_labels(segments)?;
        let mut hits = 0usize;
        let mut total = 0usize;
        for (s, l) in segments.iter().zip(&labels) {
            if let Some(want) = s.label {
                total += 1;
                if want == *l {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            return Err(Error::data("no labeled segments to score"));
        }
        Ok(hits as f64 / total as f64)
    }
}

fn tensors_and_labels(
    net: &Network,
    standardizer: &Standardizer,
    segments: &[Segment],
) -> Result<(Vec<Tensor2D>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(segments.len());
    let mut ys = Vec::with_capacity(segments.len());
    for s in segments {
        if s.segment_len() != net.input_len {
            return Err(Error::shape(format!(
                "segment length {} does not match network input {}",
                s.segment_len(),
                net.input_len
            )));
        }
        let label = s
            .label
            .ok_or_else(|| Error::data("unlabeled segment in training data"))?;
        xs.push(standardizer.transform(s));
        ys.push(label.index());
    }
    Ok((xs, ys))
}

fn accuracy_of(net: &Network, xs: &[Tensor2D], ys: &[usize]) -> f64 {
    let hits: usize = par::map_range(xs.len(), |i| {
        let p = net
            .forward(&xs[i])
            .expect("shapes validated before training");
        usize::from(argmax(&p) == ys[i])
    })
    .into_iter()
    .sum();
    hits as f64 / xs.len().max(1) as f64
}

/// Train `network` on labeled segments. Standardization statistics are
/// fitted on the training split only, then applied to both splits. Stops
/// early when validation accuracy fails to strictly improve for more than
/// `patience` epochs, then restores the weights of the last epoch that
/// attained the best validation accuracy.
pub fn train(
    network: Network,
    train_set: &[Segment],
    valid_set: &[Segment],
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::data(
            "training and validation sets must be non-empty",
        ));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::config("batch_size and epochs must be positive"));
    }
    let standardizer = Standardizer::fit(train_set);
    let mut net = network;
    let (xs, ys) = tensors_and_labels(&net, &standardizer, train_set)?;
    let (vx, vy) = tensors_and_labels(&net, &standardizer, valid_set)?;

    let mut adam = AdamState::new(net.param_count(), cfg.learning_rate);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        train_accuracy: Vec::new(),
        valid_accuracy: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_params = net.params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut non_improving = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Vec<Tensor2D> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let plan = DropoutPlan::draw(&net, bx.len(), &mut rng);
            let (loss, grad) = net.batch_loss_grad(&bx, &by, Some(&plan));
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "loss became non-finite in epoch {epoch} (seed {})",
                    cfg.seed
                )));
            }
            adam.step(&mut net.params, &grad);
            epoch_loss += loss;
            n_batches += 1;
        }
        history.train_loss.push(epoch_loss / n_batches as f64);
        history.train_accuracy.push(accuracy_of(&net, &xs, &ys));
        let valid_acc = accuracy_of(&net, &vx, &vy);
        history.valid_accuracy.push(valid_acc);

        if valid_acc >= best_acc {
            // Ties still refresh the snapshot: the later epoch has seen
            // more updates, and stranding the restore at the first epoch
            // of a plateau would return nearly untrained weights whenever
            // a small validation set saturates immediately.
            best_params.copy_from_slice(&net.params);
            history.best_epoch = epoch;
        }
        if valid_acc > best_acc {
            best_acc = valid_acc;
            non_improving = 0;
        } else {
            non_improving += 1;
            if non_improving > cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    net.params = best_params;
    Ok((
        Model {
            network: net,
            standardizer,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::N_CHANNELS;
    use crate::nn::LayerSpec;
    use rand::Rng;

    /// Two well-separated classes on the speed channel, with mild noise on
    /// the others.
    fn toy_segments(n_per_class: usize, seed: u64) -> Vec<Segment> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for class in [Mode::Walk, Mode::Car] {
            for _ in 0..n_per_class {
                let mut s = Segment::zeros(12, Some(class));
                s.n_valid = 12;
                let base = if class == Mode::Walk { 1.0 } else { 9.0 };
                for row in 0..12 {
                    for c in 0..N_CHANNELS {
                        let noise: f64 = rng.random_range(-0.3..0.3);
                        s.values[row * N_CHANNELS + c] =
                            if c == 1 { base + noise } else { noise * 0.1 };
                    }
                }
                out.push(s);
            }
        }
        out
    }

    fn toy_network(seed: u64) -> Network {
        Network::new(
            12,
            N_CHANNELS,
            vec![
                LayerSpec::conv(4, 3),
                LayerSpec::maxpool(2),
                LayerSpec::Dropout { p: 0.2 },
                LayerSpec::Dense { units: N_CLASSES },
                LayerSpec::Softmax,
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn separable_toy_reaches_high_train_accuracy() {
        let data = toy_segments(40, 1);
        let valid = toy_segments(10, 2);
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 20,
            learning_rate: 3e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        let (model, history) = train(toy_network(4), &data, &valid, &cfg).unwrap();
        let final_train = *history.train_accuracy.last().unwrap();
        assert!(
            final_train >= 0.99 || model.accuracy(&data).unwrap() >= 0.99,
            "train accuracy {final_train} after {} epochs",
            history.epochs_run()
        );
    }

    #[test]
    fn replay_is_deterministic() {
        let data = toy_segments(20, 5);
        let valid = toy_segments(5, 6);
        let cfg = TrainConfig {
            epochs: 5,
            seed: 7,
            ..TrainConfig::default()
        };
        let (m1, h1) = train(toy_network(8), &data, &valid, &cfg).unwrap();
        let (m2, h2) = train(toy_network(8), &data, &valid, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1.network.params, m2.network.params);
    }

    #[test]
    fn patience_zero_stops_at_first_non_improvement() {
        // Random labels carry no signal, so validation accuracy plateaus
        // quickly; with patience 0 the loop must end well before the epoch
        // budget.
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut data = toy_segments(20, 11);
        for s in &mut data {
            s.label = Some(Mode::from_index(rng.random_range(0..N_CLASSES)).unwrap());
        }
        let valid = data.clone();
        let cfg = TrainConfig {
            epochs: 200,
            patience: 0,
            seed: 12,
            ..TrainConfig::default()
        };
        let (_, history) = train(toy_network(13), &data, &valid, &cfg).unwrap();
        assert!(history.stopped_early);
        // Validation accuracy strictly improved every epoch except the
        // last, where the failure to improve triggered the stop.
        let v = &history.valid_accuracy;
        let last = v.len() - 1;
        for i in 1..last {
            assert!(v[i] > v[i - 1], "epoch {i} should have improved: {v:?}");
        }
        assert!(
            v[last] <= v[last - 1],
            "final epoch should not improve: {v:?}"
        );
        // The restored epoch is the stopping epoch when it tied the best,
        // otherwise the epoch before it.
        if v[last] == v[last - 1] {
            assert_eq!(history.best_epoch, last);
        } else {
            assert_eq!(history.best_epoch, last - 1);
        }
    }

    #[test]
    fn best_weights_are_restored() {
        let data = toy_segments(20, 14);
        let valid = toy_segments(8, 15);
        let cfg = TrainConfig {
            epochs: 8,
            patience: 2,
            seed: 16,
            ..TrainConfig::default()
        };
        let (model, history) = train(toy_network(17), &data, &valid, &cfg).unwrap();
        let best = history
            .valid_accuracy
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let restored = model.accuracy(&valid).unwrap();
        assert!(
            (restored - best).abs() < 1e-12,
            "restored accuracy {restored} vs best recorded {best}"
        );
    }

    #[test]
    fn nan_parameters_abort_with_divergence() {
        let data = toy_segments(10, 18);
        let valid = toy_segments(4, 19);
        let mut net = toy_network(20);
        net.params[0] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        match train(net, &data, &valid, &cfg) {
            Err(Error::Divergence(_)) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn fixed_batch_loss_non_increasing_at_default_lr() {
        // Full-batch steps at lr 1e-4 on the separable toy set, dropout
        // disabled: the optimized loss must not increase over the first 10
        // steps.
        let data = toy_segments(16, 21);
        let standardizer = Standardizer::fit(&data);
        let net = Network::new(
            12,
            N_CHANNELS,
            vec![
                LayerSpec::conv(4, 3),
                LayerSpec::maxpool(2),
                LayerSpec::Dense { units: N_CLASSES },
                LayerSpec::Softmax,
            ],
            22,
        )
        .unwrap();
        let (xs, ys) = tensors_and_labels(&net, &standardizer, &data).unwrap();
        let mut net = net;
        let mut adam = AdamState::new(net.param_count(), 1e-4);
        let mut last = f64::INFINITY;
        for step in 0..10 {
            let (loss, grad) = net.batch_loss_grad(&xs, &ys, None);
            assert!(
                loss <= last + 1e-9,
                "loss rose from {last} to {loss} at step {step}"
            );
            last = loss;
            adam.step(&mut net.params, &grad);
        }
    }

    #[test]
    fn unlabeled_segment_rejected() {
        let mut data = toy_segments(10, 23);
        data[3].label = None;
        let valid = toy_segments(4, 24);
        assert!(train(toy_network(25), &data, &valid, &TrainConfig::default()).is_err());
    }

    #[test]
    fn predict_rejects_wrong_segment_length() {
        let data = toy_segments(10, 26);
        let valid = toy_segments(4, 27);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let (model, _) = train(toy_network(28), &data, &valid, &cfg).unwrap();
        let bad = Segment::zeros(13, Some(Mode::Walk));
        assert!(model.predict_probs(&[bad]).is_err());
    }
}
