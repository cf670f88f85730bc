//! Minibatch SGD with classical momentum on cross-entropy plus penalty,
//! with per-epoch reports and best-validation model selection.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::network::{GradientSet, MlpNetwork};
use crate::regularization::{self, group_norms, RegularizerSpec};

/// Hidden nodes whose group norm falls below this are counted as disposable.
pub const DISPOSABLE_THRESHOLD: f64 = 1e-2;

/// Ratio of L2 strength to group strength when coupling is on.
pub const BETA_COUPLING_RATIO: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    pub seed: u64,
    pub spec: RegularizerSpec,
    pub beta_coupling: bool,
    pub disposable_threshold: f64,
}

impl TrainConfig {
    pub fn new(spec: RegularizerSpec) -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            learning_rate: 0.1,
            momentum: 0.9,
            lr_decay: 1.0,
            seed: 0,
            spec,
            beta_coupling: false,
            disposable_threshold: DISPOSABLE_THRESHOLD,
        }
    }

    /// Turns on `beta = 0.1 * alpha` and rewrites the regularizer's beta to match.
    pub fn with_beta_coupling(mut self) -> Self {
        self.beta_coupling = true;
        self.spec.set_beta(BETA_COUPLING_RATIO * self.spec.alpha());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be nonnegative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if !(self.disposable_threshold > 0.0) {
            return Err(Error::invalid("disposable_threshold must be positive"));
        }
        if self.beta_coupling && self.spec.beta() != BETA_COUPLING_RATIO * self.spec.alpha() {
            return Err(Error::invalid(format!(
                "beta coupling requires beta = {BETA_COUPLING_RATIO} * alpha, got beta {} for alpha {}",
                self.spec.beta(),
                self.spec.alpha()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(rename = "train_acc")]
    pub train_accuracy: f64,
    #[serde(rename = "val_acc")]
    pub val_accuracy: f64,
    /// Per hidden layer; empty for L2-only training.
    #[serde(rename = "disposable")]
    pub disposable_per_layer: Vec<usize>,
}

impl EpochReport {
    pub fn disposable_total(&self) -> usize {
        self.disposable_per_layer.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub best_network: MlpNetwork,
    /// 1-based epoch of `best_network`.
    pub best_epoch: usize,
    pub history: Vec<EpochReport>,
    pub final_network: MlpNetwork,
}

impl TrainResult {
    pub fn best_report(&self) -> &EpochReport {
        &self.history[self.best_epoch - 1]
    }
}

/// Fraction of samples whose prediction equals the label.
pub fn evaluate(net: &MlpNetwork, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    check_dataset(net, data, "evaluation")?;
    let mut hits = 0usize;
    for (x, y) in data.iter() {
        if net.predict(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

fn check_dataset(net: &MlpNetwork, data: &Dataset, what: &str) -> Result<()> {
    if !data.is_empty() && data.dim() != net.input_dim() {
        return Err(Error::shape(
            "dataset",
            format!("network input {}", net.input_dim()),
            format!("{what} features of {}", data.dim()),
        ));
    }
    if data.num_classes() > net.output_dim() {
        return Err(Error::shape(
            "dataset",
            format!("network output {}", net.output_dim()),
            format!("{what} with {} classes", data.num_classes()),
        ));
    }
    Ok(())
}

/// Mean cross-entropy over `indices` plus the penalty, with the matching
/// gradient written into `grads`. The penalty gradient enters once, at
/// full strength.
pub fn batch_gradient(
    net: &MlpNetwork,
    data: &Dataset,
    indices: &[usize],
    spec: &RegularizerSpec,
    grads: &mut GradientSet,
) -> Result<f64> {
    grads.fill_zero();
    let scale = 1.0 / indices.len() as f64;
    let mut ce = 0.0;
    let (features, labels) = (data.features(), data.labels());
    for &i in indices {
        let trace = net.forward(&features[i])?;
        ce += net.backward_into(&trace, labels[i], scale, grads)?;
    }
    regularization::accumulate_gradient(net, spec, grads);
    Ok(ce * scale + regularization::regularizer_value(net, spec))
}

/// Heavy-ball SGD: `v <- momentum * v - lr * g`, `params <- params + v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f64,
    velocity: GradientSet,
}

impl Sgd {
    pub fn new(net: &MlpNetwork, momentum: f64) -> Self {
        Sgd {
            momentum,
            velocity: GradientSet::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut MlpNetwork, grads: &GradientSet, lr: f64) {
        let m = self.momentum;
        self.velocity
            .values_mut()
            .zip(grads.values())
            .for_each(|(v, g)| *v = m * *v - lr * g);
        net.axpy(1.0, &self.velocity);
    }
}

pub fn train(
    net: &MlpNetwork,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    train_with(net, train_set, val_set, cfg, |_| Ok(()))
}

/// Like [`train`], calling `on_epoch` after each epoch's report is built.
pub fn train_with<F>(
    net: &MlpNetwork,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainResult>
where
    F: FnMut(&EpochReport) -> Result<()>,
{
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(
            "training and validation sets must be non-empty",
        ));
    }
    check_dataset(net, train_set, "training")?;
    check_dataset(net, val_set, "validation")?;

    let grouping = cfg.spec.mode().grouping();
    let mut net = net.clone();
    let mut sgd = Sgd::new(&net, cfg.momentum);
    let mut grads = GradientSet::zeros_like(&net);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, MlpNetwork)> = None;
    let mut lr = cfg.learning_rate;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let loss = batch_gradient(&net, train_set, chunk, &cfg.spec, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                });
            }
            sgd.step(&mut net, &grads, lr);
            loss_sum += loss;
            batches += 1;
        }
        if net.parameters().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: batches,
            });
        }

        let report = EpochReport {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_accuracy: evaluate(&net, train_set)?,
            val_accuracy: evaluate(&net, val_set)?,
            disposable_per_layer: grouping
                .map(|g| group_norms(&net, g).count_below(cfg.disposable_threshold))
                .unwrap_or_default(),
        };
        on_epoch(&report)?;
        if best
            .as_ref()
            .map_or(true, |(_, acc, _)| report.val_accuracy > *acc)
        {
            best = Some((epoch, report.val_accuracy, net.clone()));
        }
        history.push(report);
        lr *= cfg.lr_decay;
    }

    let (best_epoch, _, best_network) = best.expect("at least one epoch");
    Ok(TrainResult {
        best_network,
        best_epoch,
        history,
        final_network: net,
    })
}

/// Shuffle stream for one epoch, independent of every other epoch.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// One JSON object per line.
pub fn write_history_jsonl<W: Write>(history: &[EpochReport], mut out: W) -> std::io::Result<()> {
    for r in history {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_history_jsonl(text: &str) -> Result<Vec<EpochReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::format("history JSONL", format!("line {}: {e}", i + 1)))
        })
        .collect()
}
