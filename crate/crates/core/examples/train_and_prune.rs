//! Trains a small sigmoid MLP with an outgoing group penalty, then removes
//! every hidden node whose outgoing weights fell below the threshold.
//!
//!     cargo run --release --example train_and_prune

use glasso_prune::datasets::{split, synth_gaussians};
use glasso_prune::network::MlpNetwork;
use glasso_prune::pruning::prune;
use glasso_prune::regularization::{Grouping, RegularizerMode, RegularizerSpec};
use glasso_prune::trainer::{evaluate, train_with, TrainConfig, DISPOSABLE_THRESHOLD};

pub struct Outcome {
    pub test_before: f64,
    pub test_after: f64,
    pub removed: usize,
    pub hidden_before: usize,
}

pub fn run(verbose: bool) -> glasso_prune::Result<Outcome> {
    let data = synth_gaussians(4, 16, 150, 5.0, 1)?;
    let (train_set, val_set, test_set) = split(&data, (0.6, 0.2, 0.2), 1)?;
    let net = MlpNetwork::init(&[16, 48, 48, 4], 1)?;

    let spec = RegularizerSpec::new(RegularizerMode::GlassoOut, 0.03, 0.0)?;
    let mut cfg = TrainConfig::new(spec).with_beta_coupling();
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.seed = 1;
    cfg.lr_decay = 0.9;
    let result = train_with(&net, &train_set, &val_set, &cfg, |r| {
        if verbose {
            println!(
                "epoch {:2}  loss {:.4}  val {:.3}  disposable {:?}",
                r.epoch, r.train_loss, r.val_accuracy, r.disposable_per_layer
            );
        }
        Ok(())
    })?;

    let best = &result.best_network;
    let pruned = prune(best, Grouping::Outgoing, DISPOSABLE_THRESHOLD)?;
    Ok(Outcome {
        test_before: evaluate(best, &test_set)?,
        test_after: evaluate(&pruned.pruned_network, &test_set)?,
        removed: pruned.total_removed,
        hidden_before: best.hidden_sizes().iter().sum(),
    })
}

fn main() -> glasso_prune::Result<()> {
    let o = run(true)?;
    println!(
        "removed {} of {} hidden nodes; test accuracy {:.3} -> {:.3}",
        o.removed, o.hidden_before, o.test_before, o.test_after
    );
    Ok(())
}
