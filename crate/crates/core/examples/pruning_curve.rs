//! Forced-removal curves: accuracy as the smallest-norm hidden nodes are
//! removed, for a group-penalized net and an L2-only net.
//!
//!     cargo run --release --example pruning_curve

use glasso_prune::datasets::{split, synth_gaussians};
use glasso_prune::network::MlpNetwork;
use glasso_prune::pruning::{forced_removal_curve, CurvePoint};
use glasso_prune::regularization::{Grouping, RegularizerMode, RegularizerSpec};
use glasso_prune::trainer::{train, TrainConfig};

pub fn run() -> glasso_prune::Result<Vec<(RegularizerMode, Vec<CurvePoint>)>> {
    let data = synth_gaussians(4, 16, 150, 5.0, 1)?;
    let (train_set, val_set, test_set) = split(&data, (0.6, 0.2, 0.2), 1)?;
    let net = MlpNetwork::init(&[16, 48, 48, 4], 1)?;
    let mut curves = Vec::new();
    for (mode, alpha, beta) in [
        (RegularizerMode::GlassoOut, 0.03, 0.003),
        (RegularizerMode::L2All, 0.0, 0.003),
    ] {
        let mut cfg = TrainConfig::new(RegularizerSpec::new(mode, alpha, beta)?);
        cfg.epochs = 30;
        cfg.batch_size = 32;
        cfg.seed = 1;
        cfg.lr_decay = 0.9;
        let result = train(&net, &train_set, &val_set, &cfg)?;
        curves.push((
            mode,
            forced_removal_curve(&result.best_network, Grouping::Outgoing, 8, &test_set)?,
        ));
    }
    Ok(curves)
}

fn main() -> glasso_prune::Result<()> {
    for (mode, curve) in run()? {
        println!("{mode}");
        for p in curve {
            println!("  removed {:3}  accuracy {:.3}", p.removed, p.accuracy);
        }
    }
    Ok(())
}
