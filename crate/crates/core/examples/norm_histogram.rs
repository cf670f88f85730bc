//! Log-scale histogram of outgoing group norms after group-penalized
//! training, printed as a text bar chart, plus the gap-band fraction.
//!
//!     cargo run --release --example norm_histogram

use glasso_prune::analysis::{bimodality_gap, norm_histogram, HistogramSpec, NormHistogram};
use glasso_prune::datasets::{split, synth_gaussians};
use glasso_prune::network::MlpNetwork;
use glasso_prune::regularization::{Grouping, RegularizerMode, RegularizerSpec};
use glasso_prune::trainer::{train, TrainConfig};

pub fn run() -> glasso_prune::Result<(NormHistogram, f64)> {
    let data = synth_gaussians(4, 16, 150, 5.0, 1)?;
    let (train_set, val_set, _) = split(&data, (0.6, 0.2, 0.2), 1)?;
    let net = MlpNetwork::init(&[16, 48, 48, 4], 1)?;
    let spec = RegularizerSpec::new(RegularizerMode::GlassoOut, 0.03, 0.0)?;
    let mut cfg = TrainConfig::new(spec).with_beta_coupling();
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.seed = 1;
    cfg.lr_decay = 0.9;
    let best = train(&net, &train_set, &val_set, &cfg)?.best_network;
    let hist = norm_histogram(
        &best,
        Grouping::Outgoing,
        HistogramSpec::new(-6.0, 1.0, 28)?,
    )?;
    let gap = bimodality_gap(&best, Grouping::Outgoing, 1e-2, 1e-1)?;
    Ok((hist, gap))
}

fn main() -> glasso_prune::Result<()> {
    let (hist, gap) = run()?;
    let s = hist.spec;
    println!("{:>9}  {}", "< 1e-6", "#".repeat(hist.pooled.underflow));
    for (k, &c) in hist.pooled.bins.iter().enumerate() {
        println!("{:>9.1e}  {}", s.edge(k), "#".repeat(c));
    }
    println!("{:>9}  {}", ">= 1e1", "#".repeat(hist.pooled.overflow));
    println!("fraction of norms in [1e-2, 1e-1]: {gap:.3}");
    Ok(())
}
