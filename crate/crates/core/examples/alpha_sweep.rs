//! Runs the sweep command over a few penalty strengths on a small config
//! and prints the summary table.
//!
//!     cargo run --release --example alpha_sweep

use std::path::Path;

use glasso_prune::experiment::{cmd_sweep, SweepRow};

const CONFIG: &str = "\
data.source = synth
data.classes = 4
data.dim = 16
data.per_class = 100
data.separation = 8
network.hidden = 32, 32
train.epochs = 15
train.batch_size = 32
reg.mode = glasso_out
reg.beta_coupling = true
output.bundle = false
";

pub fn run(dir: &Path) -> glasso_prune::Result<Vec<SweepRow>> {
    let conf = dir.join("sweep.conf");
    std::fs::write(&conf, CONFIG).expect("write config");
    cmd_sweep(&conf, &[0.0, 0.002, 0.005], Some(&dir.join("sweep")))
}

fn main() -> glasso_prune::Result<()> {
    let dir = std::env::temp_dir().join("glasso-prune-sweep-example");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    println!(
        "{:>8} {:>12} {:>11} {:>15}",
        "alpha", "best_val_acc", "disposable", "post_prune_acc"
    );
    for r in run(&dir)? {
        println!(
            "{:>8} {:>12.3} {:>11} {:>15.3}",
            r.alpha, r.best_val_acc, r.disposable_total, r.post_prune_acc
        );
    }
    println!("runs written under {}", dir.join("sweep").display());
    Ok(())
}
