//! Compares the analytic gradient of the full objective (cross-entropy,
//! group penalty and L2) with central finite differences.
//!
//!     cargo run --release --example gradient_check

use glasso_prune::datasets::synth_gaussians;
use glasso_prune::network::{GradientSet, MlpNetwork};
use glasso_prune::regularization::{RegularizerMode, RegularizerSpec};
use glasso_prune::trainer::batch_gradient;

/// Returns the worst relative error seen over all parameters.
pub fn run() -> glasso_prune::Result<f64> {
    let data = synth_gaussians(2, 3, 8, 2.0, 3)?;
    let batch: Vec<usize> = (0..data.len()).collect();
    let mut worst = 0.0f64;
    for mode in [RegularizerMode::GlassoOut, RegularizerMode::GlassoIn] {
        let spec = RegularizerSpec::new(mode, 0.05, 0.005)?;
        let net = MlpNetwork::init(&[3, 5, 4, 2], 17)?;
        let mut grads = GradientSet::zeros_like(&net);
        batch_gradient(&net, &data, &batch, &spec, &mut grads)?;
        let analytic: Vec<f64> = grads.values().copied().collect();

        let eps = 1e-5;
        let mut scratch = GradientSet::zeros_like(&net);
        for (i, &g) in analytic.iter().enumerate() {
            let mut dir = GradientSet::zeros_like(&net);
            *dir.values_mut().nth(i).unwrap() = 1.0;
            let mut plus = net.clone();
            plus.axpy(eps, &dir);
            let mut minus = net.clone();
            minus.axpy(-eps, &dir);
            let fp = batch_gradient(&plus, &data, &batch, &spec, &mut scratch)?;
            let fm = batch_gradient(&minus, &data, &batch, &spec, &mut scratch)?;
            let numeric = (fp - fm) / (2.0 * eps);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        println!("{mode}: {} parameters checked", analytic.len());
    }
    Ok(worst)
}

fn main() -> glasso_prune::Result<()> {
    let worst = run()?;
    println!("worst relative error {worst:.2e}");
    Ok(())
}
