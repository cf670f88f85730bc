//! Stacks neighbouring frames of a sequence into wider feature vectors, the
//! way acoustic models see a window of frames around the one they label.
//!
//!     cargo run --release --example context_stack

use glasso_prune::datasets::{context_stack, Dataset};
use glasso_prune::math::Vector;

pub fn run() -> glasso_prune::Result<Dataset> {
    // Five 2-d frames whose values encode their position.
    let frames: Vec<Vector> = (0..5)
        .map(|t| Vector::new(vec![t as f64, 10.0 + t as f64]))
        .collect::<Result<_, _>>()?;
    let seq = Dataset::new(frames, vec![0, 1, 1, 0, 1], 2)?;
    context_stack(&seq, 3)
}

fn main() -> glasso_prune::Result<()> {
    let stacked = run()?;
    for (x, label) in stacked.iter() {
        println!("label {label}  {:?}", x.as_ref() as &[f64]);
    }
    Ok(())
}
