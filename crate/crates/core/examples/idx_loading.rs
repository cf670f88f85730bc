//! Writes a tiny IDX image/label pair to disk, loads it back, and fits a
//! small unregularized network on it.
//!
//!     cargo run --release --example idx_loading

use glasso_prune::datasets::{encode_idx_pair, load_idx};
use glasso_prune::network::MlpNetwork;
use glasso_prune::regularization::RegularizerSpec;
use glasso_prune::trainer::{evaluate, train, TrainConfig};

/// 4x4 "images": class 0 lights the top half, class 1 the bottom half.
fn fixture() -> (Vec<Vec<u8>>, Vec<u8>) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..60u8 {
        let class = i % 2;
        let img: Vec<u8> = (0..16)
            .map(|p| {
                let lit = (p < 8) == (class == 0);
                if lit {
                    200 + (i % 50)
                } else {
                    i % 40
                }
            })
            .collect();
        images.push(img);
        labels.push(class);
    }
    (images, labels)
}

pub fn run(dir: &std::path::Path) -> glasso_prune::Result<f64> {
    let (images, labels) = fixture();
    let (img_bytes, lbl_bytes) = encode_idx_pair(&images, 4, 4, &labels);
    let (ip, lp) = (dir.join("images.idx"), dir.join("labels.idx"));
    std::fs::write(&ip, img_bytes).expect("write fixture");
    std::fs::write(&lp, lbl_bytes).expect("write fixture");

    let data = load_idx(&ip, &lp)?;
    println!(
        "{} samples, {} features, {} classes",
        data.len(),
        data.dim(),
        data.num_classes()
    );
    let net = MlpNetwork::init(&[16, 8, 2], 0)?;
    let mut cfg = TrainConfig::new(RegularizerSpec::none());
    cfg.epochs = 40;
    cfg.batch_size = 10;
    let result = train(&net, &data, &data, &cfg)?;
    evaluate(&result.best_network, &data)
}

fn main() -> glasso_prune::Result<()> {
    let dir = std::env::temp_dir().join("glasso-prune-idx-example");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    let acc = run(&dir)?;
    println!("training accuracy {acc:.3}");
    Ok(())
}
