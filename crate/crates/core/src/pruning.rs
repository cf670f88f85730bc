//! Structural removal of hidden nodes selected by their group norms.
//!
//! Norms are always computed once, on the unmodified network, and every
//! mask is fixed before any matrix is edited. Removing hidden node `j` of
//! layer `l` drops row `j` of `W^l`, entry `j` of `b^l`, and column `j` of
//! `W^{l+1}`. Under incoming grouping the removed node's output is close to
//! the constant `sigmoid(b^l_j)`, so `W^{l+1}[:, j] * sigmoid(b^l_j)` is
//! folded into `b^{l+1}` first.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::math::{sigmoid_scalar, Vector};
use crate::network::{LayerParams, MlpNetwork};
use crate::regularization::{group_norms, Grouping};
use crate::trainer::evaluate;

/// Default number of nodes removed per point of a forced-removal curve.
pub const DEFAULT_CURVE_STEP: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct PruneMask {
    /// One keep-flag vector per hidden layer.
    pub keep: Vec<Vec<bool>>,
    pub grouping: Grouping,
    /// `None` for masks built by count rather than threshold.
    pub theta: Option<f64>,
    /// Hidden layers (1-based) where the keep-one floor had to be applied.
    pub floored_layers: Vec<usize>,
}

impl PruneMask {
    pub fn all_keep(net: &MlpNetwork, grouping: Grouping) -> Self {
        PruneMask {
            keep: net
                .hidden_sizes()
                .into_iter()
                .map(|n| vec![true; n])
                .collect(),
            grouping,
            theta: None,
            floored_layers: Vec::new(),
        }
    }

    pub fn removed_per_layer(&self) -> Vec<usize> {
        self.keep
            .iter()
            .map(|k| k.iter().filter(|&&x| !x).count())
            .collect()
    }

    pub fn kept_per_layer(&self) -> Vec<usize> {
        self.keep
            .iter()
            .map(|k| k.iter().filter(|&&x| x).count())
            .collect()
    }

    pub fn total_removed(&self) -> usize {
        self.removed_per_layer().iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub pruned_network: MlpNetwork,
    pub removed_per_layer: Vec<usize>,
    pub total_removed: usize,
    pub retained_per_layer: Vec<usize>,
    pub grouping: Grouping,
    pub theta: Option<f64>,
}

impl PruneOutcome {
    pub fn summary(&self) -> PruneSummary {
        PruneSummary {
            mode: self.grouping,
            theta: self.theta,
            removed_per_layer: self.removed_per_layer.clone(),
            retained_per_layer: self.retained_per_layer.clone(),
            total_removed: self.total_removed,
        }
    }
}

/// JSON-facing counts of a pruning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub mode: Grouping,
    pub theta: Option<f64>,
    pub removed_per_layer: Vec<usize>,
    pub retained_per_layer: Vec<usize>,
    pub total_removed: usize,
}

/// Keeps the nodes whose group norm is at least `theta`. A layer that would
/// lose every node keeps its largest-norm node.
pub fn make_mask(net: &MlpNetwork, grouping: Grouping, theta: f64) -> Result<PruneMask> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!(
            "theta must be a positive real, got {theta}"
        )));
    }
    let norms = group_norms(net, grouping);
    let mut floored_layers = Vec::new();
    let keep = norms
        .layers
        .iter()
        .enumerate()
        .map(|(h, v)| {
            let mut k: Vec<bool> = v.iter().map(|&n| n >= theta).collect();
            if !k.iter().any(|&x| x) {
                k[largest(v)] = true;
                floored_layers.push(h + 1);
            }
            k
        })
        .collect();
    Ok(PruneMask {
        keep,
        grouping,
        theta: Some(theta),
        floored_layers,
    })
}

fn largest(v: &Vector) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn apply_mask(net: &MlpNetwork, mask: &PruneMask) -> Result<PruneOutcome> {
    let hidden = net.hidden_sizes();
    if mask.keep.len() != hidden.len() || mask.keep.iter().zip(&hidden).any(|(k, &n)| k.len() != n)
    {
        return Err(Error::shape(
            "apply_mask",
            format!("hidden widths {hidden:?}"),
            format!(
                "mask widths {:?}",
                mask.keep.iter().map(Vec::len).collect::<Vec<_>>()
            ),
        ));
    }
    if let Some(h) = mask.keep.iter().position(|k| !k.iter().any(|&x| x)) {
        return Err(Error::invalid(format!(
            "mask empties hidden layer {}",
            h + 1
        )));
    }

    let src = net.layers();
    let depth = src.len();
    let kept: Vec<Vec<usize>> = mask
        .keep
        .iter()
        .map(|k| {
            k.iter()
                .enumerate()
                .filter(|(_, &x)| x)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    // Biases with upward compensation, computed bottom-up on full-width vectors.
    let mut biases: Vec<Vec<f64>> = src.iter().map(|p| p.bias.to_vec()).collect();
    if mask.grouping == Grouping::Incoming {
        for h in 0..depth - 1 {
            let upper = &src[h + 1].weights;
            for (j, _) in mask.keep[h].iter().enumerate().filter(|(_, &k)| !k) {
                let z = sigmoid_scalar(biases[h][j]);
                for (i, b) in biases[h + 1].iter_mut().enumerate() {
                    *b += upper.get(i, j) * z;
                }
            }
        }
    }

    let mut layers = Vec::with_capacity(depth);
    for (l, p) in src.iter().enumerate() {
        let all_in: Vec<usize>;
        let all_out: Vec<usize>;
        let cols = if l == 0 {
            all_in = (0..p.inputs()).collect();
            &all_in
        } else {
            &kept[l - 1]
        };
        let rows = if l == depth - 1 {
            all_out = (0..p.outputs()).collect();
            &all_out
        } else {
            &kept[l]
        };
        let weights = p.weights.select(rows, cols);
        let bias = Vector::new(rows.iter().map(|&i| biases[l][i]).collect())?;
        layers.push(LayerParams::new(weights, bias)?);
    }

    let removed_per_layer = mask.removed_per_layer();
    Ok(PruneOutcome {
        pruned_network: MlpNetwork::new(layers)?,
        total_removed: removed_per_layer.iter().sum(),
        removed_per_layer,
        retained_per_layer: mask.kept_per_layer(),
        grouping: mask.grouping,
        theta: mask.theta,
    })
}

/// Thresholds and prunes in one go.
pub fn prune(net: &MlpNetwork, grouping: Grouping, theta: f64) -> Result<PruneOutcome> {
    apply_mask(net, &make_mask(net, grouping, theta)?)
}

/// All hidden nodes as `(hidden layer, node)` in ascending norm order; ties
/// keep layer-then-node order.
pub fn ascending_nodes(net: &MlpNetwork, grouping: Grouping) -> Vec<(usize, usize, f64)> {
    let mut nodes: Vec<_> = group_norms(net, grouping).iter().collect();
    nodes.sort_by(|a, b| a.2.total_cmp(&b.2));
    nodes
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub removed: usize,
    pub accuracy: f64,
}

/// Accuracy after cumulatively removing the smallest-norm hidden nodes,
/// `step` at a time. Every point is pruned from the original network. The
/// curve ends before any hidden layer would be emptied.
pub fn forced_removal_curve(
    net: &MlpNetwork,
    grouping: Grouping,
    step: usize,
    eval_set: &Dataset,
) -> Result<Vec<CurvePoint>> {
    if step == 0 {
        return Err(Error::invalid("curve step must be at least 1"));
    }
    if eval_set.is_empty() {
        return Err(Error::invalid(
            "cannot build a pruning curve on an empty dataset",
        ));
    }
    let order = ascending_nodes(net, grouping);
    let mut mask = PruneMask::all_keep(net, grouping);
    let mut remaining = net.hidden_sizes();
    let mut curve = vec![CurvePoint {
        removed: 0,
        accuracy: evaluate(net, eval_set)?,
    }];
    'batches: for batch in order.chunks(step) {
        for &(h, j, _) in batch {
            if remaining[h] == 1 {
                break 'batches;
            }
            remaining[h] -= 1;
            mask.keep[h][j] = false;
        }
        let outcome = apply_mask(net, &mask)?;
        curve.push(CurvePoint {
            removed: outcome.total_removed,
            accuracy: evaluate(&outcome.pruned_network, eval_set)?,
        });
    }
    Ok(curve)
}

/// Removes exactly `n_remove` of the globally smallest-norm hidden nodes,
/// skipping any node that is the last one left in its layer.
pub fn match_count_mask(
    net: &MlpNetwork,
    grouping: Grouping,
    n_remove: usize,
) -> Result<PruneMask> {
    let hidden = net.hidden_sizes();
    let capacity: usize = hidden.iter().map(|n| n - 1).sum();
    if n_remove > capacity {
        return Err(Error::invalid(format!(
            "cannot remove {n_remove} nodes: at most {capacity} can go while keeping one per hidden layer"
        )));
    }
    let mut mask = PruneMask::all_keep(net, grouping);
    let mut remaining = hidden;
    let mut removed = 0;
    for (h, j, _) in ascending_nodes(net, grouping) {
        if removed == n_remove {
            break;
        }
        if remaining[h] > 1 {
            remaining[h] -= 1;
            mask.keep[h][j] = false;
            removed += 1;
        } else {
            mask.floored_layers.push(h + 1);
        }
    }
    Ok(mask)
}

pub fn match_count_prune(
    net: &MlpNetwork,
    grouping: Grouping,
    n_remove: usize,
) -> Result<PruneOutcome> {
    apply_mask(net, &match_count_mask(net, grouping, n_remove)?)
}
