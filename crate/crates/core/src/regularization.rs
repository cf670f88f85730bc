//! Group-Lasso and L2 penalties on network parameters.
//!
//! Groups are tied to hidden nodes. Under [`Grouping::Outgoing`] the group of
//! hidden node `j` in layer `l` is column `j` of `W^{l+1}`, so the penalised
//! matrices are `W^2 .. W^L` and `W^1` gets L2 instead. Under
//! [`Grouping::Incoming`] the group is row `j` of `W^l`, the penalised
//! matrices are `W^1 .. W^{L-1}` and `W^L` gets L2. Biases are always L2.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Vector};
use crate::network::{GradientSet, MlpNetwork};

/// How hidden-node weight groups are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Columns of the next layer's weight matrix.
    Outgoing,
    /// Rows of the node's own weight matrix.
    Incoming,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Outgoing => "out",
            Grouping::Incoming => "in",
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "out" | "outgoing" | "glasso_out" => Ok(Grouping::Outgoing),
            "in" | "incoming" | "glasso_in" => Ok(Grouping::Incoming),
            other => Err(Error::invalid(format!(
                "unknown grouping `{other}`, expected `out` or `in`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegularizerMode {
    GlassoOut,
    GlassoIn,
    L2All,
}

impl RegularizerMode {
    pub fn grouping(self) -> Option<Grouping> {
        match self {
            RegularizerMode::GlassoOut => Some(Grouping::Outgoing),
            RegularizerMode::GlassoIn => Some(Grouping::Incoming),
            RegularizerMode::L2All => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegularizerMode::GlassoOut => "glasso_out",
            RegularizerMode::GlassoIn => "glasso_in",
            RegularizerMode::L2All => "l2_all",
        }
    }
}

impl fmt::Display for RegularizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegularizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glasso_out" | "out" => Ok(RegularizerMode::GlassoOut),
            "glasso_in" | "in" => Ok(RegularizerMode::GlassoIn),
            "l2_all" | "l2" => Ok(RegularizerMode::L2All),
            other => Err(Error::invalid(format!(
                "unknown regularizer mode `{other}`, expected glasso_out, glasso_in or l2_all"
            ))),
        }
    }
}

impl TryFrom<RegularizerMode> for Grouping {
    type Error = Error;

    fn try_from(mode: RegularizerMode) -> Result<Self> {
        mode.grouping()
            .ok_or_else(|| Error::invalid("L2_ALL defines no weight grouping"))
    }
}

pub const DEFAULT_EPSILON_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    mode: RegularizerMode,
    alpha: f64,
    beta: f64,
    epsilon_norm: f64,
}

impl RegularizerSpec {
    pub fn new(mode: RegularizerMode, alpha: f64, beta: f64) -> Result<Self> {
        Self::with_epsilon(mode, alpha, beta, DEFAULT_EPSILON_NORM)
    }

    pub fn with_epsilon(
        mode: RegularizerMode,
        alpha: f64,
        beta: f64,
        epsilon_norm: f64,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be a nonnegative real, got {alpha}"
            )));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::invalid(format!(
                "beta must be a nonnegative real, got {beta}"
            )));
        }
        if !(epsilon_norm.is_finite() && epsilon_norm > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon_norm must be positive, got {epsilon_norm}"
            )));
        }
        if mode == RegularizerMode::L2All && alpha != 0.0 {
            return Err(Error::invalid(format!(
                "alpha must be 0 for L2_ALL, got {alpha}"
            )));
        }
        Ok(RegularizerSpec {
            mode,
            alpha,
            beta,
            epsilon_norm,
        })
    }

    /// No penalty at all.
    pub fn none() -> Self {
        RegularizerSpec {
            mode: RegularizerMode::L2All,
            alpha: 0.0,
            beta: 0.0,
            epsilon_norm: DEFAULT_EPSILON_NORM,
        }
    }

    pub fn mode(&self) -> RegularizerMode {
        self.mode
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon_norm(&self) -> f64 {
        self.epsilon_norm
    }

    pub(crate) fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    /// Whether weight layer `l` (zero-based) carries the group penalty.
    fn grouped_layer(&self, depth: usize, l: usize) -> bool {
        match self.mode {
            RegularizerMode::GlassoOut => l >= 1,
            RegularizerMode::GlassoIn => l + 1 < depth,
            RegularizerMode::L2All => false,
        }
    }
}

/// Group norms for every hidden node, one vector per hidden layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupNormReport {
    pub grouping: Grouping,
    pub layers: Vec<Vector>,
}

impl GroupNormReport {
    pub fn total(&self) -> usize {
        self.layers.iter().map(|v| v.len()).sum()
    }

    /// All norms tagged with `(hidden layer index, node index)`, zero-based.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(h, v)| v.iter().enumerate().map(move |(j, &n)| (h, j, n)))
    }

    pub fn count_below(&self, threshold: f64) -> Vec<usize> {
        self.layers
            .iter()
            .map(|v| v.iter().filter(|&&n| n < threshold).count())
            .collect()
    }
}

pub fn group_norms(net: &MlpNetwork, grouping: Grouping) -> GroupNormReport {
    let layers = net.layers();
    let hidden = layers.len() - 1;
    let norms = (0..hidden)
        .map(|h| match grouping {
            Grouping::Outgoing => math::column_norms(&layers[h + 1].weights),
            Grouping::Incoming => math::row_norms(&layers[h].weights),
        })
        .collect();
    GroupNormReport {
        grouping,
        layers: norms,
    }
}

pub fn regularizer_value(net: &MlpNetwork, spec: &RegularizerSpec) -> f64 {
    let depth = net.depth();
    let mut group = 0.0;
    let mut l2 = 0.0;
    for (l, p) in net.layers().iter().enumerate() {
        if spec.grouped_layer(depth, l) {
            let norms = match spec.mode {
                RegularizerMode::GlassoOut => math::column_norms(&p.weights),
                _ => math::row_norms(&p.weights),
            };
            group += norms.iter().sum::<f64>();
        } else {
            l2 += 0.5 * p.weights.norm_sq();
        }
        l2 += 0.5 * p.bias.norm_sq();
    }
    spec.alpha * group + spec.beta * l2
}

pub fn regularizer_gradient(net: &MlpNetwork, spec: &RegularizerSpec) -> GradientSet {
    let mut g = GradientSet::zeros_like(net);
    accumulate_gradient(net, spec, &mut g);
    g
}

/// Adds the penalty gradient to `grads`.
pub fn accumulate_gradient(net: &MlpNetwork, spec: &RegularizerSpec, grads: &mut GradientSet) {
    let depth = net.depth();
    let (alpha, beta, eps) = (spec.alpha, spec.beta, spec.epsilon_norm);
    for (l, p) in net.layers().iter().enumerate() {
        let gw = &mut grads.weights[l];
        let w = &p.weights;
        if spec.grouped_layer(depth, l) {
            if alpha != 0.0 {
                match spec.mode {
                    RegularizerMode::GlassoOut => {
                        let norms = math::column_norms(w);
                        let scale: Vec<f64> = norms.iter().map(|&n| alpha / n.max(eps)).collect();
                        for i in 0..w.rows() {
                            gw.row_mut(i)
                                .iter_mut()
                                .zip(w.row(i))
                                .zip(&scale)
                                .for_each(|((g, x), s)| *g += s * x);
                        }
                    }
                    _ => {
                        for i in 0..w.rows() {
                            let row = w.row(i);
                            let s = alpha / math::dot(row, row).sqrt().max(eps);
                            gw.row_mut(i)
                                .iter_mut()
                                .zip(row)
                                .for_each(|(g, x)| *g += s * x);
                        }
                    }
                }
            }
        } else if beta != 0.0 {
            gw.as_mut_slice()
                .iter_mut()
                .zip(w.as_slice())
                .for_each(|(g, x)| *g += beta * x);
        }
        if beta != 0.0 {
            grads.biases[l]
                .iter_mut()
                .zip(p.bias.iter())
                .for_each(|(g, b)| *g += beta * b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Matrix;
    use crate::network::LayerParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> LayerParams {
        LayerParams::new(
            Matrix::from_rows(&rows).unwrap(),
            Vector::new(bias).unwrap(),
        )
        .unwrap()
    }

    fn randomised(sizes: &[usize], seed: u64) -> MlpNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let mut net = MlpNetwork::init(sizes, seed).unwrap();
        for p in net.layers_mut() {
            p.bias
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-1.0..1.0));
        }
        net
    }

    /// Weights transposed, layer order reversed, biases zeroed to fit the new shapes.
    fn mirrored(net: &MlpNetwork) -> MlpNetwork {
        let layers = net
            .layers()
            .iter()
            .rev()
            .map(|p| {
                let w = p.weights.transpose();
                let rows = w.rows();
                LayerParams::new(w, Vector::zeros(rows)).unwrap()
            })
            .collect();
        MlpNetwork::new(layers).unwrap()
    }

    fn zero_biases(mut net: MlpNetwork) -> MlpNetwork {
        net.layers_mut().iter_mut().for_each(|p| p.bias.fill(0.0));
        net
    }

    fn spec(mode: RegularizerMode, alpha: f64, beta: f64) -> RegularizerSpec {
        RegularizerSpec::new(mode, alpha, beta).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(RegularizerSpec::new(RegularizerMode::GlassoOut, -1.0, 0.0).is_err());
        assert!(RegularizerSpec::new(RegularizerMode::GlassoOut, 1.0, f64::NAN).is_err());
        assert!(RegularizerSpec::new(RegularizerMode::L2All, 0.1, 0.0).is_err());
        assert!(RegularizerSpec::with_epsilon(RegularizerMode::GlassoIn, 0.1, 0.0, 0.0).is_err());
        assert!(Grouping::try_from(RegularizerMode::L2All).is_err());
    }

    #[test]
    fn zero_outgoing_column_gets_zero_norm() {
        let mut net = MlpNetwork::init(&[3, 4, 2], 1).unwrap();
        for i in 0..2 {
            net.layers_mut()[1].weights.set(i, 2, 0.0);
        }
        let r = group_norms(&net, Grouping::Outgoing);
        assert_eq!(r.layers.len(), 1);
        assert_eq!(r.layers[0].len(), 4);
        assert_eq!(r.layers[0][2], 0.0);
        assert!(r.layers[0]
            .iter()
            .enumerate()
            .all(|(j, &n)| j == 2 || n > 0.0));
    }

    #[test]
    fn two_node_outgoing_example_flags_second_node() {
        // 2-2-2 net where the second hidden node's outgoing weights vanish:
        // the output activation depends only on the first hidden node.
        let net = MlpNetwork::new(vec![
            layer(vec![vec![1.0, -0.5], vec![0.7, 0.3]], vec![0.1, -0.2]),
            layer(vec![vec![1.2, 0.0], vec![-0.8, 0.0]], vec![0.0, 0.0]),
        ])
        .unwrap();
        let norms = group_norms(&net, Grouping::Outgoing);
        assert_eq!(norms.count_below(1e-2), vec![1]);
        assert_eq!(norms.layers[0][1], 0.0);
        let a = net.logits(&[0.4, 0.9]).unwrap();
        let mut changed = net.clone();
        changed.layers_mut()[0].weights.set(1, 0, 5.0);
        assert_eq!(changed.logits(&[0.4, 0.9]).unwrap(), a);
    }

    #[test]
    fn incoming_norms_are_mirrored_outgoing_norms() {
        for seed in 0..8 {
            let net = randomised(&[3, 5, 4, 2], seed);
            let inc = group_norms(&net, Grouping::Incoming);
            let out = group_norms(&mirrored(&net), Grouping::Outgoing);
            let mut rev = out.layers.clone();
            rev.reverse();
            assert_eq!(inc.layers, rev);
        }
    }

    #[test]
    fn value_reference_cases() {
        let zero = zero_biases(
            MlpNetwork::new(vec![
                layer(vec![vec![0.0; 2]; 2], vec![0.0; 2]),
                layer(vec![vec![0.0; 2]; 2], vec![0.0; 2]),
            ])
            .unwrap(),
        );
        for m in [RegularizerMode::GlassoOut, RegularizerMode::GlassoIn] {
            assert_eq!(regularizer_value(&zero, &spec(m, 1.0, 1.0)), 0.0);
        }
        assert_eq!(
            regularizer_value(&zero, &spec(RegularizerMode::L2All, 0.0, 1.0)),
            0.0
        );

        // Single grouped layer [[3,0],[4,0]] under column grouping.
        let net = MlpNetwork::new(vec![
            layer(vec![vec![9.0, 9.0], vec![9.0, 9.0]], vec![0.0, 0.0]),
            layer(vec![vec![3.0, 0.0], vec![4.0, 0.0]], vec![0.0, 0.0]),
        ])
        .unwrap();
        assert_eq!(
            regularizer_value(&net, &spec(RegularizerMode::GlassoOut, 1.0, 0.0)),
            5.0
        );
    }

    #[test]
    fn value_matches_explicit_loops() {
        for seed in 0..5 {
            let net = randomised(&[4, 6, 5, 3], seed);
            let (alpha, beta) = (0.3, 0.07);
            let layers = net.layers();
            let depth = layers.len();
            let biases: f64 = layers
                .iter()
                .flat_map(|p| p.bias.iter())
                .map(|b| 0.5 * b * b)
                .sum();
            let sq = |m: &Matrix| {
                let mut s = 0.0;
                for i in 0..m.rows() {
                    for j in 0..m.cols() {
                        s += 0.5 * m.get(i, j) * m.get(i, j);
                    }
                }
                s
            };

            let mut cols = 0.0;
            for p in &layers[1..] {
                for j in 0..p.weights.cols() {
                    let mut s = 0.0;
                    for i in 0..p.weights.rows() {
                        s += p.weights.get(i, j).powi(2);
                    }
                    cols += s.sqrt();
                }
            }
            let expected = alpha * cols + beta * (sq(&layers[0].weights) + biases);
            let got = regularizer_value(&net, &spec(RegularizerMode::GlassoOut, alpha, beta));
            assert!((got - expected).abs() < 1e-12);

            let mut rows = 0.0;
            for p in &layers[..depth - 1] {
                for i in 0..p.weights.rows() {
                    let mut s = 0.0;
                    for j in 0..p.weights.cols() {
                        s += p.weights.get(i, j).powi(2);
                    }
                    rows += s.sqrt();
                }
            }
            let expected = alpha * rows + beta * (sq(&layers[depth - 1].weights) + biases);
            let got = regularizer_value(&net, &spec(RegularizerMode::GlassoIn, alpha, beta));
            assert!((got - expected).abs() < 1e-12);

            let all: f64 = layers.iter().map(|p| sq(&p.weights)).sum::<f64>() + biases;
            let got = regularizer_value(&net, &spec(RegularizerMode::L2All, 0.0, beta));
            assert!((got - beta * all).abs() < 1e-12);
        }
    }

    #[test]
    fn group_gradient_is_unit_direction_and_zero_at_origin() {
        let net = MlpNetwork::new(vec![
            layer(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0]),
            layer(vec![vec![3.0, 0.0], vec![4.0, 0.0]], vec![0.0, 0.0]),
        ])
        .unwrap();
        let g = regularizer_gradient(&net, &spec(RegularizerMode::GlassoOut, 1.0, 0.0));
        assert!((g.weights[1].get(0, 0) - 0.6).abs() < 1e-15);
        assert!((g.weights[1].get(1, 0) - 0.8).abs() < 1e-15);
        assert_eq!(g.weights[1].column(1), vec![0.0, 0.0]);
        assert!(g.weights[0].as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_kink() {
        let h = 1e-6;
        for seed in 0..4 {
            let net = randomised(&[3, 5, 4, 2], seed);
            for s in [
                spec(RegularizerMode::GlassoOut, 0.4, 0.04),
                spec(RegularizerMode::GlassoIn, 0.4, 0.04),
                spec(RegularizerMode::L2All, 0.0, 0.3),
            ] {
                if let Some(g) = s.mode().grouping() {
                    assert!(group_norms(&net, g).iter().all(|(_, _, n)| n > 1e-3));
                }
                let grad = regularizer_gradient(&net, &s);
                let n = grad.values().count();
                for k in 0..n {
                    let mut e = GradientSet::zeros_like(&net);
                    *e.values_mut().nth(k).unwrap() = 1.0;
                    let mut up = net.clone();
                    up.axpy(h, &e);
                    let mut dn = net.clone();
                    dn.axpy(-h, &e);
                    let fd = (regularizer_value(&up, &s) - regularizer_value(&dn, &s)) / (2.0 * h);
                    let a = *grad.values().nth(k).unwrap();
                    let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
                    assert!(rel < 1e-5, "{:?} param {k}: analytic {a} fd {fd}", s.mode());
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn block_norms(g: &GradientSet, net: &MlpNetwork, mode: RegularizerMode) -> Vec<f64> {
            let depth = net.depth();
            match mode {
                RegularizerMode::GlassoOut => (1..depth)
                    .flat_map(|l| math::column_norms(&g.weights[l]).into_inner())
                    .collect(),
                _ => (0..depth - 1)
                    .flat_map(|l| math::row_norms(&g.weights[l]).into_inner())
                    .collect(),
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn group_gradient_blocks_have_norm_alpha(seed in 0u64..10_000, alpha in 0.001f64..3.0) {
                let net = randomised(&[4, 6, 5, 3], seed);
                for mode in [RegularizerMode::GlassoOut, RegularizerMode::GlassoIn] {
                    let g = regularizer_gradient(&net, &spec(mode, alpha, 0.0));
                    for n in block_norms(&g, &net, mode) {
                        prop_assert!((n - alpha).abs() < 1e-12 * alpha.max(1.0));
                    }
                }
            }

            #[test]
            fn homogeneity(seed in 0u64..10_000, c in 0.1f64..5.0) {
                let net = zero_biases(randomised(&[3, 5, 4, 2], seed));
                let mut scaled = net.clone();
                for p in scaled.layers_mut() {
                    p.weights.as_mut_slice().iter_mut().for_each(|x| *x *= c);
                }
                for mode in [RegularizerMode::GlassoOut, RegularizerMode::GlassoIn] {
                    let g0 = regularizer_value(&net, &spec(mode, 1.0, 0.0));
                    let g1 = regularizer_value(&scaled, &spec(mode, 1.0, 0.0));
                    prop_assert!((g1 - c * g0).abs() < 1e-10 * g1.max(1.0));
                    let l0 = regularizer_value(&net, &spec(mode, 0.0, 1.0));
                    let l1 = regularizer_value(&scaled, &spec(mode, 0.0, 1.0));
                    prop_assert!((l1 - c * c * l0).abs() < 1e-10 * l1.max(1.0));
                }
            }

            #[test]
            fn incoming_equals_outgoing_on_mirrored_net(seed in 0u64..10_000, alpha in 0.0f64..2.0, beta in 0.0f64..2.0) {
                let net = zero_biases(randomised(&[3, 6, 4, 5, 2], seed));
                let a = regularizer_value(&net, &spec(RegularizerMode::GlassoIn, alpha, beta));
                let b = regularizer_value(&mirrored(&net), &spec(RegularizerMode::GlassoOut, alpha, beta));
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
