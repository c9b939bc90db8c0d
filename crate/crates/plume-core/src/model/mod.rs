//! The recurrent graph-network surrogate: encoder, message-passing
//! processor, Chebyshev graph-convolutional LSTM cell, and decoder, plus the
//! next-step baseline head that skips the recurrence.

mod layers;
mod rollout;

pub use layers::{cheb_conv, decode, encode, gconv_lstm_step, process, scaled_laplacian, TapeVars};
pub use rollout::{rollout, rollout_normalized, single_step_normalized, RecurrentVars};

use crate::autodiff::Tensor;
use crate::graph::FeatureConfig;
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Model family: the recurrent surrogate or the next-step baseline sharing
/// the same encoder-processor-decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    MgnLstm,
    Mgn,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::MgnLstm => "mgn_lstm",
            Variant::Mgn => "mgn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mgn_lstm" => Some(Variant::MgnLstm),
            "mgn" => Some(Variant::Mgn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Latent width of node and edge embeddings.
    pub latent: usize,
    /// Number of message-passing layers in the processor.
    pub layers: usize,
    /// Chebyshev filter order of the LSTM graph convolutions.
    pub cheb_k: usize,
    /// Node input width (statics + dynamic channel, + relperm channel).
    pub node_width: usize,
    /// Edge input width.
    pub edge_width: usize,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent: 100,
            layers: 10,
            cheb_k: 8,
            node_width: 9,
            edge_width: 3,
            variant: Variant::MgnLstm,
        }
    }
}

impl ModelConfig {
    /// Default architecture sized for a feature configuration.
    pub fn for_features(features: FeatureConfig, variant: Variant) -> Self {
        ModelConfig {
            node_width: features.node_input_width(),
            edge_width: features.edge_width(),
            variant,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.latent == 0 || self.layers == 0 || self.cheb_k == 0 {
            return Err("latent, layers and cheb_k must all be >= 1".into());
        }
        if self.node_width == 0 || self.edge_width == 0 {
            return Err("node and edge widths must be >= 1".into());
        }
        Ok(())
    }
}

/// Two-layer perceptron with layer normalization:
/// `Linear -> ReLU -> Linear -> LayerNorm`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Two-layer decoder head without output normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

/// Chebyshev filter bank: one `[d_in, d_out]` weight per polynomial order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebStack<T> {
    pub weights: Vec<Tensor<T>>,
}

/// Gate weights of the graph-convolutional LSTM cell. Each gate combines a
/// Chebyshev filter of the input and of the hidden state; the output gate
/// also sees the new cell state through the elementwise peephole `w_co`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub w_xi: ChebStack<T>,
    pub w_hi: ChebStack<T>,
    pub w_xf: ChebStack<T>,
    pub w_hf: ChebStack<T>,
    pub w_xc: ChebStack<T>,
    pub w_hc: ChebStack<T>,
    pub w_xo: ChebStack<T>,
    pub w_ho: ChebStack<T>,
    pub b_i: Tensor<T>,
    pub b_f: Tensor<T>,
    pub b_c: Tensor<T>,
    pub b_o: Tensor<T>,
    pub w_co: Tensor<T>,
}

/// All learnable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub encoder_node: MlpParams<T>,
    pub encoder_edge: MlpParams<T>,
    /// Per layer: (edge MLP, node MLP).
    pub processor: Vec<(MlpParams<T>, MlpParams<T>)>,
    /// Present for the recurrent variant only.
    pub lstm: Option<LstmParams<T>>,
    pub decoder: DecoderParams<T>,
}

fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| T::lit((rng.random::<f64>() * 2.0 - 1.0) * bound))
            .collect(),
    )
}

fn mlp_init<T: Scalar>(d_in: usize, d_hidden: usize, d_out: usize, rng: &mut ChaCha8Rng) -> MlpParams<T> {
    MlpParams {
        w1: glorot(d_in, d_hidden, rng),
        b1: Tensor::zeros(1, d_hidden),
        w2: glorot(d_hidden, d_out, rng),
        b2: Tensor::zeros(1, d_out),
        gamma: Tensor::row(vec![T::one(); d_out]),
        beta: Tensor::zeros(1, d_out),
    }
}

fn cheb_init<T: Scalar>(k: usize, d: usize, rng: &mut ChaCha8Rng) -> ChebStack<T> {
    ChebStack { weights: (0..k).map(|_| glorot(d, d, rng)).collect() }
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains;
    /// deterministic given `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        config.validate().expect("invalid model config");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.latent;
        let encoder_node = mlp_init(config.node_width, h, h, &mut rng);
        let encoder_edge = mlp_init(config.edge_width, h, h, &mut rng);
        let processor = (0..config.layers)
            .map(|_| (mlp_init(3 * h, h, h, &mut rng), mlp_init(2 * h, h, h, &mut rng)))
            .collect();
        let lstm = match config.variant {
            Variant::MgnLstm => Some(LstmParams {
                w_xi: cheb_init(config.cheb_k, h, &mut rng),
                w_hi: cheb_init(config.cheb_k, h, &mut rng),
                w_xf: cheb_init(config.cheb_k, h, &mut rng),
                w_hf: cheb_init(config.cheb_k, h, &mut rng),
                w_xc: cheb_init(config.cheb_k, h, &mut rng),
                w_hc: cheb_init(config.cheb_k, h, &mut rng),
                w_xo: cheb_init(config.cheb_k, h, &mut rng),
                w_ho: cheb_init(config.cheb_k, h, &mut rng),
                b_i: Tensor::zeros(1, h),
                b_f: Tensor::zeros(1, h),
                b_c: Tensor::zeros(1, h),
                b_o: Tensor::zeros(1, h),
                w_co: Tensor::zeros(1, h),
            }),
            Variant::Mgn => None,
        };
        let decoder = DecoderParams {
            w1: glorot(h, h, &mut rng),
            b1: Tensor::zeros(1, h),
            w2: glorot(h, 1, &mut rng),
            b2: Tensor::zeros(1, 1),
        };
        ModelParams { config, encoder_node, encoder_edge, processor, lstm, decoder }
    }

    /// Visits every parameter tensor in a fixed order with a stable name.
    pub fn for_each_param(&self, mut f: impl FnMut(&str, &Tensor<T>)) {
        walk_params(self, &mut |name, t| f(name, t));
    }

    /// Mutable variant of [`ModelParams::for_each_param`]; identical order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<T>)) {
        walk_params_mut(self, &mut |name, t| f(name, t));
    }

    pub fn n_parameters(&self) -> usize {
        let mut n = 0;
        self.for_each_param(|_, t| n += t.len());
        n
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_param(|_, t| ok &= t.all_finite());
        ok
    }
}


fn walk_params<T: Scalar>(p: &ModelParams<T>, f: &mut impl FnMut(&str, &Tensor<T>)) {
    let mut mlp = |tag: &str, m: &MlpParams<T>, f: &mut dyn FnMut(&str, &Tensor<T>)| {
        f(&format!("{tag}.w1"), &m.w1);
        f(&format!("{tag}.b1"), &m.b1);
        f(&format!("{tag}.w2"), &m.w2);
        f(&format!("{tag}.b2"), &m.b2);
        f(&format!("{tag}.gamma"), &m.gamma);
        f(&format!("{tag}.beta"), &m.beta);
    };
    mlp("encoder_node", &p.encoder_node, f);
    mlp("encoder_edge", &p.encoder_edge, f);
    for (l, (edge, node)) in p.processor.iter().enumerate() {
        mlp(&format!("processor.{l}.edge"), edge, f);
        mlp(&format!("processor.{l}.node"), node, f);
    }
    if let Some(lstm) = &p.lstm {
        for (tag, stack) in [
            ("w_xi", &lstm.w_xi),
            ("w_hi", &lstm.w_hi),
            ("w_xf", &lstm.w_xf),
            ("w_hf", &lstm.w_hf),
            ("w_xc", &lstm.w_xc),
            ("w_hc", &lstm.w_hc),
            ("w_xo", &lstm.w_xo),
            ("w_ho", &lstm.w_ho),
        ] {
            for (k, w) in stack.weights.iter().enumerate() {
                f(&format!("lstm.{tag}.{k}"), w);
            }
        }
        f("lstm.b_i", &lstm.b_i);
        f("lstm.b_f", &lstm.b_f);
        f("lstm.b_c", &lstm.b_c);
        f("lstm.b_o", &lstm.b_o);
        f("lstm.w_co", &lstm.w_co);
    }
    f("decoder.w1", &p.decoder.w1);
    f("decoder.b1", &p.decoder.b1);
    f("decoder.w2", &p.decoder.w2);
    f("decoder.b2", &p.decoder.b2);
}

fn walk_params_mut<T: Scalar>(p: &mut ModelParams<T>, f: &mut impl FnMut(&str, &mut Tensor<T>)) {
    let mut mlp = |tag: &str, m: &mut MlpParams<T>, f: &mut dyn FnMut(&str, &mut Tensor<T>)| {
        f(&format!("{tag}.w1"), &mut m.w1);
        f(&format!("{tag}.b1"), &mut m.b1);
        f(&format!("{tag}.w2"), &mut m.w2);
        f(&format!("{tag}.b2"), &mut m.b2);
        f(&format!("{tag}.gamma"), &mut m.gamma);
        f(&format!("{tag}.beta"), &mut m.beta);
    };
    mlp("encoder_node", &mut p.encoder_node, f);
    mlp("encoder_edge", &mut p.encoder_edge, f);
    for (l, (edge, node)) in p.processor.iter_mut().enumerate() {
        mlp(&format!("processor.{l}.edge"), edge, f);
        mlp(&format!("processor.{l}.node"), node, f);
    }
    if let Some(lstm) = &mut p.lstm {
        for (tag, stack) in [
            ("w_xi", &mut lstm.w_xi),
            ("w_hi", &mut lstm.w_hi),
            ("w_xf", &mut lstm.w_xf),
            ("w_hf", &mut lstm.w_hf),
            ("w_xc", &mut lstm.w_xc),
            ("w_hc", &mut lstm.w_hc),
            ("w_xo", &mut lstm.w_xo),
            ("w_ho", &mut lstm.w_ho),
        ] {
            for (k, w) in stack.weights.iter_mut().enumerate() {
                f(&format!("lstm.{tag}.{k}"), w);
            }
        }
        f("lstm.b_i", &mut lstm.b_i);
        f("lstm.b_f", &mut lstm.b_f);
        f("lstm.b_c", &mut lstm.b_c);
        f("lstm.b_o", &mut lstm.b_o);
        f("lstm.w_co", &mut lstm.w_co);
    }
    f("decoder.w1", &mut p.decoder.w1);
    f("decoder.b1", &mut p.decoder.b1);
    f("decoder.w2", &mut p.decoder.w2);
    f("decoder.b2", &mut p.decoder.b2);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_dimensions() {
        let params = ModelParams::<f64>::init(ModelConfig::default(), 0);
        assert_eq!(params.encoder_node.w1.shape(), (9, 100));
        assert_eq!(params.encoder_edge.w1.shape(), (3, 100));
        assert_eq!(params.processor.len(), 10);
        assert_eq!(params.processor[0].0.w1.rows(), 300);
        assert_eq!(params.processor[0].1.w1.rows(), 200);
        let lstm = params.lstm.as_ref().unwrap();
        assert_eq!(lstm.w_xi.weights.len(), 8);
        assert_eq!(lstm.w_xi.weights[0].shape(), (100, 100));
        assert_eq!(params.decoder.w2.shape(), (100, 1));
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::<f64>::init(ModelConfig::default(), 3);
        let b = ModelParams::<f64>::init(ModelConfig::default(), 3);
        assert_eq!(a, b);
        let c = ModelParams::<f64>::init(ModelConfig::default(), 4);
        assert_ne!(a, c);
    }

    #[test]
    fn baseline_variant_has_no_lstm() {
        let cfg = ModelConfig { variant: Variant::Mgn, ..ModelConfig::default() };
        let params = ModelParams::<f64>::init(cfg, 0);
        assert!(params.lstm.is_none());
    }

    #[test]
    fn parameter_walk_is_stable_and_complete() {
        let params = ModelParams::<f64>::init(
            ModelConfig { latent: 4, layers: 2, cheb_k: 3, ..ModelConfig::default() },
            1,
        );
        let mut names = Vec::new();
        params.for_each_param(|n, _| names.push(n.to_string()));
        assert!(names.contains(&"encoder_node.w1".to_string()));
        assert!(names.contains(&"processor.1.edge.gamma".to_string()));
        assert!(names.contains(&"lstm.w_ho.2".to_string()));
        assert!(names.contains(&"decoder.b2".to_string()));
        let set: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len(), "duplicate parameter names");

        let mut names_mut = Vec::new();
        let mut p2 = params.clone();
        p2.for_each_param_mut(|n, _| names_mut.push(n.to_string()));
        assert_eq!(names, names_mut);
    }
}
