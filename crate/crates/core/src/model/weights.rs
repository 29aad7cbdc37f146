use super::{EncoderConfig, ModelError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    fn normal(shape: &[usize], scale: f64, rng: &mut rng::Rng) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng::normal(rng) * scale).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub query_w: Tensor,
    pub query_b: Tensor,
    pub key_w: Tensor,
    pub key_b: Tensor,
    pub value_w: Tensor,
    pub value_b: Tensor,
    pub attn_out_w: Tensor,
    pub attn_out_b: Tensor,
    pub attn_norm_gamma: Tensor,
    pub attn_norm_beta: Tensor,
    pub ff_in_w: Tensor,
    pub ff_in_b: Tensor,
    pub ff_out_w: Tensor,
    pub ff_out_b: Tensor,
    pub ff_norm_gamma: Tensor,
    pub ff_norm_beta: Tensor,
}

const LAYER_FIELDS: [&str; 16] = [
    "attention.query.weight",
    "attention.query.bias",
    "attention.key.weight",
    "attention.key.bias",
    "attention.value.weight",
    "attention.value.bias",
    "attention.output.weight",
    "attention.output.bias",
    "attention.norm.gamma",
    "attention.norm.beta",
    "ffn.inner.weight",
    "ffn.inner.bias",
    "ffn.outer.weight",
    "ffn.outer.bias",
    "ffn.norm.gamma",
    "ffn.norm.beta",
];

impl LayerWeights {
    fn fields(&self) -> [&Tensor; 16] {
        [
            &self.query_w,
            &self.query_b,
            &self.key_w,
            &self.key_b,
            &self.value_w,
            &self.value_b,
            &self.attn_out_w,
            &self.attn_out_b,
            &self.attn_norm_gamma,
            &self.attn_norm_beta,
            &self.ff_in_w,
            &self.ff_in_b,
            &self.ff_out_w,
            &self.ff_out_b,
            &self.ff_norm_gamma,
            &self.ff_norm_beta,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.query_w,
            &mut self.query_b,
            &mut self.key_w,
            &mut self.key_b,
            &mut self.value_w,
            &mut self.value_b,
            &mut self.attn_out_w,
            &mut self.attn_out_b,
            &mut self.attn_norm_gamma,
            &mut self.attn_norm_beta,
            &mut self.ff_in_w,
            &mut self.ff_in_b,
            &mut self.ff_out_w,
            &mut self.ff_out_b,
            &mut self.ff_norm_gamma,
            &mut self.ff_norm_beta,
        ]
    }
}

/// All trainable parameters. The same type doubles as a gradient buffer.
///
/// Dense weights are stored `[inputs, outputs]`, so a layer computes `x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub embed_norm_gamma: Tensor,
    pub embed_norm_beta: Tensor,
    pub layers: Vec<LayerWeights>,
    pub pooler_w: Tensor,
    pub pooler_b: Tensor,
    pub classifier_w: Tensor,
    pub classifier_b: Tensor,
}

const INIT_SCALE: f64 = 0.02;

/// Dense matrices and embeddings ~ N(0, 0.02²); biases and offsets 0; norm scales 1.
pub fn init_weights(config: &EncoderConfig, seed: u64) -> Result<EncoderWeights> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let d = config.hidden_dim;
    let mut w = EncoderWeights::zeros(config);
    for (_, t) in w.named_mut() {
        if t.shape.len() == 2 {
            *t = Tensor::normal(&t.shape.clone(), INIT_SCALE, &mut rng);
        }
    }
    w.embed_norm_gamma = Tensor::filled(&[d], 1.0);
    for layer in &mut w.layers {
        layer.attn_norm_gamma = Tensor::filled(&[d], 1.0);
        layer.ff_norm_gamma = Tensor::filled(&[d], 1.0);
    }
    Ok(w)
}

impl EncoderWeights {
    /// All-zero tensors shaped for `config`.
    pub fn zeros(config: &EncoderConfig) -> Self {
        let (v, t, d, f) = (
            config.vocab_size,
            config.max_seq_len,
            config.hidden_dim,
            config.ff_dim,
        );
        let layer = || LayerWeights {
            query_w: Tensor::zeros(&[d, d]),
            query_b: Tensor::zeros(&[d]),
            key_w: Tensor::zeros(&[d, d]),
            key_b: Tensor::zeros(&[d]),
            value_w: Tensor::zeros(&[d, d]),
            value_b: Tensor::zeros(&[d]),
            attn_out_w: Tensor::zeros(&[d, d]),
            attn_out_b: Tensor::zeros(&[d]),
            attn_norm_gamma: Tensor::zeros(&[d]),
            attn_norm_beta: Tensor::zeros(&[d]),
            ff_in_w: Tensor::zeros(&[d, f]),
            ff_in_b: Tensor::zeros(&[f]),
            ff_out_w: Tensor::zeros(&[f, d]),
            ff_out_b: Tensor::zeros(&[d]),
            ff_norm_gamma: Tensor::zeros(&[d]),
            ff_norm_beta: Tensor::zeros(&[d]),
        };
        EncoderWeights {
            token_embedding: Tensor::zeros(&[v, d]),
            position_embedding: Tensor::zeros(&[t, d]),
            embed_norm_gamma: Tensor::zeros(&[d]),
            embed_norm_beta: Tensor::zeros(&[d]),
            layers: (0..config.num_layers).map(|_| layer()).collect(),
            pooler_w: Tensor::zeros(&[d, d]),
            pooler_b: Tensor::zeros(&[d]),
            classifier_w: Tensor::zeros(&[d, 2]),
            classifier_b: Tensor::zeros(&[2]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    /// Parameter tensors in a fixed order with stable dotted names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("embeddings.token".to_string(), &self.token_embedding),
            ("embeddings.position".to_string(), &self.position_embedding),
            ("embeddings.norm.gamma".to_string(), &self.embed_norm_gamma),
            ("embeddings.norm.beta".to_string(), &self.embed_norm_beta),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.fields()) {
                out.push((format!("layer.{i}.{name}"), t));
            }
        }
        out.extend([
            ("pooler.weight".to_string(), &self.pooler_w),
            ("pooler.bias".to_string(), &self.pooler_b),
            ("classifier.weight".to_string(), &self.classifier_w),
            ("classifier.bias".to_string(), &self.classifier_b),
        ]);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("embeddings.token".to_string(), &mut self.token_embedding),
            ("embeddings.position".to_string(), &mut self.position_embedding),
            ("embeddings.norm.gamma".to_string(), &mut self.embed_norm_gamma),
            ("embeddings.norm.beta".to_string(), &mut self.embed_norm_beta),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.fields_mut()) {
                out.push((format!("layer.{i}.{name}"), t));
            }
        }
        out.extend([
            ("pooler.weight".to_string(), &mut self.pooler_w),
            ("pooler.bias".to_string(), &mut self.pooler_b),
            ("classifier.weight".to_string(), &mut self.classifier_w),
            ("classifier.bias".to_string(), &mut self.classifier_b),
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &EncoderWeights, scale: f64) {
        let theirs = other.named();
        for ((_, mine), (_, t)) in self.named_mut().into_iter().zip(theirs) {
            for (a, b) in mine.data.iter_mut().zip(&t.data) {
                *a += scale * b;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    /// Checks every tensor shape against `config`.
    pub fn check_shapes(&self, config: &EncoderConfig) -> Result<()> {
        let expected = EncoderWeights::zeros(config);
        let want = expected.named();
        let have = self.named();
        if want.len() != have.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, found {}",
                want.len(),
                have.len()
            )));
        }
        for ((name, w), (_, h)) in want.iter().zip(&have) {
            if w.shape != h.shape || h.data.len() != w.data.len() {
                return Err(ModelError::Config(format!(
                    "tensor {name}: expected shape {:?}, found {:?}",
                    w.shape, h.shape
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadVariant;

    #[test]
    fn init_is_deterministic() {
        let cfg = EncoderConfig::desk(50);
        assert_eq!(init_weights(&cfg, 9).unwrap(), init_weights(&cfg, 9).unwrap());
        assert_ne!(init_weights(&cfg, 9).unwrap(), init_weights(&cfg, 10).unwrap());
    }

    #[test]
    fn init_norms_and_biases() {
        let w = init_weights(&EncoderConfig::desk(50), 1).unwrap();
        assert!(w.embed_norm_gamma.data.iter().all(|&x| x == 1.0));
        for l in &w.layers {
            assert!(l.attn_norm_gamma.data.iter().all(|&x| x == 1.0));
            assert!(l.ff_norm_gamma.data.iter().all(|&x| x == 1.0));
            assert!(l.attn_norm_beta.data.iter().all(|&x| x == 0.0));
            assert!(l.query_b.data.iter().all(|&x| x == 0.0));
        }
        let tok = &w.token_embedding.data;
        let mean = tok.iter().sum::<f64>() / tok.len() as f64;
        let sd = (tok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / tok.len() as f64).sqrt();
        assert!(mean.abs() < 0.002);
        assert!((sd - 0.02).abs() < 0.002);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = EncoderConfig {
            hidden_dim: 33,
            ..EncoderConfig::desk(10)
        };
        assert!(matches!(init_weights(&cfg, 1), Err(ModelError::Config(_))));
    }

    #[test]
    fn shape_check_catches_mismatch() {
        let cfg = EncoderConfig::desk(20);
        let w = init_weights(&cfg, 1).unwrap();
        w.check_shapes(&cfg).unwrap();
        let other = EncoderConfig {
            vocab_size: 21,
            head_variant: HeadVariant::StandardPooled,
            ..cfg
        };
        assert!(w.check_shapes(&other).is_err());
    }
}
