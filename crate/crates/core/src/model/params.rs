use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::FEATURE_DIM;
use crate::error::{Error, Result};
use crate::lang::Vocabulary;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    /// The guesser is trained jointly with QGen every `modulo_n`-th epoch.
    pub modulo_n: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub decode: DecodeMode,
    pub max_question_len: usize,
    /// Restrict the guesser loss to human-sourced dialogues.
    pub guesser_human_only: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            hidden_dim: 64,
            learning_rate: 0.04,
            grad_clip: 5.0,
            modulo_n: 1,
            epochs: 60,
            batch_size: 4,
            decode: DecodeMode::Greedy,
            max_question_len: 12,
            guesser_human_only: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return fail("embed_dim and hidden_dim must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be a finite non-negative number");
        }
        if !(self.grad_clip > 0.0) {
            return fail("grad_clip must be positive");
        }
        if self.modulo_n == 0 {
            return fail("modulo_n must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.max_question_len < 3 {
            return fail("max_question_len must be at least 3");
        }
        Ok(())
    }
}

/// Every trainable tensor of the questioner. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// |V| x E
    pub embed: Tensor,
    /// H x F projection of the scene summary into the initial state.
    pub init_w: Tensor,
    pub init_b: Tensor,
    /// H x E
    pub w_in: Tensor,
    /// H x H
    pub w_rec: Tensor,
    pub b_rec: Tensor,
    /// |V| x H
    pub w_out: Tensor,
    pub b_out: Tensor,
    /// H x F, maps object features into state space for the guesser.
    pub featurizer: Tensor,
}

pub const TENSOR_NAMES: [&str; 9] =
    ["embed", "init_w", "init_b", "w_in", "w_rec", "b_rec", "w_out", "b_out", "featurizer"];

impl ModelParams {
    pub fn zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        let (v, e, h, f) = (vocab_size, embed_dim, hidden_dim, FEATURE_DIM);
        ModelParams {
            embed: Tensor::zeros(v, e),
            init_w: Tensor::zeros(h, f),
            init_b: Tensor::zeros(h, 1),
            w_in: Tensor::zeros(h, e),
            w_rec: Tensor::zeros(h, h),
            b_rec: Tensor::zeros(h, 1),
            w_out: Tensor::zeros(v, h),
            b_out: Tensor::zeros(v, 1),
            featurizer: Tensor::zeros(h, f),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.vocab_size(), self.embed_dim(), self.hidden_dim())
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.rows
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_rec.rows
    }

    pub fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.embed,
            &self.init_w,
            &self.init_b,
            &self.w_in,
            &self.w_rec,
            &self.b_rec,
            &self.w_out,
            &self.b_out,
            &self.featurizer,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.embed,
            &mut self.init_w,
            &mut self.init_b,
            &mut self.w_in,
            &mut self.w_rec,
            &mut self.b_rec,
            &mut self.w_out,
            &mut self.b_out,
            &mut self.featurizer,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors().into_iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// self += alpha * other
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::tensor::axpy(alpha, &b.data, &mut a.data);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    /// Mutable access to the k-th scalar in flattening order.
    pub fn scalar_mut(&mut self, mut k: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if k < t.data.len() {
                return &mut t.data[k];
            }
            k -= t.data.len();
        }
        panic!("parameter index out of range");
    }
}

/// Uniform initialization in [-1/sqrt(H), 1/sqrt(H)].
pub fn init_params(cfg: &ModelConfig, vocab: &Vocabulary, seed: u64) -> Result<ModelParams> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    cfg.validate()?;
    let mut rng = stream_rng(seed, "init", 0);
    let s = 1.0 / (cfg.hidden_dim as f64).sqrt();
    let mut params = ModelParams::zeros(vocab.len(), cfg.embed_dim, cfg.hidden_dim);
    for t in params.tensors_mut() {
        *t = Tensor::from_fn(t.rows, t.cols, || rng.random_range(-s..=s));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n_learnable: usize) -> Vocabulary {
        Vocabulary::from_counts((0..n_learnable).map(|i| (format!("w{i}"), 3)).collect(), 3).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ModelConfig { embed_dim: 8, hidden_dim: 16, ..Default::default() };
        let v = vocab(45);
        let a = init_params(&cfg, &v, 3).unwrap();
        let b = init_params(&cfg, &v, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&cfg, &v, 4).unwrap());
        let s = 0.25;
        assert!(a.values().all(|x| (-s..=s).contains(&x)));
        assert_eq!((a.embed.rows, a.embed.cols), (50, 8));
        assert_eq!((a.w_out.rows, a.w_out.cols), (50, 16));
        assert_eq!((a.featurizer.rows, a.featurizer.cols), (16, FEATURE_DIM));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig { modulo_n: 0, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { max_question_len: 2, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { hidden_dim: 0, ..Default::default() }.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }
}
