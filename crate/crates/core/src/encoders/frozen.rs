//! Frozen text encoder: a seeded embedding table plus one fixed bidirectional mixing layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::vocab::tokenize;
use crate::error::{Error, Result};
use crate::kb::RelationMeta;
use crate::nn::params::hex;
use crate::nn::Tensor;

/// Weight of the neighbour term in the mixing layer.
const MIX: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_enc: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { d_enc: 64, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_enc == 0 || !self.d_enc.is_multiple_of(2) {
            return Err(Error::config(format!(
                "d_enc must be positive and even, got {}",
                self.d_enc
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuestionEncoding {
    pub tokens: Vec<String>,
    /// One row per token, `n_words x d_enc`.
    pub words: Tensor,
    /// Mean of the word rows.
    pub pooled: Vec<f64>,
}

/// Deterministic vectors keyed by (seed, namespace, token), independent of vocabulary order.
#[derive(Clone, Debug)]
pub struct FrozenEncoder {
    config: EncoderConfig,
    mix: Tensor,
}

impl FrozenEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_enc;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d69_785f_6c61_7965);
        let scale = 1.0 / (d as f64).sqrt();
        let data = (0..d * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        Ok(Self {
            config,
            mix: Tensor::from_vec(d, d, data)?,
        })
    }

    pub fn config(&self) -> EncoderConfig {
        self.config
    }

    pub fn d_enc(&self) -> usize {
        self.config.d_enc
    }

    /// Unit-scale random vector for `token` within `namespace`.
    pub fn table_vector(&self, namespace: &str, token: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(namespace.as_bytes());
        h.update([0]);
        h.update(token.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let scale = 1.0 / (self.config.d_enc as f64).sqrt();
        (0..self.config.d_enc)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect()
    }

    /// Word vectors have unit variance per coordinate so that dot products
    /// between question and relation vectors are sharp enough to attend with.
    pub fn word_vector(&self, word: &str) -> Vec<f64> {
        let s = (self.config.d_enc as f64).sqrt();
        self.table_vector("word", word).into_iter().map(|x| x * s).collect()
    }

    /// Vector of a special token such as `[SEP]`, on the word scale.
    pub fn special_vector(&self, token: &str) -> Vec<f64> {
        let s = (self.config.d_enc as f64).sqrt();
        self.table_vector("special", token).into_iter().map(|x| x * s).collect()
    }

    /// Contextualizes rows with `x_i + c W (x_{i-1} + x_{i+1}) / 2` and returns them with their mean.
    pub fn mix_and_pool(&self, rows: &[Vec<f64>]) -> Result<(Tensor, Vec<f64>)> {
        let n = rows.len();
        let d = self.config.d_enc;
        if n == 0 {
            return Err(Error::Encoding("cannot encode an empty token sequence".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::shape(format!(
                "token vector has width {}, expected {d}",
                bad.len()
            )));
        }
        let mut out = Tensor::zeros(n, d);
        for i in 0..n {
            let mut ctx = vec![0.0; d];
            if i > 0 {
                ctx.iter_mut().zip(&rows[i - 1]).for_each(|(c, x)| *c += 0.5 * x);
            }
            if i + 1 < n {
                ctx.iter_mut().zip(&rows[i + 1]).for_each(|(c, x)| *c += 0.5 * x);
            }
            let row = out.row_mut(i);
            row.copy_from_slice(&rows[i]);
            if n > 1 {
                for (r, wr) in row.iter_mut().zip(0..d) {
                    *r += MIX * crate::nn::tensor::dot(self.mix.row(wr), &ctx);
                }
            }
        }
        let mut pooled = vec![0.0; d];
        for i in 0..n {
            pooled.iter_mut().zip(out.row(i)).for_each(|(p, x)| *p += x / n as f64);
        }
        Ok((out, pooled))
    }

    pub fn encode_question(&self, text: &str) -> Result<QuestionEncoding> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::Encoding(format!("question {text:?} has no tokens")));
        }
        let rows: Vec<Vec<f64>> = tokens.iter().map(|t| self.word_vector(t)).collect();
        let (words, pooled) = self.mix_and_pool(&rows)?;
        Ok(QuestionEncoding { tokens, words, pooled })
    }

    /// Mean of the frozen word vectors of the relation-name words.
    pub fn encode_relation(&self, meta: &RelationMeta) -> Result<Vec<f64>> {
        let words = meta.name_words();
        if words.is_empty() {
            return Err(Error::Encoding("relation with empty name".into()));
        }
        let mut out = vec![0.0; self.config.d_enc];
        for w in &words {
            out.iter_mut()
                .zip(self.word_vector(w))
                .for_each(|(o, x)| *o += x / words.len() as f64);
        }
        Ok(out)
    }

    /// SHA-256 over encodings of a fixed probe set.
    pub fn probe_hash(&self) -> String {
        let mut h = Sha256::new();
        for q in [
            "which album has the latest release date",
            "what is the area of x",
            "tv program",
        ] {
            let e = self.encode_question(q).expect("probe questions are non-empty");
            for x in e.words.data() {
                h.update(x.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot = crate::nn::tensor::dot(a, b);
    let na = crate::nn::tensor::dot(a, a).sqrt();
    let nb = crate::nn::tensor::dot(b, b).sqrt();
    dot / (na * nb).max(1e-12)
}
