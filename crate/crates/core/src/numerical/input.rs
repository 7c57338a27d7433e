//! Assembly of the transformer input: question words, `[SEP]`, then numbers.

use serde::{Deserialize, Serialize};

use super::mask::Layout;
use crate::encoders::{EncoderConfig, FrozenEncoder, NumberEncoder, QuestionEncoding, SneMode, SEP};
use crate::error::{Error, Result};
use crate::kb::NumericValue;
use crate::nn::Tensor;

pub const DEFAULT_N_MAX: usize = 50;

/// Frozen features of one transformer input; trainable projections are applied in the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct NtInput {
    pub layout: Layout,
    /// Question word vectors, `n x d_enc`.
    pub question: Tensor,
    /// Frozen `[SEP]` vector, `1 x d_enc`.
    pub sep: Tensor,
    /// Number features before the SNE projection, `m x feature_dim`.
    pub numbers: Tensor,
    pub sort_keys: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub original: usize,
    /// Indices into the caller's number list that were kept, in input order.
    pub kept: Vec<usize>,
}

impl TruncationReport {
    pub fn truncated(&self) -> bool {
        self.kept.len() < self.original
    }
}

/// Frozen pieces needed to featurize questions and numbers.
#[derive(Clone, Debug)]
pub struct NtFeaturizer {
    pub words: FrozenEncoder,
    pub numbers: NumberEncoder,
    sep: Vec<f64>,
}

impl NtFeaturizer {
    pub fn new(config: EncoderConfig, mode: SneMode) -> Result<Self> {
        let words = FrozenEncoder::new(config)?;
        let sep = words.special_vector(SEP);
        Ok(Self {
            numbers: NumberEncoder::new(config, mode)?,
            words,
            sep,
        })
    }

    pub fn d_enc(&self) -> usize {
        self.words.d_enc()
    }

    /// Builds the input; beyond `n_max` numbers the most relevant are kept
    /// (ties and missing relevance fall back to input order).
    pub fn build_input(
        &self,
        question: &QuestionEncoding,
        numbers: &[NumericValue],
        relevance: Option<&[f64]>,
        n_max: usize,
    ) -> Result<(NtInput, TruncationReport)> {
        if numbers.is_empty() {
            return Err(Error::data("transformer input needs at least one number"));
        }
        if let Some(r) = relevance {
            if r.len() != numbers.len() {
                return Err(Error::shape(format!(
                    "{} relevance scores for {} numbers",
                    r.len(),
                    numbers.len()
                )));
            }
        }
        let mut kept: Vec<usize> = (0..numbers.len()).collect();
        if numbers.len() > n_max {
            if let Some(r) = relevance {
                kept.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
            }
            kept.truncate(n_max);
            kept.sort_unstable();
        }
        let dim = self.numbers.feature_dim();
        let mut feats = Tensor::zeros(kept.len(), dim);
        for (row, &i) in kept.iter().enumerate() {
            feats.row_mut(row).copy_from_slice(&self.numbers.features(&numbers[i])?);
        }
        let input = NtInput {
            layout: Layout {
                n_question: question.words.rows(),
                n_numbers: kept.len(),
            },
            question: question.words.clone(),
            sep: Tensor::row_vector(self.sep.clone()),
            numbers: feats,
            sort_keys: kept.iter().map(|&i| numbers[i].sort_key).collect(),
        };
        let report = TruncationReport {
            original: numbers.len(),
            kept,
        };
        Ok((input, report))
    }
}
