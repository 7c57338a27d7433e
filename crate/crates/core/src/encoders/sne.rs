//! Special number embedding: `[S] chars [E]` through a frozen character encoder,
//! the `[S]`/`[E]` outputs concatenated and projected by a trainable matrix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::frozen::{EncoderConfig, FrozenEncoder};
use super::vocab::{END, NUMBER_CHARS, START};
use crate::error::{Error, Result};
use crate::kb::NumericValue;
use crate::nn::tensor::{dot, softmax_in_place};
use crate::nn::{ParamGroup, ParamId, ParameterSet, Tensor};

pub const SNE_PROJ: &str = "sne.proj";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SneMode {
    /// Concatenate the `[S]` and `[E]` outputs.
    #[default]
    StartEnd,
    /// Mean over every output position.
    ClsPool,
}

#[derive(Clone, Debug)]
pub struct NumberEncoder {
    frozen: FrozenEncoder,
    mode: SneMode,
}

/// Sinusoidal position code of width `d`.
pub fn positional_encoding(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = pos as f64 * rate;
            if i % 2 == 0 {
                a.sin()
            } else {
                a.cos()
            }
        })
        .collect()
}

impl NumberEncoder {
    pub fn new(config: EncoderConfig, mode: SneMode) -> Result<Self> {
        Ok(Self {
            frozen: FrozenEncoder::new(config)?,
            mode,
        })
    }

    pub fn mode(&self) -> SneMode {
        self.mode
    }

    pub fn feature_dim(&self) -> usize {
        match self.mode {
            SneMode::StartEnd => 2 * self.frozen.d_enc(),
            SneMode::ClsPool => self.frozen.d_enc(),
        }
    }

    /// Frozen features of a number written in canonical form.
    pub fn features_str(&self, canonical: &str) -> Result<Vec<f64>> {
        if canonical.is_empty() {
            return Err(Error::Encoding("number has no tokens".into()));
        }
        let d = self.frozen.d_enc();
        let mut toks = vec![START.to_string()];
        for c in canonical.chars() {
            if !NUMBER_CHARS.contains(&c) {
                return Err(Error::Encoding(format!(
                    "character {c:?} in {canonical:?} is not a number token"
                )));
            }
            toks.push(c.to_string());
        }
        toks.push(END.to_string());
        let n = toks.len();
        let h: Vec<Vec<f64>> = toks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut x = self.frozen.table_vector("char", t);
                x.iter_mut()
                    .zip(positional_encoding(i, d))
                    .for_each(|(a, p)| *a += 0.5 * p);
                x
            })
            .collect();
        let scale = 1.0 / (d as f64).sqrt();
        let out: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut w: Vec<f64> = (0..n).map(|j| dot(&h[i], &h[j]) * scale).collect();
                softmax_in_place(&mut w);
                let mut o = h[i].clone();
                for (j, wj) in w.iter().enumerate() {
                    o.iter_mut().zip(&h[j]).for_each(|(a, b)| *a += wj * b);
                }
                o
            })
            .collect();
        Ok(match self.mode {
            SneMode::StartEnd => {
                let mut f = out[0].clone();
                f.extend_from_slice(&out[n - 1]);
                f
            }
            SneMode::ClsPool => {
                let mut f = vec![0.0; d];
                for o in &out {
                    f.iter_mut().zip(o).for_each(|(a, b)| *a += b / n as f64);
                }
                f
            }
        })
    }

    pub fn features(&self, v: &NumericValue) -> Result<Vec<f64>> {
        self.features_str(&v.canonical)
    }

    /// Adds the trainable projection (group Θ) to `params`.
    pub fn init_projection(&self, params: &mut ParameterSet, d_h: usize, rng: &mut impl Rng) -> Result<ParamId> {
        params.insert_xavier(SNE_PROJ, ParamGroup::Numerical, self.feature_dim(), d_h, rng)
    }

    /// `v0 = features(v) W_sne`, a `d_h` vector.
    pub fn encode_number_sne(&self, params: &ParameterSet, v: &NumericValue) -> Result<Vec<f64>> {
        let id = params.require(SNE_PROJ)?;
        let w = params.value(id);
        if w.rows() != self.feature_dim() {
            return Err(Error::shape(format!(
                "{SNE_PROJ} has {} rows, features have {}",
                w.rows(),
                self.feature_dim()
            )));
        }
        let f = Tensor::row_vector(self.features(v)?);
        Ok(f.matmul(w)?.into_data())
    }
}
