//! The masked post-norm transformer over question words and numbers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::input::NtInput;
use super::mask::build_mask;
use crate::encoders::{positional_encoding, SNE_PROJ};
use crate::error::{Error, Result};
use crate::nn::{masked_attention, ParamGroup, ParamId, ParameterSet, Tape, Tensor, Var};

pub const NPL_HEAD: &str = "nt.w_pretrain";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NtConfig {
    pub d_h: usize,
    pub layers: usize,
    pub heads: usize,
    /// Feed-forward width as a multiple of `d_h`.
    pub ff_mult: usize,
    /// Value-ordered mask on; off means every token sees every token.
    pub sam: bool,
}

impl Default for NtConfig {
    fn default() -> Self {
        Self {
            d_h: 64,
            layers: 2,
            heads: 8,
            ff_mult: 4,
            sam: true,
        }
    }
}

impl NtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || !self.d_h.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "transformer needs layers >= 1 and d_h ({}) divisible by heads ({})",
                self.d_h, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct LayerIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_g: ParamId,
    ln1_b: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
}

/// Parameter handles of the transformer; everything here is in group Θ.
#[derive(Clone, Debug)]
pub struct NumericalTransformer {
    pub config: NtConfig,
    q_proj: ParamId,
    sne_proj: ParamId,
    layers: Vec<LayerIds>,
    w_pretrain: ParamId,
}

pub struct NtOutput {
    /// Number rows of the last layer, `m x d_h`.
    pub numbers: Var,
    /// Every row of the last layer.
    pub hidden: Var,
    /// Per layer, per head attention weights.
    pub attention: Vec<Vec<Var>>,
}

impl NumericalTransformer {
    /// Inserts fresh Θ parameters, including the SNE projection and the NPL head.
    pub fn init(
        params: &mut ParameterSet,
        config: NtConfig,
        d_enc: usize,
        sne_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let g = ParamGroup::Numerical;
        let (dh, ff) = (config.d_h, config.d_h * config.ff_mult);
        params.insert_xavier("nt.q_proj", g, d_enc, dh, rng)?;
        params.insert_xavier(SNE_PROJ, g, sne_dim, dh, rng)?;
        for l in 0..config.layers {
            for w in ["wq", "wk", "wv", "wo"] {
                params.insert_xavier(format!("nt.l{l}.{w}"), g, dh, dh, rng)?;
            }
            params.insert_zeros(format!("nt.l{l}.bo"), g, 1, dh)?;
            params.insert_filled(format!("nt.l{l}.ln1_g"), g, 1, dh, 1.0)?;
            params.insert_zeros(format!("nt.l{l}.ln1_b"), g, 1, dh)?;
            params.insert_xavier(format!("nt.l{l}.ff1_w"), g, dh, ff, rng)?;
            params.insert_zeros(format!("nt.l{l}.ff1_b"), g, 1, ff)?;
            params.insert_xavier(format!("nt.l{l}.ff2_w"), g, ff, dh, rng)?;
            params.insert_zeros(format!("nt.l{l}.ff2_b"), g, 1, dh)?;
            params.insert_filled(format!("nt.l{l}.ln2_g"), g, 1, dh, 1.0)?;
            params.insert_zeros(format!("nt.l{l}.ln2_b"), g, 1, dh)?;
        }
        params.insert_xavier(NPL_HEAD, g, dh, 1, rng)?;
        Self::attach(params, config)
    }

    pub fn attach(params: &ParameterSet, config: NtConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|l| {
                let id = |name: &str| params.require(&format!("nt.l{l}.{name}"));
                Ok(LayerIds {
                    wq: id("wq")?,
                    wk: id("wk")?,
                    wv: id("wv")?,
                    wo: id("wo")?,
                    bo: id("bo")?,
                    ln1_g: id("ln1_g")?,
                    ln1_b: id("ln1_b")?,
                    ff1_w: id("ff1_w")?,
                    ff1_b: id("ff1_b")?,
                    ff2_w: id("ff2_w")?,
                    ff2_b: id("ff2_b")?,
                    ln2_g: id("ln2_g")?,
                    ln2_b: id("ln2_b")?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            q_proj: params.require("nt.q_proj")?,
            sne_proj: params.require(SNE_PROJ)?,
            layers,
            w_pretrain: params.require(NPL_HEAD)?,
        })
    }

    /// The mask this configuration uses for `input`.
    pub fn mask_for(&self, input: &NtInput) -> Tensor {
        build_mask(input.layout, &input.sort_keys, self.config.sam)
    }

    /// `sigma(v W_pretrain)` per number, an `m x 1` column.
    pub fn npl_scores(&self, tape: &mut Tape, numbers: Var) -> Var {
        let w = tape.param(self.w_pretrain);
        let z = tape.matmul(numbers, w);
        tape.sigmoid(z)
    }
}

/// Runs every layer and returns the number rows of the last one.
pub fn nt_forward(nt: &NumericalTransformer, tape: &mut Tape, input: &NtInput, mask: &Tensor) -> Result<NtOutput> {
    let layout = input.layout;
    let n_tok = layout.len();
    if mask.rows() != n_tok || mask.cols() != n_tok {
        return Err(Error::shape(format!(
            "mask is {}x{}, input has {n_tok} rows",
            mask.rows(),
            mask.cols()
        )));
    }
    if input.numbers.rows() != layout.n_numbers || input.question.rows() != layout.n_question {
        return Err(Error::shape("input tensors disagree with the layout"));
    }
    let dh = nt.config.d_h;
    let q_proj = tape.param(nt.q_proj);
    let question = tape.constant(input.question.clone());
    let qrows = tape.matmul(question, q_proj);
    let mut pe = Tensor::zeros(layout.n_question, dh);
    for i in 0..layout.n_question {
        pe.row_mut(i).copy_from_slice(&positional_encoding(i, dh));
    }
    let pe = tape.constant(pe);
    let qrows = tape.add(qrows, pe);
    let sep = tape.constant(input.sep.clone());
    let seprow = tape.matmul(sep, q_proj);
    let feats = tape.constant(input.numbers.clone());
    let sne = tape.param(nt.sne_proj);
    let nrows = tape.matmul(feats, sne);
    let mut h = tape.concat_rows(&[qrows, seprow, nrows]);

    let mut attention = Vec::with_capacity(nt.layers.len());
    for ids in &nt.layers {
        let wq = tape.param(ids.wq);
        let wk = tape.param(ids.wk);
        let wv = tape.param(ids.wv);
        let att = masked_attention(tape, h, wq, wk, wv, mask, nt.config.heads)?;
        let wo = tape.param(ids.wo);
        let bo = tape.param(ids.bo);
        let o = tape.matmul(att.output, wo);
        let o = tape.add_row(o, bo);
        let r = tape.add(h, o);
        let (g1, b1) = (tape.param(ids.ln1_g), tape.param(ids.ln1_b));
        h = tape.layer_norm(r, g1, b1);

        let (w1, c1) = (tape.param(ids.ff1_w), tape.param(ids.ff1_b));
        let (w2, c2) = (tape.param(ids.ff2_w), tape.param(ids.ff2_b));
        let f = tape.matmul(h, w1);
        let f = tape.add_row(f, c1);
        let f = tape.gelu(f);
        let f = tape.matmul(f, w2);
        let f = tape.add_row(f, c2);
        let r = tape.add(h, f);
        let (g2, b2) = (tape.param(ids.ln2_g), tape.param(ids.ln2_b));
        h = tape.layer_norm(r, g2, b2);
        attention.push(att.weights);
    }
    let numbers = tape.slice_rows(h, layout.first_number(), layout.n_numbers);
    Ok(NtOutput {
        numbers,
        hidden: h,
        attention,
    })
}
