//! Multi-head scaled dot-product attention with an additive mask.

use super::tape::{Tape, Var};
use super::tensor::{Tensor, MASK_SENTINEL};
use crate::error::{Error, Result};

pub struct AttentionOutput {
    /// Concatenated head outputs, `n_tok x d_h`.
    pub output: Var,
    /// Per-head attention weight matrices, each `n_tok x n_tok`.
    pub weights: Vec<Var>,
}

/// Returns true when the mask entry permits attention.
#[inline]
pub fn permitted(entry: f64) -> bool {
    entry > MASK_SENTINEL / 2.0
}

/// Checks that `mask` is `n x n` and that every row permits at least one column.
pub fn validate_mask(mask: &Tensor, n: usize) -> Result<()> {
    if mask.rows() != n || mask.cols() != n {
        return Err(Error::shape(format!(
            "mask is {}x{}, expected {n}x{n}",
            mask.rows(),
            mask.cols()
        )));
    }
    for r in 0..n {
        if !mask.row(r).iter().any(|&m| permitted(m)) {
            return Err(Error::shape(format!("mask row {r} forbids every column")));
        }
    }
    Ok(())
}

/// `A = softmax(Q K^T / sqrt(d_k) + M) V` per head, heads concatenated.
///
/// `wq`, `wk`, `wv` are `d_h x d_h`; head `k` uses columns `k*d_k .. (k+1)*d_k`.
pub fn masked_attention(
    tape: &mut Tape,
    h: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    mask: &Tensor,
    heads: usize,
) -> Result<AttentionOutput> {
    let [n_tok, d_h] = tape.value(h).shape();
    if heads == 0 || d_h % heads != 0 {
        return Err(Error::shape(format!("d_h={d_h} is not divisible by heads={heads}")));
    }
    for w in [wq, wk, wv] {
        let s = tape.value(w).shape();
        if s[0] != d_h {
            return Err(Error::shape(format!("projection is {s:?}, expected {d_h} rows")));
        }
    }
    validate_mask(mask, n_tok)?;
    let d_k = d_h / heads;
    let q = tape.matmul(h, wq);
    let k = tape.matmul(h, wk);
    let v = tape.matmul(h, wv);
    let m = tape.constant(mask.clone());
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for head in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, head * d_k, d_k),
                tape.slice_cols(k, head * d_k, d_k),
                tape.slice_cols(v, head * d_k, d_k),
            )
        };
        let scores = tape.matmul_nt(qh, kh);
        let scaled = tape.scale(scores, scale);
        let masked = tape.add(scaled, m);
        let w = tape.softmax_rows(masked);
        outs.push(tape.matmul(w, vh));
        weights.push(w);
    }
    let output = if heads == 1 { outs[0] } else { tape.concat_cols(&outs) };
    Ok(AttentionOutput { output, weights })
}
