//! Value-ordered self-attention mask.
//!
//! Row layout: `n` question tokens, one `[SEP]`, then `m` numbers.

use crate::nn::{Tensor, MASK_SENTINEL};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_question: usize,
    pub n_numbers: usize,
}

impl Layout {
    pub fn sep(&self) -> usize {
        self.n_question
    }

    pub fn first_number(&self) -> usize {
        self.n_question + 1
    }

    pub fn len(&self) -> usize {
        self.n_question + 1 + self.n_numbers
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Additive mask: 0 where attention is permitted, the sentinel elsewhere.
///
/// Question rows and `[SEP]` see question tokens and `[SEP]`; a number row
/// additionally sees every number with a strictly smaller sort key. With
/// `sam` off every entry is 0.
pub fn build_mask(layout: Layout, sort_keys: &[f64], sam: bool) -> Tensor {
    assert_eq!(sort_keys.len(), layout.n_numbers, "one sort key per number");
    let n = layout.len();
    if !sam {
        return Tensor::zeros(n, n);
    }
    let mut m = Tensor::filled(n, n, MASK_SENTINEL);
    let context = layout.first_number();
    for r in 0..n {
        m.row_mut(r)[..context].fill(0.0);
    }
    for (i, &ki) in sort_keys.iter().enumerate() {
        let row = m.row_mut(context + i);
        for (j, &kj) in sort_keys.iter().enumerate() {
            if ki > kj {
                row[context + j] = 0.0;
            }
        }
    }
    m
}
