//! Number-aware triplet loss and number prediction loss.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::softmax_in_place;
use crate::nn::{Tape, Var};
use crate::numerical::NumericalTransformer;

pub const DEFAULT_TRIPLETS: usize = 5;

/// Row indices `(s, m, b)` of one instance with `key(s) < key(m) < key(b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripletSample {
    pub small: usize,
    pub median: usize,
    pub big: usize,
}

impl TripletSample {
    pub fn new(keys: &[f64], small: usize, median: usize, big: usize) -> Result<Self> {
        let k = |i: usize| {
            keys.get(i)
                .copied()
                .ok_or_else(|| Error::data(format!("triplet index {i} out of range")))
        };
        if !(k(small)? < k(median)? && k(median)? < k(big)?) {
            return Err(Error::data("triplet keys are not strictly increasing"));
        }
        Ok(Self { small, median, big })
    }
}

fn choose3(n: usize) -> usize {
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

/// Samples up to `max` distinct strictly ordered triplets.
///
/// Distinct values are ranked; each triplet picks three distinct ranks and one
/// row per rank (the first row holding that value).
pub fn sample_triplets(keys: &[f64], max: usize, rng: &mut impl Rng) -> Vec<TripletSample> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    let mut reps: Vec<usize> = Vec::new();
    for &i in &order {
        if reps.last().is_none_or(|&r| keys[r] < keys[i]) {
            reps.push(i);
        }
    }
    let total = choose3(reps.len());
    let want = max.min(total);
    let mut out = Vec::with_capacity(want);
    if want == total {
        for a in 0..reps.len() {
            for b in a + 1..reps.len() {
                for c in b + 1..reps.len() {
                    out.push(TripletSample {
                        small: reps[a],
                        median: reps[b],
                        big: reps[c],
                    });
                }
            }
        }
        return out;
    }
    while out.len() < want {
        let mut idx = sample(rng, reps.len(), 3).into_vec();
        idx.sort_unstable();
        let t = TripletSample {
            small: reps[idx[0]],
            median: reps[idx[1]],
            big: reps[idx[2]],
        };
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// `sum max(0, eps + D(s, m) - D(s, b))` with `D = 1 - cos`; `numbers` is `m x d`.
///
/// Returns `None` when there is nothing to sum.
pub fn ntl_loss(tape: &mut Tape, numbers: Var, triplets: &[TripletSample], margin: f64) -> Option<Var> {
    let mut terms = Vec::with_capacity(triplets.len());
    for t in triplets {
        let s = tape.slice_rows(numbers, t.small, 1);
        let m = tape.slice_rows(numbers, t.median, 1);
        let b = tape.slice_rows(numbers, t.big, 1);
        let cos_sm = tape.cosine(s, m);
        let cos_sb = tape.cosine(s, b);
        // eps + (1 - cos_sm) - (1 - cos_sb)
        let diff = tape.sub(cos_sb, cos_sm);
        let shifted = tape.affine(diff, 1.0, margin);
        terms.push(tape.relu(shifted));
    }
    if terms.is_empty() {
        return None;
    }
    let stacked = tape.concat_rows(&terms);
    Some(tape.sum(stacked))
}

/// `-log p(v_q)` with `p = softmax(sigma(v W_pretrain))` over the instance's numbers.
pub fn npl_loss(tape: &mut Tape, nt: &NumericalTransformer, numbers: Var, answer_index: usize) -> Result<Var> {
    let m = tape.value(numbers).rows();
    if answer_index >= m {
        return Err(Error::data(format!(
            "answer_index {answer_index} out of range for {m} numbers"
        )));
    }
    let scores = nt.npl_scores(tape, numbers);
    Ok(tape.softmax_xent(scores, answer_index))
}

/// The NPL distribution itself.
pub fn npl_probabilities(tape: &mut Tape, nt: &NumericalTransformer, numbers: Var) -> Vec<f64> {
    let scores = nt.npl_scores(tape, numbers);
    let mut p = tape.value(scores).data().to_vec();
    softmax_in_place(&mut p);
    p
}
