//! Comprehensive reasoning: numerical relation selection, entity pruning,
//! fusion of number embeddings into candidate entities and the type mixture.

use rand::Rng;

use crate::encoders::cosine;
use crate::error::{Error, Result};
use crate::kb::{numeric_values_for, EntityId, KnowledgeBase, NumericValue, RelationId, Subgraph, Tail};
use crate::nn::tensor::{dot, softmax_in_place};
use crate::nn::{ParamGroup, ParamId, ParameterSet, Tape, Tensor, Var};
use crate::numerical::{nt_forward, NtFeaturizer, NumericalTransformer};
use crate::reasoner::{PreparedQuestion, RelationTable};

/// Ψ parameter handles.
#[derive(Clone, Debug)]
pub struct Fusion {
    w_rel: ParamId,
    w_num: ParamId,
    b_num: ParamId,
    w_inter: ParamId,
    b_inter: ParamId,
    w_pred: ParamId,
    b_pred: ParamId,
}

impl Fusion {
    pub fn init(params: &mut ParameterSet, d_enc: usize, d_h: usize, rng: &mut impl Rng) -> Result<Self> {
        let g = ParamGroup::Comprehensive;
        params.insert_xavier("fusion.w_rel", g, d_enc, d_h, rng)?;
        params.insert_xavier("fusion.w_num", g, 2 * d_h, d_h, rng)?;
        params.insert_zeros("fusion.b_num", g, 1, d_h)?;
        params.insert_xavier("fusion.w_inter", g, 2 * d_h, d_h, rng)?;
        params.insert_zeros("fusion.b_inter", g, 1, d_h)?;
        params.insert_xavier("fusion.w_pred", g, d_h, 1, rng)?;
        params.insert_zeros("fusion.b_pred", g, 1, 1)?;
        Self::attach(params)
    }

    pub fn attach(params: &ParameterSet) -> Result<Self> {
        Ok(Self {
            w_rel: params.require("fusion.w_rel")?,
            w_num: params.require("fusion.w_num")?,
            b_num: params.require("fusion.b_num")?,
            w_inter: params.require("fusion.w_inter")?,
            b_inter: params.require("fusion.b_inter")?,
            w_pred: params.require("fusion.w_pred")?,
            b_pred: params.require("fusion.b_pred")?,
        })
    }

    pub fn prediction_head(&self) -> (ParamId, ParamId) {
        (self.w_pred, self.b_pred)
    }
}

/// Top-`k` numerical relations held by subgraph entities, by cosine to the pooled question.
///
/// Ties go to the lexicographically smaller relation name.
pub fn select_numerical_relations(
    kb: &KnowledgeBase,
    relations: &RelationTable,
    subgraph: &Subgraph,
    question: &[f64],
    k: usize,
) -> Vec<RelationId> {
    let mut incident: Vec<RelationId> = subgraph
        .entities
        .iter()
        .flat_map(|&e| kb.triples_from(e))
        .map(|i| kb.triple(i))
        .filter(|t| matches!(t.tail, Tail::Value(_)))
        .map(|t| t.relation)
        .collect();
    incident.sort_unstable();
    incident.dedup();
    rank_relations(kb, relations, &incident, question, k)
}

/// Ranks `candidates` by cosine to `question` and keeps `k`.
pub fn rank_relations(
    kb: &KnowledgeBase,
    relations: &RelationTable,
    candidates: &[RelationId],
    question: &[f64],
    k: usize,
) -> Vec<RelationId> {
    let mut scored: Vec<(f64, RelationId)> = candidates
        .iter()
        .map(|&r| (cosine(relations.get(r), question), r))
        .collect();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| kb.relation(a.1).name.cmp(&kb.relation(b.1).name))
    });
    scored.into_iter().take(k).map(|(_, r)| r).collect()
}

/// Local indices of entities whose basic probability exceeds `mu`.
pub fn prune_entities(probs: &[f64], mu: f64) -> Vec<usize> {
    (0..probs.len()).filter(|&i| probs[i] > mu).collect()
}

/// Number embeddings for one selected relation over the candidates.
#[derive(Clone, Debug)]
pub struct NumberBatch {
    pub relation: RelationId,
    /// Local entity index holding each number.
    pub holders: Vec<usize>,
    pub values: Vec<NumericValue>,
    /// Frozen transformer outputs, one row per number.
    pub embeddings: Tensor,
    pub truncated: bool,
}

/// Runs the frozen transformer once per selected relation over the candidates' values.
///
/// Beyond `n_max` values the ones held by the most probable entities are kept.
#[allow(clippy::too_many_arguments)]
pub fn number_batches(
    kb: &KnowledgeBase,
    params: &ParameterSet,
    nt: &NumericalTransformer,
    feat: &NtFeaturizer,
    q: &PreparedQuestion,
    relations: &[RelationId],
    candidates: &[usize],
    basic_probs: &[f64],
    n_max: usize,
) -> Result<Vec<NumberBatch>> {
    let ents: Vec<EntityId> = candidates.iter().map(|&i| q.subgraph.entities[i]).collect();
    let mut out = Vec::new();
    for &r in relations {
        let found = numeric_values_for(kb, r, &ents)?;
        if found.is_empty() {
            continue;
        }
        let holders: Vec<usize> = found
            .iter()
            .map(|(e, _)| q.subgraph.local_index(*e).expect("candidate is in the subgraph"))
            .collect();
        let values: Vec<NumericValue> = found.into_iter().map(|(_, v)| v).collect();
        let relevance: Vec<f64> = holders.iter().map(|&h| basic_probs[h]).collect();
        let (input, report) = feat.build_input(&q.encoding, &values, Some(&relevance), n_max)?;
        let mut tape = Tape::with_frozen(params, &ParamGroup::ALL);
        let mask = nt.mask_for(&input);
        let nt_out = nt_forward(nt, &mut tape, &input, &mask)?;
        out.push(NumberBatch {
            relation: r,
            holders: report.kept.iter().map(|&i| holders[i]).collect(),
            values: report.kept.iter().map(|&i| values[i].clone()).collect(),
            embeddings: tape.value(nt_out.numbers).clone(),
            truncated: report.truncated(),
        });
    }
    Ok(out)
}

/// Per-candidate attention over its `(relation, number)` facts: softmax of `r^T q`.
///
/// Returns one `(batch, row, weight)` list per candidate; empty when it has no facts.
pub fn neighborhood_weights(
    relations: &RelationTable,
    question: &[f64],
    batches: &[NumberBatch],
    candidates: &[usize],
) -> Vec<Vec<(usize, usize, f64)>> {
    candidates
        .iter()
        .map(|&c| {
            let facts: Vec<(usize, usize)> = batches
                .iter()
                .enumerate()
                .flat_map(|(b, batch)| {
                    batch
                        .holders
                        .iter()
                        .enumerate()
                        .filter(move |&(_, &h)| h == c)
                        .map(move |(row, _)| (b, row))
                })
                .collect();
            let mut logits: Vec<f64> = facts
                .iter()
                .map(|&(b, _)| dot(relations.get(batches[b].relation), question))
                .collect();
            softmax_in_place(&mut logits);
            facts.into_iter().zip(logits).map(|((b, r), w)| (b, r, w)).collect()
        })
        .collect()
}

pub struct ComprehensiveOutput {
    /// Final per-entity probabilities after the type mixture, `n x 1`.
    pub probabilities: Var,
    /// Comprehensive probabilities of the candidates, `c x 1`, when fusion ran.
    pub candidate_probabilities: Option<Var>,
    pub candidates: Vec<usize>,
    pub fallback: bool,
}

/// Fuses number embeddings into candidates and mixes with the basic prediction.
///
/// `entities` are the reasoner's final embeddings (`n x d_h`) and `p_basic` its
/// probabilities (`n x 1`). Non-candidates keep `p_basic`; with no candidate or
/// no number batch the output is `p_basic` itself.
#[allow(clippy::too_many_arguments)]
pub fn comprehensive_forward(
    fusion: &Fusion,
    tape: &mut Tape,
    relations: &RelationTable,
    question: &[f64],
    entities: Var,
    p_basic: Var,
    batches: &[NumberBatch],
    candidates: &[usize],
    p_ordinal: f64,
) -> Result<ComprehensiveOutput> {
    let n = tape.value(p_basic).rows();
    if tape.value(entities).rows() != n {
        return Err(Error::shape("entity embeddings and basic probabilities disagree"));
    }
    if !(0.0..=1.0).contains(&p_ordinal) {
        return Err(Error::data(format!("ordinal probability {p_ordinal} outside [0, 1]")));
    }
    if candidates.is_empty() || batches.is_empty() {
        return Ok(ComprehensiveOutput {
            probabilities: p_basic,
            candidate_probabilities: None,
            candidates: candidates.to_vec(),
            fallback: true,
        });
    }
    let d_h = tape.value(entities).cols();
    let weights = neighborhood_weights(relations, question, batches, candidates);
    let c = candidates.len();

    let mut rel_rows = Vec::new();
    let mut num_rows = Vec::new();
    let mut alpha = Vec::new();
    let mut owner = Vec::new();
    for (ci, facts) in weights.iter().enumerate() {
        for &(b, row, w) in facts {
            rel_rows.push(relations.get(batches[b].relation).to_vec());
            let emb = batches[b].embeddings.row(row);
            if emb.len() != d_h {
                return Err(Error::shape(format!("number embedding width {} != {d_h}", emb.len())));
            }
            num_rows.push(emb.to_vec());
            alpha.push(w);
            owner.push(ci);
        }
    }
    let fused = if owner.is_empty() {
        tape.constant(Tensor::zeros(c, d_h))
    } else {
        let r = tape.constant(Tensor::from_rows(&rel_rows)?);
        let w_rel = tape.param(fusion.w_rel);
        let r = tape.matmul(r, w_rel);
        let v = tape.constant(Tensor::from_rows(&num_rows)?);
        let x = tape.concat_cols(&[r, v]);
        let w_num = tape.param(fusion.w_num);
        let b_num = tape.param(fusion.b_num);
        let y = tape.matmul(x, w_num);
        let y = tape.add_row(y, b_num);
        let a = tape.constant(Tensor::col_vector(alpha));
        let y = tape.mul_col(y, a);
        tape.scatter_add_rows(y, &owner, c)
    };
    let e_c = tape.gather_rows(entities, candidates);
    let joined = tape.concat_cols(&[e_c, fused]);
    let w_inter = tape.param(fusion.w_inter);
    let b_inter = tape.param(fusion.b_inter);
    let hat = tape.matmul(joined, w_inter);
    let hat = tape.add_row(hat, b_inter);
    let w_pred = tape.param(fusion.w_pred);
    let b_pred = tape.param(fusion.b_pred);
    let z = tape.matmul(hat, w_pred);
    let z = tape.add_row(z, b_pred);
    let p_c = tape.sigmoid(z);

    // Comprehensive term over all entities: candidates fused, the rest basic.
    let mut keep = vec![1.0; n];
    for &i in candidates {
        keep[i] = 0.0;
    }
    let keep = tape.constant(Tensor::col_vector(keep));
    let rest = tape.mul(p_basic, keep);
    let placed = tape.scatter_add_rows(p_c, candidates, n);
    let p_comp = tape.add(placed, rest);
    let probabilities = mixture(tape, p_basic, p_comp, p_ordinal);
    Ok(ComprehensiveOutput {
        probabilities,
        candidate_probabilities: Some(p_c),
        candidates: candidates.to_vec(),
        fallback: false,
    })
}

/// `p_ord * p_comp + (1 - p_ord) * p_basic`, elementwise.
pub fn mixture(tape: &mut Tape, p_basic: Var, p_comp: Var, p_ordinal: f64) -> Var {
    let a = tape.scale(p_comp, p_ordinal);
    let b = tape.scale(p_basic, 1.0 - p_ordinal);
    tape.add(a, b)
}

/// Plain-number form of the mixture.
pub fn mixture_predict(p_basic: &[f64], p_comp: &[f64], p_ordinal: f64) -> Vec<f64> {
    p_basic
        .iter()
        .zip(p_comp)
        .map(|(b, c)| p_ordinal * c + (1.0 - p_ordinal) * b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{EncoderConfig, FrozenEncoder};
    use crate::kb::{RelationMeta, UnitTable};
    use crate::nn::{grad_check, GradCheckConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(vectors: Vec<Vec<f64>>) -> RelationTable {
        RelationTable { vectors }
    }

    #[test]
    fn pruning_examples() {
        assert_eq!(prune_entities(&[0.9, 0.04, 0.06], 0.05), [0, 2]);
        assert_eq!(prune_entities(&[0.3, 1e-9, 0.0], 0.0), [0, 1]);
    }

    #[test]
    fn mixture_examples() {
        assert_eq!(mixture_predict(&[0.2], &[0.8], 0.5), [0.5]);
        assert_eq!(mixture_predict(&[0.2, 0.7], &[0.8, 0.1], 1.0), [0.8, 0.1]);
        assert_eq!(mixture_predict(&[0.2, 0.7], &[0.8, 0.1], 0.0), [0.2, 0.7]);
    }

    proptest! {
        #[test]
        fn mixture_is_convex(b in 0.0f64..1.0, c in 0.0f64..1.0, t in 0.0f64..1.0) {
            let p = mixture_predict(&[b], &[c], t)[0];
            prop_assert!(p >= b.min(c) - 1e-12 && p <= b.max(c) + 1e-12);
        }
    }

    fn kb_three_relations() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(
            vec![
                RelationMeta::non_numerical("album"),
                RelationMeta::time("release_date"),
                RelationMeta::size("sales", ""),
                RelationMeta::size("length", "s"),
            ],
            UnitTable::default(),
        )
        .unwrap();
        kb.add_triple("artist", "album", "a1").unwrap();
        kb.add_triple("artist", "album", "a2").unwrap();
        kb.add_triple("a1", "release_date", "2017.11.10").unwrap();
        kb.add_triple("a2", "release_date", "2020.07.23").unwrap();
        kb.add_triple("a1", "sales", "100").unwrap();
        kb.add_triple("a2", "length", "300 s").unwrap();
        kb
    }

    #[test]
    fn selection_clamps_and_ranks() {
        let kb = kb_three_relations();
        let sub = crate::kb::two_hop_subgraph(&kb, &[kb.entity_id("artist").unwrap()]).unwrap();
        let q = vec![1.0, 0.0];
        let rt = table(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
        let got = select_numerical_relations(&kb, &rt, &sub, &q, 3);
        let names: Vec<&str> = got.iter().map(|&r| kb.relation(r).name.as_str()).collect();
        // Parallel first, then the diagonal one, then the orthogonal one.
        assert_eq!(names, ["release_date", "length", "sales"]);
        assert_eq!(select_numerical_relations(&kb, &rt, &sub, &q, 1).len(), 1);
        let only_two = table(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let tie = select_numerical_relations(&kb, &only_two, &sub, &q, 3);
        // length and sales tie on cosine; name order breaks it.
        assert_eq!(kb.relation(tie[1]).name, "length");
    }

    #[test]
    fn ranking_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let metas: Vec<RelationMeta> = (0..12).map(|i| RelationMeta::size(format!("r{i:02}"), "")).collect();
        let kb = KnowledgeBase::new(metas, UnitTable::default()).unwrap();
        for _ in 0..20 {
            let vecs: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let q: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ids: Vec<RelationId> = (0..12).map(RelationId).collect();
            let got = rank_relations(&kb, &table(vecs.clone()), &ids, &q, 12);
            let mut want: Vec<usize> = (0..12).collect();
            want.sort_by(|&a, &b| cosine(&vecs[b], &q).partial_cmp(&cosine(&vecs[a], &q)).unwrap());
            assert_eq!(got.iter().map(|r| r.index()).collect::<Vec<_>>(), want);
        }
    }

    fn batch(relation: u32, holders: Vec<usize>, rows: Vec<Vec<f64>>) -> NumberBatch {
        NumberBatch {
            relation: RelationId(relation),
            values: holders.iter().map(|_| NumericValue::plain("1").unwrap()).collect(),
            holders,
            embeddings: Tensor::from_rows(&rows).unwrap(),
            truncated: false,
        }
    }

    #[test]
    fn neighborhood_attention() {
        let rt = table(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let q = [2.0, 2.0];
        let batches = vec![
            batch(0, vec![0, 1], vec![vec![0.0]; 2]),
            batch(1, vec![0], vec![vec![0.0]]),
        ];
        let w = neighborhood_weights(&rt, &q, &batches, &[0, 1, 2]);
        assert_eq!(w[0].len(), 2);
        assert!((w[0][0].2 - 0.5).abs() < 1e-12 && (w[0][1].2 - 0.5).abs() < 1e-12);
        assert_eq!(w[1], vec![(0, 1, 1.0)]);
        assert!(w[2].is_empty());
        let batches = vec![batch(0, vec![0], vec![vec![0.0]]), batch(2, vec![0], vec![vec![0.0]])];
        let q = [3.0, -1.0];
        let w = neighborhood_weights(&rt, &q, &batches, &[0]);
        assert!((w[0].iter().map(|x| x.2).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    struct Toy {
        params: ParameterSet,
        fusion: Fusion,
        rt: RelationTable,
    }

    fn toy(d: usize, seed: u64) -> Toy {
        let mut params = ParameterSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fusion = Fusion::init(&mut params, d, d, &mut rng).unwrap();
        let rt = table(
            (0..3)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        );
        Toy { params, fusion, rt }
    }

    fn rand_tensor(r: usize, c: usize, rng: &mut impl rand::Rng) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_head_gives_half_and_fallbacks() {
        let mut t = toy(4, 0);
        let (w, b) = t.fusion.prediction_head();
        *t.params.value_mut(w) = Tensor::zeros(4, 1);
        *t.params.value_mut(b) = Tensor::zeros(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new(&t.params);
        let e = tape.constant(rand_tensor(3, 4, &mut rng));
        let pb = tape.constant(Tensor::col_vector(vec![0.7, 0.2, 0.1]));
        let batches = vec![batch(0, vec![0, 1], vec![vec![0.1; 4], vec![0.2; 4]])];
        let q = [0.3, 0.1, 0.0, 0.5];
        let out = comprehensive_forward(&t.fusion, &mut tape, &t.rt, &q, e, pb, &batches, &[0, 1], 1.0).unwrap();
        let p = tape.value(out.probabilities).data().to_vec();
        assert_eq!(p, vec![0.5, 0.5, 0.1]);
        // No batch or no candidate: exactly the basic probabilities.
        for (b, c) in [(&[][..], &[0usize, 1][..]), (&batches[..], &[][..])] {
            let out = comprehensive_forward(&t.fusion, &mut tape, &t.rt, &q, e, pb, b, c, 0.9).unwrap();
            assert!(out.fallback);
            assert_eq!(tape.value(out.probabilities).data(), &[0.7, 0.2, 0.1]);
        }
    }

    #[test]
    fn hand_computed_two_entity_toy() {
        let t = toy(2, 3);
        let mut tape = Tape::new(&t.params);
        let e_rows = vec![vec![0.5, -0.2], vec![0.1, 0.4]];
        let e = tape.constant(Tensor::from_rows(&e_rows).unwrap());
        let pb = tape.constant(Tensor::col_vector(vec![0.4, 0.6]));
        let v = vec![vec![0.3, 0.9]];
        let batches = vec![batch(1, vec![1], v.clone())];
        let q = [1.0, 2.0];
        let out = comprehensive_forward(&t.fusion, &mut tape, &t.rt, &q, e, pb, &batches, &[0, 1], 0.25).unwrap();
        let got = tape.value(out.probabilities).data().to_vec();

        let p = |name: &str| t.params.value(t.params.require(name).unwrap()).clone();
        let affine = |x: &[f64], w: &Tensor, b: &Tensor| -> Vec<f64> {
            (0..w.cols())
                .map(|j| (0..x.len()).map(|i| x[i] * w.get(i, j)).sum::<f64>() + b.get(0, j))
                .collect()
        };
        let zero_b = Tensor::zeros(1, 2);
        let r = affine(&t.rt.vectors[1], &p("fusion.w_rel"), &zero_b);
        let tilde1 = affine(&[r, v[0].clone()].concat(), &p("fusion.w_num"), &p("fusion.b_num"));
        let pc = |e_i: &[f64], tilde: &[f64]| {
            let hat = affine(&[e_i, tilde].concat(), &p("fusion.w_inter"), &p("fusion.b_inter"));
            let z = affine(&hat, &p("fusion.w_pred"), &p("fusion.b_pred"))[0];
            1.0 / (1.0 + (-z).exp())
        };
        let want0 = 0.25 * pc(&e_rows[0], &[0.0, 0.0]) + 0.75 * 0.4;
        let want1 = 0.25 * pc(&e_rows[1], &tilde1) + 0.75 * 0.6;
        assert!((got[0] - want0).abs() < 1e-6);
        assert!((got[1] - want1).abs() < 1e-6);
        for x in &got {
            assert!(*x > 0.0 && *x < 1.0);
        }
    }

    #[test]
    fn composite_gradients_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..5 {
            let t = toy(3, trial);
            let e = rand_tensor(4, 3, &mut rng);
            let batches = vec![
                batch(0, vec![0, 2], vec![vec![0.2, -0.4, 0.9], vec![0.5, 0.1, -0.3]]),
                batch(2, vec![2], vec![vec![-0.6, 0.3, 0.2]]),
            ];
            let q = [0.4, -0.2, 0.7];
            let targets = [0.0, 0.0, 1.0, 0.0];
            let f = |p: &ParameterSet| {
                let mut tape = Tape::new(p);
                let ev = tape.constant(e.clone());
                let pb = tape.constant(Tensor::col_vector(vec![0.3, 0.2, 0.4, 0.01]));
                let out = comprehensive_forward(&t.fusion, &mut tape, &t.rt, &q, ev, pb, &batches, &[0, 1, 2], 0.8)?;
                let l = tape.bce(out.probabilities, &targets);
                Ok((tape.scalar(l), tape.backward(l)))
            };
            let rep = grad_check(&t.params, f, &GradCheckConfig::default()).unwrap();
            assert!(rep.max_rel_error < 1e-4, "{rep:?}");
        }
    }

    #[test]
    fn empty_neighborhood_equals_explicit_zero_branch() {
        let t = toy(2, 9);
        let mut tape = Tape::new(&t.params);
        let e = tape.constant(Tensor::from_rows(&[vec![0.3, 0.1], vec![-0.2, 0.5]]).unwrap());
        let pb = tape.constant(Tensor::col_vector(vec![0.5, 0.5]));
        // Entity 0 has no facts; entity 1 has one.
        let batches = vec![batch(0, vec![1], vec![vec![0.4, 0.4]])];
        let out =
            comprehensive_forward(&t.fusion, &mut tape, &t.rt, &[1.0, 0.0], e, pb, &batches, &[0, 1], 1.0).unwrap();
        let with_fusion = tape.value(out.probabilities).get(0, 0);
        let e0 = tape.slice_rows(e, 0, 1);
        let zero = tape.constant(Tensor::zeros(1, 2));
        let joined = tape.concat_cols(&[e0, zero]);
        let wi = tape.param(t.fusion.w_inter);
        let bi = tape.param(t.fusion.b_inter);
        let h = tape.matmul(joined, wi);
        let h = tape.add_row(h, bi);
        let (w, b) = t.fusion.prediction_head();
        let w = tape.param(w);
        let b = tape.param(b);
        let z = tape.matmul(h, w);
        let z = tape.add_row(z, b);
        let p = tape.sigmoid(z);
        assert!((tape.scalar(p) - with_fusion).abs() < 1e-15);
    }

    #[test]
    fn number_batches_cover_candidate_values() {
        let kb = kb_three_relations();
        let enc = FrozenEncoder::new(EncoderConfig { d_enc: 8, seed: 0 }).unwrap();
        let rt = RelationTable::build(&kb, &enc).unwrap();
        let artist = kb.entity_id("artist").unwrap();
        let a2 = kb.entity_id("a2").unwrap();
        let q = crate::reasoner::prepare_question(
            &kb,
            &enc,
            &rt,
            "What is the latest album ?",
            &[artist],
            &[a2],
            &Default::default(),
        )
        .unwrap();
        let feat = NtFeaturizer::new(EncoderConfig { d_enc: 8, seed: 0 }, crate::encoders::SneMode::StartEnd).unwrap();
        let mut params = ParameterSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = crate::numerical::NtConfig {
            d_h: 8,
            heads: 2,
            ..Default::default()
        };
        let nt = NumericalTransformer::init(&mut params, cfg, 8, feat.numbers.feature_dim(), &mut rng).unwrap();
        let rd = kb.relation_id("release_date").unwrap();
        let sales = kb.relation_id("sales").unwrap();
        let all: Vec<usize> = (0..q.num_entities()).collect();
        let probs = vec![0.5; q.num_entities()];
        let b = number_batches(&kb, &params, &nt, &feat, &q, &[rd, sales], &all, &probs, 50).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].values.len(), 2);
        assert_eq!(b[0].embeddings.shape(), [2, 8]);
        let a1_local = q.subgraph.local_index(kb.entity_id("a1").unwrap()).unwrap();
        let only_a1 = number_batches(&kb, &params, &nt, &feat, &q, &[rd, sales], &[a1_local], &probs, 50).unwrap();
        assert_eq!(only_a1.iter().map(|b| b.values.len()).sum::<usize>(), 2);
        let truncated = number_batches(&kb, &params, &nt, &feat, &q, &[rd], &all, &probs, 1).unwrap();
        assert!(truncated[0].truncated);
    }
}
