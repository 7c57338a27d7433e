//! Question-conditioned GNN over the retrieved subgraph (basic reasoner).
//!
//! Per step an instruction is read off the question words with a step query,
//! each edge is gated by how well its relation matches the instruction, and
//! messages weighted by the source entity's attention update the entity states.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{FrozenEncoder, QuestionEncoding};
use crate::error::{Error, Result};
use crate::kb::{personalized_pagerank, two_hop_subgraph, EntityId, KnowledgeBase, RelationId, Subgraph};
use crate::nn::{optimize_step, Gradients, OptimizerState, ParamGroup, ParamId, ParameterSet, Tape, Tensor, Var};

pub const DEFAULT_STEPS: usize = 3;

/// Frozen relation vectors for every relation of a knowledge base.
#[derive(Clone, Debug)]
pub struct RelationTable {
    pub vectors: Vec<Vec<f64>>,
}

impl RelationTable {
    pub fn build(kb: &KnowledgeBase, encoder: &FrozenEncoder) -> Result<Self> {
        let vectors = kb
            .relations()
            .map(|(_, m)| encoder.encode_relation(m))
            .collect::<Result<_>>()?;
        Ok(Self { vectors })
    }

    pub fn get(&self, r: RelationId) -> &[f64] {
        &self.vectors[r.index()]
    }
}

/// Everything about one question that stays fixed during training.
#[derive(Clone, Debug)]
pub struct PreparedQuestion {
    pub subgraph: Subgraph,
    pub encoding: QuestionEncoding,
    /// Local `(src, relation slot, dst)` edges.
    pub edges: Vec<(usize, usize, usize)>,
    /// Relations used by `edges`, indexed by slot.
    pub relations: Vec<RelationId>,
    /// Frozen relation vectors, one row per slot.
    pub relation_features: Tensor,
    /// Frozen initial entity features: mean outgoing and mean incoming relation vectors.
    pub e0: Tensor,
    pub topics: Vec<usize>,
    /// Local indices of gold answers found in the subgraph.
    pub answers: Vec<usize>,
}

impl PreparedQuestion {
    pub fn num_entities(&self) -> usize {
        self.subgraph.len()
    }

    pub fn answer_targets(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.num_entities()];
        for &a in &self.answers {
            t[a] = 1.0;
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub damping: f64,
    pub top_n: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            damping: crate::kb::DEFAULT_DAMPING,
            top_n: crate::kb::DEFAULT_TOP_N,
        }
    }
}

/// Retrieves and prunes the subgraph, encodes the question and collects frozen features.
pub fn prepare_question(
    kb: &KnowledgeBase,
    encoder: &FrozenEncoder,
    relations: &RelationTable,
    question: &str,
    topics: &[EntityId],
    answers: &[EntityId],
    retrieval: &RetrievalConfig,
) -> Result<PreparedQuestion> {
    let sub = two_hop_subgraph(kb, topics)?;
    let sub = personalized_pagerank(kb, &sub, retrieval.damping, retrieval.top_n)?.pruned;
    let encoding = encoder.encode_question(question)?;
    let d = encoder.d_enc();
    let mut slots: Vec<RelationId> = Vec::new();
    let mut edges = Vec::new();
    for (s, r, t) in sub.local_edges(kb) {
        let slot = match slots.iter().position(|&x| x == r) {
            Some(i) => i,
            None => {
                slots.push(r);
                slots.len() - 1
            }
        };
        edges.push((s, slot, t));
    }
    let mut relation_features = Tensor::zeros(slots.len(), d);
    for (i, &r) in slots.iter().enumerate() {
        relation_features.row_mut(i).copy_from_slice(relations.get(r));
    }
    let n = sub.len();
    let mut e0 = Tensor::zeros(n, 2 * d);
    let mut deg = vec![[0usize; 2]; n];
    for &(s, slot, t) in &edges {
        let rv = relation_features.row(slot).to_vec();
        for (side, ent) in [(0, s), (1, t)] {
            deg[ent][side] += 1;
            let row = &mut e0.row_mut(ent)[side * d..(side + 1) * d];
            row.iter_mut().zip(&rv).for_each(|(a, b)| *a += b);
        }
    }
    for (ent, dg) in deg.iter().enumerate() {
        for side in 0..2 {
            if dg[side] > 0 {
                let k = dg[side] as f64;
                e0.row_mut(ent)[side * d..(side + 1) * d]
                    .iter_mut()
                    .for_each(|a| *a /= k);
            }
        }
    }
    let topics_local = topics
        .iter()
        .map(|&t| sub.local_index(t).expect("topics are kept by retrieval"))
        .collect();
    let answers_local = answers.iter().filter_map(|&a| sub.local_index(a)).collect();
    Ok(PreparedQuestion {
        subgraph: sub,
        encoding,
        edges,
        relations: slots,
        relation_features,
        e0,
        topics: topics_local,
        answers: answers_local,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsmConfig {
    pub d_enc: usize,
    pub d_h: usize,
    pub steps: usize,
}

/// Output of the reasoning steps.
pub struct NsmOutput {
    /// Final entity embeddings, `n x d_h`.
    pub entities: Var,
    /// Entity attention after each step (index 0 is the initial one), each `n x 1`.
    pub attention: Vec<Var>,
}

/// The seam other GNN backends would plug into.
pub trait BasicReasoner {
    fn forward(&self, tape: &mut Tape, q: &PreparedQuestion) -> Result<NsmOutput>;
    fn predict(&self, tape: &mut Tape, entities: Var) -> Var;
}

/// Parameter handles of the NSM-style reasoner (all in group Φ).
#[derive(Clone, Debug)]
pub struct Nsm {
    pub config: NsmConfig,
    w_in: ParamId,
    w_word: ParamId,
    step_query: Vec<ParamId>,
    w_rel: ParamId,
    w_rel_inv: ParamId,
    w_upd: ParamId,
    b_upd: ParamId,
    w_att: ParamId,
    w_pred: ParamId,
    b_pred: ParamId,
}

impl Nsm {
    pub fn init(params: &mut ParameterSet, config: NsmConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.steps == 0 {
            return Err(Error::config("the reasoner needs at least one step"));
        }
        let (de, dh) = (config.d_enc, config.d_h);
        let g = ParamGroup::Basic;
        params.insert_xavier("nsm.w_in", g, 2 * de, dh, rng)?;
        params.insert_xavier("nsm.w_word", g, de, dh, rng)?;
        for t in 0..config.steps {
            params.insert_xavier(format!("nsm.step_query.{t}"), g, 1, dh, rng)?;
        }
        params.insert_xavier("nsm.w_rel", g, de, dh, rng)?;
        params.insert_xavier("nsm.w_rel_inv", g, de, dh, rng)?;
        params.insert_xavier("nsm.w_upd", g, 2 * dh, dh, rng)?;
        params.insert_zeros("nsm.b_upd", g, 1, dh)?;
        params.insert_xavier("nsm.w_att", g, dh, 1, rng)?;
        params.insert_xavier("nsm.w_pred", g, dh, 1, rng)?;
        params.insert_zeros("nsm.b_pred", g, 1, 1)?;
        Self::attach(params, config)
    }

    /// Looks up existing parameters by path.
    pub fn attach(params: &ParameterSet, config: NsmConfig) -> Result<Self> {
        let step_query = (0..config.steps)
            .map(|t| params.require(&format!("nsm.step_query.{t}")))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            w_in: params.require("nsm.w_in")?,
            w_word: params.require("nsm.w_word")?,
            step_query,
            w_rel: params.require("nsm.w_rel")?,
            w_rel_inv: params.require("nsm.w_rel_inv")?,
            w_upd: params.require("nsm.w_upd")?,
            b_upd: params.require("nsm.b_upd")?,
            w_att: params.require("nsm.w_att")?,
            w_pred: params.require("nsm.w_pred")?,
            b_pred: params.require("nsm.b_pred")?,
        })
    }

    pub fn prediction_head(&self) -> (ParamId, ParamId) {
        (self.w_pred, self.b_pred)
    }
}

/// Softmax down a column vector.
fn softmax_col(tape: &mut Tape, x: Var) -> Var {
    let t = tape.transpose(x);
    let s = tape.softmax_rows(t);
    tape.transpose(s)
}

impl BasicReasoner for Nsm {
    fn forward(&self, tape: &mut Tape, q: &PreparedQuestion) -> Result<NsmOutput> {
        nsm_forward(self, tape, q)
    }

    fn predict(&self, tape: &mut Tape, entities: Var) -> Var {
        predict_basic(self, tape, entities)
    }
}

/// Runs the reasoning steps and returns the final entity embeddings.
pub fn nsm_forward(nsm: &Nsm, tape: &mut Tape, q: &PreparedQuestion) -> Result<NsmOutput> {
    let n = q.num_entities();
    if n == 0 {
        return Err(Error::Reasoning("subgraph has no entities".into()));
    }
    if q.topics.is_empty() {
        return Err(Error::Reasoning("no topic entity in the subgraph".into()));
    }
    let dh = nsm.config.d_h;
    let e0 = tape.constant(q.e0.clone());
    let w_in = tape.param(nsm.w_in);
    let mut h = tape.matmul(e0, w_in);

    let words = tape.constant(q.encoding.words.clone());
    let w_word = tape.param(nsm.w_word);
    let qp = tape.matmul(words, w_word);

    // directed edges plus their inverses
    let m = q.edges.len();
    let mut src = Vec::with_capacity(2 * m);
    let mut dst = Vec::with_capacity(2 * m);
    let mut er = None;
    if m > 0 {
        let slots: Vec<usize> = q.edges.iter().map(|e| e.1).collect();
        let rf = tape.constant(q.relation_features.clone());
        let fwd_w = tape.param(nsm.w_rel);
        let inv_w = tape.param(nsm.w_rel_inv);
        let fwd = tape.matmul(rf, fwd_w);
        let inv = tape.matmul(rf, inv_w);
        let fwd = tape.gather_rows(fwd, &slots);
        let inv = tape.gather_rows(inv, &slots);
        er = Some(tape.concat_rows(&[fwd, inv]));
        src.extend(q.edges.iter().map(|e| e.0));
        src.extend(q.edges.iter().map(|e| e.2));
        dst.extend(q.edges.iter().map(|e| e.2));
        dst.extend(q.edges.iter().map(|e| e.0));
    }
    let ones = tape.constant(Tensor::filled(2 * m.max(1), 1, 1.0));

    let mut p0 = Tensor::zeros(n, 1);
    let mut topics = q.topics.clone();
    topics.sort_unstable();
    topics.dedup();
    for &t in &topics {
        p0.set(t, 0, 1.0 / topics.len() as f64);
    }
    let mut p = tape.constant(p0);
    let mut attention = vec![p];
    let w_upd = tape.param(nsm.w_upd);
    let b_upd = tape.param(nsm.b_upd);
    let w_att = tape.param(nsm.w_att);
    for t in 0..nsm.config.steps {
        let u = tape.param(nsm.step_query[t]);
        let scores = tape.matmul_nt(u, qp);
        let att = tape.softmax_rows(scores);
        let ins = tape.matmul(att, qp);
        let agg = match er {
            Some(er) => {
                let gate_logit = tape.matmul_nt(er, ins);
                let gate = tape.sigmoid(gate_logit);
                let ps = tape.gather_rows(p, &src);
                let weight = tape.mul(gate, ps);
                let ins_b = tape.matmul(ones, ins);
                let hs = tape.gather_rows(h, &src);
                let body = tape.mul(er, ins_b);
                let body = tape.add(body, hs);
                let msg = tape.mul_col(body, weight);
                tape.scatter_add_rows(msg, &dst, n)
            }
            None => tape.constant(Tensor::zeros(n, dh)),
        };
        let cat = tape.concat_cols(&[h, agg]);
        let z = tape.matmul(cat, w_upd);
        let z = tape.add_row(z, b_upd);
        h = tape.tanh(z);
        let logits = tape.matmul(h, w_att);
        p = softmax_col(tape, logits);
        attention.push(p);
    }
    Ok(NsmOutput { entities: h, attention })
}

/// `sigmoid(E w_pred + b_pred)`, an `n x 1` column.
pub fn predict_basic(nsm: &Nsm, tape: &mut Tape, entities: Var) -> Var {
    let w = tape.param(nsm.w_pred);
    let b = tape.param(nsm.b_pred);
    let z = tape.matmul(entities, w);
    let z = tape.add_row(z, b);
    tape.sigmoid(z)
}

/// Index of the highest probability; ties go to the lowest index.
pub fn argmax_lowest(p: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in p.iter().enumerate() {
        if best.is_none_or(|b| x > p[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total: usize,
    pub usable: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasicTrainReport {
    pub coverage: CoverageReport,
    pub epoch_losses: Vec<f64>,
    pub train_hits1: f64,
}

/// Loss and gradients of per-entity BCE for one question.
pub fn basic_loss(nsm: &Nsm, params: &ParameterSet, q: &PreparedQuestion) -> Result<(f64, Gradients)> {
    let mut tape = Tape::with_frozen(params, &[ParamGroup::Numerical, ParamGroup::Comprehensive]);
    let out = nsm_forward(nsm, &mut tape, q)?;
    let p = predict_basic(nsm, &mut tape, out.entities);
    let loss = tape.bce(p, &q.answer_targets());
    Ok((tape.scalar(loss), tape.backward(loss)))
}

pub fn basic_probabilities(nsm: &Nsm, params: &ParameterSet, q: &PreparedQuestion) -> Result<Vec<f64>> {
    let mut tape = Tape::with_frozen(params, &ParamGroup::ALL);
    let out = nsm_forward(nsm, &mut tape, q)?;
    let p = predict_basic(nsm, &mut tape, out.entities);
    Ok(tape.value(p).data().to_vec())
}

pub fn hits_at_1(p: &[f64], answers: &[usize]) -> bool {
    argmax_lowest(p).is_some_and(|i| answers.contains(&i))
}

/// Trains Φ with per-entity BCE; questions whose answers fell outside the subgraph are skipped.
pub fn pretrain_basic(
    nsm: &Nsm,
    params: &mut ParameterSet,
    questions: &[PreparedQuestion],
    config: &BasicTrainConfig,
) -> Result<BasicTrainReport> {
    if questions.is_empty() {
        return Err(Error::config("basic pre-training set is empty"));
    }
    let usable: Vec<&PreparedQuestion> = questions.iter().filter(|q| !q.answers.is_empty()).collect();
    let coverage = CoverageReport {
        total: questions.len(),
        usable: usable.len(),
    };
    if usable.is_empty() {
        return Err(Error::data("no training question has an answer inside its subgraph"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = OptimizerState::adam(config.learning_rate).with_frozen(&[
        ParamGroup::Numerical,
        ParamGroup::Comprehensive,
        ParamGroup::Classifier,
    ]);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut grads = Gradients::new();
            for &i in chunk {
                let (l, g) = basic_loss(nsm, params, usable[i])?;
                total += l;
                grads.merge(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            optimize_step(params, &grads, &mut opt)?;
        }
        epoch_losses.push(total / usable.len() as f64);
    }
    let mut hits = 0;
    for q in &usable {
        if hits_at_1(&basic_probabilities(nsm, params, q)?, &q.answers) {
            hits += 1;
        }
    }
    Ok(BasicTrainReport {
        coverage,
        epoch_losses,
        train_hits1: hits as f64 / usable.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;
    use crate::kb::{RelationMeta, UnitTable};
    use crate::nn::{grad_check, GradCheckConfig};

    fn cfg() -> NsmConfig {
        NsmConfig {
            d_enc: 8,
            d_h: 8,
            steps: DEFAULT_STEPS,
        }
    }

    fn toy_kb() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(
            vec![
                RelationMeta::non_numerical("album"),
                RelationMeta::non_numerical("genre"),
                RelationMeta::non_numerical("label"),
            ],
            UnitTable::default(),
        )
        .unwrap();
        for a in 0..20 {
            kb.add_triple(&format!("artist_{a}"), "album", &format!("album_{a}"))
                .unwrap();
            kb.add_triple(&format!("album_{a}"), "genre", &format!("genre_{}", a % 4))
                .unwrap();
            kb.add_triple(&format!("artist_{a}"), "label", &format!("label_{}", a % 3))
                .unwrap();
        }
        kb
    }

    fn prep(kb: &KnowledgeBase, enc: &FrozenEncoder, q: &str, topic: &str, ans: &str) -> PreparedQuestion {
        let rt = RelationTable::build(kb, enc).unwrap();
        prepare_question(
            kb,
            enc,
            &rt,
            q,
            &[kb.entity_id(topic).unwrap()],
            &kb.entity_id(ans).into_iter().collect::<Vec<_>>(),
            &RetrievalConfig::default(),
        )
        .unwrap()
    }

    fn setup() -> (KnowledgeBase, FrozenEncoder, ParameterSet, Nsm) {
        let kb = toy_kb();
        let enc = FrozenEncoder::new(EncoderConfig { d_enc: 8, seed: 0 }).unwrap();
        let mut ps = ParameterSet::new();
        let nsm = Nsm::init(&mut ps, cfg(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (kb, enc, ps, nsm)
    }

    #[test]
    fn shapes_and_attention_distributions() {
        let (kb, enc, ps, nsm) = setup();
        let q = prep(&kb, &enc, "what is the genre of album_1", "album_1", "genre_1");
        // five albums of genre_1, the genre, artist_1 and its label
        assert_eq!(q.num_entities(), 8);
        let mut t = Tape::new(&ps);
        let out = nsm_forward(&nsm, &mut t, &q).unwrap();
        assert_eq!(t.value(out.entities).shape(), [q.num_entities(), 8]);
        assert_eq!(out.attention.len(), DEFAULT_STEPS + 1);
        let p0 = t.value(out.attention[0]);
        assert_eq!(p0.get(q.topics[0], 0), 1.0);
        for a in &out.attention {
            assert!((t.value(*a).sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_head_gives_one_half() {
        let (kb, enc, mut ps, nsm) = setup();
        let (w, _) = nsm.prediction_head();
        *ps.value_mut(w) = Tensor::zeros(8, 1);
        let q = prep(&kb, &enc, "genre of album_2", "album_2", "genre_2");
        let p = basic_probabilities(&nsm, &ps, &q).unwrap();
        assert!(p.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn predictions_match_affine_sigmoid() {
        let (kb, enc, ps, nsm) = setup();
        let q = prep(&kb, &enc, "genre of album_2", "album_2", "genre_2");
        let mut t = Tape::new(&ps);
        let out = nsm_forward(&nsm, &mut t, &q).unwrap();
        let p = predict_basic(&nsm, &mut t, out.entities);
        let e = t.value(out.entities);
        let (w, b) = nsm.prediction_head();
        for i in 0..q.num_entities() {
            let z: f64 = (0..8).map(|c| e.get(i, c) * ps.value(w).get(c, 0)).sum::<f64>() + ps.value(b).item();
            let want = 1.0 / (1.0 + (-z).exp());
            let got = t.value(p).get(i, 0);
            assert!((got - want).abs() < 1e-12);
            assert!(got > 0.0 && got < 1.0);
        }
    }

    #[test]
    fn empty_subgraph_is_an_error() {
        let (kb, enc, ps, nsm) = setup();
        let mut q = prep(&kb, &enc, "genre of album_2", "album_2", "genre_2");
        q.subgraph.entities.clear();
        let mut t = Tape::new(&ps);
        assert!(matches!(nsm_forward(&nsm, &mut t, &q), Err(Error::Reasoning(_))));
    }

    #[test]
    fn relabeling_entities_permutes_rows() {
        let (kb, enc, ps, nsm) = setup();
        let q = prep(&kb, &enc, "label of artist_3", "artist_3", "label_0");
        let n = q.num_entities();
        let perm: Vec<usize> = (0..n).rev().collect(); // new index of old i is perm[i]
        let mut pq = q.clone();
        for (old, &new) in perm.iter().enumerate() {
            pq.e0.row_mut(new).copy_from_slice(q.e0.row(old));
        }
        pq.edges = q.edges.iter().map(|&(s, r, d)| (perm[s], r, perm[d])).collect();
        pq.topics = q.topics.iter().map(|&t| perm[t]).collect();
        let mut t1 = Tape::new(&ps);
        let a = nsm_forward(&nsm, &mut t1, &q).unwrap();
        let mut t2 = Tape::new(&ps);
        let b = nsm_forward(&nsm, &mut t2, &pq).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            let ra = t1.value(a.entities).row(old);
            let rb = t2.value(b.entities).row(new);
            assert!(ra.iter().zip(rb).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn bce_gradients_pass_grad_check() {
        let (kb, enc, ps, nsm) = setup();
        let q = prep(&kb, &enc, "what genre is album_5", "album_5", "genre_1");
        let cfg = GradCheckConfig {
            coords_per_param: Some(4),
            ..Default::default()
        };
        let r = grad_check(&ps, |ps| basic_loss(&nsm, ps, &q), &cfg).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn two_entity_chain_overfits() {
        let mut kb = KnowledgeBase::new(vec![RelationMeta::non_numerical("capital")], UnitTable::default()).unwrap();
        kb.add_triple("x", "capital", "y").unwrap();
        let enc = FrozenEncoder::new(EncoderConfig { d_enc: 8, seed: 0 }).unwrap();
        let mut ps = ParameterSet::new();
        let nsm = Nsm::init(&mut ps, cfg(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let q = prep(&kb, &enc, "capital of x", "x", "y");
        let mut opt = OptimizerState::adam(0.01);
        for _ in 0..200 {
            let (_, g) = basic_loss(&nsm, &ps, &q).unwrap();
            optimize_step(&mut ps, &g, &mut opt).unwrap();
        }
        let p = basic_probabilities(&nsm, &ps, &q).unwrap();
        assert!(p[q.answers[0]] > 0.9, "{p:?}");
    }

    #[test]
    fn coverage_and_memorization() {
        let (kb, enc, mut ps, nsm) = setup();
        let mut qs = Vec::new();
        for a in 0..20 {
            let (q, topic, ans) = if a % 2 == 0 {
                (
                    format!("what is the genre of album_{a}"),
                    format!("album_{a}"),
                    format!("genre_{}", a % 4),
                )
            } else {
                (
                    format!("which label signed artist_{a}"),
                    format!("artist_{a}"),
                    format!("label_{}", a % 3),
                )
            };
            qs.push(prep(&kb, &enc, &q, &topic, &ans));
        }
        for q in qs.iter_mut().take(3) {
            q.answers.clear();
        }
        let cfg = BasicTrainConfig {
            epochs: 300,
            batch_size: 17,
            learning_rate: 0.01,
            seed: 0,
        };
        let rep = pretrain_basic(&nsm, &mut ps, &qs, &cfg).unwrap();
        assert_eq!(rep.coverage, CoverageReport { total: 20, usable: 17 });
        assert!(rep.train_hits1 >= 0.95, "{rep:?}");
        assert!(pretrain_basic(&nsm, &mut ps, &[], &cfg).is_err());
    }
}
