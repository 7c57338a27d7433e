//! QIND and QGND pre-training datasets.

use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::determiner::{extremal_indices, Aggregation, Determiner};
use super::instances::{PretrainInstance, QaInstance};
use super::oracle::value_of;
use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, NumericValue, RelationId, RelationKind, Tail};

/// Values under `r` with the heads that hold them, in triple order.
fn relation_values(kb: &KnowledgeBase, r: RelationId) -> Vec<(usize, NumericValue)> {
    kb.triples_with(r)
        .iter()
        .filter_map(|&i| match &kb.triple(i).tail {
            Tail::Value(v) => Some((i, v.clone())),
            Tail::Entity(_) => None,
        })
        .collect()
}

/// Question-irrelevant instances: determiner, relation, sampled values, oracle label.
pub fn gen_qind(
    kb: &KnowledgeBase,
    n_instances: usize,
    n_range: (usize, usize),
    seed: u64,
) -> Result<Vec<PretrainInstance>> {
    let (lo, hi) = n_range;
    if lo < 2 || lo > hi {
        return Err(Error::config(format!("number range [{lo}, {hi}] is invalid")));
    }
    let pools: Vec<(RelationId, Vec<(usize, NumericValue)>)> = kb
        .relations()
        .filter(|(_, m)| m.is_numerical)
        .map(|(r, _)| (r, relation_values(kb, r)))
        .filter(|(_, vals)| vals.len() >= 2)
        .collect();
    for kind in [RelationKind::Size, RelationKind::Time] {
        if !pools.iter().any(|(r, _)| kb.relation(*r).kind == kind) {
            return Err(Error::data(format!("no {kind:?} relation with at least two values")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_instances);
    for _ in 0..n_instances {
        let (r, pool) = pools.choose(&mut rng).expect("non-empty");
        let meta = kb.relation(*r);
        let n = rng.random_range(lo..=hi).min(pool.len());
        let values: Vec<NumericValue> = sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|i| pool[i].1.clone())
            .collect();
        let dets: Vec<Determiner> = Determiner::for_kind(meta.kind).collect();
        let det = *dets.choose(&mut rng).expect("every kind has determiners");
        let keys: Vec<f64> = values.iter().map(|v| v.sort_key).collect();
        let answer_index = extremal_indices(&keys, det.aggregation)[0];
        out.push(PretrainInstance {
            q: det.surface.to_string(),
            relation: meta.name.clone(),
            values,
            answer_index,
        });
    }
    Ok(out)
}

/// Re-derives each label from the determiner and counts disagreements.
pub fn verify_pretrain_labels(instances: &[PretrainInstance]) -> Result<usize> {
    let mut mismatches = 0;
    for inst in instances {
        inst.validate()?;
        let det = Determiner::parse(&inst.q)
            .or_else(|| Determiner::find_in(&inst.q))
            .ok_or_else(|| Error::data(format!("no determiner in {:?}", inst.q)))?;
        let keys = inst.sort_keys();
        if !extremal_indices(&keys, det.aggregation).contains(&inst.answer_index) {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

/// Train, validation and test slices in 60/20/20 proportion.
pub fn split_pretrain(
    instances: &[PretrainInstance],
) -> (Vec<PretrainInstance>, Vec<PretrainInstance>, Vec<PretrainInstance>) {
    let n = instances.len();
    let a = n * 3 / 5;
    let b = a + n / 5;
    (
        instances[..a].to_vec(),
        instances[a..b].to_vec(),
        instances[b..].to_vec(),
    )
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QgndReport {
    pub emitted: usize,
    /// `(question id, reason)` for entries that produced no instance.
    pub skipped: Vec<(String, String)>,
    /// Question ids whose gold number is not extremal among the emitted values.
    pub non_extremal: Vec<String>,
}

/// Question-guided instances from annotated ordinal QA pairs.
///
/// Distractors are other values under the same relation; when the question names a
/// determiner they are drawn from values that do not beat the gold one.
pub fn gen_qgnd(
    corpus: &[QaInstance],
    kb: &KnowledgeBase,
    distractors: usize,
    seed: u64,
) -> Result<(Vec<PretrainInstance>, QgndReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = QgndReport::default();
    let mut out = Vec::new();
    for qa in corpus.iter().filter(|q| q.ordinal) {
        let mut skip = |why: String| report.skipped.push((qa.id.clone(), why));
        let Some(rname) = &qa.relation else {
            skip("no relation annotation".into());
            continue;
        };
        let Some(r) = kb.relation_id(rname) else {
            skip(format!("unknown relation `{rname}`"));
            continue;
        };
        let Some(gold_entity) = qa.answers.first().and_then(|a| kb.entity_id(a)) else {
            skip("gold answer not in the KB".into());
            continue;
        };
        if value_of(kb, gold_entity, r).is_none() {
            skip(format!("`{}` has no `{rname}` value", kb.entity_name(gold_entity)));
            continue;
        }
        let all = relation_values(kb, r);
        let gold_pos = all
            .iter()
            .position(|(i, _)| kb.triple(*i).head == gold_entity)
            .expect("value exists");
        let gold = all[gold_pos].1.clone();
        let det = Determiner::find_in(&qa.question);
        let pool: Vec<&NumericValue> = all
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != gold_pos)
            .map(|(_, (_, v))| v)
            .filter(|v| match det.map(|d| d.aggregation) {
                Some(Aggregation::Max) => v.sort_key <= gold.sort_key,
                Some(Aggregation::Min) => v.sort_key >= gold.sort_key,
                None => true,
            })
            .collect();
        let k = distractors.min(pool.len());
        if k == 0 {
            skip("fewer than 2 numbers".into());
            continue;
        }
        let mut values: Vec<NumericValue> = sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        let answer_index = rng.random_range(0..=values.len());
        values.insert(answer_index, gold);
        let keys: Vec<f64> = values.iter().map(|v| v.sort_key).collect();
        let extremal = det.is_some_and(|d| extremal_indices(&keys, d.aggregation).contains(&answer_index));
        if !extremal {
            report.non_extremal.push(qa.id.clone());
        }
        out.push(PretrainInstance {
            q: qa.question.clone(),
            relation: rname.clone(),
            values,
            answer_index,
        });
    }
    report.emitted = out.len();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::synth::{gen_synthetic_kb, SynthConfig};
    use crate::kb::{RelationMeta, UnitTable};

    fn kb() -> KnowledgeBase {
        gen_synthetic_kb(&SynthConfig {
            n_entities: 200,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn qind_range_and_labels() {
        let kb = kb();
        let two = gen_qind(&kb, 200, (2, 2), 1).unwrap();
        assert!(two.iter().all(|i| i.values.len() == 2));
        let many = gen_qind(&kb, 10_000, (2, 50), 2).unwrap();
        assert_eq!(verify_pretrain_labels(&many).unwrap(), 0);
        assert!(many.iter().all(|i| (2..=50).contains(&i.values.len())));
        assert_eq!(
            gen_qind(&kb, 50, (2, 20), 3).unwrap(),
            gen_qind(&kb, 50, (2, 20), 3).unwrap()
        );
        assert!(gen_qind(&kb, 5, (1, 3), 0).is_err());
    }

    #[test]
    fn default_split_sizes() {
        let kb = kb();
        let all = gen_qind(&kb, 40_000, (2, 3), 0).unwrap();
        let (a, b, c) = split_pretrain(&all);
        assert_eq!((a.len(), b.len(), c.len()), (24_000, 8_000, 8_000));
    }

    #[test]
    fn qind_needs_both_kinds() {
        let mut kb = KnowledgeBase::new(vec![RelationMeta::size("sales", "")], UnitTable::default()).unwrap();
        kb.add_triple("a", "sales", "1").unwrap();
        kb.add_triple("b", "sales", "2").unwrap();
        assert!(gen_qind(&kb, 1, (2, 2), 0).is_err());
    }

    fn episodes() -> (KnowledgeBase, QaInstance) {
        let mut kb = KnowledgeBase::new(
            vec![
                RelationMeta::non_numerical("tv.network.program"),
                RelationMeta::size("tv.program.num_of_episodes", ""),
            ],
            UnitTable::default(),
        )
        .unwrap();
        for (p, n) in [("p12", "12"), ("p20", "20"), ("p48", "48"), ("p100", "100")] {
            kb.add_triple("net", "tv.network.program", p).unwrap();
            kb.add_triple(p, "tv.program.num_of_episodes", n).unwrap();
        }
        let qa = QaInstance {
            id: "q1".into(),
            question: "Which TV program of net has the largest amount of episodes ?".into(),
            topic_entities: vec!["net".into()],
            answers: vec!["p100".into()],
            ordinal: true,
            relation: Some("tv.program.num_of_episodes".into()),
        };
        (kb, qa)
    }

    #[test]
    fn qgnd_gold_is_the_answer_value() {
        let (kb, qa) = episodes();
        let (inst, rep) = gen_qgnd(std::slice::from_ref(&qa), &kb, 9, 0).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].values[inst[0].answer_index].sort_key, 100.0);
        assert_eq!(inst[0].values.len(), 4);
        assert!(rep.non_extremal.is_empty());
        assert_eq!(verify_pretrain_labels(&inst).unwrap(), 0);
    }

    #[test]
    fn qgnd_rejections_and_flags() {
        let (kb, mut qa) = episodes();
        let (inst, rep) = gen_qgnd(std::slice::from_ref(&qa), &kb, 0, 0).unwrap();
        assert!(inst.is_empty());
        assert_eq!(rep.skipped.len(), 1);
        // A non-extremal gold is kept and flagged.
        qa.answers = vec!["p20".into()];
        qa.question = "Which program of net has the most episodes ?".into();
        let (inst, rep) = gen_qgnd(std::slice::from_ref(&qa), &kb, 9, 0).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(rep.non_extremal, vec!["q1".to_string()]);
        // Missing value is skipped with a report.
        qa.answers = vec!["net".into()];
        let (inst, rep) = gen_qgnd(std::slice::from_ref(&qa), &kb, 9, 0).unwrap();
        assert!(inst.is_empty());
        assert!(rep.skipped[0].1.contains("no `tv.program.num_of_episodes` value"));
    }
}
