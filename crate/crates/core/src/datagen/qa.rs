//! Templated QA corpora: the stand-in "real" corpus and the ordinal augmentation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::determiner::Determiner;
use super::instances::QaInstance;
use super::oracle::{ordinal_oracle, value_of};
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase, RelationId};

/// A hub `e_h`, its member relation `r_h`, and a numerical relation `r` held by at least two members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HubSlot {
    pub hub: EntityId,
    pub hub_relation: RelationId,
    pub relation: RelationId,
    /// Members carrying a value under `relation`, in entity order.
    pub candidates: Vec<EntityId>,
}

/// Every usable `(e_h, r_h, r)` in the KB, in a fixed order.
pub fn hub_slots(kb: &KnowledgeBase) -> Vec<HubSlot> {
    let numeric: Vec<RelationId> = kb.relations().filter(|(_, m)| m.is_numerical).map(|(r, _)| r).collect();
    let mut out = Vec::new();
    for e in 0..kb.num_entities() {
        let hub = EntityId(e as u32);
        let mut rels: Vec<RelationId> = kb
            .triples_from(hub)
            .map(|i| kb.triple(i))
            .filter(|t| t.tail_entity().is_some())
            .map(|t| t.relation)
            .collect();
        rels.sort_unstable();
        rels.dedup();
        for r_h in rels {
            let mut members = kb.objects(hub, r_h);
            members.sort_unstable();
            members.dedup();
            if members.len() < 2 {
                continue;
            }
            for &r in &numeric {
                let candidates: Vec<EntityId> = members
                    .iter()
                    .copied()
                    .filter(|&m| value_of(kb, m, r).is_some())
                    .collect();
                if candidates.len() >= 2 {
                    out.push(HubSlot {
                        hub,
                        hub_relation: r_h,
                        relation: r,
                        candidates,
                    });
                }
            }
        }
    }
    out
}

/// Home hub of an entity: the head of a multi-valued edge into it, or itself.
pub fn home_hub(kb: &KnowledgeBase, e: EntityId) -> EntityId {
    let mut heads: Vec<EntityId> = kb
        .triples_to(e)
        .map(|i| kb.triple(i))
        .filter(|t| kb.objects(t.head, t.relation).len() >= 2)
        .map(|t| t.head)
        .collect();
    heads.sort_unstable();
    heads.first().copied().unwrap_or(e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedQaPair {
    pub question: String,
    pub topic: EntityId,
    pub hub_relation: RelationId,
    pub relation: RelationId,
    pub determiner: Determiner,
    pub candidates: Vec<EntityId>,
    pub answers: Vec<EntityId>,
}

impl AugmentedQaPair {
    pub fn to_qa(&self, kb: &KnowledgeBase, id: String) -> QaInstance {
        QaInstance {
            id,
            question: self.question.clone(),
            topic_entities: vec![kb.entity_name(self.topic).to_string()],
            answers: self.answers.iter().map(|&a| kb.entity_name(a).to_string()).collect(),
            ordinal: true,
            relation: Some(kb.relation(self.relation).name.clone()),
        }
    }
}

pub fn augmented_question(kb: &KnowledgeBase, slot: &HubSlot, det: Determiner) -> String {
    format!(
        "What is the {} of {} that has the {} {} ?",
        kb.relation(slot.hub_relation).display_name(),
        kb.entity_name(slot.hub),
        det.surface,
        kb.relation(slot.relation).display_name()
    )
}

/// Samples up to `n_pairs` distinct `(slot, determiner)` questions; `hubs` restricts topics.
pub fn gen_augmented(
    kb: &KnowledgeBase,
    n_pairs: usize,
    seed: u64,
    hubs: Option<&BTreeSet<EntityId>>,
) -> Result<Vec<AugmentedQaPair>> {
    let mut combos = Vec::new();
    for slot in hub_slots(kb) {
        if hubs.is_some_and(|h| !h.contains(&slot.hub)) {
            continue;
        }
        for det in Determiner::for_kind(kb.relation(slot.relation).kind) {
            combos.push((slot.clone(), det));
        }
    }
    if combos.is_empty() && n_pairs > 0 {
        return Err(Error::data("no hub has two candidates sharing a numerical relation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    combos.shuffle(&mut rng);
    combos.truncate(n_pairs);
    combos
        .into_iter()
        .map(|(slot, det)| {
            Ok(AugmentedQaPair {
                question: augmented_question(kb, &slot, det),
                answers: ordinal_oracle(kb, &slot.candidates, slot.relation, det)?,
                topic: slot.hub,
                hub_relation: slot.hub_relation,
                relation: slot.relation,
                determiner: det,
                candidates: slot.candidates,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaCorpusConfig {
    pub seed: u64,
    /// Ordinal questions per hub slot (determiners drawn without replacement).
    pub ordinal_per_slot: usize,
    /// Non-ordinal questions per ordinal question.
    pub non_ordinal_ratio: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for QaCorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ordinal_per_slot: 2,
            non_ordinal_ratio: 1.0,
            train_fraction: 0.7,
            val_fraction: 0.15,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QaSplits {
    pub train: Vec<QaInstance>,
    pub val: Vec<QaInstance>,
    pub test: Vec<QaInstance>,
    /// Home hubs assigned to the training split.
    pub train_hubs: BTreeSet<EntityId>,
}

const ORDINAL_TEMPLATES: [&str; 3] = [
    "Which {rh} of {eh} has the {det} {r} ?",
    "Name the {rh} of {eh} with the {det} {r} .",
    "{eh} : which {rh} has the {det} {r} ?",
];

fn fill(template: &str, rh: &str, eh: &str, det: &str, r: &str) -> String {
    template
        .replace("{rh}", rh)
        .replace("{eh}", eh)
        .replace("{det}", det)
        .replace("{r}", r)
}

struct Draft {
    topic: EntityId,
    question: String,
    answers: Vec<EntityId>,
    relation: Option<RelationId>,
}

fn non_ordinal_pool(kb: &KnowledgeBase) -> Vec<Draft> {
    let mut pool = Vec::new();
    let mut seen = BTreeSet::new();
    for t in kb.triples() {
        let Some(tail) = t.tail_entity() else { continue };
        let name = kb.relation(t.relation).display_name();
        if seen.insert((0u8, t.head, t.relation, None)) {
            pool.push(Draft {
                topic: t.head,
                question: format!("What is the {name} of {} ?", kb.entity_name(t.head)),
                answers: kb.objects(t.head, t.relation),
                relation: None,
            });
        }
        if seen.insert((1u8, tail, t.relation, None)) {
            pool.push(Draft {
                topic: tail,
                question: format!("Which entity has {} as its {name} ?", kb.entity_name(tail)),
                answers: kb.subjects(tail, t.relation),
                relation: None,
            });
        }
        let mids = kb.objects(t.head, t.relation);
        if mids.len() == 1 {
            for j in kb.triples_from(tail) {
                let t2 = kb.triple(j);
                if t2.tail_entity().is_none() || t2.relation == t.relation {
                    continue;
                }
                if seen.insert((2u8, t.head, t.relation, Some(t2.relation))) {
                    pool.push(Draft {
                        topic: t.head,
                        question: format!(
                            "What is the {} of the {name} of {} ?",
                            kb.relation(t2.relation).display_name(),
                            kb.entity_name(t.head)
                        ),
                        answers: kb.objects(tail, t2.relation),
                        relation: None,
                    });
                }
            }
        }
    }
    pool
}

/// Builds the ordinal and non-ordinal corpus, split by home hub.
pub fn gen_qa_corpus(kb: &KnowledgeBase, config: &QaCorpusConfig) -> Result<QaSplits> {
    if !(config.train_fraction > 0.0 && config.val_fraction >= 0.0 && config.train_fraction + config.val_fraction < 1.0)
    {
        return Err(Error::config("split fractions must leave room for a test split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut drafts = Vec::new();
    for slot in hub_slots(kb) {
        let dets: Vec<Determiner> = Determiner::for_kind(kb.relation(slot.relation).kind).collect();
        for &det in dets.choose_multiple(&mut rng, config.ordinal_per_slot) {
            let template = ORDINAL_TEMPLATES.choose(&mut rng).expect("templates");
            drafts.push(Draft {
                topic: slot.hub,
                question: fill(
                    template,
                    &kb.relation(slot.hub_relation).display_name(),
                    kb.entity_name(slot.hub),
                    det.surface,
                    &kb.relation(slot.relation).display_name(),
                ),
                answers: ordinal_oracle(kb, &slot.candidates, slot.relation, det)?,
                relation: Some(slot.relation),
            });
        }
    }
    if drafts.is_empty() {
        return Err(Error::data("the KB has no hub supporting an ordinal question"));
    }
    let n_ordinal = drafts.len();
    let mut pool = non_ordinal_pool(kb);
    pool.shuffle(&mut rng);
    pool.truncate((n_ordinal as f64 * config.non_ordinal_ratio).round() as usize);
    drafts.extend(pool);

    let hubs: BTreeSet<EntityId> = drafts.iter().map(|d| home_hub(kb, d.topic)).collect();
    let mut hubs: Vec<EntityId> = hubs.into_iter().collect();
    hubs.shuffle(&mut rng);
    let n_train = (hubs.len() as f64 * config.train_fraction).round() as usize;
    let n_val = (hubs.len() as f64 * config.val_fraction).round() as usize;
    let split: BTreeMap<EntityId, usize> = hubs
        .iter()
        .enumerate()
        .map(|(i, &h)| (h, usize::from(i >= n_train) + usize::from(i >= n_train + n_val)))
        .collect();
    let mut out = QaSplits {
        train_hubs: hubs[..n_train.min(hubs.len())].iter().copied().collect(),
        ..QaSplits::default()
    };
    for (i, d) in drafts.into_iter().enumerate() {
        let qa = QaInstance {
            id: format!("q{i}"),
            question: d.question,
            topic_entities: vec![kb.entity_name(d.topic).to_string()],
            answers: d.answers.iter().map(|&a| kb.entity_name(a).to_string()).collect(),
            ordinal: d.relation.is_some(),
            relation: d.relation.map(|r| kb.relation(r).name.clone()),
        };
        match split[&home_hub(kb, d.topic)] {
            0 => out.train.push(qa),
            1 => out.val.push(qa),
            _ => out.test.push(qa),
        }
    }
    Ok(out)
}

/// Home hubs of the questions' topic entities; recovers `QaSplits::train_hubs` from a saved split.
pub fn hubs_of(kb: &KnowledgeBase, qa: &[QaInstance]) -> Result<BTreeSet<EntityId>> {
    let mut hubs = BTreeSet::new();
    for q in qa {
        let (topics, _) = resolve_qa(kb, q)?;
        hubs.extend(topics.into_iter().map(|t| home_hub(kb, t)));
    }
    Ok(hubs)
}

/// Resolves names in a QA instance to ids; unknown names are data errors.
pub fn resolve_qa(kb: &KnowledgeBase, qa: &QaInstance) -> Result<(Vec<EntityId>, Vec<EntityId>)> {
    let look = |n: &String| {
        kb.entity_id(n)
            .ok_or_else(|| Error::data(format!("question {}: unknown entity `{n}`", qa.id)))
    };
    let topics = qa.topic_entities.iter().map(look).collect::<Result<Vec<_>>>()?;
    let answers = qa.answers.iter().map(look).collect::<Result<Vec<_>>>()?;
    Ok((topics, answers))
}

/// Draws a random subset of `n` items, preserving their order.
pub fn subsample<T: Clone>(items: &[T], n: usize, rng: &mut impl Rng) -> Vec<T> {
    if n >= items.len() {
        return items.to_vec();
    }
    let mut idx = rand::seq::index::sample(rng, items.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::synth::{gen_synthetic_kb, SynthConfig};
    use crate::datagen::DETERMINERS;
    use crate::kb::{RelationMeta, UnitTable};

    fn china() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(
            vec![
                RelationMeta::non_numerical("location.country.city"),
                RelationMeta::size("location.city.area", "mi2"),
            ],
            UnitTable::default(),
        )
        .unwrap();
        for (c, a) in [
            ("Shenzhen", "793 mi2"),
            ("Beijing", "6,490 mi2"),
            ("Shanghai", "2,448 mi2"),
        ] {
            kb.add_triple("China", "location.country.city", c).unwrap();
            kb.add_triple(c, "location.city.area", a).unwrap();
        }
        kb
    }

    #[test]
    fn china_city_template() {
        let kb = china();
        let pairs = gen_augmented(&kb, 100, 0, None).unwrap();
        assert_eq!(pairs.len(), 4);
        let largest = pairs.iter().find(|p| p.determiner.surface == "largest").unwrap();
        assert_eq!(
            largest.question,
            "What is the city of China that has the largest area ?"
        );
        assert_eq!(largest.answers, vec![kb.entity_id("Beijing").unwrap()]);
        let smallest = pairs.iter().find(|p| p.determiner.surface == "smallest").unwrap();
        assert_eq!(smallest.answers, vec![kb.entity_id("Shenzhen").unwrap()]);
    }

    #[test]
    fn every_synthetic_hub_supports_an_augmented_pair() {
        let kb = gen_synthetic_kb(&SynthConfig {
            n_entities: 200,
            ..SynthConfig::default()
        })
        .unwrap();
        let slots = hub_slots(&kb);
        // Hubs are the heads of multi-valued member relations.
        let member_rels: Vec<&str> = [
            "location.country.city",
            "music.artist.album",
            "tv.network.program",
            "business.company.product",
        ]
        .to_vec();
        for (r, _) in kb.relations().filter(|(_, m)| member_rels.contains(&m.name.as_str())) {
            for &i in kb.triples_with(r) {
                let hub = kb.triple(i).head;
                assert!(
                    slots.iter().any(|s| s.hub == hub && s.hub_relation == r),
                    "{}",
                    kb.entity_name(hub)
                );
            }
        }
        // Exhaustive template enumeration agrees with an independent min/max scan.
        for s in &slots {
            for det in DETERMINERS.iter().filter(|d| d.kind == kb.relation(s.relation).kind) {
                let got = ordinal_oracle(&kb, &s.candidates, s.relation, *det).unwrap();
                let vals: Vec<f64> = s
                    .candidates
                    .iter()
                    .map(|&c| value_of(&kb, c, s.relation).unwrap())
                    .collect();
                let best = match det.aggregation {
                    super::super::Aggregation::Max => vals.iter().cloned().fold(f64::MIN, f64::max),
                    super::super::Aggregation::Min => vals.iter().cloned().fold(f64::MAX, f64::min),
                };
                let want: Vec<EntityId> = s
                    .candidates
                    .iter()
                    .zip(&vals)
                    .filter(|(_, &v)| v == best)
                    .map(|(&c, _)| c)
                    .collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn corpus_splits_by_hub_and_is_deterministic() {
        let kb = gen_synthetic_kb(&SynthConfig::default()).unwrap();
        let a = gen_qa_corpus(&kb, &QaCorpusConfig::default()).unwrap();
        let b = gen_qa_corpus(&kb, &QaCorpusConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(!a.test.is_empty() && !a.val.is_empty());
        let ord = a.train.iter().filter(|q| q.ordinal).count();
        assert!(ord > 0 && ord < a.train.len());
        let train_hubs = hubs_of(&kb, &a.train).unwrap();
        assert_eq!(train_hubs, a.train_hubs);
        assert!(train_hubs.is_disjoint(&hubs_of(&kb, &a.test).unwrap()));
        for q in a.train.iter().chain(&a.test) {
            let (t, ans) = resolve_qa(&kb, q).unwrap();
            assert_eq!(t.len(), 1);
            assert!(!ans.is_empty());
            assert_eq!(q.ordinal, Determiner::find_in(&q.question).is_some(), "{}", q.question);
        }
    }
}
