//! Question-centric subgraph retrieval and personalized PageRank pruning.

use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::store::{EntityId, KnowledgeBase, RelationId, Tail};
use super::value::NumericValue;
use crate::error::{Error, Result};

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOP_N: usize = 500;

/// Entities around the topic entities and the non-numerical triples among them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subgraph {
    /// Sorted ascending.
    pub entities: Vec<EntityId>,
    pub topics: Vec<EntityId>,
    /// Indices into the knowledge base's triple list, ascending.
    pub triples: Vec<usize>,
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn local_index(&self, e: EntityId) -> Option<usize> {
        self.entities.binary_search(&e).ok()
    }

    pub fn contains(&self, e: EntityId) -> bool {
        self.local_index(e).is_some()
    }

    /// Directed local edges `(src, relation, dst)`.
    pub fn local_edges(&self, kb: &KnowledgeBase) -> Vec<(usize, RelationId, usize)> {
        self.triples
            .iter()
            .filter_map(|&i| {
                let t = kb.triple(i);
                let dst = t.tail_entity()?;
                Some((self.local_index(t.head)?, t.relation, self.local_index(dst)?))
            })
            .collect()
    }

    /// Keeps `entities` (plus topics) and the triples induced on them.
    fn induced(kb: &KnowledgeBase, mut entities: Vec<EntityId>, topics: &[EntityId]) -> Self {
        entities.extend_from_slice(topics);
        entities.sort_unstable();
        entities.dedup();
        let set: HashSet<EntityId> = entities.iter().copied().collect();
        let mut triples: Vec<usize> = entities
            .iter()
            .flat_map(|&e| kb.triples_from(e))
            .filter(|&i| kb.triple(i).tail_entity().is_some_and(|t| set.contains(&t)))
            .collect();
        triples.sort_unstable();
        Self {
            entities,
            topics: topics.to_vec(),
            triples,
        }
    }
}

fn check_topics(kb: &KnowledgeBase, topics: &[EntityId]) -> Result<()> {
    if topics.is_empty() {
        return Err(Error::Retrieval("no topic entities given".into()));
    }
    for t in topics {
        if t.index() >= kb.num_entities() {
            return Err(Error::Retrieval(format!("unknown topic entity id {}", t.0)));
        }
    }
    Ok(())
}

/// Entities within `hops` undirected non-numerical hops of any topic.
pub fn k_hop_subgraph(kb: &KnowledgeBase, topics: &[EntityId], hops: usize) -> Result<Subgraph> {
    check_topics(kb, topics)?;
    let mut dist = vec![usize::MAX; kb.num_entities()];
    let mut queue = VecDeque::new();
    for &t in topics {
        if dist[t.index()] != 0 {
            dist[t.index()] = 0;
            queue.push_back(t);
        }
    }
    let mut reached = Vec::new();
    while let Some(e) = queue.pop_front() {
        reached.push(e);
        let d = dist[e.index()];
        if d == hops {
            continue;
        }
        for n in kb.undirected_neighbors(e) {
            if dist[n.index()] == usize::MAX {
                dist[n.index()] = d + 1;
                queue.push_back(n);
            }
        }
    }
    Ok(Subgraph::induced(kb, reached, topics))
}

pub fn two_hop_subgraph(kb: &KnowledgeBase, topics: &[EntityId]) -> Result<Subgraph> {
    k_hop_subgraph(kb, topics, 2)
}

#[derive(Clone, Debug)]
pub struct PprResult {
    /// Scores aligned with the input subgraph's entity order.
    pub scores: Vec<f64>,
    pub pruned: Subgraph,
}

/// Personalized PageRank over the undirected subgraph with restart mass on the topics.
pub fn personalized_pagerank(kb: &KnowledgeBase, sub: &Subgraph, damping: f64, top_n: usize) -> Result<PprResult> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::config(format!("damping {damping} is outside (0, 1)")));
    }
    let topics: BTreeSet<EntityId> = sub.topics.iter().copied().collect();
    if top_n < topics.len() {
        return Err(Error::config(format!(
            "top_n={top_n} is smaller than the {} topic entities",
            topics.len()
        )));
    }
    let n = sub.len();
    let mut restart = vec![0.0; n];
    for t in &topics {
        let i = sub
            .local_index(*t)
            .ok_or_else(|| Error::Retrieval(format!("topic {} is not in the subgraph", t.0)))?;
        restart[i] = 1.0 / topics.len() as f64;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, _, d) in sub.local_edges(kb) {
        adj[s].push(d);
        adj[d].push(s);
    }
    let mut p = restart.clone();
    let mut next = vec![0.0; n];
    for _ in 0..1000 {
        next.iter_mut()
            .zip(&restart)
            .for_each(|(x, r)| *x = (1.0 - damping) * r);
        let mut dangling = 0.0;
        for (i, nb) in adj.iter().enumerate() {
            if nb.is_empty() {
                dangling += p[i];
                continue;
            }
            let share = damping * p[i] / nb.len() as f64;
            for &j in nb {
                next[j] += share;
            }
        }
        // mass at dead ends restarts at the topics
        for (x, r) in next.iter_mut().zip(&restart) {
            *x += damping * dangling * r;
        }
        let delta: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if delta < 1e-14 {
            break;
        }
    }
    let pruned = if top_n >= n {
        sub.clone()
    } else {
        let mut order: Vec<usize> = (0..n).filter(|&i| !topics.contains(&sub.entities[i])).collect();
        // descending score, ties by entity id
        order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        let keep: Vec<EntityId> = order
            .into_iter()
            .take(top_n - topics.len())
            .map(|i| sub.entities[i])
            .collect();
        Subgraph::induced(kb, keep, &sub.topics)
    };
    Ok(PprResult { scores: p, pruned })
}

/// All `(e, v)` with `(e, relation, v)` in the KB and `e` among `entities`, in triple order.
pub fn numeric_values_for(
    kb: &KnowledgeBase,
    relation: RelationId,
    entities: &[EntityId],
) -> Result<Vec<(EntityId, NumericValue)>> {
    let meta = kb.relation(relation);
    if !meta.is_numerical {
        return Err(Error::Usage(format!("relation `{}` is not numerical", meta.name)));
    }
    let set: HashSet<EntityId> = entities.iter().copied().collect();
    Ok(kb
        .triples_with(relation)
        .iter()
        .map(|&i| kb.triple(i))
        .filter(|t| set.contains(&t.head))
        .filter_map(|t| match &t.tail {
            Tail::Value(v) => Some((t.head, v.clone())),
            Tail::Entity(_) => None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::value::{RelationMeta, UnitTable};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kb_with(edges: &[(&str, &str)]) -> KnowledgeBase {
        let mut kb = KnowledgeBase::new(
            vec![RelationMeta::non_numerical("link"), RelationMeta::size("weight", "")],
            UnitTable::default(),
        )
        .unwrap();
        for (a, b) in edges {
            kb.add_triple(a, "link", b).unwrap();
        }
        kb
    }

    fn names(kb: &KnowledgeBase, s: &Subgraph) -> Vec<String> {
        s.entities.iter().map(|&e| kb.entity_name(e).to_string()).collect()
    }

    fn random_kb(seed: u64, n: usize, m: usize) -> KnowledgeBase {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kb = kb_with(&[]);
        for i in 0..n {
            kb.add_entity(&format!("e{i}"));
        }
        for _ in 0..m {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if rng.random_bool(0.8) {
                kb.add_triple(&format!("e{a}"), "link", &format!("e{b}")).unwrap();
            } else {
                kb.add_triple(&format!("e{a}"), "weight", &format!("{}", rng.random_range(0..100)))
                    .unwrap();
            }
        }
        kb
    }

    /// Reachability by squaring a boolean adjacency matrix.
    fn matrix_oracle(kb: &KnowledgeBase, topics: &[EntityId]) -> BTreeSet<EntityId> {
        let n = kb.num_entities();
        let mut a = vec![vec![false; n]; n];
        for t in kb.triples() {
            if let Some(d) = t.tail_entity() {
                a[t.head.index()][d.index()] = true;
                a[d.index()][t.head.index()] = true;
            }
        }
        let mut out = BTreeSet::new();
        for &t in topics {
            let ti = t.index();
            for j in 0..n {
                let two = (0..n).any(|k| a[ti][k] && a[k][j]);
                if j == ti || a[ti][j] || two {
                    out.insert(EntityId(j as u32));
                }
            }
        }
        out
    }

    #[test]
    fn chain_stops_after_two_hops() {
        let kb = kb_with(&[("a", "b"), ("b", "c"), ("c", "d")]);
        let s = two_hop_subgraph(&kb, &[kb.entity_id("a").unwrap()]).unwrap();
        assert_eq!(names(&kb, &s), ["a", "b", "c"]);
        assert_eq!(s.triples, [0, 1]);
    }

    #[test]
    fn isolated_topic() {
        let mut kb = kb_with(&[("a", "b")]);
        let z = kb.add_entity("z");
        let s = two_hop_subgraph(&kb, &[z]).unwrap();
        assert_eq!(s.entities, [z]);
        assert!(s.triples.is_empty());
        assert!(two_hop_subgraph(&kb, &[EntityId(99)]).is_err());
    }

    #[test]
    fn random_kb_matches_matrix_oracle() {
        for seed in 0..5 {
            let kb = random_kb(seed, 50, 60);
            let topics = [EntityId(seed as u32), EntityId(17)];
            let s = two_hop_subgraph(&kb, &topics).unwrap();
            let got: BTreeSet<EntityId> = s.entities.iter().copied().collect();
            assert_eq!(got, matrix_oracle(&kb, &topics));
            for &i in &s.triples {
                let t = kb.triple(i);
                assert!(!kb.relation(t.relation).is_numerical);
                assert!(s.contains(t.head) && s.contains(t.tail_entity().unwrap()));
            }
        }
    }

    #[test]
    fn single_node_pagerank() {
        let mut kb = kb_with(&[]);
        let a = kb.add_entity("a");
        let s = two_hop_subgraph(&kb, &[a]).unwrap();
        let r = personalized_pagerank(&kb, &s, 0.85, 10).unwrap();
        assert!((r.scores[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_pagerank_matches_power_method() {
        let kb = kb_with(&[("a", "b"), ("b", "c")]);
        let a = kb.entity_id("a").unwrap();
        let s = two_hop_subgraph(&kb, &[a]).unwrap();
        let r = personalized_pagerank(&kb, &s, 0.85, 500).unwrap();
        // transition matrix of the undirected chain a - b - c
        let t = [[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [0.0, 1.0, 0.0]];
        let mut p = [1.0, 0.0, 0.0];
        for _ in 0..200 {
            let mut q = [0.15, 0.0, 0.0];
            for i in 0..3 {
                for j in 0..3 {
                    q[j] += 0.85 * p[i] * t[i][j];
                }
            }
            p = q;
        }
        for i in 0..3 {
            assert!((r.scores[i] - p[i]).abs() < 1e-6, "{:?} vs {p:?}", r.scores);
        }
        assert_eq!(r.pruned, s);
    }

    #[test]
    fn pruning_keeps_topics_and_best_scores() {
        let kb = kb_with(&[("a", "b"), ("b", "c"), ("a", "d"), ("d", "e"), ("b", "d")]);
        let a = kb.entity_id("a").unwrap();
        let s = two_hop_subgraph(&kb, &[a]).unwrap();
        assert!(personalized_pagerank(&kb, &s, 0.85, 0).is_err());
        let r = personalized_pagerank(&kb, &s, 0.85, 3).unwrap();
        assert_eq!(names(&kb, &r.pruned), ["a", "b", "d"]);
        assert!(r
            .pruned
            .triples
            .iter()
            .all(|&i| kb.triple(i).tail_entity().is_some_and(|t| r.pruned.contains(t))));
    }

    #[test]
    fn figure_album_dates() {
        let mut kb = KnowledgeBase::new(
            vec![RelationMeta::non_numerical("album"), RelationMeta::time("release_date")],
            UnitTable::default(),
        )
        .unwrap();
        for (album, date) in [
            ("Reputation", "2017.11.10"),
            ("Lover", "2019.08.23"),
            ("Folklore", "2020.07.23"),
        ] {
            kb.add_triple("TaylorSwift", "album", album).unwrap();
            kb.add_triple(album, "release_date", date).unwrap();
        }
        let albums = kb.objects(kb.entity_id("TaylorSwift").unwrap(), kb.relation_id("album").unwrap());
        let r = kb.relation_id("release_date").unwrap();
        let vals = numeric_values_for(&kb, r, &albums).unwrap();
        let dates: Vec<&str> = vals.iter().map(|(_, v)| v.canonical.as_str()).collect();
        assert_eq!(dates, ["2017.11.10", "2019.08.23", "2020.07.23"]);
        assert!(numeric_values_for(&kb, r, &[kb.entity_id("TaylorSwift").unwrap()])
            .unwrap()
            .is_empty());
        assert!(matches!(
            numeric_values_for(&kb, kb.relation_id("album").unwrap(), &albums),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn numeric_values_match_full_scan() {
        let kb = random_kb(3, 30, 200);
        let r = kb.relation_id("weight").unwrap();
        let ents: Vec<EntityId> = (0..30).step_by(3).map(EntityId).collect();
        let got = numeric_values_for(&kb, r, &ents).unwrap();
        let want: Vec<(EntityId, f64)> = kb
            .triples()
            .iter()
            .filter(|t| t.relation == r && ents.contains(&t.head))
            .map(|t| match &t.tail {
                Tail::Value(v) => (t.head, v.sort_key),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got.iter().map(|(e, v)| (*e, v.sort_key)).collect::<Vec<_>>(), want);
    }

    proptest! {
        #[test]
        fn ppr_is_a_distribution(seed in 0u64..500, damping in 0.05f64..0.95) {
            let kb = random_kb(seed, 25, 40);
            let s = two_hop_subgraph(&kb, &[EntityId(0), EntityId(1)]).unwrap();
            let r = personalized_pagerank(&kb, &s, damping, 500).unwrap();
            prop_assert!((r.scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(r.scores.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn adding_a_topic_never_removes_entities(seed in 0u64..500, extra in 0u32..25) {
            let kb = random_kb(seed, 25, 30);
            let small = two_hop_subgraph(&kb, &[EntityId(0)]).unwrap();
            let big = two_hop_subgraph(&kb, &[EntityId(0), EntityId(extra)]).unwrap();
            prop_assert!(small.entities.iter().all(|e| big.contains(*e)));
        }
    }
}
