//! Symbolic ordinal oracle used for labels and for re-verification.

use super::determiner::{extremal_indices, Determiner};
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase, RelationId, Tail};

/// First value of `entity` under `relation`, if any.
pub fn value_of(kb: &KnowledgeBase, entity: EntityId, relation: RelationId) -> Option<f64> {
    kb.triples_from(entity).find_map(|i| {
        let t = kb.triple(i);
        match &t.tail {
            Tail::Value(v) if t.relation == relation => Some(v.sort_key),
            _ => None,
        }
    })
}

/// Candidates attaining the determiner's min or max under `relation`, ties included.
pub fn ordinal_oracle(
    kb: &KnowledgeBase,
    candidates: &[EntityId],
    relation: RelationId,
    determiner: Determiner,
) -> Result<Vec<EntityId>> {
    let mut keys = Vec::with_capacity(candidates.len());
    let mut missing = Vec::new();
    for &c in candidates {
        match value_of(kb, c, relation) {
            Some(k) => keys.push(k),
            None => missing.push(kb.entity_name(c).to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "no `{}` value for: {}",
            kb.relation(relation).name,
            missing.join(", ")
        )));
    }
    Ok(extremal_indices(&keys, determiner.aggregation)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}
