//! In-memory knowledge base with adjacency indexes, plus its file formats.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::value::{normalize_value, NumericValue, RelationMeta, UnitTable};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tail {
    Entity(EntityId),
    Value(NumericValue),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: Tail,
}

impl Triple {
    pub fn tail_entity(&self) -> Option<EntityId> {
        match self.tail {
            Tail::Entity(e) => Some(e),
            Tail::Value(_) => None,
        }
    }
}

/// Immutable once built; every query is read-only.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeBase {
    entities: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relations: Vec<RelationMeta>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    /// Triple indices by head entity.
    by_head: Vec<Vec<usize>>,
    /// Triple indices by tail entity (entity tails only).
    by_tail: Vec<Vec<usize>>,
    by_relation: Vec<Vec<usize>>,
    units: UnitTable,
}

impl KnowledgeBase {
    pub fn new(relations: Vec<RelationMeta>, units: UnitTable) -> Result<Self> {
        let mut kb = Self {
            units,
            ..Self::default()
        };
        for meta in relations {
            kb.add_relation(meta)?;
        }
        Ok(kb)
    }

    pub fn add_relation(&mut self, meta: RelationMeta) -> Result<RelationId> {
        meta.validate()?;
        if self.relation_index.contains_key(&meta.name) {
            return Err(Error::data(format!("relation `{}` declared twice", meta.name)));
        }
        let id = RelationId(self.relations.len() as u32);
        self.relation_index.insert(meta.name.clone(), id);
        self.relations.push(meta);
        self.by_relation.push(Vec::new());
        Ok(id)
    }

    pub fn add_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_index.get(name) {
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(name.to_string());
        self.entity_index.insert(name.to_string(), id);
        self.by_head.push(Vec::new());
        self.by_tail.push(Vec::new());
        id
    }

    /// Adds `head relation tail`, parsing the tail as a number when the relation is numerical.
    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) -> Result<usize> {
        let rel = self
            .relation_id(relation)
            .ok_or_else(|| Error::data(format!("relation `{relation}` is not declared")))?;
        let meta = &self.relations[rel.index()];
        let value = if meta.is_numerical {
            Some(normalize_value(tail, meta, &self.units)?)
        } else {
            None
        };
        let head = self.add_entity(head);
        let tail = match value {
            Some(v) => Tail::Value(v),
            None => Tail::Entity(self.add_entity(tail)),
        };
        let idx = self.triples.len();
        self.by_head[head.index()].push(idx);
        if let Tail::Entity(t) = tail {
            self.by_tail[t.index()].push(idx);
        }
        self.by_relation[rel.index()].push(idx);
        self.triples.push(Triple {
            head,
            relation: rel,
            tail,
        });
        Ok(idx)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities[id.index()]
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn relation(&self, id: RelationId) -> &RelationMeta {
        &self.relations[id.index()]
    }

    pub fn relations(&self) -> impl Iterator<Item = (RelationId, &RelationMeta)> {
        self.relations
            .iter()
            .enumerate()
            .map(|(i, m)| (RelationId(i as u32), m))
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, idx: usize) -> &Triple {
        &self.triples[idx]
    }

    pub fn units(&self) -> &UnitTable {
        &self.units
    }

    pub fn triples_from(&self, e: EntityId) -> impl Iterator<Item = usize> + '_ {
        self.by_head[e.index()].iter().copied()
    }

    pub fn triples_to(&self, e: EntityId) -> impl Iterator<Item = usize> + '_ {
        self.by_tail[e.index()].iter().copied()
    }

    pub fn triples_with(&self, r: RelationId) -> &[usize] {
        &self.by_relation[r.index()]
    }

    /// Entity tails of `head` under `relation`.
    pub fn objects(&self, head: EntityId, relation: RelationId) -> Vec<EntityId> {
        self.triples_from(head)
            .filter(|&i| self.triples[i].relation == relation)
            .filter_map(|i| self.triples[i].tail_entity())
            .collect()
    }

    /// Entity heads pointing at `tail` under `relation`.
    pub fn subjects(&self, tail: EntityId, relation: RelationId) -> Vec<EntityId> {
        self.triples_to(tail)
            .filter(|&i| self.triples[i].relation == relation)
            .map(|i| self.triples[i].head)
            .collect()
    }

    /// Non-numerical neighbours ignoring direction, one entry per edge.
    pub fn undirected_neighbors(&self, e: EntityId) -> impl Iterator<Item = EntityId> + '_ {
        let out = self.triples_from(e).filter_map(|i| self.triples[i].tail_entity());
        let inc = self.triples_to(e).map(|i| self.triples[i].head);
        out.chain(inc)
    }

    pub fn write_triples(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for t in &self.triples {
            let tail = match &t.tail {
                Tail::Entity(e) => self.entity_name(*e),
                Tail::Value(v) => v.raw_text.as_str(),
            };
            let _ = writeln!(
                s,
                "{}\t{}\t{}",
                self.entity_name(t.head),
                self.relation(t.relation).name,
                tail
            );
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn write_relation_meta(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for m in &self.relations {
            s.push_str(&serde_json::to_string(m)?);
            s.push('\n');
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

pub fn load_kb(triples_path: &Path, relation_meta_path: &Path) -> Result<KnowledgeBase> {
    load_kb_with_units(triples_path, relation_meta_path, UnitTable::default())
}

pub fn load_kb_with_units(triples_path: &Path, relation_meta_path: &Path, units: UnitTable) -> Result<KnowledgeBase> {
    let load_err = |path: &Path, line: usize, msg: String| Error::Load {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut kb = KnowledgeBase::new(Vec::new(), units)?;
    let meta = BufReader::new(std::fs::File::open(relation_meta_path)?);
    for (i, line) in meta.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: RelationMeta =
            serde_json::from_str(&line).map_err(|e| load_err(relation_meta_path, i + 1, e.to_string()))?;
        kb.add_relation(m)
            .map_err(|e| load_err(relation_meta_path, i + 1, e.to_string()))?;
    }
    let triples = BufReader::new(std::fs::File::open(triples_path)?);
    for (i, line) in triples.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(load_err(
                triples_path,
                i + 1,
                format!("expected 3 tab-separated fields, got {}", parts.len()),
            ));
        }
        kb.add_triple(parts[0], parts[1], parts[2])
            .map_err(|e| load_err(triples_path, i + 1, e.to_string()))?;
    }
    Ok(kb)
}
