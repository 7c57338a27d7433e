//! Pre-training instances `(q, r, V_r, v_q)` and QA instances, with their JSON-lines files.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{normalize_value, KnowledgeBase, NumericValue};

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainInstance {
    /// Determiner (QIND) or full question text (QGND).
    pub q: String,
    pub relation: String,
    pub values: Vec<NumericValue>,
    pub answer_index: usize,
}

#[derive(Serialize, Deserialize)]
struct PretrainRecord {
    q: String,
    relation: String,
    values: Vec<String>,
    answer_index: usize,
}

impl PretrainInstance {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::data(format!("instance {:?} has fewer than 2 numbers", self.q)));
        }
        if self.answer_index >= self.values.len() {
            return Err(Error::data(format!(
                "answer_index {} out of range for {} numbers",
                self.answer_index,
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn sort_keys(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.sort_key).collect()
    }
}

/// A QA pair; `relation` names the numerical relation behind an ordinal question when known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaInstance {
    pub id: String,
    pub question: String,
    pub topic_entities: Vec<String>,
    pub answers: Vec<String>,
    pub ordinal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_pretrain(path: &Path, instances: &[PretrainInstance]) -> Result<()> {
    write_lines(
        path,
        instances.iter().map(|i| PretrainRecord {
            q: i.q.clone(),
            relation: i.relation.clone(),
            values: i.values.iter().map(|v| v.raw_text.clone()).collect(),
            answer_index: i.answer_index,
        }),
    )
}

/// Reads instances, normalizing values under the relation's metadata in `kb`.
pub fn read_pretrain(path: &Path, kb: &KnowledgeBase) -> Result<Vec<PretrainInstance>> {
    let err = |line: usize, msg: String| Error::Load {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PretrainRecord = serde_json::from_str(&line).map_err(|e| err(i + 1, e.to_string()))?;
        let rid = kb
            .relation_id(&rec.relation)
            .ok_or_else(|| err(i + 1, format!("unknown relation `{}`", rec.relation)))?;
        let meta = kb.relation(rid);
        let values = rec
            .values
            .iter()
            .map(|v| normalize_value(v, meta, kb.units()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| err(i + 1, e.to_string()))?;
        let inst = PretrainInstance {
            q: rec.q,
            relation: rec.relation,
            values,
            answer_index: rec.answer_index,
        };
        inst.validate().map_err(|e| err(i + 1, e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_qa(path: &Path, qa: &[QaInstance]) -> Result<()> {
    write_lines(path, qa)
}

pub fn read_qa(path: &Path) -> Result<Vec<QaInstance>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{RelationMeta, UnitTable};

    #[test]
    fn pretrain_file_round_trip() {
        let kb = KnowledgeBase::new(
            vec![RelationMeta::size("tv.program.num_of_episodes", "")],
            UnitTable::default(),
        )
        .unwrap();
        let inst = PretrainInstance {
            q: "largest".into(),
            relation: "tv.program.num_of_episodes".into(),
            values: ["12", "20", "48", "100"]
                .iter()
                .map(|v| NumericValue::plain(v).unwrap())
                .collect(),
            answer_index: 3,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("qind.jsonl");
        write_pretrain(&p, std::slice::from_ref(&inst)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"answer_index\":3"));
        let back = read_pretrain(&p, &kb).unwrap();
        assert_eq!(back[0].sort_keys(), inst.sort_keys());
        assert_eq!(back[0].answer_index, 3);
    }

    #[test]
    fn validation() {
        let one = PretrainInstance {
            q: "largest".into(),
            relation: "x".into(),
            values: vec![NumericValue::plain("1").unwrap()],
            answer_index: 0,
        };
        assert!(one.validate().is_err());
        let bad = PretrainInstance {
            values: vec![NumericValue::plain("1").unwrap(), NumericValue::plain("2").unwrap()],
            answer_index: 2,
            ..one
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn qa_round_trip_keeps_optional_relation() {
        let qa = vec![
            QaInstance {
                id: "q1".into(),
                question: "What is the genre of Red ?".into(),
                topic_entities: vec!["Red".into()],
                answers: vec!["pop".into()],
                ordinal: false,
                relation: None,
            },
            QaInstance {
                id: "q2".into(),
                question: "Which album of TaylorSwift has the latest release date ?".into(),
                topic_entities: vec!["TaylorSwift".into()],
                answers: vec!["Folklore".into()],
                ordinal: true,
                relation: Some("release_date".into()),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("qa.jsonl");
        write_qa(&p, &qa).unwrap();
        assert!(!std::fs::read_to_string(&p)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .contains("relation"));
        assert_eq!(read_qa(&p).unwrap(), qa);
    }
}
