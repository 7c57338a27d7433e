//! Ordinal determiners and their min/max semantics.

use serde::{Deserialize, Serialize};

use crate::kb::RelationKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregation {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Determiner {
    pub surface: &'static str,
    pub aggregation: Aggregation,
    pub kind: RelationKind,
}

const fn det(surface: &'static str, aggregation: Aggregation, kind: RelationKind) -> Determiner {
    Determiner {
        surface,
        aggregation,
        kind,
    }
}

pub const DETERMINERS: [Determiner; 9] = [
    det("largest", Aggregation::Max, RelationKind::Size),
    det("fewest", Aggregation::Min, RelationKind::Size),
    det("biggest", Aggregation::Max, RelationKind::Size),
    det("smallest", Aggregation::Min, RelationKind::Size),
    det("earliest", Aggregation::Min, RelationKind::Time),
    det("latest", Aggregation::Max, RelationKind::Time),
    det("most recent", Aggregation::Max, RelationKind::Time),
    det("first", Aggregation::Min, RelationKind::Time),
    det("last", Aggregation::Max, RelationKind::Time),
];

impl Determiner {
    pub fn parse(surface: &str) -> Option<Self> {
        let s = surface.trim().to_lowercase();
        DETERMINERS.iter().copied().find(|d| d.surface == s)
    }

    pub fn for_kind(kind: RelationKind) -> impl Iterator<Item = Determiner> {
        DETERMINERS.into_iter().filter(move |d| d.kind == kind)
    }

    /// First determiner mentioned in a question, preferring multi-word forms.
    pub fn find_in(text: &str) -> Option<Self> {
        let words = crate::encoders::tokenize(text);
        let joined = format!(" {} ", words.join(" "));
        let mut best: Option<(usize, Determiner)> = None;
        for d in DETERMINERS {
            if let Some(pos) = joined.find(&format!(" {} ", d.surface)) {
                let better = match best {
                    None => true,
                    Some((p, b)) => pos < p || (pos == p && d.surface.len() > b.surface.len()),
                };
                if better {
                    best = Some((pos, d));
                }
            }
        }
        best.map(|(_, d)| d)
    }
}

/// Indices attaining the aggregation over `keys`; all ties included.
pub fn extremal_indices(keys: &[f64], aggregation: Aggregation) -> Vec<usize> {
    let target = match aggregation {
        Aggregation::Min => keys.iter().cloned().fold(f64::INFINITY, f64::min),
        Aggregation::Max => keys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    (0..keys.len()).filter(|&i| keys[i] == target).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_is_total_and_matches_english() {
        let max = ["largest", "biggest", "latest", "most recent", "last"];
        for d in DETERMINERS {
            let want = if max.contains(&d.surface) {
                Aggregation::Max
            } else {
                Aggregation::Min
            };
            assert_eq!(d.aggregation, want, "{}", d.surface);
            assert_eq!(Determiner::parse(d.surface), Some(d));
        }
        assert_eq!(Determiner::for_kind(RelationKind::Size).count(), 4);
        assert_eq!(Determiner::for_kind(RelationKind::Time).count(), 5);
        assert!(Determiner::parse("second").is_none());
    }

    #[test]
    fn finds_determiner_in_question() {
        let d = Determiner::find_in("Which album has the most recent release date?").unwrap();
        assert_eq!(d.surface, "most recent");
        let d = Determiner::find_in("What is the city of China that has the largest area ?").unwrap();
        assert_eq!(d.surface, "largest");
        assert!(Determiner::find_in("What is the genre of Red ?").is_none());
    }

    #[test]
    fn extremes_with_ties() {
        assert_eq!(extremal_indices(&[12.0, 20.0, 48.0, 100.0], Aggregation::Max), [3]);
        assert_eq!(extremal_indices(&[3.0, 1.0, 3.0], Aggregation::Max), [0, 2]);
        assert_eq!(extremal_indices(&[3.0, 1.0, 3.0], Aggregation::Min), [1]);
    }
}
