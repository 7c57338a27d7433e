//! Knowledge-base storage, value normalization and subgraph retrieval.

pub mod store;
pub mod subgraph;
pub mod value;

pub use store::{load_kb, load_kb_with_units, EntityId, KnowledgeBase, RelationId, Tail, Triple};
pub use subgraph::{
    k_hop_subgraph, numeric_values_for, personalized_pagerank, two_hop_subgraph, PprResult, Subgraph, DEFAULT_DAMPING,
    DEFAULT_TOP_N,
};
pub use value::{normalize_value, relation_words, NumericValue, RelationKind, RelationMeta, UnitTable};
