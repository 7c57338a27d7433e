//! Synthetic KB, pre-training datasets, templated augmentation and the ordinal oracle.

mod determiner;
mod instances;
mod oracle;
mod pretrain_data;
mod qa;
mod synth;

pub use determiner::{extremal_indices, Aggregation, Determiner, DETERMINERS};
pub use instances::{read_pretrain, read_qa, write_pretrain, write_qa, PretrainInstance, QaInstance};
pub use oracle::{ordinal_oracle, value_of};
pub use pretrain_data::{gen_qgnd, gen_qind, split_pretrain, verify_pretrain_labels, QgndReport};
pub use qa::{
    augmented_question, gen_augmented, gen_qa_corpus, home_hub, hub_slots, hubs_of, resolve_qa, subsample,
    AugmentedQaPair, HubSlot, QaCorpusConfig, QaSplits,
};
pub use synth::{gen_synthetic_kb, SynthConfig};
