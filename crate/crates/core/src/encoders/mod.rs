//! Frozen text encoders, the special number embedding and the question-type classifier.

pub mod classifier;
pub mod frozen;
pub mod sne;
pub mod vocab;

pub use classifier::{ClassifierTrainConfig, QuestionTypeClassifier};
pub use frozen::{cosine, EncoderConfig, FrozenEncoder, QuestionEncoding};
pub use sne::{positional_encoding, NumberEncoder, SneMode, SNE_PROJ};
pub use vocab::{tokenize, Vocabulary, END, NUMBER_CHARS, SEP, START, UNK};
