//! Order-aware number embeddings from a value-masked transformer.

pub mod input;
pub mod mask;
pub mod transformer;

pub use input::{NtFeaturizer, NtInput, TruncationReport, DEFAULT_N_MAX};
pub use mask::{build_mask, Layout};
pub use transformer::{nt_forward, NtConfig, NtOutput, NumericalTransformer, NPL_HEAD};
