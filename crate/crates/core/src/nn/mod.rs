//! Differentiable numeric substrate: tensors, tape autodiff, parameters,
//! optimizers and gradient checking.

pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use attention::{masked_attention, AttentionOutput};
pub use gradcheck::{grad_check, relative_error, relative_error_beyond, GradCheckConfig, GradCheckReport};
pub use optim::{optimize_step, OptimizerKind, OptimizerState};
pub use params::{Gradients, ParamGroup, ParamId, Parameter, ParameterSet};
pub use tape::{Tape, Var};
pub use tensor::{Tensor, MASK_SENTINEL};
