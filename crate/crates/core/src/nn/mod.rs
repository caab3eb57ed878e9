//! Dense binary64 network primitives with explicit backward passes.

pub mod attention;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod optim;
pub mod param;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport, ParamCheck};
pub use optim::{clip_grad_norm, grad_norm, AdamW, AdamWConfig};
pub use param::{ParamId, ParamStore, Parameter};
pub use rng::SeededRng;
pub use tensor::Tensor;
