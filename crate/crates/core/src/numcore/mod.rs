//! Dense tensors, seeded random streams and reverse-mode differentiation.

mod rng;
mod tape;
mod tensor;

pub use rng::{gaussian, splitmix64, stable_hash, RngStream};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::{dot, matvec, norm, norm_sq, sub, Tensor};

pub(crate) use tensor::{matvec_raw, matvec_t_raw};
