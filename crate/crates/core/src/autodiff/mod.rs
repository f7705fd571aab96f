//! Minimal reverse-mode differentiation and the networks trained with it.

pub mod checkpoint;
pub mod kernels;
mod network;
mod params;
mod tape;
mod tensor;

pub use network::{
    Frame, Generator, ImogArch, ImogNetwork, MixtureHeads, MlpArch, RatioNetwork, ScanBatch, ScanInput, RATIO_LOG_BOUND,
};
pub use params::{Block, GradTape, GroupId, Layout};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use tape::{sigmoid, softplus};
