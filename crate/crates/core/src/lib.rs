//! Per-layer convolution kernel-size selection.
//!
//! Given a declarative CNN description, [`optimizer::optimize_network`]
//! resolves every layer marked `free` to the candidate kernel that
//! maximizes a weighted combination of normalized information gain,
//! modeled accuracy gain and MAC cost. The crate also reports shapes,
//! receptive fields, MACs and parameter counts, and compares two
//! networks. No training is involved.

pub mod arch;
pub mod cost;
pub mod error;
pub mod objective;
pub mod optimizer;
pub mod report;
#[cfg(feature = "test-oracles")]
pub mod testing;

pub use arch::{FeatureShape, InputShape, Kernel, LayerSpec, NetworkSpec, OpKind};
pub use error::{Error, Result, Violation};
pub use objective::{Gamma, KernelCandidates, ObjectiveWeights, ScoreTable};
pub use optimizer::{optimize_network, OptimizationConfig, OptimizationResult};
