//! Semi-supervised classification engine.
//!
//! Unlabeled data is aggregated by maximizing the mutual information between
//! predictions on three views of each sample (original, weakly augmented,
//! strongly augmented). Proxy labels are assigned by matching unlabeled
//! features against per-class template centers that are kept in bounded
//! FIFO queues of labeled features and refreshed from a per-epoch memory bank
//! of high-confidence unlabeled samples.
//!
//! Everything is computed in `f64` on the CPU through a small define-by-run
//! reverse-mode differentiation core ([`autodiff`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod dtm;
mod error;
pub mod memory_bank;
pub mod metrics;
pub mod mi;
pub mod model;
pub mod rng;
pub mod trainer;

pub use autodiff::{Graph, Tensor, Var};
pub use data::{Dataset, Payload, Sample, Split, SplitSpec, UnlabeledSample};
pub use dtm::{FeaturePool, ProxyLabel};
pub use error::{Error, Result};
pub use memory_bank::MemoryBank;
pub use metrics::ProxyStats;
pub use model::{EmaState, Mlp, ModelConfig};
pub use trainer::{Guesser, TrainConfig, TrainReport, Trainer};
