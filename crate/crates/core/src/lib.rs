//! Unknown-aware dynamic sparse training at desk scale.
//!
//! The crate trains fully-connected classifiers with a K+1 softmax head
//! under SET/RigL sparsity schedules, using a two-branch loss whose weight
//! ramps up through an auto-tuned per-epoch scheduler, and averages the
//! trailing-window checkpoints into the released model. Around that core sit
//! post-hoc OOD detectors (MSP, ODIN, EBO, KNN, KLM), reliability metrics
//! (AUROC, FPR-95, AUPR, ECE, accuracy), IDX/Gaussian-mixture data
//! handling, and Monte-Carlo probes of the mixture reliability theory.
//!
//! Everything is deterministic under a 64-bit seed, including the
//! data-parallel paths (see [`exec`]).

pub mod data;
pub mod detect;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod moon;
pub mod network;
pub mod rng;
pub mod sparsity;
pub mod tensor;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use network::SparseNetwork;
pub use rng::SeededRng;
pub use tensor::Tensor;
