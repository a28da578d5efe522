//! Training-free selection of a lightweight U-Net width.
//!
//! The crate builds an ordered family of width-capped U-Nets, scores every
//! untrained member by the RMS norm of the input gradient of its summed
//! logits over a few sample images, normalizes the scores across the family
//! and places a collapse boundary on the resulting curve. The member at the
//! boundary is the smallest configuration still on the stable plateau.
//!
//! Modules, bottom up:
//! - [`tensor`], [`ops`], [`tape`]: dense tensors, layer primitives with
//!   input-cotangent pullbacks, and a reverse sweep over a recorded tape.
//! - [`family`], [`network`]: configurations and seeded instances.
//! - [`sensitivity`]: scores, normalization, collapse detection.
//! - [`pipeline`]: image ingestion, sampling, the end-to-end run, reports.
//! - [`oracle`]: finite differences, exhaustive split search, synthetic curves.

pub mod error;
pub mod family;
pub mod network;
pub mod ops;
pub mod oracle;
pub mod pipeline;
pub mod sensitivity;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use family::{build_family, channel_schedule, param_count, FamilyConfig, NetConfig};
pub use network::{member_seed, NetworkInstance, Sequential};
pub use ops::{ConvSpec, Primitive, Pullback};
pub use pipeline::{run_selection, RunConfig, RunOutput, SelectionReport};
pub use sensitivity::{
    detect_collapse, sensitivity_score, CandidateSet, Detection, DetectorMode, DetectorOptions,
    SensitivityCurve, TieBreak,
};
pub use tape::{input_gradient, InputDifferentiable, Tape};
pub use tensor::Tensor;
