//! Multimodal traffic forecasting with graph sparse attention over a joint
//! multimodal graph and bidirectional dilated temporal convolutions.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors, a define-by-run reverse-mode tape, and a
//!   central-difference gradient checker.
//! - [`data`]: modality definitions, the block-diagonal joint graph,
//!   normalisation, sliding windows, the synthetic generator and file formats.
//! - [`spatial`]: graph-masked attention, the two-layer GCN and Top-U sparse
//!   attention.
//! - [`temporal`]: stacked dilated causal convolutions, their bidirectional
//!   combination and the shared/unique modality arrangement.
//! - [`model`]: the end-to-end forecaster, ablation wiring and checkpoints.
//! - [`train`]: loss, metrics, Adam, the training loop and the experiment
//!   harnesses (ablations, sweeps, attention census).
//! - [`cli`]: the run configuration and the command implementations behind
//!   the `gsabt` binary.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod spatial;
pub mod temporal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
