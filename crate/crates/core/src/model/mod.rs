//! The end-to-end forecaster: per-step input embedding, stacked ST-layers
//! (spatial block then temporal stack, each with an additive skip), and a
//! per-node MLP head.

mod check;
mod checkpoint;
mod config;
mod forward;
mod params;

pub use check::{block_summary, check_gradients, micro_instance, MicroInstance};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{apply_ablation, Ablation, EffectiveGraph, ModalityShape, ModelConfig, StageOrder};
pub use forward::{ForwardOutput, Model};
pub use params::{expected_param_count, HeadParams, LayerParams, ModelParams};
