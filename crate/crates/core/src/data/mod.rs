//! Modalities, the joint multimodal graph, normalisation, sliding windows,
//! the synthetic generator and the on-disk formats.

mod dataset;
mod graph;
pub mod io;
mod normalize;
mod series;
mod synth;
mod window;

pub use dataset::Dataset;
pub use graph::{extend_graphs, grid_adjacency, Adjacency, ModalitySpec, MultimodalGraph};
pub use normalize::{NormKind, Normalizer, Scaling};
pub use series::Series;
pub use synth::{synth_generate, SynthModality, STEPS_PER_DAY};
pub use window::{make_windows, Split, SplitBounds, WindowedDataset};
