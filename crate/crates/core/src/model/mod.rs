//! The classifier network and what it exposes beyond probabilities.

pub mod config;
pub mod export;
pub mod importance;
pub mod network;

pub use config::{ProbeConfig, ScalarStats, NUM_CLASSES};
pub use export::{export_molecular_embeddings, ExportFormat, ExportedEmbedding};
pub use importance::{atom_importance, importance_from_attention};
pub use network::{softmax_rows, ForwardCache, ForwardOutput, Mode, ProbeModel};
