//! Embedding containers, label generation, splits and padded batches.

pub mod batch;
pub mod container;
pub mod labels;
pub mod record;
pub mod synth;

pub use batch::{make_batches, Batch};
pub use container::{decode_container, encode_container, read_container, read_container_with_header, write_container, ContainerHeader};
pub use labels::{
    apply_boundary, assign_labels, class_weights, quantile_boundary, split_train_val, ErrorMode,
    LabeledDataset, RELIABLE, UNRELIABLE,
};
pub use record::MoleculeRecord;
pub use synth::{cluster_of, synth_generate, ClusterSpec, SynthSpec};
