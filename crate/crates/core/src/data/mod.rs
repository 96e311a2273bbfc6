//! Dataset and annotation files, and the synthetic planted-concept generator.

mod dataset;
mod format;
mod synth;

pub use dataset::Dataset;
pub use format::{
    load_annotations, load_dataset, save_annotations, save_dataset, AnnotationData,
    EmbeddingDataset, ANNOTATION_MAGIC, EMBEDDING_MAGIC,
};
pub(crate) use format::write as write_file;
pub use synth::{generate_synthetic, planted_as_dataset, SynthConfig, SynthOutput};
