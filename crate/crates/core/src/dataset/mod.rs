//! Annotation ingestion, crop storage, image cubes and pool sampling.

pub mod annotation;
pub mod crops;
pub mod cube;
pub mod sampling;
pub mod synth;

pub use annotation::{load_annotations, save_annotations, AnnotationRecord, BBox, LoadOptions, RecordKey};
pub use crops::CropStore;
pub use cube::{build_cube, sample_cube, sequence_samples, tiled_samples, ImageCube, Sample};
pub use sampling::{balanced_sample, hold_one_subject_out, stratified_sample, HoldOut};
pub use synth::{generate_synthetic, SyntheticConfig};
