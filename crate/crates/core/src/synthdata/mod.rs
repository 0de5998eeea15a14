//! Synthetic attribute-labelled faces, the degradation pipeline and corpus IO.

mod au;
mod dataset;
mod degrade;
mod png_io;
mod render;
mod resize;

pub use au::{AuSet, Side, AU_SET_12, AU_SET_8};
pub use dataset::{
    generate_dataset, read_manifest, synthesize_sample, synthesize_splits, Batch, Dataset, DatasetConfig,
    ManifestRecord, Split, SplitData, SyntheticSample, DATASET_FILE, MANIFEST_FILE,
};
pub use degrade::{apply_mask, degrade, DegradationSpec, Masked};
pub use png_io::{encode_png, load_png, quantize, save_png};
pub use render::{mouth_region, render_face, FaceStyle, SyntheticFaceParams};
pub use resize::{bicubic_resize, cubic_kernel};
