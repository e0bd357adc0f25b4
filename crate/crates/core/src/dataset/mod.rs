//! Parameter-grid sweep of SIMP runs persisted as grid files plus a
//! line-oriented manifest, and batch loading for training.

mod format;
mod generate;
mod grid;
mod loader;
mod manifest;

pub use format::{
    decode_grid, encode_grid, read_grid, read_grid_f32, write_grid, write_grid_f32, GRID_MAGIC,
    GRID_VERSION,
};
pub use generate::{
    generate_dataset, generate_dataset_with, GenerateOptions, GenerationOutcome, GRID_DIR,
};
pub use grid::{enumerate_grid, Axis, GridSpec};
pub use loader::{load_batches, Batch, LoadedDataset};
pub use manifest::{
    sample_id, DatasetManifest, ManifestHeader, SampleRecord, FORMAT_VERSION, MANIFEST_FILE,
};
