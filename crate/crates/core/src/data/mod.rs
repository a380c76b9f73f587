//! Hyperspectral cube ingestion, band-slice segmentation, patches, and
//! train/test splits.

mod cube;
mod labels;
mod patch;
mod slices;
mod split;

pub use cube::{load_cube, normalize_cube, write_cube, CubeHeader, HsiCube};
pub use labels::LabelMap;
pub use patch::{extract_patch, patch_coords, reflect_index, Patch};
pub use slices::{segment_bands, BandSlice, BandSliceSet};
pub use split::{split_samples, stratum_train_count, SampleSplit};
