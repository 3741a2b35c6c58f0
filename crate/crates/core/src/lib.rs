//! Preprocessing pipeline and from-scratch classifiers for benchmarking how
//! much contrast preprocessing helps slice-level brain-scan classification.
//!
//! The crate parses NIfTI-1 volumes, slices them along the stored z axis,
//! quantizes to 8-bit, optionally clips near-skull-edge slices and applies
//! histogram equalization, then trains a random forest, gradient-boosted
//! trees, and a small CNN on the result. A deterministic synthetic phantom
//! generator stands in for restricted clinical data.

pub mod classifiers;
pub mod image;
pub mod metrics;
pub mod nifti;
pub mod pgm;
pub mod phantom;
pub mod preprocess;
pub mod seed;
pub mod slicer;
