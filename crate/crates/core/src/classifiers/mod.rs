//! The three learners trained on preprocessed slices: a random forest, a
//! second-order gradient-boosted-tree ensemble, and a small two-convolution
//! CNN. All training is single-threaded and deterministic for a fixed seed.

pub mod cnn;
pub mod forest;
pub mod gbt;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;
use crate::seed::stream_rng;

use rand::seq::SliceRandom;

pub use cnn::{CnnArch, CnnModel, CnnTrainOutput, ConvStage, EpochStats};
pub use forest::RandomForestModel;
pub use gbt::{gbt_split_gain, GbtModel, GbtTrainOutput};

/// Class names indexed by label: 0 is the normal class, 1 is AD.
pub const CLASS_NAMES: [&str; 2] = ["NL", "AD"];

/// Side length of the square feature grid the tree learners consume.
pub const DEFAULT_FEATURE_SIDE: usize = 16;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("feature vector length {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training labels are all one class")]
    SingleClass,
    #[error("loss became non-finite at epoch {epoch}; last good epoch {last_good:?}")]
    NonFiniteLoss { epoch: usize, last_good: Option<usize> },
    #[error("inconsistent network shape: {0}")]
    BadArch(String),
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("feature vector length {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("image is {got_w}x{got_h} but the network expects {want_w}x{want_h}")]
    ShapeMismatch { want_w: usize, want_h: usize, got_w: usize, got_h: usize },
}

/// How many features each tree node considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSubsample {
    /// `ceil(sqrt(d))` features per node.
    Sqrt,
    /// Every feature at every node.
    All,
}

#[derive(Debug, Clone)]
pub struct RfConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    /// Draw a bootstrap sample per tree. Disabling it turns a 1-tree forest
    /// into a plain CART fit of the full training set.
    pub bootstrap: bool,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 2,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig { n_rounds: 100, max_depth: 4, lambda: 1.0, gamma: 0.0, eta: 0.1 }
    }
}

/// Shared training knobs. The epoch/batch settings drive the CNN; the tree
/// learners read their own sections.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub rf: RfConfig,
    pub gbt: GbtConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
            rf: RfConfig::default(),
            gbt: GbtConfig::default(),
        }
    }
}

/// One labeled slice.
#[derive(Debug, Clone)]
pub struct SliceItem {
    /// Stem of the volume this slice came from.
    pub volume: String,
    pub slice_index: usize,
    pub label: u8,
    pub image: GrayImage,
}

/// Labeled slices with a train/test split over item positions.
#[derive(Debug, Clone, Default)]
pub struct SliceDataset {
    pub items: Vec<SliceItem>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SliceDataset {
    pub fn labels(&self) -> Vec<u8> {
        self.items.iter().map(|it| it.label).collect()
    }

    /// Applies a stratified split over the items, replacing any existing one.
    pub fn split(&mut self, train_fraction: f64, seed: u64) {
        let (train, test) = stratified_split(&self.labels(), train_fraction, seed);
        self.train = train;
        self.test = test;
    }
}

/// Per-class shuffled assignment of `floor(train_fraction * n_c)` items to
/// the training set; the remainder tests. Both index lists come back sorted.
pub fn stratified_split(
    labels: &[u8],
    train_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = stream_rng(seed, "stratified-split", class as u64);
        idx.shuffle(&mut rng);
        let cut = (train_fraction * idx.len() as f64).floor() as usize;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Area-average downsample to `target_w x target_h`, scaled into [0, 1].
///
/// Each output cell averages the (fractionally overlapping) source box it
/// covers, so integer-ratio resizes are exact block means.
pub fn featurize(img: &GrayImage, target_w: usize, target_h: usize) -> Vec<f64> {
    assert!(target_w > 0 && target_h > 0);
    let sy = img.height as f64 / target_h as f64;
    let sx = img.width as f64 / target_w as f64;
    let mut out = Vec::with_capacity(target_w * target_h);
    for ty in 0..target_h {
        let y0 = ty as f64 * sy;
        let y1 = y0 + sy;
        for tx in 0..target_w {
            let x0 = tx as f64 * sx;
            let x1 = x0 + sx;
            let mut acc = 0.0;
            let mut row = y0.floor() as usize;
            while (row as f64) < y1 && row < img.height {
                let wy = overlap(row, y0, y1);
                let mut col = x0.floor() as usize;
                while (col as f64) < x1 && col < img.width {
                    let wx = overlap(col, x0, x1);
                    acc += wy * wx * f64::from(img.get(row, col));
                    col += 1;
                }
                row += 1;
            }
            out.push(acc / (sy * sx) / 255.0);
        }
    }
    out
}

fn overlap(cell: usize, lo: f64, hi: f64) -> f64 {
    let a = (cell as f64).max(lo);
    let b = ((cell + 1) as f64).min(hi);
    (b - a).max(0.0)
}

/// Featurizes every item of a dataset on the default grid.
pub fn featurize_dataset(data: &SliceDataset) -> Vec<Vec<f64>> {
    data.items
        .iter()
        .map(|it| featurize(&it.image, DEFAULT_FEATURE_SIDE, DEFAULT_FEATURE_SIDE))
        .collect()
}

/// Any trained model, for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    RandomForest(RandomForestModel),
    Gbt(GbtModel),
    Cnn(CnnModel),
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    BadVersion(u32),
    #[error("not a model file (format tag {0:?})")]
    BadFormat(String),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: Model,
}

/// Saves a model as versioned JSON. Weights and thresholds round-trip
/// exactly: floats are written in shortest-round-trip form.
pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelIoError> {
    let file = ModelFile {
        format: "neuroprep-model".to_string(),
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    fs::write(path, serde_json::to_vec(&file)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ModelIoError> {
    let file: ModelFile = serde_json::from_slice(&fs::read(path)?)?;
    if file.format != "neuroprep-model" {
        return Err(ModelIoError::BadFormat(file.format));
    }
    if file.version != MODEL_FORMAT_VERSION {
        return Err(ModelIoError::BadVersion(file.version));
    }
    Ok(file.model)
}
