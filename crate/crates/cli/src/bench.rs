//! The before/after benchmark: train each requested model on raw quantized
//! slices and on preprocessed slices with the identical split and seed, time
//! the training phase with a monotonic clock, and collect the table rows.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use neuroprep::classifiers::{
    cnn, featurize_dataset, forest, gbt, CnnArch, EpochStats, SliceDataset, TrainConfig,
};
use neuroprep::metrics::{
    confusion_from_predictions, metrics_from_cm, percentage_decrease, ClassificationMetrics,
    ConfusionMatrix,
};
use neuroprep::preprocess::PipelineConfig;
use neuroprep::seed::derive_seed;

use crate::dataio::{build_bench_datasets, LabeledVolume, VolumeManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum ModelKind {
    Rf,
    Gbt,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Rf, ModelKind::Gbt, ModelKind::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rf" => Ok(ModelKind::Rf),
            "gbt" => Ok(ModelKind::Gbt),
            "cnn" => Ok(ModelKind::Cnn),
            other => bail!("unknown model {other:?}; expected rf, gbt, or cnn"),
        }
    }
}

/// Parses a `--models rf,gbt,cnn` list.
pub fn parse_models(arg: &str) -> Result<Vec<ModelKind>> {
    let models: Vec<ModelKind> = arg
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(ModelKind::from_str)
        .collect::<Result<_>>()?;
    if models.is_empty() {
        bail!("no models selected");
    }
    Ok(models)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Before,
    After,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Before => "before",
            Stage::After => "after",
        }
    }
}

/// One row of the benchmark table.
pub struct BenchCell {
    pub model: ModelKind,
    pub stage: Stage,
    pub cm: ConfusionMatrix,
    pub metrics: ClassificationMetrics,
    pub seconds: f64,
}

pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    /// Training-time percentage decrease per model, paired before/after.
    pub time_decrease: Vec<(ModelKind, f64)>,
    pub cnn_histories: Vec<(Stage, Vec<EpochStats>)>,
    pub manifests: Vec<VolumeManifest>,
}

impl BenchReport {
    pub fn cell(&self, model: ModelKind, stage: Stage) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.model == model && c.stage == stage)
    }
}

/// Trains every requested model on both stages. Sub-seeds derive from the
/// top-level seed and the model name only, so a model sees the same seed in
/// both stages and preprocessing stays the only difference.
pub fn run_bench(
    volumes: &[LabeledVolume],
    models: &[ModelKind],
    seed: u64,
    pipeline: &PipelineConfig,
    epochs: usize,
) -> Result<BenchReport> {
    let sets = build_bench_datasets(volumes, pipeline, derive_seed(seed, "split", 0))?;
    let stages = [(Stage::Before, &sets.before), (Stage::After, &sets.after)];

    let mut cells = Vec::new();
    let mut time_decrease = Vec::new();
    let mut cnn_histories = Vec::new();

    for &model in models {
        let model_seed = derive_seed(seed, model.name(), 0);
        let mut seconds = [0.0f64; 2];
        for (slot, (stage, data)) in stages.iter().enumerate() {
            let (cm, elapsed) = match model {
                ModelKind::Rf => train_eval_rf(data, model_seed)?,
                ModelKind::Gbt => train_eval_gbt(data)?,
                ModelKind::Cnn => {
                    let (cm, elapsed, history) = train_eval_cnn(data, model_seed, epochs)?;
                    cnn_histories.push((*stage, history));
                    (cm, elapsed)
                }
            };
            seconds[slot] = elapsed;
            cells.push(BenchCell {
                model,
                stage: *stage,
                cm,
                metrics: metrics_from_cm(&cm)?,
                seconds: elapsed,
            });
        }
        time_decrease.push((model, percentage_decrease(seconds[0], seconds[1])?));
    }

    Ok(BenchReport { cells, time_decrease, cnn_histories, manifests: sets.manifests })
}

fn test_truth(data: &SliceDataset) -> Vec<u8> {
    data.test.iter().map(|&i| data.items[i].label).collect()
}

fn train_eval_rf(data: &SliceDataset, seed: u64) -> Result<(ConfusionMatrix, f64)> {
    let features = featurize_dataset(data);
    let cfg = TrainConfig::default();
    let x: Vec<Vec<f64>> = data.train.iter().map(|&i| features[i].clone()).collect();
    let y: Vec<u8> = data.train.iter().map(|&i| data.items[i].label).collect();

    let started = Instant::now();
    let model = forest::train(&x, &y, &cfg.rf, seed)?;
    let seconds = started.elapsed().as_secs_f64();

    let pred: Vec<u8> = data
        .test
        .iter()
        .map(|&i| model.predict(&features[i]).map(|(label, _)| label))
        .collect::<Result<_, _>>()?;
    Ok((confusion_from_predictions(&test_truth(data), &pred)?, seconds))
}

fn train_eval_gbt(data: &SliceDataset) -> Result<(ConfusionMatrix, f64)> {
    let features = featurize_dataset(data);
    let cfg = TrainConfig::default();
    let x: Vec<Vec<f64>> = data.train.iter().map(|&i| features[i].clone()).collect();
    let y: Vec<u8> = data.train.iter().map(|&i| data.items[i].label).collect();

    let started = Instant::now();
    let out = gbt::train(&x, &y, &cfg.gbt)?;
    let seconds = started.elapsed().as_secs_f64();

    let pred: Vec<u8> = data
        .test
        .iter()
        .map(|&i| out.model.predict(&features[i]).map(|(label, _)| label))
        .collect::<Result<_, _>>()?;
    Ok((confusion_from_predictions(&test_truth(data), &pred)?, seconds))
}

fn train_eval_cnn(
    data: &SliceDataset,
    seed: u64,
    epochs: usize,
) -> Result<(ConfusionMatrix, f64, Vec<EpochStats>)> {
    let first = &data.items[0].image;
    let arch = CnnArch::paper_default(first.height, first.width);
    let cfg = TrainConfig { seed, epochs, ..TrainConfig::default() };

    let started = Instant::now();
    let out = cnn::train(data, arch, &cfg)?;
    let seconds = started.elapsed().as_secs_f64();

    let pred: Vec<u8> = data
        .test
        .iter()
        .map(|&i| cnn::predict(&out.model, &data.items[i].image).map(|(label, _)| label))
        .collect::<Result<_, _>>()?;
    Ok((confusion_from_predictions(&test_truth(data), &pred)?, seconds, out.history))
}

/// Writes the Table 2/3-shaped report: one row per model and stage, with the
/// training-time percentage decrease on the `after` rows.
pub fn write_bench_csv(report: &BenchReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "model",
        "stage",
        "accuracy",
        "sensitivity",
        "specificity",
        "tp",
        "fn",
        "fp",
        "tn",
        "seconds",
        "percent_decrease",
    ])?;
    for cell in &report.cells {
        let decrease = match cell.stage {
            Stage::Before => String::new(),
            Stage::After => report
                .time_decrease
                .iter()
                .find(|(m, _)| *m == cell.model)
                .map(|(_, d)| format!("{d:.4}"))
                .unwrap_or_default(),
        };
        w.write_record([
            cell.model.name().to_string(),
            cell.stage.name().to_string(),
            format!("{:.6}", cell.metrics.accuracy),
            optional_metric(cell.metrics.sensitivity),
            optional_metric(cell.metrics.specificity),
            cell.cm.true_pos.to_string(),
            cell.cm.false_neg.to_string(),
            cell.cm.false_pos.to_string(),
            cell.cm.true_neg.to_string(),
            format!("{:.6}", cell.seconds),
            decrease,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn optional_metric(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Writes a per-epoch training history CSV.
pub fn write_history_csv(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["epoch", "train_loss", "train_acc", "test_acc"])?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            format!("{:.6}", h.train_loss),
            format!("{:.6}", h.train_acc),
            format!("{:.6}", h.test_acc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-slice manifest: which slices survived and their foreground
/// fractions where the clip policy computed them.
pub fn write_manifest_csv(manifests: &[VolumeManifest], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["volume", "slice_index", "kept", "foreground_fraction"])?;
    for m in manifests {
        for record in &m.output.manifest {
            w.write_record([
                m.stem.clone(),
                record.index.to_string(),
                record.kept.to_string(),
                record
                    .foreground_fraction
                    .map(|f| format!("{f:.6}"))
                    .unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes per-volume preprocessing stage timings, kept separate from the
/// training times in the benchmark table.
pub fn write_stage_timings_csv(manifests: &[VolumeManifest], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["volume", "stage", "seconds"])?;
    for m in manifests {
        let t = m.output.timings;
        for (stage, seconds) in [
            ("grayscale", t.grayscale),
            ("clip", t.clip),
            ("equalize", t.equalize),
        ] {
            w.write_record([m.stem.clone(), stage.to_string(), format!("{seconds:.9}")])?;
        }
    }
    w.flush()?;
    Ok(())
}
