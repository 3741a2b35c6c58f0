//! The seven subcommands. Each returns `Err` on failure; per-file problems
//! inside `convert`/`preprocess` are printed and folded into one final error
//! so remaining files still get processed.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use neuroprep::classifiers::{
    cnn, featurize_dataset, forest, gbt, load_model, save_model, CnnArch, Model, SliceDataset,
    TrainConfig,
};
use neuroprep::metrics::{confusion_from_predictions, metrics_from_cm};
use neuroprep::nifti::{write_nifti, DataType};
use neuroprep::pgm;
use neuroprep::phantom::{generate_volume, volume_stem, PhantomSpec};
use neuroprep::preprocess::{run_pipeline, PipelineConfig, PipelineInput};
use neuroprep::seed::derive_seed;
use neuroprep::slicer::{quantize_volume_slices, slice_filename};

use crate::bench::{
    run_bench, write_bench_csv, write_history_csv, write_manifest_csv, write_stage_timings_csv,
    ModelKind,
};
use crate::dataio::{load_pgm_dir, load_volume_dir, CLASS_DIRS};
use crate::svg;

/// Writes `n_per_class` phantom volumes per class as NIfTI-1 under
/// `<out>/AD` and `<out>/NL`. Re-running with the same seed overwrites the
/// files bit-identically.
pub fn gen_phantom(n_per_class: usize, seed: u64, out_dir: &Path) -> Result<()> {
    if n_per_class == 0 {
        bail!("--n-per-class must be at least 1");
    }
    for (class_dir, label) in CLASS_DIRS {
        let dir = out_dir.join(class_dir);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for i in 0..n_per_class {
            let spec = PhantomSpec::for_class(label, seed.wrapping_add(i as u64));
            let volume = generate_volume(&spec);
            let bytes = write_nifti(&volume, DataType::F32)?;
            let path = dir.join(format!("{}.nii", volume_stem(label, i)));
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    println!("wrote {} volumes under {}", 2 * n_per_class, out_dir.display());
    Ok(())
}

/// Shared body of `convert` and `preprocess`: load volumes, turn each into
/// PGM slices under the class layout, optionally through the full pipeline.
fn slice_volumes(in_dir: &Path, out_dir: &Path, pipeline: Option<&PipelineConfig>) -> Result<()> {
    let (volumes, failures) = load_volume_dir(in_dir)?;
    for (path, err) in &failures {
        eprintln!("skipping {}: {err}", path.display());
    }

    let mut written = 0usize;
    let mut errors = failures.len();
    let mut manifests = Vec::new();
    for lv in &volumes {
        let class_dir = out_dir.join(CLASS_DIRS[usize::from(lv.label)].0);
        fs::create_dir_all(&class_dir)
            .with_context(|| format!("creating {}", class_dir.display()))?;
        let quantized = quantize_volume_slices(&lv.volume);
        match pipeline {
            None => {
                for q in &quantized {
                    let path = class_dir.join(slice_filename(&lv.stem, q.index));
                    pgm::write_file(&q.image, &path)
                        .with_context(|| format!("writing {}", path.display()))?;
                    written += 1;
                }
            }
            Some(config) => {
                let inputs: Vec<PipelineInput> = quantized
                    .iter()
                    .map(|q| PipelineInput::Gray(q.image.clone()))
                    .collect();
                match run_pipeline(inputs, config) {
                    Ok(output) => {
                        for (&index, image) in output.kept_indices.iter().zip(&output.slices) {
                            let slice_index = quantized[index].index;
                            let path = class_dir.join(slice_filename(&lv.stem, slice_index));
                            pgm::write_file(image, &path)
                                .with_context(|| format!("writing {}", path.display()))?;
                            written += 1;
                        }
                        manifests.push(crate::dataio::VolumeManifest {
                            stem: lv.stem.clone(),
                            output,
                        });
                    }
                    Err(err) => {
                        eprintln!("skipping {}: {err}", lv.stem);
                        errors += 1;
                    }
                }
            }
        }
    }

    if pipeline.is_some() {
        write_manifest_csv(&manifests, &out_dir.join("manifest.csv"))?;
        write_stage_timings_csv(&manifests, &out_dir.join("timings.csv"))?;
    }
    println!("wrote {written} slices under {}", out_dir.display());
    if errors > 0 {
        bail!("{errors} input volume(s) failed");
    }
    Ok(())
}

pub fn convert(in_dir: &Path, out_dir: &Path) -> Result<()> {
    slice_volumes(in_dir, out_dir, None)
}

pub fn preprocess(in_dir: &Path, out_dir: &Path, config: &PipelineConfig) -> Result<()> {
    slice_volumes(in_dir, out_dir, Some(config))
}

/// Trains one model on a directory of PGM slices with an internal seeded
/// 80/20 split, saves it, and (for the CNN) optionally writes the per-epoch
/// history.
pub fn train(
    model_kind: ModelKind,
    data_dir: &Path,
    seed: u64,
    epochs: usize,
    model_out: &Path,
    history_out: Option<&Path>,
) -> Result<()> {
    let mut data = load_pgm_dir(data_dir)?;
    data.split(0.8, derive_seed(seed, "split", 0));
    let cfg = TrainConfig {
        seed: derive_seed(seed, model_kind.name(), 0),
        epochs,
        ..TrainConfig::default()
    };

    let (model, history) = match model_kind {
        ModelKind::Rf => {
            let features = featurize_dataset(&data);
            let x: Vec<Vec<f64>> = data.train.iter().map(|&i| features[i].clone()).collect();
            let y: Vec<u8> = data.train.iter().map(|&i| data.items[i].label).collect();
            (Model::RandomForest(forest::train(&x, &y, &cfg.rf, cfg.seed)?), None)
        }
        ModelKind::Gbt => {
            let features = featurize_dataset(&data);
            let x: Vec<Vec<f64>> = data.train.iter().map(|&i| features[i].clone()).collect();
            let y: Vec<u8> = data.train.iter().map(|&i| data.items[i].label).collect();
            (Model::Gbt(gbt::train(&x, &y, &cfg.gbt)?.model), None)
        }
        ModelKind::Cnn => {
            let first = &data.items[0].image;
            let arch = CnnArch::paper_default(first.height, first.width);
            let out = cnn::train(&data, arch, &cfg)?;
            (Model::Cnn(out.model), Some(out.history))
        }
    };

    save_model(&model, model_out)?;
    println!("saved {} model to {}", model_kind, model_out.display());

    if let Some(path) = history_out {
        match &history {
            Some(h) => {
                write_history_csv(h, path)?;
                println!("wrote history to {}", path.display());
            }
            None => eprintln!("--history applies to the cnn only; ignoring"),
        }
    }

    // Held-out accuracy as a quick sanity line.
    let eval = evaluate_model(&model, &data, &data.test)?;
    println!("held-out accuracy: {:.4}", eval.0);
    Ok(())
}

fn evaluate_model(
    model: &Model,
    data: &SliceDataset,
    indices: &[usize],
) -> Result<(f64, Vec<u8>)> {
    let truth: Vec<u8> = indices.iter().map(|&i| data.items[i].label).collect();
    let pred: Vec<u8> = match model {
        Model::RandomForest(m) => {
            let features = featurize_dataset(data);
            indices
                .iter()
                .map(|&i| m.predict(&features[i]).map(|(l, _)| l))
                .collect::<Result<_, _>>()?
        }
        Model::Gbt(m) => {
            let features = featurize_dataset(data);
            indices
                .iter()
                .map(|&i| m.predict(&features[i]).map(|(l, _)| l))
                .collect::<Result<_, _>>()?
        }
        Model::Cnn(m) => indices
            .iter()
            .map(|&i| cnn::predict(m, &data.items[i].image).map(|(l, _)| l))
            .collect::<Result<_, _>>()?,
    };
    let cm = confusion_from_predictions(&truth, &pred)?;
    Ok((metrics_from_cm(&cm)?.accuracy, pred))
}

/// Evaluates a saved model on every slice under `data_dir` and writes one
/// metrics row (stdout by default).
pub fn eval(model_path: &Path, data_dir: &Path, out: Option<&Path>) -> Result<()> {
    let model = load_model(model_path)?;
    let data = load_pgm_dir(data_dir)?;
    let all: Vec<usize> = (0..data.items.len()).collect();
    let truth: Vec<u8> = data.items.iter().map(|it| it.label).collect();
    let (_, pred) = evaluate_model(&model, &data, &all)?;
    let cm = confusion_from_predictions(&truth, &pred)?;
    let m = metrics_from_cm(&cm)?;

    let name = match &model {
        Model::RandomForest(_) => "rf",
        Model::Gbt(_) => "gbt",
        Model::Cnn(_) => "cnn",
    };
    let mut text = String::from("model,accuracy,sensitivity,specificity,tp,fn,fp,tn\n");
    text.push_str(&format!(
        "{name},{:.6},{},{},{},{},{},{}\n",
        m.accuracy,
        m.sensitivity.map(|v| format!("{v:.6}")).unwrap_or_default(),
        m.specificity.map(|v| format!("{v:.6}")).unwrap_or_default(),
        cm.true_pos,
        cm.false_neg,
        cm.false_pos,
        cm.true_neg,
    ));
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Runs the full before/after benchmark and writes `bench.csv`, the CNN
/// histories, the slice manifest, and the preprocessing stage timings.
pub fn bench(
    data_dir: &Path,
    models: &[ModelKind],
    seed: u64,
    pipeline: &PipelineConfig,
    epochs: usize,
    out_dir: &Path,
) -> Result<()> {
    let (volumes, failures) = load_volume_dir(data_dir)?;
    for (path, err) in &failures {
        eprintln!("skipping {}: {err}", path.display());
    }
    if volumes.is_empty() {
        bail!("no usable volumes under {}", data_dir.display());
    }
    let report = run_bench(&volumes, models, seed, pipeline, epochs)?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_bench_csv(&report, &out_dir.join("bench.csv"))?;
    write_manifest_csv(&report.manifests, &out_dir.join("manifest.csv"))?;
    write_stage_timings_csv(&report.manifests, &out_dir.join("preprocess_timings.csv"))?;
    for (stage, history) in &report.cnn_histories {
        let name = format!("cnn_history_{}.csv", stage.name());
        write_history_csv(history, &out_dir.join(name))?;
    }

    for cell in &report.cells {
        println!(
            "{:<4} {:<7} accuracy {:.4}  seconds {:.2}",
            cell.model.name(),
            cell.stage.name(),
            cell.metrics.accuracy,
            cell.seconds
        );
    }
    for (model, decrease) in &report.time_decrease {
        println!("{:<4} training time decrease {decrease:.2}%", model.name());
    }
    if !failures.is_empty() {
        bail!("{} input volume(s) failed to load", failures.len());
    }
    Ok(())
}

/// Renders a history CSV to an SVG accuracy/loss chart.
pub fn plot(history_path: &Path, out_path: &Path) -> Result<()> {
    let rows = svg::read_history(history_path)?;
    let chart = svg::render_chart(&rows);
    fs::write(out_path, chart).with_context(|| format!("writing {}", out_path.display()))?;
    println!("wrote {}", out_path.display());
    Ok(())
}

/// Re-exported for `bench --models` parsing in `main`.
pub use crate::bench::parse_models;
