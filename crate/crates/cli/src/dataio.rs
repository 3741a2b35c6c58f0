//! On-disk dataset layout: a root directory with `AD/` (label 1) and `NL/`
//! (label 0) subdirectories holding `.nii` volumes or `.pgm` slices.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use neuroprep::classifiers::{SliceDataset, SliceItem};
use neuroprep::nifti::{load_volume, Volume3D};
use neuroprep::pgm;
use neuroprep::preprocess::{run_pipeline, PipelineConfig, PipelineInput, PipelineOutput};
use neuroprep::slicer::quantize_volume_slices;

pub const CLASS_DIRS: [(&str, u8); 2] = [("NL", 0), ("AD", 1)];

/// One loaded volume with its label and file stem.
pub struct LabeledVolume {
    pub stem: String,
    pub label: u8,
    pub volume: Volume3D,
}

/// Files that failed to load, with the error text.
pub type LoadFailures = Vec<(PathBuf, String)>;

/// Loads every `.nii` under `<dir>/NL` and `<dir>/AD`, sorted by class then
/// file name. 4D files unroll into one entry per time point (`stem_t<k>`).
/// Unreadable files are reported, not fatal.
pub fn load_volume_dir(dir: &Path) -> Result<(Vec<LabeledVolume>, LoadFailures)> {
    let mut out = Vec::new();
    let mut failures = Vec::new();
    let mut found_any_dir = false;
    for (class_dir, label) in CLASS_DIRS {
        let class_path = dir.join(class_dir);
        if !class_path.is_dir() {
            continue;
        }
        found_any_dir = true;
        for path in sorted_files(&class_path, "nii")? {
            let stem = file_stem(&path);
            match fs::read(&path)
                .map_err(anyhow::Error::from)
                .and_then(|bytes| load_volume(&bytes).map_err(anyhow::Error::from))
            {
                Ok(volumes) if volumes.len() == 1 => {
                    let volume = volumes.into_iter().next().unwrap();
                    out.push(LabeledVolume { stem, label, volume });
                }
                Ok(volumes) => {
                    for (t, volume) in volumes.into_iter().enumerate() {
                        out.push(LabeledVolume { stem: format!("{stem}_t{t}"), label, volume });
                    }
                }
                Err(err) => failures.push((path, err.to_string())),
            }
        }
    }
    if !found_any_dir {
        bail!(
            "{} has no NL/ or AD/ subdirectory; expected the class layout",
            dir.display()
        );
    }
    if out.is_empty() && failures.is_empty() {
        bail!("no input volumes under {}", dir.display());
    }
    Ok((out, failures))
}

/// Loads a directory of PGM slices into a dataset (no split assigned).
pub fn load_pgm_dir(dir: &Path) -> Result<SliceDataset> {
    let mut items = Vec::new();
    for (class_dir, label) in CLASS_DIRS {
        let class_path = dir.join(class_dir);
        if !class_path.is_dir() {
            continue;
        }
        for path in sorted_files(&class_path, "pgm")? {
            let image = pgm::read_file(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let stem = file_stem(&path);
            let (volume, slice_index) = split_slice_name(&stem);
            items.push(SliceItem { volume, slice_index, label, image });
        }
    }
    if items.is_empty() {
        bail!("no .pgm slices under {}", dir.display());
    }
    Ok(SliceDataset { items, train: vec![], test: vec![] })
}

/// Splits `<volume>_Image_<n>` back into its parts; anything else maps to
/// slice 0 of itself.
fn split_slice_name(stem: &str) -> (String, usize) {
    if let Some(at) = stem.rfind("_Image_") {
        if let Ok(index) = stem[at + "_Image_".len()..].parse::<usize>() {
            return (stem[..at].to_string(), index);
        }
    }
    (stem.to_string(), 0)
}

fn sorted_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(extension))
        .collect();
    files.sort();
    Ok(files)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

/// Per-volume preprocessing result kept alongside the benchmark datasets.
pub struct VolumeManifest {
    pub stem: String,
    pub output: PipelineOutput,
}

/// The paired benchmark inputs: `before` holds every quantized raw slice,
/// `after` the pipeline survivors. Both carry the same stratified split
/// assignment, fixed on the full slice set and inherited by the survivors,
/// so preprocessing is the only varying factor.
pub struct BenchDatasets {
    pub before: SliceDataset,
    pub after: SliceDataset,
    pub manifests: Vec<VolumeManifest>,
}

pub fn build_bench_datasets(
    volumes: &[LabeledVolume],
    config: &PipelineConfig,
    split_seed: u64,
) -> Result<BenchDatasets> {
    let mut before = SliceDataset::default();
    let mut per_volume: Vec<(usize, usize)> = Vec::new(); // (start, len) into items
    for lv in volumes {
        let start = before.items.len();
        for q in quantize_volume_slices(&lv.volume) {
            before.items.push(SliceItem {
                volume: lv.stem.clone(),
                slice_index: q.index,
                label: lv.label,
                image: q.image,
            });
        }
        per_volume.push((start, before.items.len() - start));
    }
    before.split(0.8, split_seed);

    let in_train: HashMap<(&str, usize), bool> = before
        .train
        .iter()
        .map(|&i| ((before.items[i].volume.as_str(), before.items[i].slice_index), true))
        .chain(
            before
                .test
                .iter()
                .map(|&i| ((before.items[i].volume.as_str(), before.items[i].slice_index), false)),
        )
        .collect();

    let mut after = SliceDataset::default();
    let mut manifests = Vec::new();
    for (lv, &(start, len)) in volumes.iter().zip(&per_volume) {
        let inputs: Vec<PipelineInput> = before.items[start..start + len]
            .iter()
            .map(|it| PipelineInput::Gray(it.image.clone()))
            .collect();
        let output = run_pipeline(inputs, config)
            .with_context(|| format!("preprocessing {}", lv.stem))?;
        for (&orig_index, image) in output.kept_indices.iter().zip(&output.slices) {
            let slice_index = before.items[start + orig_index].slice_index;
            let position = after.items.len();
            after.items.push(SliceItem {
                volume: lv.stem.clone(),
                slice_index,
                label: lv.label,
                image: image.clone(),
            });
            match in_train.get(&(lv.stem.as_str(), slice_index)) {
                Some(true) => after.train.push(position),
                Some(false) => after.test.push(position),
                None => unreachable!("survivor not present in the full slice set"),
            }
        }
        manifests.push(VolumeManifest { stem: lv.stem.clone(), output });
    }
    if after.items.is_empty() {
        bail!("preprocessing removed every slice of every volume");
    }
    Ok(BenchDatasets { before, after, manifests })
}
