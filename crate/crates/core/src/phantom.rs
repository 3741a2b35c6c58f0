//! Deterministic synthetic two-class volumes standing in for license-
//! restricted scan data.
//!
//! Each volume is a centered ellipsoid of tissue on a constant background.
//! Tissue intensities live in a narrow band, so histogram equalization has
//! real contrast to recover, and the outermost z-slices miss the ellipsoid
//! entirely, mimicking the near-skull-edge cross-sections that clipping is
//! meant to remove. The class signal lives only in a speckle texture added
//! to class-1 tissue: 2x2 in-plane cells are brightened with probability
//! falling off quadratically from the ellipsoid center, normalized so the
//! expected flagged fraction of tissue equals `speckle_density`. The
//! center-weighting gives class 1 a radial brightness profile that survives
//! per-slice histogram equalization, which preserves ranks but flattens
//! value distributions. Noise and speckle come from separate ChaCha8
//! streams derived from the volume seed, so two classes generated from the
//! same seed differ only by the speckle term.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::classifiers::{SliceDataset, SliceItem, CLASS_NAMES};
use crate::nifti::Volume3D;
use crate::seed::{derive_seed, stream_rng};
use crate::slicer::quantize_volume_slices;

/// Parameters of one synthetic volume.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// 0 = NL, 1 = AD.
    pub class_label: u8,
    pub seed: u64,
    /// Ellipsoid semi-axes in voxels, centered in the volume.
    pub semi_axes: (f64, f64, f64),
    pub background_level: f64,
    /// Tissue intensities are clamped into this band.
    pub tissue_band: (f64, f64),
    /// Added to speckled tissue voxels; class 1 only.
    pub speckle_amplitude: f64,
    /// Fraction of tissue cells carrying speckle.
    pub speckle_density: f64,
    pub noise_sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            nx: 32,
            ny: 32,
            nz: 16,
            class_label: 0,
            seed: 0,
            semi_axes: (12.0, 12.0, 6.0),
            background_level: 8.0,
            tissue_band: (100.0, 140.0),
            speckle_amplitude: 6.0,
            speckle_density: 0.15,
            noise_sigma: 2.0,
        }
    }
}

impl PhantomSpec {
    pub fn for_class(class_label: u8, seed: u64) -> Self {
        PhantomSpec { class_label, seed, ..PhantomSpec::default() }
    }
}

/// Speckle cell edge in voxels; clustered speckle survives per-slice rank
/// remapping, where independent per-voxel speckle would not.
const SPECKLE_CELL: usize = 2;

/// Generates one volume. Deterministic per spec: equal specs give
/// bit-identical voxels.
pub fn generate_volume(spec: &PhantomSpec) -> Volume3D {
    let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
    let center = (
        (nx as f64 - 1.0) / 2.0,
        (ny as f64 - 1.0) / 2.0,
        (nz as f64 - 1.0) / 2.0,
    );
    let (a, b, c) = spec.semi_axes;
    let tissue_base = 0.5 * (spec.tissue_band.0 + spec.tissue_band.1);

    // Speckle pattern over 2x2 in-plane cells, drawn only for class 1 so a
    // class-0 volume from the same seed shares the identical noise stream.
    // Cell probability is density * (35/8) * (1 - u^2)^2 at the cell center,
    // whose mean over the unit ball is exactly `density`.
    let cells_x = nx.div_ceil(SPECKLE_CELL);
    let cells_y = ny.div_ceil(SPECKLE_CELL);
    let mut speckled = vec![false; nz * cells_y * cells_x];
    if spec.class_label == 1 && spec.speckle_amplitude != 0.0 {
        let mut rng = stream_rng(spec.seed, "phantom-speckle", 0);
        for z in 0..nz {
            for cy in 0..cells_y {
                for cx in 0..cells_x {
                    let ux = ((cx * SPECKLE_CELL) as f64 + 0.5 - center.0) / a;
                    let uy = ((cy * SPECKLE_CELL) as f64 + 0.5 - center.1) / b;
                    let uz = (z as f64 - center.2) / c;
                    let u2 = ux * ux + uy * uy + uz * uz;
                    let p = if u2 < 1.0 {
                        spec.speckle_density * (35.0 / 8.0) * (1.0 - u2) * (1.0 - u2)
                    } else {
                        0.0
                    };
                    // Always consume a draw so the pattern at one cell does
                    // not depend on the geometry at others.
                    let hit = rng.random::<f64>() < p;
                    speckled[(z * cells_y + cy) * cells_x + cx] = hit;
                }
            }
        }
    }

    let mut noise_rng = stream_rng(spec.seed, "phantom-noise", 0);
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).expect("positive sigma"))
    } else {
        None
    };

    let mut voxels = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let dx = (x as f64 - center.0) / a;
                let dy = (y as f64 - center.1) / b;
                let dz = (z as f64 - center.2) / c;
                let inside = dx * dx + dy * dy + dz * dz <= 1.0;
                let value = if inside {
                    let mut v = tissue_base;
                    let cell = (z * cells_y + y / SPECKLE_CELL) * cells_x + x / SPECKLE_CELL;
                    if speckled[cell] {
                        v += spec.speckle_amplitude;
                    }
                    if let Some(dist) = &noise {
                        v += dist.sample(&mut noise_rng);
                    }
                    v.clamp(spec.tissue_band.0, spec.tissue_band.1)
                } else {
                    spec.background_level
                };
                voxels.push(value.clamp(0.0, 255.0));
            }
        }
    }
    Volume3D::new(nx, ny, nz, voxels).expect("phantom voxels are finite by construction")
}

/// Builds the desk-scale benchmark dataset: `n_per_class` volumes per class
/// with per-volume seeds `base_seed + i` (paired across classes), sliced and
/// quantized per volume, stratified 80/20 split seeded from `base_seed`.
pub fn generate_dataset(
    n_per_class: usize,
    base_seed: u64,
    template: &PhantomSpec,
) -> SliceDataset {
    assert!(n_per_class >= 1);
    let mut items = Vec::new();
    for i in 0..n_per_class {
        for class in 0..=1u8 {
            let spec = PhantomSpec {
                class_label: class,
                seed: base_seed.wrapping_add(i as u64),
                ..template.clone()
            };
            let volume = generate_volume(&spec);
            let stem = volume_stem(class, i);
            for q in quantize_volume_slices(&volume) {
                items.push(SliceItem {
                    volume: stem.clone(),
                    slice_index: q.index,
                    label: class,
                    image: q.image,
                });
            }
        }
    }
    let mut data = SliceDataset { items, train: vec![], test: vec![] };
    data.split(0.8, derive_seed(base_seed, "phantom-split", 0));
    data
}

/// Canonical stem for an exported phantom volume, e.g. `ad_007`.
pub fn volume_stem(class_label: u8, index: usize) -> String {
    format!("{}_{index:03}", CLASS_NAMES[class_label as usize].to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::foreground_fraction;
    use crate::slicer::quantize_volume_slices;

    #[test]
    fn generation_is_deterministic() {
        let spec = PhantomSpec::for_class(1, 99);
        assert_eq!(generate_volume(&spec), generate_volume(&spec));
    }

    #[test]
    fn classes_identical_when_signal_off() {
        let spec0 = PhantomSpec {
            speckle_amplitude: 0.0,
            noise_sigma: 0.0,
            ..PhantomSpec::for_class(0, 5)
        };
        let spec1 = PhantomSpec { class_label: 1, ..spec0.clone() };
        assert_eq!(generate_volume(&spec0), generate_volume(&spec1));
    }

    #[test]
    fn classes_differ_only_by_speckle_even_with_noise() {
        let spec0 = PhantomSpec { speckle_amplitude: 0.0, ..PhantomSpec::for_class(0, 5) };
        let spec1 = PhantomSpec { class_label: 1, ..spec0.clone() };
        assert_eq!(generate_volume(&spec0), generate_volume(&spec1));
    }

    #[test]
    fn edge_slices_are_nearly_empty_and_center_is_not() {
        let volume = generate_volume(&PhantomSpec::for_class(0, 42));
        let slices = quantize_volume_slices(&volume);
        let fractions: Vec<f64> = slices.iter().map(|q| foreground_fraction(&q.image)).collect();
        assert!(fractions[0] < 0.05, "slice 0: {}", fractions[0]);
        assert!(fractions[15] < 0.05, "slice 15: {}", fractions[15]);
        assert!(fractions[8] >= 0.3, "central slice: {}", fractions[8]);
    }

    #[test]
    fn dataset_counts_and_split() {
        let data = generate_dataset(1, 7, &PhantomSpec::default());
        assert_eq!(data.items.len(), 32); // 2 volumes x 16 slices

        let data = generate_dataset(5, 7, &PhantomSpec::default());
        assert_eq!(data.items.len(), 160);
        assert_eq!(data.train.len(), 128);
        assert_eq!(data.test.len(), 32);
    }

    #[test]
    fn different_base_seeds_give_different_content() {
        let a = generate_dataset(1, 1, &PhantomSpec::default());
        let b = generate_dataset(1, 2, &PhantomSpec::default());
        let pixels = |d: &SliceDataset| -> Vec<u8> {
            d.items.iter().flat_map(|it| it.image.pixels.clone()).collect()
        };
        assert_ne!(pixels(&a), pixels(&b));
    }

    #[test]
    fn speckle_brightens_class_one_tissue() {
        let v0 = generate_volume(&PhantomSpec::for_class(0, 3));
        let v1 = generate_volume(&PhantomSpec::for_class(1, 3));
        let mean = |v: &Volume3D| v.voxels().iter().sum::<f64>() / v.voxels().len() as f64;
        assert!(mean(&v1) > mean(&v0));
    }
}
