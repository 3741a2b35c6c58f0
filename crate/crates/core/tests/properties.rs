//! Cross-module property tests: equalization behavior, quantization
//! monotonicity, clip subsequence structure, split-gain symmetry, monotone-
//! transform invariance of the tree learners, and the phantom's contrast-
//! amplification guarantee.

use neuroprep::classifiers::{forest, gbt, gbt_split_gain, GbtConfig, RfConfig};
use neuroprep::image::GrayImage;
use neuroprep::phantom::{generate_volume, PhantomSpec};
use neuroprep::preprocess::{clip_slices, equalize_histogram, ClipPolicy};
use neuroprep::seed::stream_rng;
use neuroprep::slicer::{quantize_u8, quantize_volume_slices, Slice2D};
use proptest::prelude::*;
use rand::Rng;

fn small_image() -> impl Strategy<Value = GrayImage> {
    (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h)
            .prop_map(move |pixels| GrayImage::new(w, h, pixels))
    })
}

proptest! {
    #[test]
    fn equalization_is_idempotent_within_one_level(img in small_image()) {
        let once = equalize_histogram(&img);
        let twice = equalize_histogram(&once);
        for (&a, &b) in once.pixels.iter().zip(&twice.pixels) {
            prop_assert!((i16::from(a) - i16::from(b)).abs() <= 1);
        }
    }

    #[test]
    fn equalization_preserves_pixel_ordering(img in small_image()) {
        let eq = equalize_histogram(&img);
        for i in 0..img.pixels.len() {
            for j in 0..img.pixels.len() {
                if img.pixels[i] <= img.pixels[j] {
                    prop_assert!(eq.pixels[i] <= eq.pixels[j]);
                }
            }
        }
    }

    #[test]
    fn equalization_saturates_the_maximum_level(img in small_image()) {
        let distinct = img.pixels.iter().collect::<std::collections::HashSet<_>>();
        prop_assume!(distinct.len() > 1);
        let max_in = *img.pixels.iter().max().unwrap();
        let eq = equalize_histogram(&img);
        for (&p, &q) in img.pixels.iter().zip(&eq.pixels) {
            if p == max_in {
                prop_assert_eq!(q, 255);
            }
        }
    }

    #[test]
    fn equalization_preserves_dimensions(img in small_image()) {
        let eq = equalize_histogram(&img);
        prop_assert_eq!((eq.width, eq.height), (img.width, img.height));
    }

    #[test]
    fn quantization_is_monotone(
        values in prop::collection::vec(-1000.0f64..1000.0, 2..40),
        lo in -500.0f64..0.0,
        span in 1.0f64..1000.0,
    ) {
        let slice = Slice2D {
            index: 0,
            height: 1,
            width: values.len(),
            values: values.clone(),
        };
        let q = quantize_u8(&slice, lo, lo + span);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] <= values[j] {
                    prop_assert!(q.image.pixels[i] <= q.image.pixels[j]);
                }
            }
        }
    }

    #[test]
    fn clipping_returns_an_ordered_subsequence(
        brights in prop::collection::vec(0usize..60, 1..12),
        tau in 0.0f64..0.7,
    ) {
        let slices: Vec<GrayImage> = brights
            .iter()
            .map(|&b| {
                let mut pixels = vec![0u8; 100];
                for p in pixels.iter_mut().take(b) {
                    *p = 220;
                }
                GrayImage::new(10, 10, pixels)
            })
            .collect();
        match clip_slices(slices.clone(), &ClipPolicy::ForegroundFraction { tau }) {
            Ok(out) => {
                prop_assert!(out.kept_indices.windows(2).all(|w| w[0] < w[1]));
                for (&i, img) in out.kept_indices.iter().zip(&out.images) {
                    prop_assert_eq!(img, &slices[i]);
                }
            }
            Err(_) => {
                // AllClipped is legal when tau exceeds every slice's
                // foreground fraction.
            }
        }
    }

    #[test]
    fn split_gain_is_symmetric(
        gl in -10.0f64..10.0,
        hl in 0.0f64..10.0,
        gr in -10.0f64..10.0,
        hr in 0.0f64..10.0,
        lambda in 0.1f64..5.0,
        gamma in 0.0f64..2.0,
    ) {
        let a = gbt_split_gain(gl, hl, gr, hr, lambda, gamma);
        let b = gbt_split_gain(gr, hr, gl, hl, lambda, gamma);
        prop_assert!((a - b).abs() < 1e-12);
    }
}

/// Random two-class rows with a weak informative first feature.
fn random_rows(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = stream_rng(seed, "prop-rows", 0);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label = (i % 2) as u8;
        let mut row: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        row[0] = 0.3 * row[0] + if label == 1 { 0.5 } else { 0.2 };
        x.push(row);
        y.push(label);
    }
    (x, y)
}

fn transform_all(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    // Strictly increasing map; exp keeps distinct doubles distinct on [0, 1].
    x.iter()
        .map(|row| row.iter().map(|v| v.exp()).collect())
        .collect()
}

#[test]
fn forest_is_invariant_to_monotone_feature_transforms() {
    let (x, y) = random_rows(80, 4, 31);
    let tx = transform_all(&x);
    let cfg = RfConfig { n_trees: 15, ..RfConfig::default() };
    let plain = forest::train(&x[..60], &y[..60], &cfg, 17).unwrap();
    let mapped = forest::train(&tx[..60], &y[..60], &cfg, 17).unwrap();
    for (row, trow) in x[60..].iter().zip(&tx[60..]) {
        assert_eq!(plain.predict(row).unwrap(), mapped.predict(trow).unwrap());
    }
}

#[test]
fn gbt_is_invariant_to_monotone_feature_transforms() {
    let (x, y) = random_rows(80, 4, 77);
    let tx = transform_all(&x);
    let cfg = GbtConfig { n_rounds: 20, ..GbtConfig::default() };
    let plain = gbt::train(&x[..60], &y[..60], &cfg).unwrap().model;
    let mapped = gbt::train(&tx[..60], &y[..60], &cfg).unwrap().model;
    for (row, trow) in x[60..].iter().zip(&tx[60..]) {
        let (pl, pp) = plain.predict(row).unwrap();
        let (ml, mp) = mapped.predict(trow).unwrap();
        assert_eq!(pl, ml);
        assert!((pp - mp).abs() < 1e-9);
    }
}

/// Equalization must strictly widen the value spread of tissue pixels on
/// every slice that intersects the ellipsoid: the band is narrow relative to
/// the volume range, and the background mass below it is what the CDF remap
/// reclaims.
#[test]
fn phantom_equalization_amplifies_in_band_contrast() {
    for class in 0..=1u8 {
        let spec = PhantomSpec::for_class(class, 4242);
        let volume = generate_volume(&spec);
        let center = (
            (spec.nx as f64 - 1.0) / 2.0,
            (spec.ny as f64 - 1.0) / 2.0,
            (spec.nz as f64 - 1.0) / 2.0,
        );
        let mut checked = 0;
        for q in quantize_volume_slices(&volume) {
            let z = q.index;
            let mut in_band = Vec::new();
            for x in 0..spec.nx {
                for y in 0..spec.ny {
                    let dx = (x as f64 - center.0) / spec.semi_axes.0;
                    let dy = (y as f64 - center.1) / spec.semi_axes.1;
                    let dz = (z as f64 - center.2) / spec.semi_axes.2;
                    if dx * dx + dy * dy + dz * dz <= 1.0 {
                        in_band.push(x * spec.ny + y);
                    }
                }
            }
            if in_band.len() < 2 {
                continue;
            }
            let spread = |img: &GrayImage| {
                let vals: Vec<u8> = in_band.iter().map(|&i| img.pixels[i]).collect();
                i16::from(*vals.iter().max().unwrap()) - i16::from(*vals.iter().min().unwrap())
            };
            let before = spread(&q.image);
            if before == 0 {
                continue;
            }
            let after = spread(&equalize_histogram(&q.image));
            assert!(
                after > before,
                "slice {z}: spread {before} -> {after} did not grow"
            );
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} slices had tissue");
    }
}
