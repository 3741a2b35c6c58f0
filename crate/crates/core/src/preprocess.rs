//! Contrast preprocessing for slice stacks: grayscale conversion, global
//! histogram equalization, and clipping of slices that sit too close to the
//! skull edge to carry usable signal.
//!
//! The clipping criterion is configurable because "near the edge" admits two
//! defensible readings: an Otsu-foreground-fraction threshold, or a fixed
//! central index range. Stage order is fixed as grayscale, clip, equalize,
//! so near-empty slices are never contrast-stretched into noise.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{round_half_up, GrayImage, Histogram, RgbImage};

/// Default minimum foreground fraction for [`ClipPolicy::ForegroundFraction`].
pub const DEFAULT_TAU: f64 = 0.10;
/// Default bounds for [`ClipPolicy::CentralRange`].
pub const DEFAULT_KEEP_LO: f64 = 0.20;
pub const DEFAULT_KEEP_HI: f64 = 0.80;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("clipping removed every slice; policy is too aggressive for this stack")]
    AllClipped,
    #[error("clip policy invalid: {0}")]
    BadPolicy(String),
}

/// Which slices to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClipPolicy {
    /// Keep slice `i` iff its Otsu-foreground fraction is at least `tau`.
    ForegroundFraction { tau: f64 },
    /// Keep `floor(keep_lo * n) <= i < ceil(keep_hi * n)`.
    CentralRange { keep_lo: f64, keep_hi: f64 },
}

impl Default for ClipPolicy {
    fn default() -> Self {
        ClipPolicy::ForegroundFraction { tau: DEFAULT_TAU }
    }
}

impl ClipPolicy {
    fn validate(&self) -> Result<(), PreprocessError> {
        match *self {
            ClipPolicy::ForegroundFraction { tau } => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(PreprocessError::BadPolicy(format!(
                        "tau {tau} outside [0, 1]"
                    )));
                }
            }
            ClipPolicy::CentralRange { keep_lo, keep_hi } => {
                if !(0.0..=1.0).contains(&keep_lo)
                    || !(0.0..=1.0).contains(&keep_hi)
                    || keep_lo >= keep_hi
                {
                    return Err(PreprocessError::BadPolicy(format!(
                        "central range [{keep_lo}, {keep_hi}) is not a sub-interval of [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Pipeline stage switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub do_gray: bool,
    pub do_equalize: bool,
    /// `None` disables clipping.
    pub clip: Option<ClipPolicy>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            do_gray: true,
            do_equalize: true,
            clip: Some(ClipPolicy::default()),
        }
    }
}

impl PipelineConfig {
    /// Configuration for the "before preprocessing" benchmark arm: raw
    /// quantized slices, no clipping, no equalization.
    pub fn raw_baseline() -> Self {
        PipelineConfig { do_gray: true, do_equalize: false, clip: None }
    }
}

/// A slice entering the pipeline.
#[derive(Debug, Clone)]
pub enum PipelineInput {
    Gray(GrayImage),
    Rgb(RgbImage),
}

/// Per-input-slice bookkeeping emitted alongside the processed stack.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRecord {
    pub index: usize,
    pub kept: bool,
    /// Computed only under [`ClipPolicy::ForegroundFraction`].
    pub foreground_fraction: Option<f64>,
}

/// Wall-clock seconds spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub grayscale: f64,
    pub clip: f64,
    pub equalize: f64,
}

/// Result of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Kept slices, processed, in input order.
    pub slices: Vec<GrayImage>,
    /// Original indices of `slices`.
    pub kept_indices: Vec<usize>,
    pub manifest: Vec<SliceRecord>,
    pub timings: StageTimings,
}

/// ITU-R BT.601 luminance, rounded half up.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&(r, g, b)| {
            let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
            round_half_up(y).clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(img.width, img.height, pixels)
}

/// Global histogram equalization over the 256 gray levels:
/// `h(v) = round_half_up((cdf(v) - cdf_min) / (N - cdf_min) * 255)` with
/// `cdf_min` the smallest nonzero CDF value. Constant images pass through
/// unchanged.
pub fn equalize_histogram(img: &GrayImage) -> GrayImage {
    let hist = img.histogram();
    let n = hist.total;
    let mut cdf = [0u64; 256];
    let mut run = 0u64;
    for (v, c) in hist.bins.iter().enumerate() {
        run += c;
        cdf[v] = run;
    }
    let cdf_min = cdf
        .iter()
        .copied()
        .find(|&c| c > 0)
        .expect("image has at least one pixel");
    if n == cdf_min {
        return img.clone();
    }
    let denom = (n - cdf_min) as f64;
    let mut lut = [0u8; 256];
    for v in 0..256 {
        if cdf[v] >= cdf_min {
            let h = round_half_up((cdf[v] - cdf_min) as f64 / denom * 255.0);
            lut[v] = h.clamp(0.0, 255.0) as u8;
        }
    }
    let pixels = img.pixels.iter().map(|&p| lut[p as usize]).collect();
    GrayImage::new(img.width, img.height, pixels)
}

/// Otsu's threshold: the level `t` maximizing between-class variance for the
/// split "background <= t < foreground", smallest `t` on ties. Levels below
/// the first occupied bin (empty background) are not valid splits.
pub fn otsu_threshold(hist: &Histogram) -> u8 {
    assert!(hist.total > 0, "histogram is empty");
    let total = hist.total as f64;
    let weighted_sum: f64 = hist
        .bins
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();

    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best: Option<(u8, f64)> = None;
    for t in 0..256 {
        w0 += hist.bins[t] as f64;
        sum0 += t as f64 * hist.bins[t] as f64;
        if w0 == 0.0 {
            continue;
        }
        let w1 = total - w0;
        let variance = if w1 == 0.0 {
            0.0
        } else {
            let mu0 = sum0 / w0;
            let mu1 = (weighted_sum - sum0) / w1;
            w0 * w1 * (mu0 - mu1) * (mu0 - mu1)
        };
        match best {
            Some((_, v)) if variance <= v => {}
            _ => best = Some((t as u8, variance)),
        }
    }
    best.expect("total > 0 guarantees a valid split").0
}

/// Fraction of pixels strictly above the image's Otsu threshold.
pub fn foreground_fraction(img: &GrayImage) -> f64 {
    let hist = img.histogram();
    let t = otsu_threshold(&hist);
    let above: u64 = hist.bins[t as usize + 1..].iter().sum();
    above as f64 / hist.total as f64
}

/// Outcome of [`clip_slices`]: the surviving images with their original
/// indices, plus per-slice foreground fractions when the policy computed
/// them.
#[derive(Debug, Clone)]
pub struct ClipOutcome {
    pub kept_indices: Vec<usize>,
    pub images: Vec<GrayImage>,
    pub foreground_fractions: Option<Vec<f64>>,
}

/// Applies a clip policy to an ordered stack, preserving order and identity
/// of the kept slices.
pub fn clip_slices(
    slices: Vec<GrayImage>,
    policy: &ClipPolicy,
) -> Result<ClipOutcome, PreprocessError> {
    policy.validate()?;
    assert!(!slices.is_empty(), "clip_slices requires a non-empty stack");
    let n = slices.len();
    let (keep, fractions): (Vec<bool>, Option<Vec<f64>>) = match *policy {
        ClipPolicy::ForegroundFraction { tau } => {
            let fr: Vec<f64> = slices.iter().map(foreground_fraction).collect();
            (fr.iter().map(|&f| f >= tau).collect(), Some(fr))
        }
        ClipPolicy::CentralRange { keep_lo, keep_hi } => {
            let lo = (keep_lo * n as f64).floor() as usize;
            let hi = (keep_hi * n as f64).ceil() as usize;
            ((0..n).map(|i| i >= lo && i < hi).collect(), None)
        }
    };

    let mut kept_indices = Vec::new();
    let mut images = Vec::new();
    for (i, (img, keep)) in slices.into_iter().zip(&keep).enumerate() {
        if *keep {
            kept_indices.push(i);
            images.push(img);
        }
    }
    if images.is_empty() {
        return Err(PreprocessError::AllClipped);
    }
    Ok(ClipOutcome { kept_indices, images, foreground_fractions: fractions })
}

/// Runs the full pipeline in stage order grayscale -> clip -> equalize and
/// reports which slices survived plus per-stage wall-clock timings.
///
/// RGB inputs are always converted (later stages need single-channel data);
/// `do_gray = false` only records that inputs were expected to be gray
/// already.
pub fn run_pipeline(
    inputs: Vec<PipelineInput>,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PreprocessError> {
    assert!(!inputs.is_empty(), "pipeline requires at least one slice");
    let mut timings = StageTimings::default();

    let started = Instant::now();
    let gray: Vec<GrayImage> = inputs
        .into_iter()
        .map(|input| match input {
            PipelineInput::Gray(img) => img,
            PipelineInput::Rgb(img) => to_grayscale(&img),
        })
        .collect();
    timings.grayscale = started.elapsed().as_secs_f64();
    let n = gray.len();

    let started = Instant::now();
    let clipped = match &config.clip {
        Some(policy) => clip_slices(gray, policy)?,
        None => ClipOutcome {
            kept_indices: (0..n).collect(),
            images: gray,
            foreground_fractions: None,
        },
    };
    timings.clip = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let slices: Vec<GrayImage> = if config.do_equalize {
        clipped.images.iter().map(equalize_histogram).collect()
    } else {
        clipped.images
    };
    timings.equalize = started.elapsed().as_secs_f64();

    let mut manifest: Vec<SliceRecord> = (0..n)
        .map(|index| SliceRecord {
            index,
            kept: false,
            foreground_fraction: clipped
                .foreground_fractions
                .as_ref()
                .map(|fr| fr[index]),
        })
        .collect();
    for &i in &clipped.kept_indices {
        manifest[i].kept = true;
    }

    Ok(PipelineOutput {
        slices,
        kept_indices: clipped.kept_indices,
        manifest,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_weights() {
        let img = RgbImage::new(3, 1, vec![(255, 255, 255), (0, 0, 0), (255, 0, 0)]);
        let gray = to_grayscale(&img);
        assert_eq!(gray.pixels, vec![255, 0, 76]);
    }

    #[test]
    fn grayscale_equal_channels_pass_through() {
        let img = RgbImage::new(2, 1, vec![(42, 42, 42), (200, 200, 200)]);
        assert_eq!(to_grayscale(&img).pixels, vec![42, 200]);
    }

    #[test]
    fn equalize_worked_example() {
        let img = GrayImage::new(2, 2, vec![0, 1, 1, 3]);
        assert_eq!(equalize_histogram(&img).pixels, vec![0, 170, 170, 255]);
    }

    #[test]
    fn equalize_constant_image_unchanged() {
        let img = GrayImage::filled(4, 4, 100);
        assert_eq!(equalize_histogram(&img), img);
    }

    #[test]
    fn equalize_full_ramp_is_identity() {
        let img = GrayImage::new(16, 16, (0..=255).collect());
        let eq = equalize_histogram(&img);
        assert_eq!(eq.pixels, img.pixels);
        assert_eq!(eq.pixels[0], 0);
        assert_eq!(eq.pixels[255], 255);
    }

    #[test]
    fn otsu_two_modes_ties_to_smallest() {
        let img = GrayImage::new(10, 1, vec![0, 0, 0, 0, 0, 255, 255, 255, 255, 255]);
        assert_eq!(otsu_threshold(&img.histogram()), 0);
    }

    #[test]
    fn otsu_single_level_returns_that_level() {
        let img = GrayImage::filled(3, 3, 77);
        assert_eq!(otsu_threshold(&img.histogram()), 77);
    }

    #[test]
    fn otsu_matches_exhaustive_scan() {
        // 4 pixels at 10, 4 at 200, 1 at 100.
        let img = GrayImage::new(9, 1, vec![10, 10, 10, 10, 200, 200, 200, 200, 100]);
        let hist = img.histogram();
        assert_eq!(otsu_threshold(&hist), brute_force_otsu(&hist));
    }

    /// Recomputes class statistics from scratch for every threshold.
    fn brute_force_otsu(hist: &Histogram) -> u8 {
        let mut best_t = None;
        let mut best_var = f64::NEG_INFINITY;
        for t in 0..256usize {
            let w0: u64 = hist.bins[..=t].iter().sum();
            let w1: u64 = hist.bins[t + 1..].iter().sum();
            if w0 == 0 {
                continue;
            }
            let var = if w1 == 0 {
                0.0
            } else {
                let mu0: f64 = hist.bins[..=t]
                    .iter()
                    .enumerate()
                    .map(|(v, &c)| v as f64 * c as f64)
                    .sum::<f64>()
                    / w0 as f64;
                let mu1: f64 = hist.bins[t + 1..]
                    .iter()
                    .enumerate()
                    .map(|(v, &c)| (t + 1 + v) as f64 * c as f64)
                    .sum::<f64>()
                    / w1 as f64;
                w0 as f64 * w1 as f64 * (mu0 - mu1) * (mu0 - mu1)
            };
            if var > best_var {
                best_var = var;
                best_t = Some(t as u8);
            }
        }
        best_t.unwrap()
    }

    #[test]
    fn foreground_fraction_examples() {
        let img = GrayImage::new(4, 1, vec![0, 0, 255, 255]);
        assert_eq!(foreground_fraction(&img), 0.5);

        let img = GrayImage::filled(5, 5, 0);
        assert_eq!(foreground_fraction(&img), 0.0);

        let img = GrayImage::new(4, 1, vec![200, 200, 200, 5]);
        assert_eq!(foreground_fraction(&img), 0.75);
    }

    /// 10x10 slice with `bright` pixels at 200 and the rest at 0.
    fn stack_slice(bright: usize) -> GrayImage {
        let mut pixels = vec![0u8; 100];
        for p in pixels.iter_mut().take(bright) {
            *p = 200;
        }
        GrayImage::new(10, 10, pixels)
    }

    fn ten_slice_stack() -> Vec<GrayImage> {
        (0..10)
            .map(|i| {
                if [0, 1, 8, 9].contains(&i) {
                    stack_slice(2) // foreground fraction 0.02
                } else {
                    stack_slice(40) // foreground fraction 0.40
                }
            })
            .collect()
    }

    #[test]
    fn clip_foreground_fraction_keeps_center() {
        let out = clip_slices(ten_slice_stack(), &ClipPolicy::ForegroundFraction { tau: 0.10 })
            .unwrap();
        assert_eq!(out.kept_indices, vec![2, 3, 4, 5, 6, 7]);
        let fr = out.foreground_fractions.unwrap();
        assert_eq!(fr[0], 0.02);
        assert_eq!(fr[5], 0.40);
    }

    #[test]
    fn clip_zero_tau_keeps_everything() {
        let out = clip_slices(ten_slice_stack(), &ClipPolicy::ForegroundFraction { tau: 0.0 })
            .unwrap();
        assert_eq!(out.kept_indices.len(), 10);
    }

    #[test]
    fn clip_central_range() {
        let out = clip_slices(
            ten_slice_stack(),
            &ClipPolicy::CentralRange { keep_lo: 0.2, keep_hi: 0.8 },
        )
        .unwrap();
        assert_eq!(out.kept_indices, vec![2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn clip_everything_is_an_error() {
        let err = clip_slices(ten_slice_stack(), &ClipPolicy::ForegroundFraction { tau: 0.99 })
            .unwrap_err();
        assert!(matches!(err, PreprocessError::AllClipped));
    }

    #[test]
    fn pipeline_all_stages_off_is_identity() {
        let stack = ten_slice_stack();
        let cfg = PipelineConfig { do_gray: false, do_equalize: false, clip: None };
        let out = run_pipeline(
            stack.iter().cloned().map(PipelineInput::Gray).collect(),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.slices, stack);
        assert!(out.manifest.iter().all(|r| r.kept));
    }

    #[test]
    fn pipeline_equalize_only_matches_direct_equalization() {
        let stack = ten_slice_stack();
        let cfg = PipelineConfig { do_gray: true, do_equalize: true, clip: None };
        let out = run_pipeline(
            stack.iter().cloned().map(PipelineInput::Gray).collect(),
            &cfg,
        )
        .unwrap();
        let expected: Vec<GrayImage> = stack.iter().map(equalize_histogram).collect();
        assert_eq!(out.slices, expected);
    }

    #[test]
    fn pipeline_full_run_keeps_six_equalized_slices() {
        let out = run_pipeline(
            ten_slice_stack().into_iter().map(PipelineInput::Gray).collect(),
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(out.slices.len(), 6);
        assert_eq!(out.kept_indices, vec![2, 3, 4, 5, 6, 7]);
        let expected = equalize_histogram(&stack_slice(40));
        assert_eq!(out.slices[0], expected);
        assert_eq!(out.manifest.len(), 10);
        assert!(!out.manifest[0].kept);
        assert!(out.manifest[2].kept);
    }

    #[test]
    fn pipeline_converts_rgb_input() {
        let rgb = RgbImage::new(2, 1, vec![(255, 0, 0), (0, 0, 0)]);
        let cfg = PipelineConfig { do_gray: true, do_equalize: false, clip: None };
        let out = run_pipeline(vec![PipelineInput::Rgb(rgb)], &cfg).unwrap();
        assert_eq!(out.slices[0].pixels, vec![76, 0]);
    }
}
