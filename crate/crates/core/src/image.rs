//! Pixel containers shared by the slicing, preprocessing, and classifier
//! stages.

use serde::{Deserialize, Serialize};

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Builds an image, checking that the pixel buffer matches the dimensions.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert_eq!(pixels.len(), width * height, "pixel buffer mismatch");
        GrayImage { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// 256-bin intensity histogram.
    pub fn histogram(&self) -> Histogram {
        let mut bins = [0u64; 256];
        for &p in &self.pixels {
            bins[p as usize] += 1;
        }
        Histogram { bins, total: self.pixels.len() as u64 }
    }
}

/// 8-bit three-channel image, row-major `(r, g, b)` triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<(u8, u8, u8)>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<(u8, u8, u8)>) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert_eq!(pixels.len(), width * height, "pixel buffer mismatch");
        RgbImage { width, height, pixels }
    }
}

/// Intensity histogram over the 256 gray levels.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub bins: [u64; 256],
    pub total: u64,
}

impl Histogram {
    pub fn from_counts(bins: [u64; 256]) -> Self {
        let total = bins.iter().sum();
        Histogram { bins, total }
    }
}

/// `floor(x + 0.5)`: rounds halves up. Fixed project-wide so that quantized
/// outputs are reproducible bit-exactly across implementations.
#[inline]
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}
