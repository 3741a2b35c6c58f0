//! Decomposes 3D volumes into ordered 2D slices and quantizes them to 8-bit.
//!
//! Slicing is always along the stored third axis: slice `n` is the plane at
//! `z = n`, with the volume's x extent as image height and y extent as image
//! width. Quantization normalizes per volume so all slices of one volume
//! share a single intensity mapping.

use crate::image::{round_half_up, GrayImage};
use crate::nifti::Volume3D;

/// One extracted plane, carrying the untouched real voxel values in volume
/// order (x fastest). Named `Image_<n>` after its slice index.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    pub index: usize,
    /// Volume x extent.
    pub height: usize,
    /// Volume y extent.
    pub width: usize,
    /// `values[x + height * y]`, the plane's subsequence of the voxel buffer.
    pub values: Vec<f64>,
}

impl Slice2D {
    pub fn name(&self) -> String {
        format!("Image_{}", self.index)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x + self.height * y]
    }
}

/// A slice quantized to 8 bits, as a row-major image.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedSlice {
    pub index: usize,
    pub image: GrayImage,
    /// Set when the requested range was empty (`vmin == vmax`); the image is
    /// all zeros in that case.
    pub degenerate_range: bool,
}

/// Splits a volume into its `nz` planes, in ascending z order.
pub fn extract_slices(vol: &Volume3D) -> Vec<Slice2D> {
    let (nx, ny, nz) = (vol.nx(), vol.ny(), vol.nz());
    let plane = nx * ny;
    (0..nz)
        .map(|z| Slice2D {
            index: z,
            height: nx,
            width: ny,
            values: vol.voxels()[z * plane..(z + 1) * plane].to_vec(),
        })
        .collect()
}

/// Maps real values to 0..=255 over `[vmin, vmax]`:
/// `round_half_up((clamp(p) - vmin) / (vmax - vmin) * 255)`.
///
/// A degenerate range (`vmin == vmax`) yields an all-zero image with the
/// `degenerate_range` flag set.
pub fn quantize_u8(slice: &Slice2D, vmin: f64, vmax: f64) -> QuantizedSlice {
    assert!(vmin <= vmax, "quantization range is inverted");
    let (h, w) = (slice.height, slice.width);
    let mut pixels = vec![0u8; h * w];
    let degenerate = vmin == vmax;
    if !degenerate {
        let range = vmax - vmin;
        for x in 0..h {
            for y in 0..w {
                let p = slice.get(x, y).clamp(vmin, vmax);
                pixels[x * w + y] = round_half_up((p - vmin) / range * 255.0) as u8;
            }
        }
    }
    QuantizedSlice {
        index: slice.index,
        image: GrayImage::new(w, h, pixels),
        degenerate_range: degenerate,
    }
}

/// Quantizes every slice of a volume against the volume-wide value range.
pub fn quantize_volume_slices(vol: &Volume3D) -> Vec<QuantizedSlice> {
    let (vmin, vmax) = vol.value_range();
    extract_slices(vol)
        .iter()
        .map(|s| quantize_u8(s, vmin, vmax))
        .collect()
}

/// File name for an exported slice: `<stem>_Image_<n>.pgm`.
pub fn slice_filename(volume_stem: &str, index: usize) -> String {
    format!("{volume_stem}_Image_{index}.pgm")
}
