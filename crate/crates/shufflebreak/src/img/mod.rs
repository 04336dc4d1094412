//! Deterministic, seeded image perturbation.
//!
//! Images are plain 8-bit RGB byte buffers. The attack's operation is the
//! patch-grid shuffle with an optional protected rectangle (typography is
//! kept in place); the remaining mutations exist for comparison runs.

mod io;
mod mutate;
mod patch;

pub use io::{decode_image, encode_png, load_image, save_png, to_png_data_url};
pub use mutate::{apply_image_mutation, ImageMutationKind, MutationParams};
pub use patch::{
    apply_protected_region, fit_to_grid, reassemble, shuffle_image, shuffle_patches, split_patches,
};

use crate::perm::Permutation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Patch rearrangements are ordinary permutations over row-major patch order.
pub type PatchPermutation = Permutation;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid protected region ({x0}, {y0}, {x1}, {y1})")]
    InvalidRegion { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("patch count {0} is not a perfect square")]
    NotAPerfectSquare(u32),
    #[error("failed to decode image: {0}")]
    Decode(String),
    #[error("failed to encode image: {0}")]
    Encode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

pub const CHANNELS: usize = 3;

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize * CHANNELS {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        Ok(Self { width, height, data })
    }

    /// A width x height image filled with one color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width as usize * height as usize * CHANNELS);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let at = (y as usize * self.width as usize + x as usize) * CHANNELS;
        [self.data[at], self.data[at + 1], self.data[at + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let at = (y as usize * self.width as usize + x as usize) * CHANNELS;
        self.data[at..at + CHANNELS].copy_from_slice(&rgb);
    }

    /// Per-channel-value counts; equal histograms mean equal pixel multisets
    /// for the rearrangement oracles used in tests.
    pub fn histogram(&self) -> [[u64; 256]; CHANNELS] {
        let mut hist = [[0u64; 256]; CHANNELS];
        for px in self.data.chunks_exact(CHANNELS) {
            for (c, &v) in px.iter().enumerate() {
                hist[c][v as usize] += 1;
            }
        }
        hist
    }
}

/// A g x g grid dividing an image into m = g² equally sized patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    side: u32,
    patch_width: u32,
    patch_height: u32,
}

impl PatchGrid {
    /// Derives the grid for `patch_count` patches over an image whose
    /// dimensions must already be divisible by the grid side.
    pub fn for_image(image: &ImageBuffer, patch_count: u32) -> Result<Self, ImageError> {
        let side = grid_side(patch_count)?;
        if side > image.width().min(image.height()) {
            return Err(ImageError::InvalidGrid(format!(
                "grid side {side} exceeds image dimensions {}x{}",
                image.width(),
                image.height()
            )));
        }
        if !image.width().is_multiple_of(side) || !image.height().is_multiple_of(side) {
            return Err(ImageError::DimensionMismatch(format!(
                "{}x{} not divisible into a {side}x{side} grid",
                image.width(),
                image.height()
            )));
        }
        Ok(Self {
            side,
            patch_width: image.width() / side,
            patch_height: image.height() / side,
        })
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn patch_count(&self) -> u32 {
        self.side * self.side
    }

    pub fn patch_width(&self) -> u32 {
        self.patch_width
    }

    pub fn patch_height(&self) -> u32 {
        self.patch_height
    }
}

/// Returns g for m = g² patches.
pub fn grid_side(patch_count: u32) -> Result<u32, ImageError> {
    if patch_count == 0 {
        return Err(ImageError::InvalidGrid("patch count must be positive".into()));
    }
    let side = (patch_count as f64).sqrt().round() as u32;
    if side * side != patch_count {
        return Err(ImageError::NotAPerfectSquare(patch_count));
    }
    Ok(side)
}

/// An axis-aligned rectangle in normalized [0, 1] coordinates whose pixels
/// are restored from the original after mutation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtectedRegion {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl ProtectedRegion {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, ImageError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(in_unit(x0) && in_unit(y0) && in_unit(x1) && in_unit(y1) && x0 < x1 && y0 < y1) {
            return Err(ImageError::InvalidRegion { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// The conventional typography strip: the bottom 30% of the image.
    pub fn bottom_strip() -> Self {
        Self {
            x0: 0.0,
            y0: 0.7,
            x1: 1.0,
            y1: 1.0,
        }
    }

    /// Pixel bounds (x0, y0, x1, y1), end-exclusive, for a given image size.
    pub fn to_pixels(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let px = |v: f64, extent: u32| ((v * extent as f64).round() as u32).min(extent);
        (
            px(self.x0, width),
            px(self.y0, height),
            px(self.x1, width),
            px(self.y1, height),
        )
    }

    pub fn coords(&self) -> (f64, f64, f64, f64) {
        (self.x0, self.y0, self.x1, self.y1)
    }
}
