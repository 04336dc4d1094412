//! Comparison image mutations.

use super::{
    shuffle_image, split_patches, ImageBuffer, ImageError, PatchGrid, CHANNELS,
};
use crate::perm::{Permutation, SeededRng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageMutationKind {
    PatchShuffle,
    PatchMask,
    Grayscale,
    Solarize,
    HorizontalFlip,
    Blur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationParams {
    /// Patch count for `PatchShuffle` and `PatchMask`.
    pub patch_count: u32,
    /// Cells zeroed by `PatchMask`; `None` means ceil(m / 4).
    pub mask_cells: Option<u32>,
    /// Pixels at or above this value are inverted by `Solarize`.
    pub solarize_threshold: u8,
    /// Box-filter side for `Blur`; must be odd.
    pub blur_kernel: u32,
}

impl Default for MutationParams {
    fn default() -> Self {
        Self {
            patch_count: 4,
            mask_cells: None,
            solarize_threshold: 128,
            blur_kernel: 3,
        }
    }
}

/// Applies one comparison mutation. The image must already divide into the
/// requested grid for the patch-based kinds.
pub fn apply_image_mutation(
    kind: ImageMutationKind,
    image: &ImageBuffer,
    params: &MutationParams,
    rng: &mut SeededRng,
) -> Result<ImageBuffer, ImageError> {
    match kind {
        ImageMutationKind::PatchShuffle => {
            Ok(shuffle_image(image, params.patch_count, rng)?.0)
        }
        ImageMutationKind::PatchMask => patch_mask(image, params, rng),
        ImageMutationKind::Grayscale => Ok(grayscale(image)),
        ImageMutationKind::Solarize => Ok(solarize(image, params.solarize_threshold)),
        ImageMutationKind::HorizontalFlip => Ok(horizontal_flip(image)),
        ImageMutationKind::Blur => blur(image, params.blur_kernel),
    }
}

/// Zeroes `mask_cells` randomly chosen grid cells.
fn patch_mask(
    image: &ImageBuffer,
    params: &MutationParams,
    rng: &mut SeededRng,
) -> Result<ImageBuffer, ImageError> {
    let grid = PatchGrid::for_image(image, params.patch_count)?;
    let m = grid.patch_count();
    let k = params.mask_cells.unwrap_or(m.div_ceil(4));
    if k > m {
        return Err(ImageError::InvalidParams(format!(
            "cannot mask {k} of {m} cells"
        )));
    }
    let mut patches = split_patches(image, &grid)?;
    let order = Permutation::draw(m as usize, rng);
    for &cell in &order.as_slice()[..k as usize] {
        patches[cell] =
            ImageBuffer::filled(grid.patch_width(), grid.patch_height(), [0, 0, 0])?;
    }
    super::reassemble(&patches, &grid)
}

/// Rec. 601 luma replicated across all three channels.
fn grayscale(image: &ImageBuffer) -> ImageBuffer {
    let data = image
        .data()
        .chunks_exact(CHANNELS)
        .flat_map(|px| {
            let luma = (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64)
                .round()
                .clamp(0.0, 255.0) as u8;
            [luma; 3]
        })
        .collect();
    ImageBuffer::new(image.width(), image.height(), data).expect("same dimensions")
}

fn solarize(image: &ImageBuffer, threshold: u8) -> ImageBuffer {
    let data = image
        .data()
        .iter()
        .map(|&v| if v >= threshold { 255 - v } else { v })
        .collect();
    ImageBuffer::new(image.width(), image.height(), data).expect("same dimensions")
}

fn horizontal_flip(image: &ImageBuffer) -> ImageBuffer {
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            out.set_pixel(image.width() - 1 - x, y, image.pixel(x, y));
        }
    }
    out
}

/// Normalized box filter with edge clamping.
fn blur(image: &ImageBuffer, kernel: u32) -> Result<ImageBuffer, ImageError> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(ImageError::InvalidParams(format!(
            "blur kernel must be odd, got {kernel}"
        )));
    }
    let half = (kernel / 2) as i64;
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let mut acc = [0.0f64; CHANNELS];
            for dy in -half..=half {
                for dx in -half..=half {
                    let sx = (x as i64 + dx).clamp(0, image.width() as i64 - 1) as u32;
                    let sy = (y as i64 + dy).clamp(0, image.height() as i64 - 1) as u32;
                    let px = image.pixel(sx, sy);
                    for c in 0..CHANNELS {
                        acc[c] += px[c] as f64;
                    }
                }
            }
            let norm = (kernel * kernel) as f64;
            let mut px = [0u8; 3];
            for c in 0..CHANNELS {
                px[c] = (acc[c] / norm).round().clamp(0.0, 255.0) as u8;
            }
            out.set_pixel(x, y, px);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::seeded_rng;
    use rand::Rng;

    fn random_image(w: u32, h: u32, seed: u64) -> ImageBuffer {
        let mut rng = seeded_rng(seed);
        let data = (0..w as usize * h as usize * CHANNELS)
            .map(|_| rng.gen::<u8>())
            .collect();
        ImageBuffer::new(w, h, data).unwrap()
    }

    #[test]
    fn solarize_inverts_values_at_or_above_threshold() {
        let img = ImageBuffer::filled(2, 2, [200, 100, 128]).unwrap();
        let out = solarize(&img, 128);
        assert_eq!(out.pixel(0, 0), [55, 100, 127]);
    }

    #[test]
    fn horizontal_flip_is_an_involution() {
        let img = random_image(9, 5, 21);
        assert_eq!(horizontal_flip(&horizontal_flip(&img)), img);
        assert_ne!(horizontal_flip(&img), img);
    }

    #[test]
    fn blur_leaves_constant_images_unchanged() {
        let img = ImageBuffer::filled(7, 7, [42, 130, 200]).unwrap();
        let out = blur(&img, 3).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn blur_rejects_even_kernels() {
        let img = random_image(4, 4, 22);
        assert!(matches!(blur(&img, 4), Err(ImageError::InvalidParams(_))));
        assert!(blur(&img, 1).is_ok());
    }

    #[test]
    fn grayscale_output_has_equal_channels() {
        let img = random_image(8, 8, 23);
        let out = grayscale(&img);
        for px in out.data().chunks_exact(CHANNELS) {
            assert_eq!(px[0], px[1]);
            assert_eq!(px[1], px[2]);
        }
    }

    #[test]
    fn patch_mask_zeroes_the_requested_cell_count() {
        let img = ImageBuffer::filled(8, 8, [255, 255, 255]).unwrap();
        let params = MutationParams {
            patch_count: 16,
            mask_cells: Some(5),
            ..Default::default()
        };
        let out = apply_image_mutation(
            ImageMutationKind::PatchMask,
            &img,
            &params,
            &mut seeded_rng(24),
        )
        .unwrap();
        let zeroed = out.data().iter().filter(|&&v| v == 0).count();
        // 5 cells of 2x2 pixels, 3 channels each.
        assert_eq!(zeroed, 5 * 4 * 3);
    }

    #[test]
    fn default_mask_count_is_quarter_of_the_grid() {
        let img = random_image(8, 8, 25);
        let params = MutationParams {
            patch_count: 4,
            ..Default::default()
        };
        let out = apply_image_mutation(
            ImageMutationKind::PatchMask,
            &img,
            &params,
            &mut seeded_rng(26),
        )
        .unwrap();
        // ceil(4 / 4) = 1 masked cell of 4x4 pixels.
        let zeroed = out.data().iter().filter(|&&v| v == 0).count();
        assert!(zeroed >= 4 * 4 * 3);
    }
}
