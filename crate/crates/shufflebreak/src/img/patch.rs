//! Patch-grid splitting, shuffling and reassembly.

use super::{ImageBuffer, ImageError, PatchGrid, PatchPermutation, ProtectedRegion, CHANNELS};
use crate::perm::{Permutation, SeededRng};

/// Resizes an image so both dimensions divide evenly into a g x g grid.
///
/// Each dimension goes to its nearest multiple of `g` (ties round up) via
/// bilinear resampling; an already divisible image is returned bit-identical.
pub fn fit_to_grid(image: &ImageBuffer, grid_side: u32) -> Result<ImageBuffer, ImageError> {
    if grid_side == 0 {
        return Err(ImageError::InvalidGrid("grid side must be positive".into()));
    }
    if grid_side > image.width().min(image.height()) {
        return Err(ImageError::InvalidGrid(format!(
            "grid side {grid_side} exceeds image dimensions {}x{}",
            image.width(),
            image.height()
        )));
    }
    let target_w = nearest_multiple(image.width(), grid_side);
    let target_h = nearest_multiple(image.height(), grid_side);
    if target_w == image.width() && target_h == image.height() {
        return Ok(image.clone());
    }
    Ok(bilinear_resize(image, target_w, target_h))
}

/// Nearest multiple of `step` to `value`, ties rounding up. `step <= value`
/// guarantees the result is at least `value / 2`.
fn nearest_multiple(value: u32, step: u32) -> u32 {
    let k = (2 * value + step) / (2 * step);
    k.max(1) * step
}

/// Center-aligned bilinear resampling to the exact target size.
fn bilinear_resize(image: &ImageBuffer, target_w: u32, target_h: u32) -> ImageBuffer {
    let (src_w, src_h) = (image.width() as f64, image.height() as f64);
    let scale_x = src_w / target_w as f64;
    let scale_y = src_h / target_h as f64;
    let mut data = Vec::with_capacity(target_w as usize * target_h as usize * CHANNELS);
    for y in 0..target_h {
        let sy = ((y as f64 + 0.5) * scale_y - 0.5).max(0.0);
        let y0 = (sy.floor() as u32).min(image.height() - 1);
        let y1 = (y0 + 1).min(image.height() - 1);
        let fy = sy - y0 as f64;
        for x in 0..target_w {
            let sx = ((x as f64 + 0.5) * scale_x - 0.5).max(0.0);
            let x0 = (sx.floor() as u32).min(image.width() - 1);
            let x1 = (x0 + 1).min(image.width() - 1);
            let fx = sx - x0 as f64;
            let (p00, p10) = (image.pixel(x0, y0), image.pixel(x1, y0));
            let (p01, p11) = (image.pixel(x0, y1), image.pixel(x1, y1));
            for c in 0..CHANNELS {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(target_w, target_h, data).expect("resize produces a valid buffer")
}

/// Cuts an image into its grid patches in row-major order.
pub fn split_patches(image: &ImageBuffer, grid: &PatchGrid) -> Result<Vec<ImageBuffer>, ImageError> {
    if grid.side() * grid.patch_width() != image.width()
        || grid.side() * grid.patch_height() != image.height()
    {
        return Err(ImageError::DimensionMismatch(format!(
            "grid {}x{} patches of {}x{} do not tile {}x{}",
            grid.side(),
            grid.side(),
            grid.patch_width(),
            grid.patch_height(),
            image.width(),
            image.height()
        )));
    }
    let (pw, ph) = (grid.patch_width(), grid.patch_height());
    let mut patches = Vec::with_capacity(grid.patch_count() as usize);
    for row in 0..grid.side() {
        for col in 0..grid.side() {
            let mut data = Vec::with_capacity(pw as usize * ph as usize * CHANNELS);
            for y in 0..ph {
                let src_y = (row * ph + y) as usize;
                let src_x = (col * pw) as usize;
                let start = (src_y * image.width() as usize + src_x) * CHANNELS;
                data.extend_from_slice(&image.data()[start..start + pw as usize * CHANNELS]);
            }
            patches.push(ImageBuffer::new(pw, ph, data)?);
        }
    }
    Ok(patches)
}

/// Shuffles patch order; the returned permutation reproduces the rearrangement.
pub fn shuffle_patches(
    patches: &[ImageBuffer],
    rng: &mut SeededRng,
) -> (Vec<ImageBuffer>, PatchPermutation) {
    let perm = Permutation::draw(patches.len(), rng);
    (perm.apply(patches), perm)
}

/// Reassembles row-major patches into a full image. Exact inverse of
/// `split_patches` for unshuffled input.
pub fn reassemble(patches: &[ImageBuffer], grid: &PatchGrid) -> Result<ImageBuffer, ImageError> {
    if patches.len() != grid.patch_count() as usize {
        return Err(ImageError::DimensionMismatch(format!(
            "{} patches for a {}-patch grid",
            patches.len(),
            grid.patch_count()
        )));
    }
    let (pw, ph) = (grid.patch_width(), grid.patch_height());
    if let Some(bad) = patches.iter().find(|p| p.width() != pw || p.height() != ph) {
        return Err(ImageError::DimensionMismatch(format!(
            "patch of {}x{} in a grid of {pw}x{ph} patches",
            bad.width(),
            bad.height()
        )));
    }
    let (w, h) = (grid.side() * pw, grid.side() * ph);
    let mut data = vec![0u8; w as usize * h as usize * CHANNELS];
    for (idx, patch) in patches.iter().enumerate() {
        let row = idx as u32 / grid.side();
        let col = idx as u32 % grid.side();
        for y in 0..ph {
            let dst_y = (row * ph + y) as usize;
            let dst_x = (col * pw) as usize;
            let dst = (dst_y * w as usize + dst_x) * CHANNELS;
            let src = y as usize * pw as usize * CHANNELS;
            data[dst..dst + pw as usize * CHANNELS]
                .copy_from_slice(&patch.data()[src..src + pw as usize * CHANNELS]);
        }
    }
    ImageBuffer::new(w, h, data)
}

/// Split, shuffle and reassemble in one step over an already fitted image.
pub fn shuffle_image(
    image: &ImageBuffer,
    patch_count: u32,
    rng: &mut SeededRng,
) -> Result<(ImageBuffer, PatchPermutation), ImageError> {
    let grid = PatchGrid::for_image(image, patch_count)?;
    let patches = split_patches(image, &grid)?;
    let (shuffled, perm) = shuffle_patches(&patches, rng);
    Ok((reassemble(&shuffled, &grid)?, perm))
}

/// Copies the protected rectangle back from `original` over `mutated`.
pub fn apply_protected_region(
    original: &ImageBuffer,
    mutated: &ImageBuffer,
    region: &ProtectedRegion,
) -> Result<ImageBuffer, ImageError> {
    if original.width() != mutated.width() || original.height() != mutated.height() {
        return Err(ImageError::DimensionMismatch(format!(
            "original {}x{} vs mutated {}x{}",
            original.width(),
            original.height(),
            mutated.width(),
            mutated.height()
        )));
    }
    let (x0, y0, x1, y1) = region.to_pixels(original.width(), original.height());
    let mut out = mutated.clone();
    for y in y0..y1 {
        for x in x0..x1 {
            out.set_pixel(x, y, original.pixel(x, y));
        }
    }
    Ok(out)
}
