//! Image file IO: PNG/JPEG in, lossless PNG out, base64 data URLs for the
//! gateway.

use super::{ImageBuffer, ImageError, CHANNELS};
use base64::Engine;
use image::ImageReader;
use std::io::Cursor;
use std::path::Path;

/// Decodes PNG or JPEG bytes to 8-bit RGB; alpha composites over white.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let decoded = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImageError::Decode(e.to_string()))?
        .decode()
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    let rgba = decoded.to_rgba8();
    let (width, height) = rgba.dimensions();
    let mut data = Vec::with_capacity(width as usize * height as usize * CHANNELS);
    for px in rgba.pixels() {
        let [r, g, b, a] = px.0;
        if a == 255 {
            data.extend_from_slice(&[r, g, b]);
        } else {
            let alpha = a as f64 / 255.0;
            for v in [r, g, b] {
                let composited = v as f64 * alpha + 255.0 * (1.0 - alpha);
                data.push(composited.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(width, height, data)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageError> {
    let bytes = std::fs::read(path.as_ref())?;
    decode_image(&bytes)
}

/// Lossless PNG bytes for a buffer; stable across runs for equal input.
pub fn encode_png(image: &ImageBuffer) -> Result<Vec<u8>, ImageError> {
    let rgb: image::RgbImage = image::RgbImage::from_raw(
        image.width(),
        image.height(),
        image.data().to_vec(),
    )
    .expect("buffer dimensions are validated");
    let mut bytes = Vec::new();
    rgb.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(bytes)
}

pub fn save_png(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let bytes = encode_png(image)?;
    std::fs::write(path.as_ref(), bytes)?;
    Ok(())
}

/// `data:image/png;base64,...` attachment body for chat endpoints.
pub fn to_png_data_url(image: &ImageBuffer) -> Result<String, ImageError> {
    let bytes = encode_png(image)?;
    Ok(format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    ))
}
