use std::io::Cursor;
use std::path::Path;

use image::{ImageReader, Limits, RgbImage};

use crate::{Error, Result};

/// Input side length used when nothing else is configured.
pub const DEFAULT_RESOLUTION: usize = 224;

const MAX_DECODE_SIDE: u32 = 16_384;
const MAX_DECODE_ALLOC: u64 = 1 << 30;

/// A decoded, resized RGB image in channel-major `(3, H, W)` layout.
///
/// Channels are scaled from 8 bits into `[0, 1]` by dividing by 255. No
/// per-channel mean/std normalization is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub pixels: Vec<f32>,
    pub height: usize,
    pub width: usize,
    pub source_ref: String,
}

impl ImageTensor {
    pub fn shape(&self) -> (usize, usize, usize) {
        (3, self.height, self.width)
    }

    /// Mean of each channel over all pixels.
    pub fn channel_means(&self) -> [f64; 3] {
        let plane = self.height * self.width;
        let mut out = [0.0; 3];
        for (c, m) in out.iter_mut().enumerate() {
            let sum: f64 = self.pixels[c * plane..(c + 1) * plane]
                .iter()
                .map(|&v| v as f64)
                .sum();
            *m = sum / plane as f64;
        }
        out
    }
}

/// Loads an image file, converts it to RGB and resizes it to
/// `resolution × resolution`.
pub fn load_image(path: impl AsRef<Path>, resolution: usize) -> Result<ImageTensor> {
    let path = path.as_ref();
    check_resolution(resolution)?;
    let bytes = std::fs::read(path).map_err(|e| Error::Decode {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_image_bytes(&bytes, resolution, &path.display().to_string())
}

/// Decodes PNG or JPEG bytes (format sniffed from content).
pub fn decode_image_bytes(bytes: &[u8], resolution: usize, source_ref: &str) -> Result<ImageTensor> {
    check_resolution(resolution)?;
    let decode_err = |message: String| Error::Decode {
        path: source_ref.to_string(),
        message,
    };
    let mut reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    let mut limits = Limits::default();
    limits.max_image_width = Some(MAX_DECODE_SIDE);
    limits.max_image_height = Some(MAX_DECODE_SIDE);
    limits.max_alloc = Some(MAX_DECODE_ALLOC);
    reader.limits(limits);
    let decoded = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    if rgb.width() == 0 || rgb.height() == 0 {
        return Err(decode_err("image has zero area".to_string()));
    }
    let mut tensor = resize_bilinear(&rgb, resolution);
    tensor.source_ref = source_ref.to_string();
    Ok(tensor)
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution == 0 {
        return Err(Error::Argument("resolution must be positive".to_string()));
    }
    Ok(())
}

/// Bilinear resize with half-pixel-centre sampling: output pixel `o` samples
/// the source at `(o + 0.5) · in / out − 0.5`, clamped to the valid range.
/// The outer edges of input and output grids coincide, so downsampling a
/// 2×2 image to 1×1 averages all four pixels.
pub fn resize_bilinear(image: &RgbImage, resolution: usize) -> ImageTensor {
    let (in_w, in_h) = (image.width() as usize, image.height() as usize);
    let out = resolution;
    let xs: Vec<(usize, usize, f64)> = (0..out).map(|o| sample_coord(o, in_w, out)).collect();
    let ys: Vec<(usize, usize, f64)> = (0..out).map(|o| sample_coord(o, in_h, out)).collect();
    let raw = image.as_raw();
    let at = |x: usize, y: usize, c: usize| raw[(y * in_w + x) * 3 + c] as f64;

    let plane = out * out;
    let mut pixels = vec![0f32; 3 * plane];
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
                let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
                let v = (top * (1.0 - fy) + bottom * fy) / 255.0;
                pixels[c * plane + oy * out + ox] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    ImageTensor {
        pixels,
        height: out,
        width: out,
        source_ref: String::new(),
    }
}

fn sample_coord(o: usize, input: usize, output: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) * input as f64 / output as f64 - 0.5).clamp(0.0, (input - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(input - 1);
    (i0, i1, src - i0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    fn png_bytes(img: &RgbImage) -> Vec<u8> {
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png)
            .unwrap();
        buf
    }

    #[test]
    fn uniform_gray_is_preserved() {
        let img = RgbImage::from_pixel(7, 5, Rgb([128, 128, 128]));
        for res in [1, 3, 16, 40] {
            let t = decode_image_bytes(&png_bytes(&img), res, "gray").unwrap();
            assert_eq!(t.shape(), (3, res, res));
            assert!(t.pixels.iter().all(|&v| v == (128.0f64 / 255.0) as f32));
        }
    }

    #[test]
    fn black_is_zero() {
        let img = RgbImage::from_pixel(9, 9, Rgb([0, 0, 0]));
        let t = decode_image_bytes(&png_bytes(&img), 4, "black").unwrap();
        assert!(t.pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkerboard_to_single_pixel_averages_corners() {
        let mut img = RgbImage::new(2, 2);
        for (x, y, p) in img.enumerate_pixels_mut() {
            let v = if (x + y) % 2 == 0 { 0 } else { 255 };
            *p = Rgb([v, v, v]);
        }
        let t = resize_bilinear(&img, 1);
        assert_eq!(t.pixels, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn same_size_is_identity() {
        let img = RgbImage::from_fn(5, 5, |x, y| Rgb([(x * 40) as u8, (y * 50) as u8, 7]));
        let t = resize_bilinear(&img, 5);
        for y in 0..5 {
            for x in 0..5 {
                let p = img.get_pixel(x, y);
                for c in 0..3 {
                    let got = t.pixels[c * 25 + y as usize * 5 + x as usize];
                    assert_eq!(got, (p[c] as f64 / 255.0) as f32);
                }
            }
        }
    }

    #[test]
    fn jpeg_decodes() {
        let img = RgbImage::from_pixel(16, 16, Rgb([200, 100, 50]));
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Jpeg)
            .unwrap();
        let t = decode_image_bytes(&buf, 8, "j").unwrap();
        let m = t.channel_means();
        assert!((m[0] - 200.0 / 255.0).abs() < 0.03, "{m:?}");
    }

    #[test]
    fn errors() {
        assert!(matches!(
            decode_image_bytes(b"not an image", 8, "x"),
            Err(Error::Decode { .. })
        ));
        assert!(matches!(
            decode_image_bytes(&[], 0, "x"),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            load_image("/definitely/missing.png", 8),
            Err(Error::Decode { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn output_in_unit_range(
            w in 1u32..24, h in 1u32..24, res in 1usize..40, seed in any::<u64>()
        ) {
            let img = RgbImage::from_fn(w, h, |x, y| {
                let v = seed.wrapping_mul(31).wrapping_add((x * 7 + y * 13) as u64);
                Rgb([(v % 256) as u8, ((v >> 8) % 256) as u8, ((v >> 16) % 256) as u8])
            });
            let t = decode_image_bytes(&png_bytes(&img), res, "p").unwrap();
            prop_assert_eq!(t.shape(), (3, res, res));
            prop_assert!(t.pixels.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_image_bytes(&bytes, 4, "fuzz");
        }
    }
}
