//! Float RGB image buffer with intensities in `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rec.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major RGB image with one `[r, g, b]` triple per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage<T = f64> {
    width: usize,
    height: usize,
    pixels: Vec<[T; 3]>,
}

impl<T: Scalar> RgbImage<T> {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[T; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "{} pixels supplied for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn constant(width: usize, height: usize, rgb: [T; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[T; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [T; 3] {
        self.pixels[y * self.width + x]
    }

    /// Rec.601 luminance plane, row-major.
    pub fn luminance(&self) -> Vec<T> {
        let [wr, wg, wb] = LUMA_WEIGHTS.map(T::lit);
        self.pixels
            .iter()
            .map(|[r, g, b]| wr * *r + wg * *g + wb * *b)
            .collect()
    }

    /// Decodes an 8-bit (or wider) image; every channel is mapped to `[0, 1]`.
    pub fn decode(bytes: &[u8], name: &str) -> Result<Self> {
        let dynamic = image::load_from_memory(bytes).map_err(|e| Error::Decode {
            path: name.to_string(),
            message: e.to_string(),
        })?;
        let rgb = dynamic.to_rgb8();
        let (w, h) = rgb.dimensions();
        let scale = T::lit(255.0);
        let pixels = rgb
            .pixels()
            .map(|p| p.0.map(|c| T::lit(c as f64) / scale))
            .collect();
        Self::from_pixels(w as usize, h as usize, pixels)
    }

    pub fn open(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }

    /// Converts to an 8-bit buffer, rounding each channel.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let scale = T::lit(255.0);
        let mut out = image::RgbImage::new(self.width as u32, self.height as u32);
        for (dst, src) in out.pixels_mut().zip(&self.pixels) {
            dst.0 = src.map(|c| {
                (c.max(T::zero()).min(T::one()) * scale)
                    .round()
                    .to_f64_lossy() as u8
            });
        }
        out
    }
}

/// Border-replicating accessor over a row-major scalar plane.
#[derive(Clone, Copy)]
pub(crate) struct Plane<'a, T> {
    pub data: &'a [T],
    pub width: usize,
    pub height: usize,
}

impl<T: Copy> Plane<'_, T> {
    #[inline]
    pub fn at(&self, x: isize, y: isize) -> T {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yi * self.width + xi]
    }
}
