//! No-reference per-image visual covariates.
//!
//! All intensities are in `[0, 1]`; luminance uses Rec.601 weights. Spatial
//! operators replicate the border pixel. Conventions that are not fixed by
//! the metric formulas themselves:
//!
//! * turbidity is the pixel-wise dark channel (no patch minimum);
//! * UICM uses plain means and standard deviations of the opponent channels;
//! * UISM is the mean Sobel gradient magnitude of luminance (unnormalized
//!   3x3 Sobel kernels);
//! * UIConM averages Michelson contrast of luminance over non-overlapping
//!   square blocks (default 64 px); partial edge blocks are discarded and a
//!   block with `max + min = 0` contributes 0;
//! * UCIQE takes chroma and lightness from CIELab (sRGB, D65), scaled by
//!   1/100, and saturation from HSV. Lightness contrast is the spread
//!   between the 99th and 1st percentiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Plane, RgbImage};
use crate::model::Annotation;
use crate::scalar::{mean_and_variance, percentile_sorted, Scalar};
use crate::structure::{fish_count, max_overlap_mean, pairwise_overlap_mean};

pub const UIQM_COEFFS: [f64; 3] = [0.0282, 0.2953, 3.5753];
pub const UCIQE_COEFFS: [f64; 3] = [0.4680, 0.2745, 0.2576];
pub const DEFAULT_CONTRAST_BLOCK: usize = 64;

/// Mean over pixels of the per-pixel channel minimum.
pub fn turbidity<T: Scalar>(image: &RgbImage<T>) -> T {
    let dark = image.pixels().iter().map(|[r, g, b]| r.min(*g).min(*b));
    mean_and_variance(dark).expect("image is non-empty").0
}

/// Population standard deviation of luminance.
pub fn rms_contrast<T: Scalar>(image: &RgbImage<T>) -> T {
    mean_and_variance(image.luminance())
        .expect("image is non-empty")
        .1
        .sqrt()
}

fn check_min_side<T: Scalar>(image: &RgbImage<T>, min: usize) -> Result<()> {
    if image.width() < min || image.height() < min {
        return Err(Error::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            min,
        });
    }
    Ok(())
}

/// Variance of the 4-neighbour Laplacian response of luminance.
pub fn blur_variance<T: Scalar>(image: &RgbImage<T>) -> Result<T> {
    check_min_side(image, 3)?;
    let lum = image.luminance();
    let p = Plane {
        data: &lum,
        width: image.width(),
        height: image.height(),
    };
    let four = T::lit(4.0);
    let mut response = Vec::with_capacity(lum.len());
    for y in 0..p.height as isize {
        for x in 0..p.width as isize {
            response.push(
                four * p.at(x, y) - p.at(x - 1, y) - p.at(x + 1, y) - p.at(x, y - 1) - p.at(x, y + 1),
            );
        }
    }
    Ok(mean_and_variance(response).expect("non-empty").1)
}

/// Per-channel share of the total intensity, `(r, g, b)`.
pub fn channel_ratios<T: Scalar>(image: &RgbImage<T>) -> Result<[T; 3]> {
    let mut sums = [T::zero(); 3];
    for px in image.pixels() {
        for c in 0..3 {
            sums[c] = sums[c] + px[c];
        }
    }
    let total = sums[0] + sums[1] + sums[2];
    if !(total > T::zero()) {
        return Err(Error::UndefinedRatio);
    }
    Ok(sums.map(|s| s / total))
}

/// Colourfulness from the RG / YB opponent channels.
pub fn uicm<T: Scalar>(image: &RgbImage<T>) -> T {
    let half = T::lit(0.5);
    let rg = image.pixels().iter().map(|[r, g, _]| *r - *g);
    let yb = image.pixels().iter().map(|[r, g, b]| (*r + *g) * half - *b);
    let (mu_rg, var_rg) = mean_and_variance(rg).expect("non-empty");
    let (mu_yb, var_yb) = mean_and_variance(yb).expect("non-empty");
    -(mu_rg * mu_rg + mu_yb * mu_yb).sqrt() - T::lit(0.3) * (var_rg + var_yb).sqrt()
}

/// Mean Sobel gradient magnitude of luminance.
pub fn uism<T: Scalar>(image: &RgbImage<T>) -> T {
    let lum = image.luminance();
    let p = Plane {
        data: &lum,
        width: image.width(),
        height: image.height(),
    };
    let two = T::lit(2.0);
    let mut sum = T::zero();
    for y in 0..p.height as isize {
        for x in 0..p.width as isize {
            let gx = (p.at(x + 1, y - 1) + two * p.at(x + 1, y) + p.at(x + 1, y + 1))
                - (p.at(x - 1, y - 1) + two * p.at(x - 1, y) + p.at(x - 1, y + 1));
            let gy = (p.at(x - 1, y + 1) + two * p.at(x, y + 1) + p.at(x + 1, y + 1))
                - (p.at(x - 1, y - 1) + two * p.at(x, y - 1) + p.at(x + 1, y - 1));
            sum = sum + (gx * gx + gy * gy).sqrt();
        }
    }
    sum / T::from_count(lum.len())
}

/// Mean block Michelson contrast of luminance over `block x block` tiles.
pub fn uiconm<T: Scalar>(image: &RgbImage<T>, block: usize) -> Result<T> {
    if block == 0 {
        return Err(Error::InvalidParameter("contrast block size must be positive".into()));
    }
    check_min_side(image, block)?;
    let lum = image.luminance();
    let w = image.width();
    let (bx, by) = (w / block, image.height() / block);
    let mut sum = T::zero();
    for j in 0..by {
        for i in 0..bx {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for y in j * block..(j + 1) * block {
                for &v in &lum[y * w + i * block..y * w + (i + 1) * block] {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            let denom = hi + lo;
            if denom > T::zero() {
                sum = sum + (hi - lo) / denom;
            }
        }
    }
    Ok(sum / T::from_count(bx * by))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UiqmParts<T = f64> {
    pub uicm: T,
    pub uism: T,
    pub uiconm: T,
    pub uiqm: T,
}

/// Weighted sum of the three UIQM components.
pub fn combine_uiqm<T: Scalar>(uicm: T, uism: T, uiconm: T) -> T {
    let [c1, c2, c3] = UIQM_COEFFS.map(T::lit);
    c1 * uicm + c2 * uism + c3 * uiconm
}

pub fn uiqm<T: Scalar>(image: &RgbImage<T>, block: usize) -> Result<UiqmParts<T>> {
    let (a, b, c) = (uicm(image), uism(image), uiconm(image, block)?);
    Ok(UiqmParts {
        uicm: a,
        uism: b,
        uiconm: c,
        uiqm: combine_uiqm(a, b, c),
    })
}

fn srgb_to_linear<T: Scalar>(c: T) -> T {
    if c <= T::lit(0.04045) {
        c / T::lit(12.92)
    } else {
        ((c + T::lit(0.055)) / T::lit(1.055)).powf(T::lit(2.4))
    }
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn lab_f<T: Scalar>(t: T) -> T {
    let delta = 6.0 / 29.0;
    if t > T::lit(delta * delta * delta) {
        t.cbrt()
    } else {
        t / T::lit(3.0 * delta * delta) + T::lit(4.0 / 29.0)
    }
}

/// CIELab `(L, a, b)` of an sRGB pixel. The white point is the image of
/// sRGB white under the conversion matrix, so neutral pixels get `a = b = 0`.
pub fn srgb_to_lab<T: Scalar>(rgb: [T; 3]) -> [T; 3] {
    let lin = rgb.map(srgb_to_linear);
    let mut xyz = [T::zero(); 3];
    for (k, row) in SRGB_TO_XYZ.iter().enumerate() {
        let white = T::lit(row[0] + row[1] + row[2]);
        let v = T::lit(row[0]) * lin[0] + T::lit(row[1]) * lin[1] + T::lit(row[2]) * lin[2];
        xyz[k] = v / white;
    }
    let [fx, fy, fz] = xyz.map(lab_f);
    [
        T::lit(116.0) * fy - T::lit(16.0),
        T::lit(500.0) * (fx - fy),
        T::lit(200.0) * (fy - fz),
    ]
}

/// HSV saturation `(max - min) / max`, 0 for black.
pub fn hsv_saturation<T: Scalar>([r, g, b]: [T; 3]) -> T {
    let hi = r.max(g).max(b);
    let lo = r.min(g).min(b);
    if hi > T::zero() {
        (hi - lo) / hi
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UciqeParts<T = f64> {
    pub chroma_std: T,
    pub lightness_contrast: T,
    pub mean_saturation: T,
    pub uciqe: T,
}

pub fn uciqe_parts<T: Scalar>(image: &RgbImage<T>) -> UciqeParts<T> {
    let hundred = T::lit(100.0);
    let mut chroma = Vec::with_capacity(image.pixels().len());
    let mut lightness = Vec::with_capacity(image.pixels().len());
    for px in image.pixels() {
        let [l, a, b] = srgb_to_lab(*px);
        chroma.push((a * a + b * b).sqrt() / hundred);
        lightness.push(l / hundred);
    }
    let chroma_std = mean_and_variance(chroma).expect("non-empty").1.sqrt();
    lightness.sort_by(|a, b| a.partial_cmp(b).expect("finite lightness"));
    let lightness_contrast = percentile_sorted(&lightness, T::lit(0.99)).expect("non-empty")
        - percentile_sorted(&lightness, T::lit(0.01)).expect("non-empty");
    let mean_saturation = mean_and_variance(image.pixels().iter().map(|p| hsv_saturation(*p)))
        .expect("non-empty")
        .0;
    let [alpha, beta, gamma] = UCIQE_COEFFS.map(T::lit);
    UciqeParts {
        chroma_std,
        lightness_contrast,
        mean_saturation,
        uciqe: alpha * chroma_std + beta * lightness_contrast + gamma * mean_saturation,
    }
}

pub fn uciqe<T: Scalar>(image: &RgbImage<T>) -> T {
    uciqe_parts(image).uciqe
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagnosticConfig {
    pub contrast_block: usize,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self {
            contrast_block: DEFAULT_CONTRAST_BLOCK,
        }
    }
}

/// The per-image covariates. Fields that are undefined for a given image
/// (too small for the kernel, all black) are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticVector<T = f64> {
    pub turbidity: T,
    pub rms_contrast: T,
    pub blur_var: Option<T>,
    pub ratio_r: Option<T>,
    pub ratio_g: Option<T>,
    pub ratio_b: Option<T>,
    pub uicm: T,
    pub uism: T,
    pub uiconm: Option<T>,
    pub uiqm: Option<T>,
    pub uciqe: T,
    pub fish_count: u32,
    pub overlap_pairwise: T,
    pub overlap_maxmean: T,
}

/// Column names of the fourteen covariates, in CSV order.
pub const DIAGNOSTIC_COLUMNS: [&str; 14] = [
    "turbidity",
    "rms_contrast",
    "blur_var",
    "ratio_r",
    "ratio_g",
    "ratio_b",
    "uicm",
    "uism",
    "uiconm",
    "uiqm",
    "uciqe",
    "fish_count",
    "overlap_pairwise",
    "overlap_maxmean",
];

impl<T: Scalar> DiagnosticVector<T> {
    /// Values in [`DIAGNOSTIC_COLUMNS`] order.
    pub fn values(&self) -> [Option<T>; 14] {
        [
            Some(self.turbidity),
            Some(self.rms_contrast),
            self.blur_var,
            self.ratio_r,
            self.ratio_g,
            self.ratio_b,
            Some(self.uicm),
            Some(self.uism),
            self.uiconm,
            self.uiqm,
            Some(self.uciqe),
            Some(T::from_count(self.fish_count as usize)),
            Some(self.overlap_pairwise),
            Some(self.overlap_maxmean),
        ]
    }

    pub fn get(&self, column: &str) -> Option<T> {
        let idx = DIAGNOSTIC_COLUMNS.iter().position(|c| *c == column)?;
        self.values()[idx]
    }

    pub fn to_f64(&self) -> DiagnosticVector<f64> {
        let f = |v: T| v.to_f64_lossy();
        DiagnosticVector {
            turbidity: f(self.turbidity),
            rms_contrast: f(self.rms_contrast),
            blur_var: self.blur_var.map(f),
            ratio_r: self.ratio_r.map(f),
            ratio_g: self.ratio_g.map(f),
            ratio_b: self.ratio_b.map(f),
            uicm: f(self.uicm),
            uism: f(self.uism),
            uiconm: self.uiconm.map(f),
            uiqm: self.uiqm.map(f),
            uciqe: f(self.uciqe),
            fish_count: self.fish_count,
            overlap_pairwise: f(self.overlap_pairwise),
            overlap_maxmean: f(self.overlap_maxmean),
        }
    }
}

/// Computes every covariate for one image and its ground-truth boxes.
pub fn compute_diagnostics<T: Scalar>(
    image: &RgbImage<T>,
    annotations: &[Annotation<T>],
    config: &DiagnosticConfig,
) -> DiagnosticVector<T> {
    let ratios = channel_ratios(image).ok();
    let uicm_v = uicm(image);
    let uism_v = uism(image);
    let uiconm_v = uiconm(image, config.contrast_block).ok();
    let boxes: Vec<_> = annotations.iter().map(|a| a.bbox).collect();
    DiagnosticVector {
        turbidity: turbidity(image),
        rms_contrast: rms_contrast(image),
        blur_var: blur_variance(image).ok(),
        ratio_r: ratios.map(|r| r[0]),
        ratio_g: ratios.map(|r| r[1]),
        ratio_b: ratios.map(|r| r[2]),
        uicm: uicm_v,
        uism: uism_v,
        uiconm: uiconm_v,
        uiqm: uiconm_v.map(|c| combine_uiqm(uicm_v, uism_v, c)),
        uciqe: uciqe(image),
        fish_count: fish_count(annotations) as u32,
        overlap_pairwise: pairwise_overlap_mean(&boxes),
        overlap_maxmean: max_overlap_mean(&boxes),
    }
}
