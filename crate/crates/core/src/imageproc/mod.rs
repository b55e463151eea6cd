//! Grayscale image types and the signature preprocessing pipeline.
//!
//! Images are real-valued with intensities in `[0, 255]`. The canonical
//! network/feature input is a 150x220 image whose background is exactly
//! zero after preprocessing (ink bright, background dark).

pub mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Canonical input height after preprocessing.
pub const CANON_HEIGHT: usize = 150;
/// Canonical input width after preprocessing.
pub const CANON_WIDTH: usize = 220;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer length {got} does not match {height}x{width}")]
    LengthMismatch { height: usize, width: usize, got: usize },
    #[error("pixel value {value} outside [0, 255] at index {index}")]
    PixelOutOfRange { index: usize, value: f64 },
    #[error("image dimensions must be positive")]
    EmptyDimensions,
    #[error("image has no mass (all pixels zero)")]
    NoMass,
    #[error("translated content does not fit in a {height}x{width} canvas")]
    DoesNotFit { height: usize, width: usize },
    #[error("constant image: no threshold separates two classes")]
    Degenerate,
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("expected canonical {CANON_HEIGHT}x{CANON_WIDTH} image, got {0}x{1}")]
    NotCanonical(usize, usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

/// Rectangular grid of real intensities in `[0, 255]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T> {
    height: usize,
    width: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> GrayImage<T> {
    /// Builds an image, validating shape and the `[0, 255]` pixel range.
    pub fn new(height: usize, width: usize, pixels: Vec<T>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDimensions);
        }
        if pixels.len() != height * width {
            return Err(ImageError::LengthMismatch { height, width, got: pixels.len() });
        }
        let hi = T::cast(255.0);
        for (index, &p) in pixels.iter().enumerate() {
            if !(p >= T::zero() && p <= hi) {
                return Err(ImageError::PixelOutOfRange { index, value: p.to_f64_lossy() });
            }
        }
        Ok(Self { height, width, pixels })
    }

    /// Builds an image after clamping every pixel into `[0, 255]`.
    /// Non-finite values are rejected.
    pub fn from_clamped(height: usize, width: usize, mut pixels: Vec<T>) -> Result<Self, ImageError> {
        let hi = T::cast(255.0);
        for (index, p) in pixels.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(ImageError::PixelOutOfRange { index, value: p.to_f64_lossy() });
            }
            *p = p.max(T::zero()).min(hi);
        }
        Self::new(height, width, pixels)
    }

    /// Constant-valued image.
    pub fn constant(height: usize, width: usize, value: T) -> Result<Self, ImageError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.pixels[row * self.width + col]
    }

    /// Mean intensity over all pixels.
    pub fn mean(&self) -> T {
        self.pixels.iter().copied().sum::<T>() / T::cast(self.pixels.len() as f64)
    }

    /// Applies `f` to every pixel and clamps the result back into range.
    pub fn map_clamped(&self, f: impl Fn(T) -> T) -> Self {
        let hi = T::cast(255.0);
        let pixels = self.pixels.iter().map(|&p| f(p).max(T::zero()).min(hi)).collect();
        Self { height: self.height, width: self.width, pixels }
    }

    fn same_shape(&self, other: &Self) -> Result<(), ImageError> {
        if self.height != other.height || self.width != other.width {
            return Err(ImageError::DimensionMismatch(self.height, self.width, other.height, other.width));
        }
        Ok(())
    }
}

/// A [`GrayImage`] constrained to the canonical 150x220 geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonImage<T>(GrayImage<T>);

impl<T: Scalar> CanonImage<T> {
    pub fn new(image: GrayImage<T>) -> Result<Self, ImageError> {
        if image.height != CANON_HEIGHT || image.width != CANON_WIDTH {
            return Err(ImageError::NotCanonical(image.height, image.width));
        }
        Ok(Self(image))
    }

    /// Canonical image from a raw pixel buffer, clamping into `[0, 255]`.
    pub fn from_clamped(pixels: Vec<T>) -> Result<Self, ImageError> {
        Self::new(GrayImage::from_clamped(CANON_HEIGHT, CANON_WIDTH, pixels)?)
    }

    pub fn image(&self) -> &GrayImage<T> {
        &self.0
    }

    pub fn into_image(self) -> GrayImage<T> {
        self.0
    }

    /// Fraction of exactly-zero pixels (the background share).
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.0.pixels.iter().filter(|&&p| p == T::zero()).count();
        zeros as f64 / self.0.pixels.len() as f64
    }
}

impl<T> std::ops::Deref for CanonImage<T> {
    type Target = GrayImage<T>;

    fn deref(&self) -> &GrayImage<T> {
        &self.0
    }
}

/// Preprocessing knobs. The blank canvas used for center-of-mass placement
/// is `canvas_scale` times the raw image dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub canvas_scale: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { canvas_scale: 1.5 }
    }
}

/// Translates the image rigidly so its intensity centroid lands on the
/// center of an `h x w` zero-filled canvas. No resampling: the offset is
/// rounded to whole pixels, so the output centroid is within 0.5 px of the
/// canvas center per axis.
pub fn center_by_mass<T: Scalar>(img: &GrayImage<T>, h: usize, w: usize) -> Result<GrayImage<T>, ImageError> {
    if h == 0 || w == 0 {
        return Err(ImageError::EmptyDimensions);
    }
    let mut mass = T::zero();
    let mut row_moment = T::zero();
    let mut col_moment = T::zero();
    for r in 0..img.height {
        for c in 0..img.width {
            let p = img.get(r, c);
            mass += p;
            row_moment += p * T::cast(r as f64);
            col_moment += p * T::cast(c as f64);
        }
    }
    if mass <= T::zero() {
        return Err(ImageError::NoMass);
    }
    let centroid_r = (row_moment / mass).to_f64_lossy();
    let centroid_c = (col_moment / mass).to_f64_lossy();
    let target_r = (h as f64 - 1.0) / 2.0;
    let target_c = (w as f64 - 1.0) / 2.0;
    let dr = (target_r - centroid_r).round() as i64;
    let dc = (target_c - centroid_c).round() as i64;
    if dr < 0
        || dc < 0
        || dr as usize + img.height > h
        || dc as usize + img.width > w
    {
        return Err(ImageError::DoesNotFit { height: h, width: w });
    }
    let (dr, dc) = (dr as usize, dc as usize);
    let mut pixels = vec![T::zero(); h * w];
    for r in 0..img.height {
        let src = &img.pixels[r * img.width..(r + 1) * img.width];
        let dst_start = (r + dr) * w + dc;
        pixels[dst_start..dst_start + img.width].copy_from_slice(src);
    }
    Ok(GrayImage { height: h, width: w, pixels })
}

/// Bilinear resampling to `h x w` using the half-pixel center convention.
pub fn resize_bilinear<T: Scalar>(img: &GrayImage<T>, h: usize, w: usize) -> Result<GrayImage<T>, ImageError> {
    if h == 0 || w == 0 {
        return Err(ImageError::EmptyDimensions);
    }
    if h == img.height && w == img.width {
        return Ok(img.clone());
    }
    let scale_r = img.height as f64 / h as f64;
    let scale_c = img.width as f64 / w as f64;
    let mut pixels = Vec::with_capacity(h * w);
    for r in 0..h {
        let src_r = ((r as f64 + 0.5) * scale_r - 0.5).clamp(0.0, (img.height - 1) as f64);
        let r0 = src_r.floor() as usize;
        let r1 = (r0 + 1).min(img.height - 1);
        let fr = T::cast(src_r - r0 as f64);
        for c in 0..w {
            let src_c = ((c as f64 + 0.5) * scale_c - 0.5).clamp(0.0, (img.width - 1) as f64);
            let c0 = src_c.floor() as usize;
            let c1 = (c0 + 1).min(img.width - 1);
            let fc = T::cast(src_c - c0 as f64);
            let one = T::one();
            let top = img.get(r0, c0) * (one - fc) + img.get(r0, c1) * fc;
            let bottom = img.get(r1, c0) * (one - fc) + img.get(r1, c1) * fc;
            pixels.push(top * (one - fr) + bottom * fr);
        }
    }
    // Interpolation of in-range values stays in range; clamp only guards
    // against float round-off at the boundaries.
    GrayImage::from_clamped(h, w, pixels)
}

/// Photometric inversion: every pixel `p` becomes `255 - p`.
pub fn invert<T: Scalar>(img: &GrayImage<T>) -> GrayImage<T> {
    let hi = T::cast(255.0);
    GrayImage {
        height: img.height,
        width: img.width,
        pixels: img.pixels.iter().map(|&p| hi - p).collect(),
    }
}

/// 256-bin integer histogram of intensities rounded half-up.
pub fn intensity_histogram<T: Scalar>(img: &GrayImage<T>) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        let bin = (p.to_f64_lossy() + 0.5).floor().clamp(0.0, 255.0) as usize;
        hist[bin] += 1;
    }
    hist
}

/// Between-class variance maximizer over the 256-bin histogram: returns the
/// threshold `t` maximizing the variance of the split `{p < t}` vs `{p >= t}`,
/// ties broken toward the smallest `t`. The comparison is done in exact
/// integer arithmetic so the result is reproducible bit-for-bit.
pub fn otsu_threshold<T: Scalar>(img: &GrayImage<T>) -> Result<u8, ImageError> {
    let hist = intensity_histogram(img);
    otsu_from_histogram(&hist)
}

pub(crate) fn otsu_from_histogram(hist: &[u64; 256]) -> Result<u8, ImageError> {
    let n: u64 = hist.iter().sum();
    let distinct = hist.iter().filter(|&&h| h > 0).count();
    if distinct < 2 {
        return Err(ImageError::Degenerate);
    }
    let s: u64 = hist.iter().enumerate().map(|(i, &h)| i as u64 * h).sum();
    // Between-class variance at t is proportional to
    // (s0*n - s*w0)^2 / (w0*(n-w0)); compare as exact fractions. The u128
    // products stay in range for images up to ~500k pixels.
    let exact = n <= 500_000;
    let mut best_t = 0u8;
    let mut best_num: u128 = 0;
    let mut best_den: u128 = 1;
    let mut best_f = f64::NEG_INFINITY;
    let mut w0: u64 = 0;
    let mut s0: u64 = 0;
    for t in 1..=255usize {
        w0 += hist[t - 1];
        s0 += (t as u64 - 1) * hist[t - 1];
        let w1 = n - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        if exact {
            let a = (s0 as i128) * (n as i128) - (s as i128) * (w0 as i128);
            let num = (a.unsigned_abs()) * (a.unsigned_abs());
            let den = (w0 as u128) * (w1 as u128);
            // num/den > best_num/best_den, strictly, to keep the smallest t on ties.
            if num * best_den > best_num * den {
                best_num = num;
                best_den = den;
                best_t = t as u8;
            }
        } else {
            let a = (s0 as f64) * (n as f64) - (s as f64) * (w0 as f64);
            let f = a * a / ((w0 as f64) * (w1 as f64));
            if f > best_f {
                best_f = f;
                best_t = t as u8;
            }
        }
    }
    if exact && best_num == 0 {
        return Err(ImageError::Degenerate);
    }
    Ok(best_t)
}

/// Zeroes every pixel with intensity strictly below `t`.
pub fn suppress_below<T: Scalar>(img: &GrayImage<T>, t: u8) -> GrayImage<T> {
    let threshold = T::cast(t as f64);
    GrayImage {
        height: img.height,
        width: img.width,
        pixels: img.pixels.iter().map(|&p| if p < threshold { T::zero() } else { p }).collect(),
    }
}

/// Full preprocessing for a raw scan (dark ink on bright paper): invert so
/// the background is zero-valued, center the ink mass in a blank canvas,
/// resize to 150x220, then estimate a threshold and zero everything below
/// it, leaving the strokes in grayscale.
pub fn preprocess<T: Scalar>(raw: &GrayImage<T>) -> Result<CanonImage<T>, ImageError> {
    preprocess_with(raw, &PreprocessConfig::default())
}

pub fn preprocess_with<T: Scalar>(raw: &GrayImage<T>, config: &PreprocessConfig) -> Result<CanonImage<T>, ImageError> {
    let inverted = invert(raw);
    let canvas_h = ((raw.height as f64 * config.canvas_scale).ceil() as usize).max(raw.height);
    let canvas_w = ((raw.width as f64 * config.canvas_scale).ceil() as usize).max(raw.width);
    let centered = center_by_mass(&inverted, canvas_h, canvas_w)?;
    let resized = resize_bilinear(&centered, CANON_HEIGHT, CANON_WIDTH)?;
    let threshold = otsu_threshold(&resized)?;
    CanonImage::new(suppress_below(&resized, threshold))
}

/// Background-removal countermeasure applied to a (possibly adversarial)
/// canonical image: re-estimates a threshold on the image itself and zeroes
/// everything below it. A constant image is returned unchanged.
pub fn remove_noise<T: Scalar>(adv: &CanonImage<T>) -> CanonImage<T> {
    match otsu_threshold(adv.image()) {
        Ok(t) => CanonImage(suppress_below(adv.image(), t)),
        Err(_) => {
            log::debug!("background removal skipped: constant image");
            adv.clone()
        }
    }
}

/// Root mean square difference over pixels; both images must share a shape.
pub fn rmse<T: Scalar>(a: &GrayImage<T>, b: &GrayImage<T>) -> Result<T, ImageError> {
    a.same_shape(b)?;
    let n = T::cast(a.pixels.len() as f64);
    let sum: T = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok((sum / n).sqrt())
}

/// Rounds every pixel to the nearest integer, half-up.
pub fn discretize<T: Scalar>(img: &GrayImage<T>) -> GrayImage<T> {
    let half = T::cast(0.5);
    let hi = T::cast(255.0);
    GrayImage {
        height: img.height,
        width: img.width,
        pixels: img.pixels.iter().map(|&p| (p + half).floor().max(T::zero()).min(hi)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, px: &[f64]) -> GrayImage<f64> {
        GrayImage::new(h, w, px.to_vec()).unwrap()
    }

    /// Naive scan over all 256 thresholds recomputing class sums from
    /// scratch; exact integer comparison mirrors the production rule but is
    /// derived independently from the histogram definition.
    fn otsu_brute_force(image: &GrayImage<f64>) -> Option<u8> {
        let hist = intensity_histogram(image);
        let mut best: Option<(u8, u128, u128)> = None;
        for t in 0..=255usize {
            let (mut w0, mut w1, mut s0, mut s1) = (0u64, 0u64, 0u64, 0u64);
            for (i, &h) in hist.iter().enumerate() {
                if i < t {
                    w0 += h;
                    s0 += i as u64 * h;
                } else {
                    w1 += h;
                    s1 += i as u64 * h;
                }
            }
            if w0 == 0 || w1 == 0 {
                continue;
            }
            // w0*w1*(mu0-mu1)^2 = (s0*w1 - s1*w0)^2 / (w0*w1)
            let a = (s0 as i128) * (w1 as i128) - (s1 as i128) * (w0 as i128);
            let num = a.unsigned_abs() * a.unsigned_abs();
            let den = (w0 as u128) * (w1 as u128);
            match best {
                None => best = Some((t as u8, num, den)),
                Some((_, bn, bd)) if num * bd > bn * den => best = Some((t as u8, num, den)),
                _ => {}
            }
        }
        best.filter(|&(_, num, _)| num > 0).map(|(t, _, _)| t)
    }

    #[test]
    fn construction_validates_range_and_length() {
        assert!(GrayImage::<f64>::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::<f64>::new(2, 2, vec![0.0, 1.0, 2.0, 256.0]).is_err());
        assert!(GrayImage::<f64>::new(2, 2, vec![0.0, 1.0, 2.0, -0.1]).is_err());
        assert!(GrayImage::<f64>::new(0, 2, vec![]).is_err());
        let clamped = GrayImage::<f64>::from_clamped(1, 2, vec![-3.0, 300.0]).unwrap();
        assert_eq!(clamped.pixels(), &[0.0, 255.0]);
        assert!(GrayImage::<f64>::from_clamped(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn center_single_point_lands_in_canvas_center() {
        let mut px = vec![0.0; 9];
        px[0] = 200.0;
        let out = center_by_mass(&img(3, 3, &px), 5, 5).unwrap();
        assert_eq!(out.get(2, 2), 200.0);
        assert_eq!(out.pixels().iter().filter(|&&p| p != 0.0).count(), 1);
    }

    #[test]
    fn center_is_fixed_point_for_centered_blob() {
        // Symmetric blob already centered in its own 5x5 canvas.
        let mut px = vec![0.0; 25];
        px[2 * 5 + 2] = 100.0;
        px[1 * 5 + 2] = 50.0;
        px[3 * 5 + 2] = 50.0;
        px[2 * 5 + 1] = 50.0;
        px[2 * 5 + 3] = 50.0;
        let image = img(5, 5, &px);
        let out = center_by_mass(&image, 5, 5).unwrap();
        assert_eq!(out, image);
    }

    #[test]
    fn center_translates_two_point_row() {
        // Pixels at columns 0 and 4 of a 1x5 image, centroid at column 2;
        // the 1x9 canvas center is column 4, so content shifts right by 2.
        let px = [100.0, 0.0, 0.0, 0.0, 100.0];
        let out = center_by_mass(&img(1, 5, &px), 1, 9).unwrap();
        assert_eq!(out.get(0, 2), 100.0);
        assert_eq!(out.get(0, 6), 100.0);
        assert_eq!(out.pixels().iter().filter(|&&p| p != 0.0).count(), 2);
    }

    #[test]
    fn center_errors() {
        assert!(matches!(center_by_mass(&img(2, 2, &[0.0; 4]), 4, 4), Err(ImageError::NoMass)));
        // All mass in one corner of a wide image forces the translation out of canvas.
        let mut px = vec![0.0; 12];
        px[0] = 255.0;
        assert!(matches!(
            center_by_mass(&img(1, 12, &px), 1, 12),
            Err(ImageError::DoesNotFit { .. })
        ));
    }

    #[test]
    fn centroid_lands_within_half_pixel() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let h = rng.gen_range(2..8);
            let w = rng.gen_range(2..8);
            let px: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..255.0)).collect();
            let image = img(h, w, &px);
            let out = center_by_mass(&image, 3 * h, 3 * w).unwrap();
            let mut mass = 0.0;
            let (mut mr, mut mc) = (0.0, 0.0);
            for r in 0..out.height() {
                for c in 0..out.width() {
                    let p = out.get(r, c);
                    mass += p;
                    mr += p * r as f64;
                    mc += p * c as f64;
                }
            }
            let center_r = (out.height() as f64 - 1.0) / 2.0;
            let center_c = (out.width() as f64 - 1.0) / 2.0;
            assert!((mr / mass - center_r).abs() <= 0.5 + 1e-9);
            assert!((mc / mass - center_c).abs() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn resize_identity_and_constant() {
        let image = img(2, 2, &[10.0, 20.0, 30.0, 40.0]);
        assert_eq!(resize_bilinear(&image, 2, 2).unwrap(), image);
        let flat = GrayImage::constant(3, 4, 100.0f64).unwrap();
        let out = resize_bilinear(&flat, 7, 5).unwrap();
        for &p in out.pixels() {
            assert!((p - 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resize_interpolates_middle_column() {
        let image = img(2, 2, &[0.0, 255.0, 0.0, 255.0]);
        let out = resize_bilinear(&image, 2, 3).unwrap();
        for r in 0..2 {
            assert!((out.get(r, 1) - 127.5).abs() < 1e-9, "row {r}: {}", out.get(r, 1));
        }
    }

    #[test]
    fn invert_involution() {
        let image = img(1, 3, &[0.0, 100.0, 255.0]);
        let inv = invert(&image);
        assert_eq!(inv.pixels(), &[255.0, 155.0, 0.0]);
        assert_eq!(invert(&inv), image);
    }

    #[test]
    fn otsu_half_and_half() {
        let mut px = vec![0.0; 10];
        for p in px.iter_mut().take(5) {
            *p = 255.0;
        }
        let t = otsu_threshold(&img(2, 5, &px)).unwrap();
        assert_eq!(t, 1);
    }

    #[test]
    fn otsu_bimodal_values() {
        let px = [50.0, 50.0, 50.0, 200.0, 200.0, 200.0];
        assert_eq!(otsu_threshold(&img(2, 3, &px)).unwrap(), 51);
    }

    #[test]
    fn otsu_constant_is_degenerate() {
        let flat = GrayImage::constant(4, 4, 42.0f64).unwrap();
        assert!(matches!(otsu_threshold(&flat), Err(ImageError::Degenerate)));
    }

    #[test]
    fn otsu_matches_brute_force_on_random_images() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let h = rng.gen_range(2..12);
            let w = rng.gen_range(2..12);
            let px: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..255.0)).collect();
            let image = img(h, w, &px);
            match otsu_brute_force(&image) {
                Some(want) => assert_eq!(otsu_threshold(&image).unwrap(), want),
                None => assert!(otsu_threshold(&image).is_err()),
            }
        }
    }

    #[test]
    fn suppress_below_definition_and_idempotence() {
        let image = img(1, 3, &[10.0, 100.0, 200.0]);
        let out = suppress_below(&image, 100);
        assert_eq!(out.pixels(), &[0.0, 100.0, 200.0]);
        assert_eq!(suppress_below(&out, 100), out);
        assert_eq!(suppress_below(&image, 0), image);
        let all = suppress_below(&image, 255);
        assert_eq!(all.pixels(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rmse_basics() {
        let a = img(1, 2, &[0.0, 0.0]);
        let b = img(1, 2, &[255.0, 255.0]);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&a, &b).unwrap(), 255.0);
        assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        let c = img(2, 1, &[0.0, 0.0]);
        assert!(rmse(&a, &c).is_err());
    }

    #[test]
    fn rmse_single_pixel_canonical() {
        let mut px = vec![0.0; CANON_HEIGHT * CANON_WIDTH];
        let a = img(CANON_HEIGHT, CANON_WIDTH, &px);
        px[123] = 181.66;
        let b = img(CANON_HEIGHT, CANON_WIDTH, &px);
        assert!((rmse(&a, &b).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn discretize_rounds_half_up() {
        let image = img(1, 4, &[100.4, 100.5, 0.0, 255.0]);
        let out = discretize(&image);
        assert_eq!(out.pixels(), &[100.0, 101.0, 0.0, 255.0]);
        assert_eq!(discretize(&out), out);
    }

    #[test]
    fn preprocess_contract() {
        // Raw scan: bright paper, one dark blob of ink.
        let mut px = vec![255.0; 60 * 80];
        for r in 20..30 {
            for c in 30..50 {
                px[r * 80 + c] = 40.0;
            }
        }
        let canon = preprocess(&img(60, 80, &px)).unwrap();
        assert_eq!(canon.height(), CANON_HEIGHT);
        assert_eq!(canon.width(), CANON_WIDTH);
        assert!(canon.zero_fraction() >= 0.5);

        let blank = GrayImage::constant(60, 80, 255.0f64).unwrap();
        assert!(matches!(preprocess(&blank), Err(ImageError::NoMass)));
    }

    #[test]
    fn remove_noise_zeroes_low_background() {
        let mut px = vec![0.0; CANON_HEIGHT * CANON_WIDTH];
        for c in 0..CANON_WIDTH {
            px[75 * CANON_WIDTH + c] = 200.0;
        }
        // Uniform low-amplitude noise on the background.
        for (i, p) in px.iter_mut().enumerate() {
            if *p == 0.0 {
                *p = 3.0 + (i % 7) as f64 * 0.25;
            }
        }
        let noisy = CanonImage::from_clamped(px).unwrap();
        let cleaned = remove_noise(&noisy);
        assert!(cleaned.zero_fraction() > 0.9);
        for c in 0..CANON_WIDTH {
            assert_eq!(cleaned.get(75, c), 200.0);
        }

        let flat = CanonImage::new(GrayImage::constant(CANON_HEIGHT, CANON_WIDTH, 9.0f64).unwrap()).unwrap();
        assert_eq!(remove_noise(&flat), flat);
    }
}
