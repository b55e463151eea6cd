//! Completed local binary pattern features (CLBP_S/M/C).
//!
//! Sign, magnitude, and center components are computed per interior pixel
//! on a circle of `P` neighbors with the rotation-invariant uniform (riu2)
//! code mapping, then joined into a 3D histogram. With the default R=1,
//! P=8 the flattened histogram has 10 x 10 x 2 = 200 bins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageproc::{CanonImage, GrayImage};
use crate::scalar::Scalar;

/// Feature dimensionality of the default CLBP configuration.
pub const CLBP_DIMS: usize = 200;

#[derive(Debug, Error)]
pub enum ClbpError {
    #[error("image must be at least 3x3 for radius-1 sampling, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("neighbors must be at least 4, got {0}")]
    TooFewNeighbors(usize),
    #[error("feature vector contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// Code mapping applied to circular patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mapping {
    Riu2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClbpParams {
    pub radius: f64,
    pub neighbors: usize,
    pub mapping: Mapping,
}

impl Default for ClbpParams {
    fn default() -> Self {
        Self { radius: 1.0, neighbors: 8, mapping: Mapping::Riu2 }
    }
}

impl ClbpParams {
    /// Bins of the joint S/M/C histogram: (P+2) x (P+2) x 2.
    pub fn bin_count(&self) -> usize {
        (self.neighbors + 2) * (self.neighbors + 2) * 2
    }

    fn validate(&self) -> Result<(), ClbpError> {
        if self.neighbors < 4 {
            return Err(ClbpError::TooFewNeighbors(self.neighbors));
        }
        Ok(())
    }
}

/// Fixed-length real feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, ClbpError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ClbpError::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Scales the vector to unit L1 mass. A zero vector is left unchanged.
    pub fn l1_normalized(mut self) -> Self {
        let total: T = self.values.iter().map(|v| v.abs()).sum();
        if total > T::zero() {
            for v in &mut self.values {
                *v = *v / total;
            }
        }
        self
    }

    /// One CSV row of decimal values.
    pub fn to_csv_row(&self) -> String {
        self.values
            .iter()
            .map(|v| format!("{}", v.to_f64_lossy()))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<Self, ClbpError> {
        let values: Vec<T> = row
            .split(',')
            .map(|f| T::cast(f.trim().parse::<f64>().unwrap_or(f64::NAN)))
            .collect();
        Self::new(values)
    }
}

/// Per-interior-pixel code planes: S and M codes in `[0, P+1]`, C bits.
#[derive(Debug, Clone)]
pub struct ClbpPlanes {
    pub height: usize,
    pub width: usize,
    pub s_codes: Vec<u8>,
    pub m_codes: Vec<u8>,
    pub c_bits: Vec<u8>,
    pub neighbors: usize,
}

/// riu2 mapping: patterns with at most two circular 0/1 transitions map to
/// their popcount, everything else to the shared bin `P+1`.
pub fn riu2_code(bits: &[bool]) -> usize {
    let p = bits.len();
    let transitions = (0..p).filter(|&i| bits[i] != bits[(i + 1) % p]).count();
    if transitions <= 2 {
        bits.iter().filter(|&&b| b).count()
    } else {
        p + 1
    }
}

/// Circular neighbor offsets at angles `2*pi*k/P` starting at angle 0.
/// Offsets that land within 1e-9 of a grid point are snapped so axis-aligned
/// neighbors are read exactly.
fn neighbor_offsets(radius: f64, neighbors: usize) -> Vec<(f64, f64)> {
    (0..neighbors)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / neighbors as f64;
            let mut dr = -radius * theta.sin();
            let mut dc = radius * theta.cos();
            if (dr - dr.round()).abs() < 1e-9 {
                dr = dr.round();
            }
            if (dc - dc.round()).abs() < 1e-9 {
                dc = dc.round();
            }
            (dr, dc)
        })
        .collect()
}

/// Bilinear sample; written as incremental differences so a constant
/// neighborhood reproduces the corner value exactly.
#[inline]
fn sample<T: Scalar>(img: &GrayImage<T>, r: f64, c: f64) -> T {
    let r0 = r.floor();
    let c0 = c.floor();
    let fr = T::cast(r - r0);
    let fc = T::cast(c - c0);
    let (r0, c0) = (r0 as usize, c0 as usize);
    if fr == T::zero() && fc == T::zero() {
        return img.get(r0, c0);
    }
    let r1 = (r0 + 1).min(img.height() - 1);
    let c1 = (c0 + 1).min(img.width() - 1);
    let p00 = img.get(r0, c0);
    let p01 = img.get(r0, c1);
    let p10 = img.get(r1, c0);
    let p11 = img.get(r1, c1);
    p00 + fr * (p10 - p00) + fc * (p01 - p00) + fr * fc * (p11 - p10 - p01 + p00)
}

/// Computes the S/M/C code planes for every interior pixel.
///
/// For a center `g_c` with sampled neighbors `g_p`: the sign bit is
/// `g_p >= g_c`, the magnitude is `|g_p - g_c|` thresholded at the global
/// mean magnitude, and the center bit is `g_c >= mean intensity`. All three
/// comparisons use `>=` so constant regions are deterministic.
pub fn clbp_decompose<T: Scalar>(img: &GrayImage<T>, params: &ClbpParams) -> Result<ClbpPlanes, ClbpError> {
    params.validate()?;
    let (h, w) = (img.height(), img.width());
    let margin = params.radius.ceil() as usize;
    if h < 2 * margin + 1 || w < 2 * margin + 1 {
        return Err(ClbpError::TooSmall(h, w));
    }
    let p = params.neighbors;
    let inner_h = h - 2 * margin;
    let inner_w = w - 2 * margin;
    let offsets = neighbor_offsets(params.radius, p);

    // Pass 1: sample all neighbors, accumulate the global magnitude mean.
    let mut samples = vec![T::zero(); inner_h * inner_w * p];
    let mut magnitude_sum = T::zero();
    for ir in 0..inner_h {
        for ic in 0..inner_w {
            let (r, c) = (ir + margin, ic + margin);
            let center = img.get(r, c);
            let base = (ir * inner_w + ic) * p;
            for (k, &(dr, dc)) in offsets.iter().enumerate() {
                let g = sample(img, r as f64 + dr, c as f64 + dc);
                samples[base + k] = g;
                magnitude_sum += (g - center).abs();
            }
        }
    }
    let t_m = magnitude_sum / T::cast((inner_h * inner_w * p) as f64);
    let t_c = img.mean();

    // Pass 2: threshold into patterns and map through riu2.
    let mut s_codes = vec![0u8; inner_h * inner_w];
    let mut m_codes = vec![0u8; inner_h * inner_w];
    let mut c_bits = vec![0u8; inner_h * inner_w];
    let mut s_bits = vec![false; p];
    let mut m_bits = vec![false; p];
    for ir in 0..inner_h {
        for ic in 0..inner_w {
            let (r, c) = (ir + margin, ic + margin);
            let center = img.get(r, c);
            let idx = ir * inner_w + ic;
            let base = idx * p;
            for k in 0..p {
                let g = samples[base + k];
                s_bits[k] = g >= center;
                m_bits[k] = (g - center).abs() >= t_m;
            }
            s_codes[idx] = riu2_code(&s_bits) as u8;
            m_codes[idx] = riu2_code(&m_bits) as u8;
            c_bits[idx] = u8::from(center >= t_c);
        }
    }
    Ok(ClbpPlanes { height: inner_h, width: inner_w, s_codes, m_codes, c_bits, neighbors: p })
}

/// Joint raw-count histogram over (S code, M code, C bit), flattened as
/// `s * 2*(P+2) + m * 2 + c`.
pub fn clbp_histogram<T: Scalar>(planes: &ClbpPlanes) -> FeatureVector<T> {
    let side = planes.neighbors + 2;
    let mut counts = vec![T::zero(); side * side * 2];
    for i in 0..planes.s_codes.len() {
        let s = planes.s_codes[i] as usize;
        let m = planes.m_codes[i] as usize;
        let c = planes.c_bits[i] as usize;
        counts[s * side * 2 + m * 2 + c] += T::one();
    }
    FeatureVector { values: counts }
}

/// The full extractor: decompose, histogram, L1-normalize.
pub fn extract_clbp<T: Scalar>(img: &CanonImage<T>, params: &ClbpParams) -> Result<FeatureVector<T>, ClbpError> {
    let planes = clbp_decompose(img.image(), params)?;
    Ok(clbp_histogram::<T>(&planes).l1_normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageproc::{CanonImage, GrayImage, CANON_HEIGHT, CANON_WIDTH};
    use rand::{Rng, SeedableRng};

    /// Transition-count oracle over an explicit u8 pattern, bit k = neighbor k.
    fn riu2_oracle(pattern: u8) -> usize {
        let bits: Vec<bool> = (0..8).map(|k| pattern >> k & 1 == 1).collect();
        let mut transitions = 0;
        for k in 0..8 {
            if bits[k] != bits[(k + 1) % 8] {
                transitions += 1;
            }
        }
        if transitions <= 2 {
            pattern.count_ones() as usize
        } else {
            9
        }
    }

    fn bits_of(pattern: u8) -> Vec<bool> {
        (0..8).map(|k| pattern >> k & 1 == 1).collect()
    }

    #[test]
    fn riu2_known_patterns() {
        assert_eq!(riu2_code(&bits_of(0b0000_0000)), 0);
        assert_eq!(riu2_code(&bits_of(0b1111_1111)), 8);
        assert_eq!(riu2_code(&bits_of(0b0000_1111)), 4);
        assert_eq!(riu2_code(&bits_of(0b0101_0101)), 9);
    }

    #[test]
    fn riu2_matches_oracle_for_all_256_patterns() {
        for pattern in 0..=255u8 {
            assert_eq!(riu2_code(&bits_of(pattern)), riu2_oracle(pattern), "pattern {pattern:08b}");
        }
    }

    #[test]
    fn riu2_is_rotation_invariant() {
        for pattern in 0..=255u8 {
            let rotated = pattern.rotate_left(1);
            assert_eq!(riu2_code(&bits_of(pattern)), riu2_code(&bits_of(rotated)));
        }
    }

    #[test]
    fn constant_image_codes() {
        let img = GrayImage::constant(6, 7, 120.0f64).unwrap();
        let planes = clbp_decompose(&img, &ClbpParams::default()).unwrap();
        assert!(planes.s_codes.iter().all(|&s| s == 8));
        assert!(planes.m_codes.iter().all(|&m| m == 8));
        assert!(planes.c_bits.iter().all(|&c| c == 1));
    }

    #[test]
    fn isolated_bright_center_has_zero_sign_code() {
        let mut px = vec![0.0f64; 25];
        px[12] = 200.0;
        let img = GrayImage::new(5, 5, px).unwrap();
        let planes = clbp_decompose(&img, &ClbpParams::default()).unwrap();
        // Center of the 3x3 interior grid is the bright pixel.
        assert_eq!(planes.s_codes[4], 0);
    }

    /// Independent scalar re-implementation used as the decomposition oracle.
    fn naive_planes(img: &GrayImage<f64>) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let offsets: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / 4.0;
                let (mut dr, mut dc) = (-th.sin(), th.cos());
                if (dr - dr.round()).abs() < 1e-9 {
                    dr = dr.round();
                }
                if (dc - dc.round()).abs() < 1e-9 {
                    dc = dc.round();
                }
                (dr, dc)
            })
            .collect();
        let lookup = |r: f64, c: f64| -> f64 {
            let (r0, c0) = (r.floor() as usize, c.floor() as usize);
            let (fr, fc) = (r - r0 as f64, c - c0 as f64);
            if fr == 0.0 && fc == 0.0 {
                return img.get(r0, c0);
            }
            let (r1, c1) = ((r0 + 1).min(img.height() - 1), (c0 + 1).min(img.width() - 1));
            let (p00, p01) = (img.get(r0, c0), img.get(r0, c1));
            let (p10, p11) = (img.get(r1, c0), img.get(r1, c1));
            p00 + fr * (p10 - p00) + fc * (p01 - p00) + fr * fc * (p11 - p10 - p01 + p00)
        };
        let mut mags = Vec::new();
        for r in 1..img.height() - 1 {
            for c in 1..img.width() - 1 {
                for &(dr, dc) in &offsets {
                    mags.push((lookup(r as f64 + dr, c as f64 + dc) - img.get(r, c)).abs());
                }
            }
        }
        let t_m = mags.iter().sum::<f64>() / mags.len() as f64;
        let t_c = img.pixels().iter().sum::<f64>() / img.pixels().len() as f64;
        let (mut s_out, mut m_out, mut c_out) = (Vec::new(), Vec::new(), Vec::new());
        for r in 1..img.height() - 1 {
            for c in 1..img.width() - 1 {
                let center = img.get(r, c);
                let s_bits: Vec<bool> =
                    offsets.iter().map(|&(dr, dc)| lookup(r as f64 + dr, c as f64 + dc) >= center).collect();
                let m_bits: Vec<bool> = offsets
                    .iter()
                    .map(|&(dr, dc)| (lookup(r as f64 + dr, c as f64 + dc) - center).abs() >= t_m)
                    .collect();
                s_out.push(riu2_code(&s_bits) as u8);
                m_out.push(riu2_code(&m_bits) as u8);
                c_out.push(u8::from(center >= t_c));
            }
        }
        (s_out, m_out, c_out)
    }

    #[test]
    fn decompose_matches_naive_oracle_on_random_images() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let h = rng.gen_range(3..9);
            let w = rng.gen_range(3..9);
            let px: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..255.0)).collect();
            let img = GrayImage::new(h, w, px).unwrap();
            let planes = clbp_decompose(&img, &ClbpParams::default()).unwrap();
            let (s, m, c) = naive_planes(&img);
            assert_eq!(planes.s_codes, s);
            assert_eq!(planes.m_codes, m);
            assert_eq!(planes.c_bits, c);
        }
    }

    #[test]
    fn histogram_partitions_interior_pixels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let h = rng.gen_range(3..16);
            let w = rng.gen_range(3..16);
            let px: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..255.0)).collect();
            let img = GrayImage::new(h, w, px).unwrap();
            let planes = clbp_decompose(&img, &ClbpParams::default()).unwrap();
            let hist: FeatureVector<f64> = clbp_histogram(&planes);
            assert_eq!(hist.len(), CLBP_DIMS);
            let total: f64 = hist.values().iter().sum();
            assert_eq!(total, ((h - 2) * (w - 2)) as f64);
        }
    }

    #[test]
    fn constant_image_fills_single_bin() {
        let img = GrayImage::constant(5, 5, 77.0f64).unwrap();
        let planes = clbp_decompose(&img, &ClbpParams::default()).unwrap();
        let hist: FeatureVector<f64> = clbp_histogram(&planes);
        let nonzero = hist.values().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn extract_is_normalized_and_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let px: Vec<f64> = (0..CANON_HEIGHT * CANON_WIDTH).map(|_| rng.gen_range(0.0..255.0)).collect();
        let canon = CanonImage::new(GrayImage::new(CANON_HEIGHT, CANON_WIDTH, px).unwrap()).unwrap();
        let a = extract_clbp(&canon, &ClbpParams::default()).unwrap();
        let b = extract_clbp(&canon, &ClbpParams::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), CLBP_DIMS);
        let sum: f64 = a.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn feature_vector_csv_round_trip() {
        let fv = FeatureVector::new(vec![0.125f64, 3.5, 0.0]).unwrap();
        let row = fv.to_csv_row();
        let back: FeatureVector<f64> = FeatureVector::from_csv_row(&row).unwrap();
        assert_eq!(back, fv);
        assert!(FeatureVector::<f64>::new(vec![f64::INFINITY]).is_err());
    }
}
