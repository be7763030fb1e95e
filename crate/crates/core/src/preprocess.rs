//! Raw sensor mosaics to gamma-corrected grayscale views.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::lightfield::{to_u8, GrayImage, Image};
use crate::par;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("Bayer mosaic dimensions must be even and positive, got {width}x{height}")]
    OddDimensions { width: usize, height: usize },
    #[error("pixel data has {actual} samples, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("gamma must be positive and finite, got {0}")]
    Gamma(f64),
    #[error("unknown Bayer pattern {0:?} (expected RGGB, BGGR, GRBG or GBRG)")]
    Pattern(String),
    #[error("cannot compute gamma of an empty image")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Red = 0,
    Green = 1,
    Blue = 2,
}

/// Color layout of the top-left 2x2 cell of the mosaic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BayerPattern {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl BayerPattern {
    /// Color sampled at pixel `(x, y)`.
    #[inline]
    pub fn color_at(self, x: usize, y: usize) -> Channel {
        use Channel::*;
        let cell = match self {
            BayerPattern::Rggb => [[Red, Green], [Green, Blue]],
            BayerPattern::Bggr => [[Blue, Green], [Green, Red]],
            BayerPattern::Grbg => [[Green, Red], [Blue, Green]],
            BayerPattern::Gbrg => [[Green, Blue], [Red, Green]],
        };
        cell[y & 1][x & 1]
    }
}

impl FromStr for BayerPattern {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(Self::Rggb),
            "BGGR" => Ok(Self::Bggr),
            "GRBG" => Ok(Self::Grbg),
            "GBRG" => Ok(Self::Gbrg),
            _ => Err(PreprocessError::Pattern(s.to_owned())),
        }
    }
}

impl fmt::Display for BayerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BayerPattern::Rggb => "RGGB",
            BayerPattern::Bggr => "BGGR",
            BayerPattern::Grbg => "GRBG",
            BayerPattern::Gbrg => "GBRG",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BayerMosaic {
    raw: GrayImage,
    pattern: BayerPattern,
}

impl BayerMosaic {
    pub fn new(raw: GrayImage, pattern: BayerPattern) -> Result<Self, PreprocessError> {
        let (width, height) = (raw.width(), raw.height());
        if width % 2 != 0 || height % 2 != 0 {
            return Err(PreprocessError::OddDimensions { width, height });
        }
        Ok(Self { raw, pattern })
    }

    pub fn width(&self) -> usize {
        self.raw.width()
    }

    pub fn height(&self) -> usize {
        self.raw.height()
    }

    pub fn pattern(&self) -> BayerPattern {
        self.pattern
    }

    pub fn raw(&self) -> &GrayImage {
        &self.raw
    }

    pub fn into_raw(self) -> GrayImage {
        self.raw
    }
}

/// Interleaved 8-bit RGB.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PreprocessError> {
        if data.len() != 3 * width * height {
            return Err(PreprocessError::DataLength {
                expected: 3 * width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Images whose samples can be treated as a flat run of 8-bit intensities.
pub trait Intensities: Sized {
    fn samples(&self) -> &[u8];
    fn with_samples(&self, samples: Vec<u8>) -> Self;
}

impl Intensities for GrayImage {
    fn samples(&self) -> &[u8] {
        self.data()
    }

    fn with_samples(&self, samples: Vec<u8>) -> Self {
        Image::new(self.width(), self.height(), samples).expect("same shape")
    }
}

impl Intensities for RgbImage {
    fn samples(&self) -> &[u8] {
        &self.data
    }

    fn with_samples(&self, samples: Vec<u8>) -> Self {
        RgbImage::new(self.width, self.height, samples).expect("same shape")
    }
}

/// Mirror without repeating the edge sample. Keeps the 2x2 color phase intact.
#[inline]
fn reflect101(i: i64, n: usize) -> usize {
    let n = n as i64;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Bilinear demosaicing.
///
/// Each missing channel is the mean of the same-colored samples in the 3x3
/// neighborhood (two or four of them, depending on the site). Borders are
/// mirrored.
pub fn debayer(mosaic: &BayerMosaic) -> RgbImage {
    let (w, h) = (mosaic.width(), mosaic.height());
    let raw = &mosaic.raw;
    let pattern = mosaic.pattern;
    let mut data = vec![0u8; 3 * w * h];
    par::for_each_row(&mut data, 3 * w, |y, row| {
        for x in 0..w {
            let native = pattern.color_at(x, y);
            let mut sum = [0u32; 3];
            let mut count = [0u32; 3];
            for dy in -1i64..=1 {
                let yy = reflect101(y as i64 + dy, h);
                for dx in -1i64..=1 {
                    let xx = reflect101(x as i64 + dx, w);
                    let c = pattern.color_at(xx, yy) as usize;
                    sum[c] += u32::from(raw.get(xx, yy));
                    count[c] += 1;
                }
            }
            for c in 0..3 {
                row[3 * x + c] = if c == native as usize {
                    raw.get(x, y)
                } else {
                    // round half up on non-negative means
                    ((2 * sum[c] + count[c]) / (2 * count[c])) as u8
                };
            }
        }
    });
    RgbImage {
        width: w,
        height: h,
        data,
    }
}

pub const GAMMA_MIN: f64 = 0.4;
pub const GAMMA_MAX: f64 = 2.5;

/// Gamma that maps the mean intensity ratio onto mid-gray:
/// `ln 0.5 / ln(clamp(mean / 255, 1/255, 254/255))`, clamped to
/// `[GAMMA_MIN, GAMMA_MAX]`.
pub fn gamma_for_mean(mean: f64) -> f64 {
    let ratio = (mean / 255.0).clamp(1.0 / 255.0, 254.0 / 255.0);
    (0.5f64.ln() / ratio.ln()).clamp(GAMMA_MIN, GAMMA_MAX)
}

pub fn auto_gamma<I: Intensities>(img: &I) -> Result<f64, PreprocessError> {
    auto_gamma_all(std::slice::from_ref(img))
}

/// One gamma for a whole set of images (a light field frame), from the mean
/// over every sample.
pub fn auto_gamma_all<I: Intensities>(images: &[I]) -> Result<f64, PreprocessError> {
    let (sum, count) = images.iter().fold((0u64, 0u64), |(s, n), img| {
        let samples = img.samples();
        (
            s + samples.iter().map(|&x| u64::from(x)).sum::<u64>(),
            n + samples.len() as u64,
        )
    });
    if count == 0 {
        return Err(PreprocessError::Empty);
    }
    Ok(gamma_for_mean(sum as f64 / count as f64))
}

/// `out = 255 · (in / 255)^gamma`, rounded half away from zero.
pub fn apply_gamma<I: Intensities>(img: &I, gamma: f64) -> Result<I, PreprocessError> {
    let lut = gamma_lut(gamma)?;
    Ok(img.with_samples(img.samples().iter().map(|&x| lut[x as usize]).collect()))
}

pub fn gamma_lut(gamma: f64) -> Result<[u8; 256], PreprocessError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(PreprocessError::Gamma(gamma));
    }
    let mut lut = [0u8; 256];
    for (i, out) in lut.iter_mut().enumerate() {
        *out = to_u8(255.0 * (i as f64 / 255.0).powf(gamma));
    }
    Ok(lut)
}

/// BT.601 luma.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| {
            to_u8(0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        })
        .collect();
    Image::new(img.width, img.height, data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PATTERNS: [BayerPattern; 4] = [
        BayerPattern::Rggb,
        BayerPattern::Bggr,
        BayerPattern::Grbg,
        BayerPattern::Gbrg,
    ];

    fn mosaic(w: usize, h: usize, data: Vec<u8>, p: BayerPattern) -> BayerMosaic {
        BayerMosaic::new(Image::new(w, h, data).unwrap(), p).unwrap()
    }

    #[test]
    fn constant_mosaic_debayers_to_constant() {
        for p in PATTERNS {
            let rgb = debayer(&mosaic(6, 4, vec![77; 24], p));
            assert!(rgb.data().iter().all(|&c| c == 77));
        }
    }

    #[test]
    fn constant_red_scene() {
        let m = Image::from_fn(8, 8, |x, y| if x % 2 == 0 && y % 2 == 0 { 200 } else { 0 });
        let rgb = debayer(&BayerMosaic::new(m, BayerPattern::Rggb).unwrap());
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(rgb.pixel(x, y)[0], 200, "R at ({x},{y})");
            }
        }
        assert_eq!(rgb.pixel(3, 2)[1], 0);
    }

    #[test]
    fn minimal_cell_with_mirrored_border() {
        let rgb = debayer(&mosaic(2, 2, vec![100, 50, 50, 20], BayerPattern::Rggb));
        assert_eq!(rgb.pixel(0, 0), [100, 50, 20]);
        assert_eq!(rgb.pixel(1, 1), [100, 50, 20]);
    }

    #[test]
    fn odd_mosaic_rejected() {
        assert_eq!(
            BayerMosaic::new(GrayImage::filled(3, 2, 0), BayerPattern::Rggb),
            Err(PreprocessError::OddDimensions {
                width: 3,
                height: 2
            })
        );
    }

    #[test]
    fn gamma_examples() {
        // all black: ratio clamps to 1/255, ln 0.5 / ln(1/255) ≈ 0.125 → lower bound
        let black = GrayImage::filled(4, 4, 0);
        assert_eq!(auto_gamma(&black).unwrap(), GAMMA_MIN);
        assert!((gamma_for_mean(127.5) - 1.0).abs() < 1e-12);
        assert!((gamma_for_mean(0.25 * 255.0) - 0.5).abs() < 1e-12);
        assert_eq!(gamma_for_mean(255.0), GAMMA_MAX);

        let img = Image::new(3, 1, vec![0u8, 64, 255]).unwrap();
        assert_eq!(apply_gamma(&img, 0.5).unwrap().data(), &[0, 128, 255]);
        assert_eq!(apply_gamma(&img, 1.0).unwrap(), img);
        assert_eq!(apply_gamma(&img, 0.0), Err(PreprocessError::Gamma(0.0)));
        assert!(apply_gamma(&img, -1.0).is_err());
    }

    #[test]
    fn grayscale_weights() {
        let rgb = RgbImage::new(3, 1, vec![255, 0, 0, 0, 255, 0, 9, 9, 9]).unwrap();
        assert_eq!(to_grayscale(&rgb).data(), &[76, 150, 9]);
        for c in 0..=255u8 {
            let px = RgbImage::new(1, 1, vec![c, c, c]).unwrap();
            assert_eq!(to_grayscale(&px).data(), &[c]);
        }
    }

    #[test]
    fn gamma_round_trip_in_expanding_range() {
        // 8-bit storage keeps the round trip within one level up to g ≈ 1.25.
        for i in 0..=15 {
            let g = 0.5 + 0.05 * i as f64;
            let all = Image::new(256, 1, (0..=255u8).collect()).unwrap();
            let back = apply_gamma(&apply_gamma(&all, g).unwrap(), 1.0 / g).unwrap();
            for (a, b) in all.data().iter().zip(back.data()) {
                assert!((*a as i32 - *b as i32).abs() <= 1, "g={g} x={a} -> {b}");
            }
        }
    }

    #[test]
    fn pattern_parse() {
        assert_eq!("gbrg".parse::<BayerPattern>().unwrap(), BayerPattern::Gbrg);
        assert!("RGBG".parse::<BayerPattern>().is_err());
        assert_eq!(BayerPattern::Grbg.to_string(), "GRBG");
    }

    proptest! {
        #[test]
        fn native_sites_pass_through(data in proptest::collection::vec(any::<u8>(), 48), p in 0usize..4) {
            let m = mosaic(8, 6, data, PATTERNS[p]);
            let rgb = debayer(&m);
            for y in 0..6 {
                for x in 0..8 {
                    let c = PATTERNS[p].color_at(x, y) as usize;
                    prop_assert_eq!(rgb.pixel(x, y)[c], m.raw().get(x, y));
                }
            }
        }

        #[test]
        fn gamma_is_monotone(g in 0.05f64..8.0) {
            let lut = gamma_lut(g).unwrap();
            prop_assert!(lut.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn auto_gamma_in_range(data in proptest::collection::vec(any::<u8>(), 1..64)) {
            let n = data.len();
            let g = auto_gamma(&Image::new(n, 1, data).unwrap()).unwrap();
            prop_assert!((GAMMA_MIN..=GAMMA_MAX).contains(&g));
        }
    }
}
