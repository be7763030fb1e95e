//! Census transform and Hamming distance.
//!
//! Each pixel becomes a bit string with one bit per window neighbor: `1` when
//! the center is strictly brighter than the neighbor, `0` otherwise. Neighbors
//! are visited row-major over the window, skipping the center, and the first
//! neighbor lands in the most significant bit. Borders replicate edge pixels.

use thiserror::Error;

use crate::lightfield::Image;
use crate::par;

#[derive(Debug, Error, PartialEq)]
pub enum CensusError {
    #[error("image {width}x{height} is smaller than the {size}x{size} census window")]
    TooSmall {
        width: usize,
        height: usize,
        size: usize,
    },
    #[error("census window radius must be 1, 2 or 3, got {0}")]
    Radius(usize),
    #[error("codeword widths differ ({0} vs {1} bits)")]
    WidthMismatch(u32, u32),
}

pub const DEFAULT_RADIUS: usize = 1;
pub const MAX_RADIUS: usize = 3;

/// Bits per codeword for a square window of radius `r`.
pub const fn code_bits(radius: usize) -> u32 {
    ((2 * radius + 1) * (2 * radius + 1) - 1) as u32
}

/// A census bit string together with its width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Codeword {
    pub bits: u64,
    pub width: u32,
}

impl Codeword {
    pub fn new(bits: u64, width: u32) -> Self {
        debug_assert!(width <= 64);
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        Self {
            bits: bits & mask,
            width,
        }
    }
}

/// Number of differing bits.
pub fn hamming(a: Codeword, b: Codeword) -> Result<u32, CensusError> {
    if a.width != b.width {
        return Err(CensusError::WidthMismatch(a.width, b.width));
    }
    Ok((a.bits ^ b.bits).count_ones())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CensusField {
    width: usize,
    height: usize,
    radius: usize,
    codes: Vec<u64>,
}

impl CensusField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn bits(&self) -> u32 {
        code_bits(self.radius)
    }

    /// Raw codewords, row-major.
    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    #[inline]
    pub fn code(&self, u: usize, v: usize) -> u64 {
        self.codes[v * self.width + u]
    }

    pub fn codeword(&self, u: usize, v: usize) -> Codeword {
        Codeword::new(self.code(u, v), self.bits())
    }
}

pub fn census_transform<T>(img: &Image<T>, radius: usize) -> Result<CensusField, CensusError>
where
    T: Copy + PartialOrd + Send + Sync,
{
    if radius == 0 || radius > MAX_RADIUS {
        return Err(CensusError::Radius(radius));
    }
    let (w, h) = (img.width(), img.height());
    let size = 2 * radius + 1;
    if w < size || h < size {
        return Err(CensusError::TooSmall {
            width: w,
            height: h,
            size,
        });
    }
    let r = radius as i64;
    let mut codes = vec![0u64; w * h];
    par::for_each_row(&mut codes, w, |v, row| {
        for (u, code) in row.iter_mut().enumerate() {
            let center = img.get(u, v);
            let mut bits = 0u64;
            for j in -r..=r {
                for i in -r..=r {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let neighbor = img.get_clamped(u as i64 + i, v as i64 + j);
                    bits = (bits << 1) | u64::from(center > neighbor);
                }
            }
            *code = bits;
        }
    });
    Ok(CensusField {
        width: w,
        height: h,
        radius,
        codes,
    })
}
