//! Rectification by per-view remap tables.
//!
//! Tables come from an offline calibration; this module only applies them.
//! A table entry of `(-1, -1)` marks a rectified pixel with no source.

use thiserror::Error;

use crate::lightfield::{sample, to_u8, GrayImage, Image, SamplePolicy};
use crate::par;

#[derive(Debug, Error, PartialEq)]
pub enum RectifyError {
    #[error("remap table has {count} views, index {index} requested")]
    ViewIndex { index: usize, count: usize },
    #[error("remap arrays hold {actual} entries, expected {expected}")]
    TableSize { expected: usize, actual: usize },
    #[error("remap table dimensions must be positive")]
    Empty,
}

pub const INVALID_COORD: f32 = -1.0;

/// Source coordinates for every rectified pixel of every view.
#[derive(Clone, Debug, PartialEq)]
pub struct RemapTable {
    rows: usize,
    cols: usize,
    width: usize,
    height: usize,
    map_x: Vec<f32>,
    map_y: Vec<f32>,
}

impl RemapTable {
    /// `map_x` and `map_y` are view-major (views row-major over `(t, s)`),
    /// each view holding `width × height` entries.
    pub fn new(
        rows: usize,
        cols: usize,
        width: usize,
        height: usize,
        map_x: Vec<f32>,
        map_y: Vec<f32>,
    ) -> Result<Self, RectifyError> {
        if rows == 0 || cols == 0 || width == 0 || height == 0 {
            return Err(RectifyError::Empty);
        }
        let expected = rows * cols * width * height;
        for len in [map_x.len(), map_y.len()] {
            if len != expected {
                return Err(RectifyError::TableSize {
                    expected,
                    actual: len,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            width,
            height,
            map_x,
            map_y,
        })
    }

    /// Table mapping every rectified pixel to itself.
    pub fn identity(rows: usize, cols: usize, width: usize, height: usize) -> Self {
        Self::from_fn(rows, cols, width, height, |_, u, v| (u as f32, v as f32))
    }

    /// Builds a table from `f(view_index, u, v) -> (x, y)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        width: usize,
        height: usize,
        f: impl Fn(usize, usize, usize) -> (f32, f32),
    ) -> Self {
        let n = rows * cols * width * height;
        let mut map_x = Vec::with_capacity(n);
        let mut map_y = Vec::with_capacity(n);
        for view in 0..rows * cols {
            for v in 0..height {
                for u in 0..width {
                    let (x, y) = f(view, u, v);
                    map_x.push(x);
                    map_y.push(y);
                }
            }
        }
        Self::new(rows, cols, width, height, map_x, map_y).expect("consistent by construction")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn view_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn map_x(&self) -> &[f32] {
        &self.map_x
    }

    pub fn map_y(&self) -> &[f32] {
        &self.map_y
    }

    fn view_slices(&self, view: usize) -> (&[f32], &[f32]) {
        let n = self.width * self.height;
        (
            &self.map_x[view * n..(view + 1) * n],
            &self.map_y[view * n..(view + 1) * n],
        )
    }
}

pub fn identity_remap(width: usize, height: usize, rows: usize, cols: usize) -> RemapTable {
    RemapTable::identity(rows, cols, width, height)
}

/// Per-pixel validity of a rectified view.
pub type ValidityMask = Image<bool>;

/// Resamples `img` through the table entry for `view_index`.
///
/// Rectified pixels whose source is marked invalid or falls outside `img` are
/// zero and flagged `false` in the returned mask.
pub fn apply_remap(
    img: &GrayImage,
    table: &RemapTable,
    view_index: usize,
) -> Result<(GrayImage, ValidityMask), RectifyError> {
    if view_index >= table.view_count() {
        return Err(RectifyError::ViewIndex {
            index: view_index,
            count: table.view_count(),
        });
    }
    let (w, h) = (table.width, table.height);
    let (map_x, map_y) = table.view_slices(view_index);
    let mut out = vec![(0u8, false); w * h];
    par::for_each_row(&mut out, w, |v, row| {
        for (u, px) in row.iter_mut().enumerate() {
            let (x, y) = (map_x[v * w + u], map_y[v * w + u]);
            if x == INVALID_COORD && y == INVALID_COORD {
                continue;
            }
            if let Some(value) = sample(img, x, y, SamplePolicy::Bilinear) {
                *px = (to_u8(f64::from(value)), true);
            }
        }
    });
    let (pixels, valid): (Vec<u8>, Vec<bool>) = out.into_iter().unzip();
    Ok((
        Image::new(w, h, pixels).expect("table dims are positive"),
        Image::new(w, h, valid).expect("table dims are positive"),
    ))
}
