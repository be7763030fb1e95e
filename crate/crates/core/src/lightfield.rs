//! Images, the view grid, and the disparity correspondence rule.
//!
//! Conventions used throughout the crate:
//! * `s` is the horizontal view index (column of the grid) and pairs with the
//!   pixel column `u`; `t` is the vertical view index and pairs with the pixel
//!   row `v`. Both are zero-based.
//! * `u` grows to the right, `v` grows downward.
//! * Views are stored row-major over `(t, s)`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LightFieldError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("image data has {actual} samples, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("light field needs {expected} views for a {rows}x{cols} grid, got {actual}")]
    ViewCount {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("view {index} is {width}x{height}, expected {expected_width}x{expected_height}")]
    ViewSize {
        index: usize,
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
    #[error("reference view ({s}, {t}) lies outside the {cols}x{rows} grid")]
    Reference {
        s: usize,
        t: usize,
        rows: usize,
        cols: usize,
    },
    #[error("camera geometry needs positive focal length and baseline")]
    Geometry,
}

/// Row-major single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// 8-bit intensity view.
pub type GrayImage = Image<u8>;
/// Per-pixel disparity in view-offset units, NaN where invalid.
pub type DisparityMap = Image<f32>;
/// Per-pixel metric depth in meters, NaN where invalid.
pub type DepthMap = Image<f32>;

impl<T> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self, LightFieldError> {
        if width == 0 || height == 0 {
            return Err(LightFieldError::EmptyImage { width, height });
        }
        if data.len() != width * height {
            return Err(LightFieldError::DataLength {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn contains(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Copy> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    /// Pixel read with coordinates clamped into the image.
    #[inline]
    pub fn get_clamped(&self, u: i64, v: i64) -> T {
        let u = u.clamp(0, self.width as i64 - 1) as usize;
        let v = v.clamp(0, self.height as i64 - 1) as usize;
        self.get(u, v)
    }
}

/// Position of a view in the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ViewIndex {
    /// Horizontal (column) index.
    pub s: usize,
    /// Vertical (row) index.
    pub t: usize,
}

impl ViewIndex {
    pub const fn new(s: usize, t: usize) -> Self {
        Self { s, t }
    }

    /// Signed `(ŝ − s, t̂ − t)` offset of this view relative to `reference`.
    #[inline]
    pub fn offset_from(self, reference: ViewIndex) -> (i64, i64) {
        (
            reference.s as i64 - self.s as i64,
            reference.t as i64 - self.t as i64,
        )
    }
}

/// An n×m grid of equally sized grayscale views with a designated reference view.
#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    rows: usize,
    cols: usize,
    views: Vec<GrayImage>,
    reference: ViewIndex,
}

impl LightField {
    pub const DEFAULT_GRID: usize = 4;
    pub const DEFAULT_REFERENCE: ViewIndex = ViewIndex::new(1, 1);

    /// `views` are ordered row-major over `(t, s)`.
    pub fn new(
        rows: usize,
        cols: usize,
        views: Vec<GrayImage>,
        reference: ViewIndex,
    ) -> Result<Self, LightFieldError> {
        if views.len() != rows * cols || views.is_empty() {
            return Err(LightFieldError::ViewCount {
                rows,
                cols,
                expected: rows * cols,
                actual: views.len(),
            });
        }
        if reference.s >= cols || reference.t >= rows {
            return Err(LightFieldError::Reference {
                s: reference.s,
                t: reference.t,
                rows,
                cols,
            });
        }
        let (w, h) = (views[0].width(), views[0].height());
        for (index, view) in views.iter().enumerate() {
            if view.width() != w || view.height() != h {
                return Err(LightFieldError::ViewSize {
                    index,
                    width: view.width(),
                    height: view.height(),
                    expected_width: w,
                    expected_height: h,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            views,
            reference,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn width(&self) -> usize {
        self.views[0].width()
    }

    pub fn height(&self) -> usize {
        self.views[0].height()
    }

    pub fn reference(&self) -> ViewIndex {
        self.reference
    }

    pub fn views(&self) -> &[GrayImage] {
        &self.views
    }

    pub fn into_views(self) -> Vec<GrayImage> {
        self.views
    }

    pub fn linear_index(&self, index: ViewIndex) -> usize {
        index.t * self.cols + index.s
    }

    pub fn view(&self, index: ViewIndex) -> &GrayImage {
        &self.views[self.linear_index(index)]
    }

    pub fn reference_view(&self) -> &GrayImage {
        self.view(self.reference)
    }

    /// All grid positions, row-major.
    pub fn indices(&self) -> impl Iterator<Item = ViewIndex> + '_ {
        (0..self.rows).flat_map(move |t| (0..self.cols).map(move |s| ViewIndex::new(s, t)))
    }
}

/// Focal length and lens spacing used for disparity-to-depth conversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraGeometry {
    pub focal_px: f64,
    /// Distance between two adjacent views on one axis, meters.
    pub baseline_m: f64,
    /// View intervals between the two extreme views on one axis.
    pub axis_span: u32,
}

impl CameraGeometry {
    pub fn new(focal_px: f64, baseline_m: f64, axis_span: u32) -> Result<Self, LightFieldError> {
        if !(focal_px > 0.0 && baseline_m > 0.0 && focal_px.is_finite() && baseline_m.is_finite())
        {
            return Err(LightFieldError::Geometry);
        }
        Ok(Self {
            focal_px,
            baseline_m,
            axis_span,
        })
    }

    /// Geometry for an `rows`×`cols` grid, `axis_span = max(rows, cols) − 1`.
    pub fn for_grid(
        focal_px: f64,
        baseline_m: f64,
        rows: usize,
        cols: usize,
    ) -> Result<Self, LightFieldError> {
        Self::new(focal_px, baseline_m, (rows.max(cols) - 1) as u32)
    }

    /// Baseline between the two extreme views on one axis.
    pub fn max_baseline_m(&self) -> f64 {
        self.baseline_m * f64::from(self.axis_span)
    }
}

/// Position in view `view` that corresponds to reference pixel `(u, v)` under
/// disparity `d`: `(u + (ŝ − s)·d, v + (t̂ − t)·d)`.
#[inline]
pub fn correspond(u: f64, v: f64, reference: ViewIndex, view: ViewIndex, d: f64) -> (f64, f64) {
    let (ds, dt) = view.offset_from(reference);
    (u + ds as f64 * d, v + dt as f64 * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplePolicy {
    Nearest,
    Bilinear,
}

/// Reads `img` at a real-valued position. Returns `None` outside the image.
///
/// Nearest rounds half away from zero. Bilinear needs the whole footprint in
/// bounds; at integral coordinates the footprint collapses to the pixel itself.
pub fn sample<T: Copy + Into<f32>>(
    img: &Image<T>,
    x: f32,
    y: f32,
    policy: SamplePolicy,
) -> Option<f32> {
    if !x.is_finite() || !y.is_finite() {
        return None;
    }
    match policy {
        SamplePolicy::Nearest => {
            let (u, v) = (x.round() as i64, y.round() as i64);
            img.contains(u, v)
                .then(|| img.get(u as usize, v as usize).into())
        }
        SamplePolicy::Bilinear => {
            let max_x = (img.width() - 1) as f32;
            let max_y = (img.height() - 1) as f32;
            if x < 0.0 || y < 0.0 || x > max_x || y > max_y {
                return None;
            }
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (u0, v0) = (x0 as usize, y0 as usize);
            let u1 = (u0 + 1).min(img.width() - 1);
            let v1 = (v0 + 1).min(img.height() - 1);
            let p00: f32 = img.get(u0, v0).into();
            let p10: f32 = img.get(u1, v0).into();
            let p01: f32 = img.get(u0, v1).into();
            let p11: f32 = img.get(u1, v1).into();
            let top = p00 * (1.0 - fx) + p10 * fx;
            let bottom = p01 * (1.0 - fx) + p11 * fx;
            Some(top * (1.0 - fy) + bottom * fy)
        }
    }
}

/// Rounds half away from zero and saturates to `u8`.
#[inline]
pub(crate) fn to_u8(x: f64) -> u8 {
    x.round().clamp(0.0, 255.0) as u8
}
