//! Multi-view matching cost.
//!
//! For a reference pixel and an integer disparity hypothesis, every other view
//! is probed at the corresponding position and the Hamming distances between
//! census codewords are summed. Views whose correspondence leaves the image do
//! not contribute; the partial sum is rescaled to the full view count so that
//! border pixels are not biased toward low costs. Hypotheses with fewer than
//! [`MIN_VALID_VIEWS`] contributing views, and hypotheses outside a pixel's
//! search bounds, hold the fill value `c_max`.

use thiserror::Error;

use crate::census::{census_transform, CensusError, CensusField};
use crate::lightfield::{DisparityMap, Image, LightField, ViewIndex};
use crate::par;
use crate::rectify::ValidityMask;
use crate::sgm::wta;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("no views to aggregate")]
    NoViews,
    #[error("census fields differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("census fields use different window radii")]
    RadiusMismatch,
    #[error("light field needs {expected} census fields, got {actual}")]
    FieldCount { expected: usize, actual: usize },
    #[error("cross-view disparity needs a grid with at least 2 rows and 2 columns, got {rows}x{cols}")]
    DegenerateGrid { rows: usize, cols: usize },
    #[error("disparity range [{0}, {1}] is empty")]
    Range(i32, i32),
    #[error("search bounds are {0}x{1}, cost volume is {2}x{3}")]
    BoundsSize(usize, usize, usize, usize),
    #[error(transparent)]
    Census(#[from] CensusError),
}

/// Minimum number of in-bounds views for a hypothesis to get a real cost
/// (capped by the number of views aggregated).
pub const MIN_VALID_VIEWS: usize = 4;

/// Threshold used by the coarse pass. Its four views lose one per axis near
/// the borders at large disparities, so requiring all four would leave the
/// true hypothesis unscored there.
pub const COARSE_MIN_VALID_VIEWS: usize = 2;

pub const DEFAULT_LAMBDA: u32 = 2;
pub const DEFAULT_BOUND_WINDOW: usize = 5;

/// Inclusive range of integer disparity hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DisparityRange {
    min: i32,
    max: i32,
}

impl DisparityRange {
    pub fn new(min: i32, max: i32) -> Result<Self, CostError> {
        if min > max {
            return Err(CostError::Range(min, max));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.max
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn clamp(&self, d: i64) -> i32 {
        d.clamp(i64::from(self.min), i64::from(self.max)) as i32
    }
}

/// Census codewords for every view of a light field, plus optional per-view
/// validity masks from rectification.
#[derive(Clone, Debug)]
pub struct CensusLightField {
    rows: usize,
    cols: usize,
    reference: ViewIndex,
    fields: Vec<CensusField>,
    masks: Option<Vec<ValidityMask>>,
}

impl CensusLightField {
    pub fn new(
        rows: usize,
        cols: usize,
        reference: ViewIndex,
        fields: Vec<CensusField>,
    ) -> Result<Self, CostError> {
        if fields.len() != rows * cols || fields.is_empty() {
            return Err(CostError::FieldCount {
                expected: rows * cols,
                actual: fields.len(),
            });
        }
        let (w, h, r) = (fields[0].width(), fields[0].height(), fields[0].radius());
        for f in &fields {
            if f.width() != w || f.height() != h {
                return Err(CostError::DimensionMismatch(w, h, f.width(), f.height()));
            }
            if f.radius() != r {
                return Err(CostError::RadiusMismatch);
            }
        }
        Ok(Self {
            rows,
            cols,
            reference,
            fields,
            masks: None,
        })
    }

    pub fn from_light_field(lf: &LightField, radius: usize) -> Result<Self, CostError> {
        let fields = par::map_slice(lf.views(), |view| census_transform(view, radius))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(lf.rows(), lf.cols(), lf.reference(), fields)
    }

    /// Attaches rectification masks. Invalid reference pixels get no cost;
    /// invalid pixels in other views count as out of bounds.
    pub fn with_masks(mut self, masks: Vec<ValidityMask>) -> Result<Self, CostError> {
        if masks.len() != self.fields.len() {
            return Err(CostError::FieldCount {
                expected: self.fields.len(),
                actual: masks.len(),
            });
        }
        for m in &masks {
            if m.width() != self.width() || m.height() != self.height() {
                return Err(CostError::DimensionMismatch(
                    self.width(),
                    self.height(),
                    m.width(),
                    m.height(),
                ));
            }
        }
        self.masks = Some(masks);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn reference(&self) -> ViewIndex {
        self.reference
    }

    pub fn width(&self) -> usize {
        self.fields[0].width()
    }

    pub fn height(&self) -> usize {
        self.fields[0].height()
    }

    pub fn bits(&self) -> u32 {
        self.fields[0].bits()
    }

    pub fn field(&self, index: ViewIndex) -> &CensusField {
        &self.fields[index.t * self.cols + index.s]
    }

    fn mask(&self, index: ViewIndex) -> Option<&ValidityMask> {
        self.masks
            .as_ref()
            .map(|m| &m[index.t * self.cols + index.s])
    }

    /// Every view except the reference, row-major.
    pub fn other_views(&self) -> Vec<ViewIndex> {
        (0..self.rows)
            .flat_map(|t| (0..self.cols).map(move |s| ViewIndex::new(s, t)))
            .filter(|&v| v != self.reference)
            .collect()
    }
}

/// Per-pixel cost for every hypothesis of a global disparity axis.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    range: DisparityRange,
    costs: Vec<u32>,
    valid_lo: Vec<i32>,
    valid_hi: Vec<i32>,
    c_max: u32,
    views: usize,
    evaluated: u64,
}

impl CostVolume {
    /// Wraps precomputed costs (pixel-major, hypotheses innermost). Every
    /// pixel is marked as evaluated over the whole range.
    pub fn from_costs(
        width: usize,
        height: usize,
        range: DisparityRange,
        costs: Vec<u32>,
        c_max: u32,
    ) -> Self {
        assert_eq!(costs.len(), width * height * range.len());
        assert!(costs.iter().all(|&c| c <= c_max), "costs exceed c_max");
        Self {
            width,
            height,
            range,
            costs,
            valid_lo: vec![range.min; width * height],
            valid_hi: vec![range.max; width * height],
            c_max,
            views: 0,
            evaluated: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn range(&self) -> DisparityRange {
        self.range
    }

    pub fn c_max(&self) -> u32 {
        self.c_max
    }

    pub fn costs(&self) -> &[u32] {
        &self.costs
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> &[u32] {
        let n = self.range.len();
        let p = v * self.width + u;
        &self.costs[p * n..(p + 1) * n]
    }

    #[inline]
    pub fn cost(&self, u: usize, v: usize, d: i32) -> u32 {
        self.pixel(u, v)[(d - self.range.min) as usize]
    }

    pub fn valid_bounds(&self, u: usize, v: usize) -> (i32, i32) {
        let p = v * self.width + u;
        (self.valid_lo[p], self.valid_hi[p])
    }

    /// `(pixel, view, hypothesis)` triples probed while building the volume.
    pub fn evaluated(&self) -> u64 {
        self.evaluated
    }

    /// Triples an exhaustive search over the global range would probe.
    pub fn exhaustive(&self) -> u64 {
        (self.width * self.height * self.views * self.range.len()) as u64
    }
}

/// Per-pixel inclusive disparity search bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchBounds {
    width: usize,
    height: usize,
    lo: Vec<i32>,
    hi: Vec<i32>,
    lambda: u32,
}

impl SearchBounds {
    pub fn full(width: usize, height: usize, range: DisparityRange) -> Self {
        Self {
            width,
            height,
            lo: vec![range.min; width * height],
            hi: vec![range.max; width * height],
            lambda: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> (i32, i32) {
        let p = v * self.width + u;
        (self.lo[p], self.hi[p])
    }

    /// Total number of hypotheses inside the bounds, over all pixels.
    pub fn hypothesis_count(&self) -> u64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&lo, &hi)| (hi - lo + 1) as u64)
            .sum()
    }
}

fn check_pair(a: &CensusField, b: &CensusField) -> Result<(), CostError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(CostError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    if a.radius() != b.radius() {
        return Err(CostError::RadiusMismatch);
    }
    Ok(())
}

/// Hamming cost between the reference and one view at hypothesis `d`.
/// `offset` is `(ŝ − s, t̂ − t)`. `None` where the correspondence is outside
/// the view.
pub fn pairwise_cost(
    reference: &CensusField,
    view: &CensusField,
    offset: (i64, i64),
    d: i32,
) -> Result<Image<Option<u32>>, CostError> {
    check_pair(reference, view)?;
    let (w, h) = (reference.width() as i64, reference.height() as i64);
    let d = i64::from(d);
    Ok(Image::from_fn(reference.width(), reference.height(), |u, v| {
        let x = u as i64 + offset.0 * d;
        let y = v as i64 + offset.1 * d;
        (x >= 0 && y >= 0 && x < w && y < h).then(|| {
            (reference.code(u, v) ^ view.code(x as usize, y as usize)).count_ones()
        })
    }))
}

struct Probe<'a> {
    ds: i64,
    dt: i64,
    codes: &'a [u64],
    mask: Option<&'a [bool]>,
}

/// Builds the aggregated cost volume over `views` (the reference is skipped
/// if present). Without `bounds`, every pixel searches the whole range.
pub fn aggregate_cost(
    field: &CensusLightField,
    views: &[ViewIndex],
    range: DisparityRange,
    bounds: Option<&SearchBounds>,
) -> Result<CostVolume, CostError> {
    aggregate_cost_with_threshold(field, views, range, bounds, MIN_VALID_VIEWS)
}

/// [`aggregate_cost`] with a custom valid-view threshold (capped by the
/// number of views).
pub fn aggregate_cost_with_threshold(
    field: &CensusLightField,
    views: &[ViewIndex],
    range: DisparityRange,
    bounds: Option<&SearchBounds>,
    min_valid_views: usize,
) -> Result<CostVolume, CostError> {
    let reference = field.reference();
    let views: Vec<ViewIndex> = views.iter().copied().filter(|&v| v != reference).collect();
    if views.is_empty() {
        return Err(CostError::NoViews);
    }
    let (w, h) = (field.width(), field.height());
    if let Some(b) = bounds {
        if b.width != w || b.height != h {
            return Err(CostError::BoundsSize(b.width, b.height, w, h));
        }
    }
    let total = views.len();
    let min_valid = min_valid_views.clamp(1, total);
    let c_max = field.bits() * total as u32 + 1;
    let nd = range.len();

    let ref_codes = field.field(reference).codes();
    let ref_mask = field.mask(reference).map(|m| m.data());
    let probes: Vec<Probe> = views
        .iter()
        .map(|&view| {
            let (ds, dt) = view.offset_from(reference);
            Probe {
                ds,
                dt,
                codes: field.field(view).codes(),
                mask: field.mask(view).map(|m| m.data()),
            }
        })
        .collect();

    let (valid_lo, valid_hi): (Vec<i32>, Vec<i32>) = match bounds {
        Some(b) => (b.lo.clone(), b.hi.clone()),
        None => (vec![range.min; w * h], vec![range.max; w * h]),
    };
    let valid_lo: Vec<i32> = valid_lo.iter().map(|&d| range.clamp(d.into())).collect();
    let valid_hi: Vec<i32> = valid_hi.iter().map(|&d| range.clamp(d.into())).collect();

    let mut costs = vec![c_max; w * h * nd];
    let (wi, hi) = (w as i64, h as i64);
    let evaluated = par::for_each_row_sum(&mut costs, w * nd, |v, row| {
        let mut evaluated = 0u64;
        for u in 0..w {
            let p = v * w + u;
            if ref_mask.is_some_and(|m| !m[p]) {
                continue;
            }
            let rc = ref_codes[p];
            let out = &mut row[u * nd..(u + 1) * nd];
            for d in valid_lo[p]..=valid_hi[p] {
                let d64 = i64::from(d);
                let mut sum = 0u32;
                let mut valid = 0usize;
                for probe in &probes {
                    let x = u as i64 + probe.ds * d64;
                    let y = v as i64 + probe.dt * d64;
                    if x < 0 || y < 0 || x >= wi || y >= hi {
                        continue;
                    }
                    let q = y as usize * w + x as usize;
                    if probe.mask.is_some_and(|m| !m[q]) {
                        continue;
                    }
                    sum += (rc ^ probe.codes[q]).count_ones();
                    valid += 1;
                }
                evaluated += total as u64;
                if valid >= min_valid {
                    let scaled = (2 * u64::from(sum) * total as u64 + valid as u64)
                        / (2 * valid as u64);
                    out[(d - range.min) as usize] = scaled as u32;
                }
            }
        }
        evaluated
    });

    Ok(CostVolume {
        width: w,
        height: h,
        range,
        costs,
        valid_lo,
        valid_hi,
        c_max,
        views: total,
        evaluated,
    })
}

/// How the coarse pass picks its views on the reference row and column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CrossMode {
    /// Farthest view on each side of the reference.
    #[default]
    Extreme,
    /// Nearest view on each side of the reference.
    Adjacent,
}

fn axis_picks(n: usize, reference: usize, mode: CrossMode) -> Vec<usize> {
    let below: Vec<usize> = (0..reference).collect();
    let above: Vec<usize> = (reference + 1..n).collect();
    let pick_one = |side: &[usize], toward_ref_last: bool| -> Option<usize> {
        match (mode, toward_ref_last) {
            (CrossMode::Extreme, true) => side.first().copied(),
            (CrossMode::Extreme, false) => side.last().copied(),
            (CrossMode::Adjacent, true) => side.last().copied(),
            (CrossMode::Adjacent, false) => side.first().copied(),
        }
    };
    match (below.is_empty(), above.is_empty()) {
        (false, false) => vec![pick_one(&below, true).unwrap(), pick_one(&above, false).unwrap()],
        _ => {
            // reference sits at one end: take two views from the other side
            let side = if below.is_empty() { above } else { below };
            let mut ordered = side;
            ordered.sort_by_key(|&i| std::cmp::Reverse(i.abs_diff(reference)));
            if mode == CrossMode::Adjacent {
                ordered.reverse();
            }
            ordered.truncate(2);
            ordered.sort_unstable();
            ordered
        }
    }
}

/// Views used by the coarse pass: picks along the reference row, then along
/// the reference column.
pub fn cross_views(
    rows: usize,
    cols: usize,
    reference: ViewIndex,
    mode: CrossMode,
) -> Result<Vec<ViewIndex>, CostError> {
    if rows < 2 || cols < 2 {
        return Err(CostError::DegenerateGrid { rows, cols });
    }
    let mut views: Vec<ViewIndex> = axis_picks(cols, reference.s, mode)
        .into_iter()
        .map(|s| ViewIndex::new(s, reference.t))
        .collect();
    views.extend(
        axis_picks(rows, reference.t, mode)
            .into_iter()
            .map(|t| ViewIndex::new(reference.s, t)),
    );
    Ok(views)
}

/// Initial disparity from the cross-lying views alone (no smoothing).
/// Returns the map and the number of probed `(pixel, view, hypothesis)` triples.
pub fn coarse_disparity(
    field: &CensusLightField,
    range: DisparityRange,
    mode: CrossMode,
) -> Result<(DisparityMap, u64), CostError> {
    let views = cross_views(field.rows(), field.cols(), field.reference(), mode)?;
    let volume = aggregate_cost_with_threshold(field, &views, range, None, COARSE_MIN_VALID_VIEWS)?;
    Ok((wta(&volume), volume.evaluated()))
}

/// Dilates the coarse map into per-pixel search bounds: the min and max of
/// the valid coarse values in a `window`×`window` neighborhood, widened by
/// `lambda` and clamped to `range`. Neighborhoods with no valid value get the
/// full range.
pub fn disparity_bounds(
    coarse: &DisparityMap,
    range: DisparityRange,
    lambda: u32,
    window: usize,
) -> SearchBounds {
    let (w, h) = (coarse.width(), coarse.height());
    let r = (window.max(1) / 2) as i64;
    let lambda64 = i64::from(lambda);
    let mut lo = vec![range.min; w * h];
    let mut hi = vec![range.max; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut min = f32::INFINITY;
            let mut max = f32::NEG_INFINITY;
            for y in (v as i64 - r).max(0)..=(v as i64 + r).min(h as i64 - 1) {
                for x in (u as i64 - r).max(0)..=(u as i64 + r).min(w as i64 - 1) {
                    let d = coarse.get(x as usize, y as usize);
                    if d.is_nan() {
                        continue;
                    }
                    min = min.min(d);
                    max = max.max(d);
                }
            }
            if min.is_finite() {
                let p = v * w + u;
                lo[p] = range.clamp(min.floor() as i64 - lambda64);
                hi[p] = range.clamp(max.ceil() as i64 + lambda64);
            }
        }
    }
    SearchBounds {
        width: w,
        height: h,
        lo,
        hi,
        lambda,
    }
}
