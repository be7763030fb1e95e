//! Semi-global path aggregation and winner-takes-all.
//!
//! Along a direction `r`, each pixel's aggregated cost is its own cost plus
//! the cheapest way to arrive from the predecessor `p − r`: same hypothesis
//! for free, a neighboring hypothesis for `p1`, any hypothesis for `p2`.
//! No per-step normalization is applied; accumulators are 64-bit.

use thiserror::Error;

use crate::cost::{CostVolume, DisparityRange};
use crate::lightfield::{DisparityMap, Image};
use crate::par;

#[derive(Debug, Error, PartialEq)]
pub enum SgmError {
    #[error("P2 ({p2}) must be at least P1 ({p1})")]
    Penalties { p1: u32, p2: u32 },
    #[error("direction (0, 0) has no predecessor")]
    ZeroDirection,
    #[error("at least one direction is required")]
    NoDirections,
    #[error("direction count must be 4 or 8, got {0}")]
    DirectionCount(usize),
}

pub type Direction = (i32, i32);

pub const DIRECTIONS_4: [Direction; 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
pub const DIRECTIONS_8: [Direction; 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

pub const DEFAULT_P1: u32 = 6;
pub const DEFAULT_P2: u32 = 96;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SgmParams {
    p1: u32,
    p2: u32,
    directions: Vec<Direction>,
}

impl SgmParams {
    pub fn new(p1: u32, p2: u32, directions: Vec<Direction>) -> Result<Self, SgmError> {
        if p2 < p1 {
            return Err(SgmError::Penalties { p1, p2 });
        }
        if directions.is_empty() {
            return Err(SgmError::NoDirections);
        }
        if directions.contains(&(0, 0)) {
            return Err(SgmError::ZeroDirection);
        }
        Ok(Self { p1, p2, directions })
    }

    /// Compass directions, 4 or 8 of them.
    pub fn with_count(p1: u32, p2: u32, count: usize) -> Result<Self, SgmError> {
        match count {
            4 => Self::new(p1, p2, DIRECTIONS_4.to_vec()),
            8 => Self::new(p1, p2, DIRECTIONS_8.to_vec()),
            n => Err(SgmError::DirectionCount(n)),
        }
    }

    pub fn p1(&self) -> u32 {
        self.p1
    }

    pub fn p2(&self) -> u32 {
        self.p2
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }
}

impl Default for SgmParams {
    fn default() -> Self {
        Self::with_count(DEFAULT_P1, DEFAULT_P2, 8).expect("valid defaults")
    }
}

/// 64-bit cost per pixel and hypothesis, laid out like [`CostVolume`].
#[derive(Clone, Debug, PartialEq)]
pub struct PathVolume {
    width: usize,
    height: usize,
    range: DisparityRange,
    costs: Vec<u64>,
}

impl PathVolume {
    fn zeros(width: usize, height: usize, range: DisparityRange) -> Self {
        Self {
            width,
            height,
            range,
            costs: vec![0; width * height * range.len()],
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

    pub fn costs(&self) -> &[u64] {
        &self.costs
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> &[u64] {
        let n = self.range.len();
        let p = v * self.width + u;
        &self.costs[p * n..(p + 1) * n]
    }
}

/// Pixel chains along `r`: each starts at a pixel whose predecessor is
/// outside the image and follows `p + r` until it leaves.
fn chains(width: usize, height: usize, r: Direction) -> Vec<Vec<usize>> {
    let (w, h) = (width as i64, height as i64);
    let (du, dv) = (i64::from(r.0), i64::from(r.1));
    let inside = |u: i64, v: i64| u >= 0 && v >= 0 && u < w && v < h;
    let mut out = Vec::new();
    for v in 0..h {
        for u in 0..w {
            if inside(u - du, v - dv) {
                continue;
            }
            let mut chain = Vec::new();
            let (mut x, mut y) = (u, v);
            while inside(x, y) {
                chain.push((y * w + x) as usize);
                x += du;
                y += dv;
            }
            out.push(chain);
        }
    }
    out
}

/// Runs one direction and hands every pixel's aggregated costs to `sink`.
fn run_direction(
    volume: &CostVolume,
    r: Direction,
    p1: u64,
    p2: u64,
    mut sink: impl FnMut(usize, &[u64]),
) {
    let nd = volume.range().len();
    let costs = volume.costs();
    let chains = chains(volume.width(), volume.height(), r);
    let results = par::map_slice(&chains, |chain| {
        let mut out = vec![0u64; chain.len() * nd];
        for (i, &p) in chain.iter().enumerate() {
            let c = &costs[p * nd..(p + 1) * nd];
            if i == 0 {
                for (o, &x) in out[..nd].iter_mut().zip(c) {
                    *o = u64::from(x);
                }
                continue;
            }
            let (done, rest) = out.split_at_mut(i * nd);
            let prev = &done[(i - 1) * nd..];
            let cur = &mut rest[..nd];
            let prev_min = prev.iter().copied().min().unwrap_or(0);
            for k in 0..nd {
                let mut best = prev[k];
                if k > 0 {
                    best = best.min(prev[k - 1] + p1);
                }
                if k + 1 < nd {
                    best = best.min(prev[k + 1] + p1);
                }
                best = best.min(prev_min + p2);
                cur[k] = u64::from(c[k]) + best;
            }
        }
        out
    });
    for (chain, out) in chains.iter().zip(&results) {
        for (i, &p) in chain.iter().enumerate() {
            sink(p, &out[i * nd..(i + 1) * nd]);
        }
    }
}

/// Aggregated cost `L_r` along a single direction.
pub fn aggregate_path(
    volume: &CostVolume,
    r: Direction,
    params: &SgmParams,
) -> Result<PathVolume, SgmError> {
    if r == (0, 0) {
        return Err(SgmError::ZeroDirection);
    }
    let nd = volume.range().len();
    let mut out = PathVolume::zeros(volume.width(), volume.height(), volume.range());
    run_direction(
        volume,
        r,
        u64::from(params.p1),
        u64::from(params.p2),
        |p, l| out.costs[p * nd..(p + 1) * nd].copy_from_slice(l),
    );
    Ok(out)
}

/// Sum of `L_r` over all configured directions.
pub fn sgm_sum(volume: &CostVolume, params: &SgmParams) -> PathVolume {
    let nd = volume.range().len();
    let mut sum = PathVolume::zeros(volume.width(), volume.height(), volume.range());
    for &r in &params.directions {
        run_direction(
            volume,
            r,
            u64::from(params.p1),
            u64::from(params.p2),
            |p, l| {
                for (s, &x) in sum.costs[p * nd..(p + 1) * nd].iter_mut().zip(l) {
                    *s += x;
                }
            },
        );
    }
    sum
}

#[inline]
fn argmin<T: Copy + Ord>(costs: &[T]) -> usize {
    let mut best = 0;
    for (k, &c) in costs.iter().enumerate().skip(1) {
        if c < costs[best] {
            best = k;
        }
    }
    best
}

/// Per-pixel argmin over the hypothesis axis, ties to the smallest disparity.
/// Pixels whose winning cost is the fill value are NaN.
pub fn wta(volume: &CostVolume) -> DisparityMap {
    let (w, h) = (volume.width(), volume.height());
    let range = volume.range();
    let c_max = volume.c_max();
    Image::from_fn(w, h, |u, v| {
        let costs = volume.pixel(u, v);
        let k = argmin(costs);
        if costs[k] >= c_max {
            f32::NAN
        } else {
            (range.min() + k as i32) as f32
        }
    })
}

/// Argmin over an aggregated volume. A pixel is invalid when the raw cost of
/// its winning hypothesis is the fill value of `raw`.
pub fn wta_aggregated(summed: &PathVolume, raw: &CostVolume) -> DisparityMap {
    assert_eq!(
        (summed.width, summed.height, summed.range),
        (raw.width(), raw.height(), raw.range()),
        "volumes must share their shape"
    );
    let range = summed.range;
    let c_max = raw.c_max();
    Image::from_fn(summed.width, summed.height, |u, v| {
        let k = argmin(summed.pixel(u, v));
        if raw.pixel(u, v)[k] >= c_max {
            f32::NAN
        } else {
            (range.min() + k as i32) as f32
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(w: usize, h: usize, nd: usize, costs: Vec<u32>) -> CostVolume {
        let c_max = costs.iter().copied().max().unwrap_or(0) + 1;
        CostVolume::from_costs(w, h, DisparityRange::new(0, nd as i32 - 1).unwrap(), costs, c_max)
    }

    #[test]
    fn worked_three_pixel_path() {
        let vol = volume(3, 1, 2, vec![0, 2, 2, 0, 0, 2]);
        let params = SgmParams::new(1, 2, vec![(1, 0)]).unwrap();
        let l = aggregate_path(&vol, (1, 0), &params).unwrap();
        assert_eq!(l.costs(), &[0, 2, 2, 1, 2, 3]);
    }

    #[test]
    fn zero_penalties_two_pixels() {
        let vol = volume(2, 1, 2, vec![0, 5, 3, 3]);
        let params = SgmParams::new(0, 0, vec![(1, 0)]).unwrap();
        let l = aggregate_path(&vol, (1, 0), &params).unwrap();
        assert_eq!(l.pixel(1, 0), &[3, 3]);
    }

    #[test]
    fn single_pixel_has_no_predecessor() {
        let vol = volume(1, 1, 3, vec![4, 1, 7]);
        let params = SgmParams::default();
        for &r in params.directions() {
            assert_eq!(aggregate_path(&vol, r, &params).unwrap().costs(), &[4, 1, 7]);
        }
    }

    #[test]
    fn one_direction_sum_equals_path() {
        let costs: Vec<u32> = (0..5 * 4 * 3).map(|i| (i * 7 % 11) as u32).collect();
        let vol = volume(5, 4, 3, costs);
        let params = SgmParams::new(2, 5, vec![(1, 1)]).unwrap();
        assert_eq!(
            sgm_sum(&vol, &params).costs(),
            aggregate_path(&vol, (1, 1), &params).unwrap().costs()
        );
    }

    #[test]
    fn zero_volume_stays_zero() {
        let vol = volume(6, 5, 4, vec![0; 120]);
        let sum = sgm_sum(&vol, &SgmParams::with_count(10, 200, 8).unwrap());
        assert!(sum.costs().iter().all(|&c| c == 0));
    }

    #[test]
    fn symmetric_volume_gives_symmetric_sum() {
        let (w, h, nd) = (5, 5, 3);
        let mut costs = vec![0u32; w * h * nd];
        for v in 0..h {
            for u in 0..w {
                for k in 0..nd {
                    let (a, b) = (u.min(w - 1 - u), v.min(h - 1 - v));
                    let c = ((u * v + (w - 1 - u) * (h - 1 - v)) * 3 + a + 2 * b + k * 5) % 13;
                    costs[(v * w + u) * nd + k] = c as u32;
                }
            }
        }
        let vol = volume(w, h, nd, costs);
        let sum = sgm_sum(&vol, &SgmParams::with_count(2, 7, 8).unwrap());
        for v in 0..h {
            for u in 0..w {
                assert_eq!(sum.pixel(u, v), sum.pixel(w - 1 - u, h - 1 - v));
            }
        }
    }

    #[test]
    fn winner_takes_all() {
        let vol = volume(2, 1, 3, vec![5, 1, 7, 4, 4, 9]);
        let d = wta(&vol);
        assert_eq!(d.data(), &[1.0, 0.0]);
        let padded = CostVolume::from_costs(
            1,
            1,
            DisparityRange::new(0, 1).unwrap(),
            vec![3, 3],
            3,
        );
        assert!(wta(&padded).get(0, 0).is_nan());
        let offset = CostVolume::from_costs(1, 1, DisparityRange::new(-2, 0).unwrap(), vec![2, 1, 1], 9);
        assert_eq!(wta(&offset).get(0, 0), -1.0);
    }

    #[test]
    fn path_never_below_raw_cost() {
        let costs: Vec<u32> = (0..7 * 6 * 5).map(|i| ((i * 31 + 7) % 23) as u32).collect();
        let vol = volume(7, 6, 5, costs);
        let params = SgmParams::with_count(3, 9, 8).unwrap();
        for &r in params.directions() {
            let l = aggregate_path(&vol, r, &params).unwrap();
            for (a, &c) in l.costs().iter().zip(vol.costs()) {
                assert!(*a >= u64::from(c));
            }
        }
    }

    #[test]
    fn params_validation() {
        assert_eq!(
            SgmParams::new(5, 4, vec![(1, 0)]),
            Err(SgmError::Penalties { p1: 5, p2: 4 })
        );
        assert_eq!(SgmParams::new(1, 4, vec![(0, 0)]), Err(SgmError::ZeroDirection));
        assert_eq!(SgmParams::with_count(1, 4, 6), Err(SgmError::DirectionCount(6)));
        assert!(SgmParams::with_count(1, 4, 4).is_ok());
    }

    #[test]
    fn chains_cover_every_pixel_once() {
        for &r in &[(1, 0), (-1, 1), (2, 1), (0, -3)] {
            let mut seen = vec![0u8; 7 * 5];
            for chain in chains(7, 5, r) {
                for p in chain {
                    seen[p] += 1;
                }
            }
            assert!(seen.iter().all(|&n| n == 1), "{r:?}");
        }
    }
}
