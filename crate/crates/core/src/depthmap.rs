//! Disparity to metric depth, and the working-range filter.

use thiserror::Error;

use crate::lightfield::{CameraGeometry, DepthMap, DisparityMap};

#[derive(Debug, Error, PartialEq)]
pub enum DepthError {
    #[error("depth range [{0}, {1}] is empty")]
    Range(f64, f64),
}

pub const DEFAULT_Z_MIN: f64 = 0.5;
pub const DEFAULT_Z_MAX: f64 = 2.0;

/// `Z = f · B / d` with `B` the extreme-view baseline. Non-positive and
/// invalid disparities give NaN.
pub fn disparity_to_depth(disparity: &DisparityMap, geometry: &CameraGeometry) -> DepthMap {
    let fb = geometry.focal_px * geometry.max_baseline_m();
    disparity.map(|&d| {
        if d > 0.0 {
            (fb / f64::from(d)) as f32
        } else {
            f32::NAN
        }
    })
}

/// Inverse of [`disparity_to_depth`] for a single value.
pub fn depth_to_disparity(z: f64, geometry: &CameraGeometry) -> f64 {
    geometry.focal_px * geometry.max_baseline_m() / z
}

/// Invalidates depths outside the inclusive `[z_min, z_max]`.
pub fn range_filter(depth: &DepthMap, z_min: f64, z_max: f64) -> Result<DepthMap, DepthError> {
    if !(z_min < z_max) {
        return Err(DepthError::Range(z_min, z_max));
    }
    Ok(depth.map(|&z| {
        let zf = f64::from(z);
        if zf >= z_min && zf <= z_max {
            z
        } else {
            f32::NAN
        }
    }))
}
