//! Light field depth estimation from a grid of views.
//!
//! The processing chain is: Bayer demosaicing and gamma correction
//! ([`preprocess`]), rectification through remap tables ([`rectify`]),
//! 3x3 Census transform ([`census`]), multi-view Hamming cost with a coarse
//! cross-view pass that bounds the per-pixel search ([`cost`]), semi-global
//! path aggregation and winner-takes-all ([`sgm`]), and finally conversion to
//! metric depth with a working-range filter ([`depthmap`]).
//!
//! [`synthgen`] renders light fields with exact ground truth, [`io`] holds the
//! file formats, [`stream`] pushes frames to TCP clients and [`pipeline`] ties
//! everything together for the `lfdepth` binary.
//!
//! Data-parallel loops go through rayon when the `parallel` feature is on
//! (the default) and run sequentially otherwise. Results are identical either
//! way: every reduction is over integers.

pub mod census;
pub mod cost;
pub mod depthmap;
pub mod io;
pub mod lightfield;
pub mod pipeline;
pub mod preprocess;
pub mod rectify;
pub mod sgm;
pub mod stream;
pub mod synthgen;

mod par;

pub use census::{census_transform, hamming, CensusField, Codeword};
pub use cost::{
    aggregate_cost, aggregate_cost_with_threshold, coarse_disparity, cross_views, disparity_bounds, pairwise_cost,
    CensusLightField, CostVolume, CrossMode, DisparityRange, SearchBounds,
};
pub use depthmap::{disparity_to_depth, range_filter};
pub use lightfield::{
    correspond, sample, CameraGeometry, DepthMap, DisparityMap, GrayImage, Image, LightField,
    SamplePolicy, ViewIndex,
};
pub use sgm::{aggregate_path, sgm_sum, wta, wta_aggregated, PathVolume, SgmParams};
