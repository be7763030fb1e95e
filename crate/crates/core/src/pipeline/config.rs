//! Pipeline configuration: a `key = value` file plus command-line overrides.
//!
//! ```text
//! mode = bayer            # synthetic | rectified | bayer
//! input = raw/            # view directory, or the scene file in synthetic mode
//! grid = 4x4
//! reference = 1,1         # s,t
//! bayer_pattern = rggb
//! gamma = auto            # auto | none | <value>
//! remap = tables.lfrm     # none | identity | <path>
//! d_min = 0
//! d_max = 16
//! lambda = 2
//! p1 = 6
//! p2 = 96
//! out = out/
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::census::{DEFAULT_RADIUS, MAX_RADIUS};
use crate::cost::{CrossMode, DisparityRange, DEFAULT_BOUND_WINDOW, DEFAULT_LAMBDA};
use crate::depthmap::{DEFAULT_Z_MAX, DEFAULT_Z_MIN};
use crate::io::{kv, FormatError};
use crate::lightfield::{CameraGeometry, LightField, ViewIndex};
use crate::preprocess::BayerPattern;
use crate::sgm::{SgmParams, DEFAULT_P1, DEFAULT_P2};
use crate::stream::PayloadKind;

pub const DEFAULT_FOCAL_PX: f64 = 700.0;
pub const DEFAULT_BASELINE_M: f64 = 0.009;
pub const DEFAULT_D_MIN: i32 = 0;
pub const DEFAULT_D_MAX: i32 = 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InputMode {
    /// Render views from a scene file.
    #[default]
    Synthetic,
    /// Grayscale views, already rectified unless a remap is given.
    Rectified,
    /// Raw Bayer mosaics.
    Bayer,
}

impl FromStr for InputMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "synthetic" | "synthetic-spec" => Ok(Self::Synthetic),
            "rectified" | "rectified-views" => Ok(Self::Rectified),
            "bayer" | "bayer-mosaic-grid" => Ok(Self::Bayer),
            _ => Err(invalid(format!("unknown mode {s:?}"))),
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Synthetic => "synthetic",
            Self::Rectified => "rectified",
            Self::Bayer => "bayer",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaMode {
    Auto,
    Off,
    Fixed(f64),
}

impl FromStr for GammaMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "none" | "off" => Ok(Self::Off),
            other => match other.parse::<f64>() {
                Ok(g) if g > 0.0 && g.is_finite() => Ok(Self::Fixed(g)),
                _ => Err(invalid(format!("gamma must be auto, none or a positive number, got {s:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum RemapSource {
    #[default]
    None,
    Identity,
    File(PathBuf),
}

/// Values given on the command line; each one replaces the file setting.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub lambda: Option<u32>,
    pub p1: Option<u32>,
    pub p2: Option<u32>,
    pub depth_range: Option<(f64, f64)>,
    pub disparity_range: Option<(i32, i32)>,
    pub stream: Option<String>,
    pub debug_dump: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub mode: InputMode,
    pub input: Option<PathBuf>,
    /// Grid rows and columns for directory input; scenes carry their own.
    pub grid: (usize, usize),
    pub reference: ViewIndex,
    pub bayer_pattern: BayerPattern,
    /// `None` picks auto for Bayer input and off otherwise.
    pub gamma: Option<GammaMode>,
    pub remap: RemapSource,
    pub d_min: i32,
    pub d_max: i32,
    pub lambda: u32,
    pub bound_window: usize,
    pub cross_mode: CrossMode,
    pub p1: u32,
    pub p2: u32,
    pub directions: usize,
    pub census_radius: usize,
    pub focal_px: f64,
    pub baseline_m: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub out: PathBuf,
    pub stream: Option<String>,
    /// Clients to wait for before the first frame is sent.
    pub stream_clients: usize,
    pub stream_kind: PayloadKind,
    pub debug_dump: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: InputMode::default(),
            input: None,
            grid: (LightField::DEFAULT_GRID, LightField::DEFAULT_GRID),
            reference: LightField::DEFAULT_REFERENCE,
            bayer_pattern: BayerPattern::default(),
            gamma: None,
            remap: RemapSource::None,
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            lambda: DEFAULT_LAMBDA,
            bound_window: DEFAULT_BOUND_WINDOW,
            cross_mode: CrossMode::default(),
            p1: DEFAULT_P1,
            p2: DEFAULT_P2,
            directions: 8,
            census_radius: DEFAULT_RADIUS,
            focal_px: DEFAULT_FOCAL_PX,
            baseline_m: DEFAULT_BASELINE_M,
            z_min: DEFAULT_Z_MIN,
            z_max: DEFAULT_Z_MAX,
            out: PathBuf::from("out"),
            stream: None,
            stream_clients: 0,
            stream_kind: PayloadKind::Depth,
            debug_dump: false,
        }
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn pair_of<T: FromStr>(entry: &kv::Entry) -> Result<(T, T), ConfigError> {
    kv::pair(&entry.value).ok_or_else(|| {
        invalid(format!(
            "line {}: {} expects two values like A,B, got {:?}",
            entry.line, entry.key, entry.value
        ))
    })
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for e in kv::parse(text)? {
            match e.key.as_str() {
                "mode" => c.mode = e.value.parse()?,
                "input" => c.input = Some(resolve(base_dir, &e.value)),
                "grid" => {
                    let (rows, cols) = pair_of(&e)?;
                    c.grid = (rows, cols);
                }
                "reference" => {
                    let (s, t) = pair_of(&e)?;
                    c.reference = ViewIndex::new(s, t);
                }
                "bayer_pattern" => {
                    c.bayer_pattern = e.value.parse().map_err(|err| invalid(format!("line {}: {err}", e.line)))?
                }
                "gamma" => c.gamma = Some(e.value.parse()?),
                "remap" => {
                    c.remap = match e.value.to_ascii_lowercase().as_str() {
                        "none" => RemapSource::None,
                        "identity" => RemapSource::Identity,
                        _ => RemapSource::File(resolve(base_dir, &e.value)),
                    }
                }
                "d_min" => c.d_min = kv::value(&e)?,
                "d_max" => c.d_max = kv::value(&e)?,
                "lambda" => c.lambda = kv::value(&e)?,
                "bound_window" => c.bound_window = kv::value(&e)?,
                "cross_views" => {
                    c.cross_mode = match e.value.to_ascii_lowercase().as_str() {
                        "extreme" => CrossMode::Extreme,
                        "adjacent" => CrossMode::Adjacent,
                        _ => return Err(invalid(format!("line {}: cross_views is extreme or adjacent", e.line))),
                    }
                }
                "p1" => c.p1 = kv::value(&e)?,
                "p2" => c.p2 = kv::value(&e)?,
                "directions" => c.directions = kv::value(&e)?,
                "census_radius" => c.census_radius = kv::value(&e)?,
                "focal_px" => c.focal_px = kv::value(&e)?,
                "baseline_m" => c.baseline_m = kv::value(&e)?,
                "z_min" => c.z_min = kv::value(&e)?,
                "z_max" => c.z_max = kv::value(&e)?,
                "out" => c.out = resolve(base_dir, &e.value),
                "stream" => {
                    c.stream = match e.value.to_ascii_lowercase().as_str() {
                        "" | "off" | "none" => None,
                        _ => Some(e.value.clone()),
                    }
                }
                "stream_clients" => c.stream_clients = kv::value(&e)?,
                "stream_kind" => {
                    c.stream_kind = match e.value.to_ascii_lowercase().as_str() {
                        "depth" => PayloadKind::Depth,
                        "disparity" => PayloadKind::Disparity,
                        _ => return Err(invalid(format!("line {}: stream_kind is depth or disparity", e.line))),
                    }
                }
                "debug_dump" => c.debug_dump = kv::value(&e)?,
                other => return Err(invalid(format!("line {}: unknown key {other:?}", e.line))),
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.input {
            self.input = Some(p.clone());
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(l) = o.lambda {
            self.lambda = l;
        }
        if let Some(p) = o.p1 {
            self.p1 = p;
        }
        if let Some(p) = o.p2 {
            self.p2 = p;
        }
        if let Some((lo, hi)) = o.depth_range {
            self.z_min = lo;
            self.z_max = hi;
        }
        if let Some((lo, hi)) = o.disparity_range {
            self.d_min = lo;
            self.d_max = hi;
        }
        if let Some(s) = &o.stream {
            self.stream = Some(s.clone());
        }
        self.debug_dump |= o.debug_dump;
    }

    pub fn effective_gamma(&self) -> GammaMode {
        self.gamma.unwrap_or(match self.mode {
            InputMode::Bayer => GammaMode::Auto,
            _ => GammaMode::Off,
        })
    }

    pub fn disparity_range(&self) -> Result<DisparityRange, ConfigError> {
        DisparityRange::new(self.d_min, self.d_max).map_err(|e| invalid(e.to_string()))
    }

    pub fn sgm_params(&self) -> Result<SgmParams, ConfigError> {
        SgmParams::with_count(self.p1, self.p2, self.directions).map_err(|e| invalid(e.to_string()))
    }

    pub fn geometry(&self, rows: usize, cols: usize) -> Result<CameraGeometry, ConfigError> {
        CameraGeometry::for_grid(self.focal_px, self.baseline_m, rows, cols)
            .map_err(|e| invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.d_min >= self.d_max {
            return Err(invalid(format!("d_min {} must be below d_max {}", self.d_min, self.d_max)));
        }
        self.sgm_params()?;
        self.geometry(self.grid.0.max(2), self.grid.1.max(2))?;
        if !(self.z_min < self.z_max) {
            return Err(invalid(format!("z_min {} must be below z_max {}", self.z_min, self.z_max)));
        }
        if !(1..=MAX_RADIUS).contains(&self.census_radius) {
            return Err(invalid(format!("census_radius must be 1..={MAX_RADIUS}")));
        }
        if self.bound_window == 0 || self.bound_window % 2 == 0 {
            return Err(invalid(format!("bound_window {} must be odd", self.bound_window)));
        }
        let (rows, cols) = self.grid;
        if rows < 2 || cols < 2 {
            return Err(invalid(format!("grid {rows}x{cols} needs at least 2x2 views")));
        }
        if self.mode != InputMode::Synthetic && (self.reference.s >= cols || self.reference.t >= rows) {
            return Err(invalid(format!(
                "reference ({}, {}) is outside the {rows}x{cols} grid",
                self.reference.s, self.reference.t
            )));
        }
        let input = self.input.as_ref().ok_or_else(|| invalid("no input given"))?;
        let must_be_dir = self.mode != InputMode::Synthetic;
        if must_be_dir && !input.is_dir() {
            return Err(invalid(format!("input directory {} does not exist", input.display())));
        }
        if !must_be_dir && !input.is_file() {
            return Err(invalid(format!("scene file {} does not exist", input.display())));
        }
        if let RemapSource::File(p) = &self.remap {
            if !p.is_file() {
                return Err(invalid(format!("remap table {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
