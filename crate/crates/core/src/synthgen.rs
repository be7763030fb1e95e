//! Synthetic light fields with exact ground-truth disparity.
//!
//! A scene is a stack of fronto-parallel layers, farthest first. Each layer
//! carries a texture defined in reference-view coordinates, a disparity and a
//! region. View `(s, t)` shows the layer point `(u − (ŝ − s)·d, v − (t̂ − t)·d)`
//! at pixel `(u, v)`, so reference pixel `(u, v)` reappears at
//! `correspond(u, v, ..., d)` in every view. Nearer layers paint over farther
//! ones.
//!
//! Procedural textures are value noise driven by xorshift64*: lattice values
//! are hashed from `(seed, octave, ix, iy)`, interpolated bilinearly and summed
//! over four octaves with cell sizes 1, 2, 4 and 8 pixels. Everything is
//! integer hashing plus f64 arithmetic, so output is identical across
//! platforms.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::{self, kv, FormatError};
use crate::lightfield::{to_u8, DisparityMap, GrayImage, Image, LightField, ViewIndex};
use crate::par;
use crate::preprocess::{BayerMosaic, BayerPattern, PreprocessError, RgbImage};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene has no layers")]
    Empty,
    #[error("scene needs at least one full-frame layer")]
    NoFullFrame,
    #[error("layers must be ordered farthest first (disparity {0} follows {1})")]
    Order(f64, f64),
    #[error("layer disparity must be finite and non-negative, got {0}")]
    Disparity(f64),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("texture {path}: {source}")]
    Texture { path: PathBuf, source: FormatError },
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// xorshift64* generator.
#[derive(Clone, Debug)]
pub struct XorShift64Star(u64);

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        // zero is a fixed point of the xorshift step
        Self(if seed == 0 { 0x9E37_79B9_7F4A_7C15 } else { seed })
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` with 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box–Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[inline]
fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> f64 {
    let h = seed.wrapping_mul(0xD6E8_FEB8_6659_FD93)
        ^ octave.wrapping_mul(0xA076_1D64_78BD_642F)
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    let mut rng = XorShift64Star::new(h);
    rng.next_u64();
    rng.next_f64()
}

const OCTAVES: [(f64, f64); 4] = [(1.0, 0.4), (2.0, 0.3), (4.0, 0.2), (8.0, 0.1)];

/// Value noise in `[0, 255)`, defined on the whole plane.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let mut total = 0.0;
    for (octave, &(cell, weight)) in OCTAVES.iter().enumerate() {
        let (gx, gy) = (x / cell, y / cell);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - x0, gy - y0);
        let (ix, iy) = (x0 as i64, y0 as i64);
        let o = octave as u64;
        let a = lattice(seed, o, ix, iy);
        let b = lattice(seed, o, ix + 1, iy);
        let c = lattice(seed, o, ix, iy + 1);
        let d = lattice(seed, o, ix + 1, iy + 1);
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        total += weight * (top + (bottom - top) * fy);
    }
    255.0 * total
}

#[derive(Clone, Debug, PartialEq)]
pub enum Texture {
    Noise { seed: u64 },
    /// Sampled bilinearly with edge replication.
    Image(GrayImage),
}

impl Texture {
    fn sample(&self, x: f64, y: f64) -> f64 {
        match self {
            Texture::Noise { seed } => value_noise(*seed, x, y),
            Texture::Image(img) => {
                let x = x.clamp(0.0, (img.width() - 1) as f64);
                let y = y.clamp(0.0, (img.height() - 1) as f64);
                let (x0, y0) = (x.floor(), y.floor());
                let (fx, fy) = (x - x0, y - y0);
                let (u, v) = (x0 as i64, y0 as i64);
                let p = |du, dv| f64::from(img.get_clamped(u + du, v + dv));
                let top = p(0, 0) + (p(1, 0) - p(0, 0)) * fx;
                let bottom = p(0, 1) + (p(1, 1) - p(0, 1)) * fx;
                top + (bottom - top) * fy
            }
        }
    }
}

/// Area covered by a layer, in reference-view coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    Full,
    Rect { x: f64, y: f64, w: f64, h: f64 },
}

impl Region {
    #[inline]
    pub fn contains(&self, px: f64, py: f64) -> bool {
        match *self {
            Region::Full => true,
            Region::Rect { x, y, w, h } => px >= x && px < x + w && py >= y && py < y + h,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub texture: Texture,
    pub disparity: f64,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
    pub reference: ViewIndex,
    /// Farthest first.
    pub layers: Vec<Layer>,
    /// Standard deviation of additive sensor noise, intensity levels.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl SceneSpec {
    /// 4x4 grid, reference (1, 1), no sensor noise.
    pub fn new(width: usize, height: usize, layers: Vec<Layer>) -> Self {
        Self {
            rows: LightField::DEFAULT_GRID,
            cols: LightField::DEFAULT_GRID,
            width,
            height,
            reference: LightField::DEFAULT_REFERENCE,
            layers,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }

    /// One noise-textured plane filling the frame.
    pub fn plane(width: usize, height: usize, disparity: f64, seed: u64) -> Self {
        Self::new(
            width,
            height,
            vec![Layer {
                texture: Texture::Noise { seed },
                disparity,
                region: Region::Full,
            }],
        )
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.layers.is_empty() {
            return Err(SynthError::Empty);
        }
        if self.rows == 0 || self.cols == 0 || self.width == 0 || self.height == 0 {
            return Err(SynthError::Invalid("grid and view size must be positive".into()));
        }
        if self.reference.s >= self.cols || self.reference.t >= self.rows {
            return Err(SynthError::Invalid("reference view outside the grid".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::Invalid("noise_sigma must be non-negative".into()));
        }
        for layer in &self.layers {
            if !(layer.disparity >= 0.0 && layer.disparity.is_finite()) {
                return Err(SynthError::Disparity(layer.disparity));
            }
        }
        for pair in self.layers.windows(2) {
            if pair[1].disparity < pair[0].disparity {
                return Err(SynthError::Order(pair[1].disparity, pair[0].disparity));
            }
        }
        if !self.layers.iter().any(|l| l.region == Region::Full) {
            return Err(SynthError::NoFullFrame);
        }
        Ok(())
    }

    /// Reads the `key = value` scene format. Relative texture paths resolve
    /// against `base_dir`.
    ///
    /// ```text
    /// grid = 4x4
    /// size = 256x256
    /// reference = 1,1
    /// noise_sigma = 0
    /// layer = noise seed=1 disparity=2
    /// layer = noise seed=2 disparity=8 region=64,64,96,96
    /// layer = image path=wall.pgm disparity=1.5
    /// ```
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, SynthError> {
        let mut spec = SceneSpec::new(0, 0, Vec::new());
        for entry in kv::parse(text)? {
            let bad = |what: &str| {
                SynthError::Invalid(format!("line {}: {what} in {:?}", entry.line, entry.value))
            };
            match entry.key.as_str() {
                "grid" => {
                    let (rows, cols) = kv::pair(&entry.value).ok_or_else(|| bad("expected RxC"))?;
                    spec.rows = rows;
                    spec.cols = cols;
                }
                "size" => {
                    let (w, h) = kv::pair(&entry.value).ok_or_else(|| bad("expected WxH"))?;
                    spec.width = w;
                    spec.height = h;
                }
                "reference" => {
                    let (s, t) = kv::pair(&entry.value).ok_or_else(|| bad("expected S,T"))?;
                    spec.reference = ViewIndex::new(s, t);
                }
                "noise_sigma" => spec.noise_sigma = kv::value(&entry)?,
                "noise_seed" => spec.noise_seed = kv::value(&entry)?,
                "layer" => spec.layers.push(parse_layer(&entry.value, base_dir).map_err(|e| {
                    match e {
                        SynthError::Invalid(msg) => {
                            SynthError::Invalid(format!("line {}: {msg}", entry.line))
                        }
                        other => other,
                    }
                })?),
                other => return Err(bad(&format!("unknown key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(FormatError::from)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

fn parse_layer(text: &str, base_dir: &Path) -> Result<Layer, SynthError> {
    let mut parts = text.split_whitespace();
    let kind = parts
        .next()
        .ok_or_else(|| SynthError::Invalid("empty layer".into()))?;
    let mut seed = None;
    let mut path = None;
    let mut disparity = None;
    let mut region = Region::Full;
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| SynthError::Invalid(format!("expected key=value, got {part:?}")))?;
        let invalid = || SynthError::Invalid(format!("bad layer field {part:?}"));
        match k {
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| invalid())?),
            "path" => path = Some(base_dir.join(v)),
            "disparity" => disparity = Some(v.parse::<f64>().map_err(|_| invalid())?),
            "region" => {
                region = if v == "full" {
                    Region::Full
                } else {
                    let n: Vec<f64> = v
                        .split(',')
                        .map(|x| x.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| invalid())?;
                    match n[..] {
                        [x, y, w, h] if w > 0.0 && h > 0.0 => Region::Rect { x, y, w, h },
                        _ => return Err(invalid()),
                    }
                }
            }
            _ => return Err(invalid()),
        }
    }
    let disparity =
        disparity.ok_or_else(|| SynthError::Invalid("layer without disparity".into()))?;
    let texture = match kind {
        "noise" => Texture::Noise {
            seed: seed.unwrap_or(0),
        },
        "image" => {
            let path = path.ok_or_else(|| SynthError::Invalid("image layer needs path".into()))?;
            let img = io::load_pgm(&path)
                .map_err(|source| SynthError::Texture {
                    path: path.clone(),
                    source,
                })?
                .to_gray8();
            Texture::Image(img)
        }
        other => return Err(SynthError::Invalid(format!("unknown layer kind {other:?}"))),
    };
    Ok(Layer {
        texture,
        disparity,
        region,
    })
}

/// Index of the nearest layer covering view pixel `(u, v)` of a view at
/// offset `(ds, dt)` from the reference.
fn top_layer(layers: &[Layer], ds: f64, dt: f64, u: f64, v: f64) -> Option<usize> {
    layers.iter().rposition(|layer| {
        layer
            .region
            .contains(u - ds * layer.disparity, v - dt * layer.disparity)
    })
}

/// Renders every view and the reference-view ground truth.
pub fn render_lightfield(spec: &SceneSpec) -> Result<(LightField, DisparityMap), SynthError> {
    spec.validate()?;
    let reference = spec.reference;
    let indices: Vec<ViewIndex> = (0..spec.rows)
        .flat_map(|t| (0..spec.cols).map(move |s| ViewIndex::new(s, t)))
        .collect();
    let views = par::map_slice(&indices, |&view| {
        let (ds, dt) = view.offset_from(reference);
        let (ds, dt) = (ds as f64, dt as f64);
        let mut noise = (spec.noise_sigma > 0.0).then(|| {
            XorShift64Star::new(
                spec.noise_seed ^ ((view.t * spec.cols + view.s) as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407),
            )
        });
        Image::from_fn(spec.width, spec.height, |u, v| {
            let (u, v) = (u as f64, v as f64);
            let value = match top_layer(&spec.layers, ds, dt, u, v) {
                Some(i) => {
                    let layer = &spec.layers[i];
                    layer
                        .texture
                        .sample(u - ds * layer.disparity, v - dt * layer.disparity)
                }
                None => 0.0,
            };
            let value = match noise.as_mut() {
                Some(rng) => value + spec.noise_sigma * rng.next_gaussian(),
                None => value,
            };
            to_u8(value)
        })
    });
    let truth = Image::from_fn(spec.width, spec.height, |u, v| {
        match top_layer(&spec.layers, 0.0, 0.0, u as f64, v as f64) {
            Some(i) => spec.layers[i].disparity as f32,
            None => f32::NAN,
        }
    });
    let lf = LightField::new(spec.rows, spec.cols, views, reference)
        .map_err(|e| SynthError::Invalid(e.to_string()))?;
    Ok((lf, truth))
}

/// Reference pixels whose surface is visible in every view where its
/// correspondence lands inside the image.
pub fn visibility_mask(spec: &SceneSpec) -> Result<Image<bool>, SynthError> {
    spec.validate()?;
    let reference = spec.reference;
    let (w, h) = (spec.width as f64, spec.height as f64);
    Ok(Image::from_fn(spec.width, spec.height, |u, v| {
        let Some(own) = top_layer(&spec.layers, 0.0, 0.0, u as f64, v as f64) else {
            return false;
        };
        let d = spec.layers[own].disparity;
        for t in 0..spec.rows {
            for s in 0..spec.cols {
                let (ds, dt) = ViewIndex::new(s, t).offset_from(reference);
                let (ds, dt) = (ds as f64, dt as f64);
                let x = (u as f64 + ds * d).round();
                let y = (v as f64 + dt * d).round();
                if x < 0.0 || y < 0.0 || x >= w || y >= h {
                    continue;
                }
                if top_layer(&spec.layers, ds, dt, x, y) != Some(own) {
                    return false;
                }
            }
        }
        true
    }))
}

/// Keeps the channel each pattern site samples.
pub fn mosaic_from_rgb(img: &RgbImage, pattern: BayerPattern) -> Result<BayerMosaic, PreprocessError> {
    let (w, h) = (img.width(), img.height());
    if w % 2 != 0 || h % 2 != 0 || w == 0 || h == 0 {
        return Err(PreprocessError::OddDimensions {
            width: w,
            height: h,
        });
    }
    let raw = Image::from_fn(w, h, |x, y| img.pixel(x, y)[pattern.color_at(x, y) as usize]);
    BayerMosaic::new(raw, pattern)
}
