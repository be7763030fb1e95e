//! End-to-end depth estimation for one light field frame, plus the
//! repeated-frame benchmark used by `lfdepth bench`.
//!
//! Stages: load, debayer, gamma, grayscale, remap, census, coarse disparity,
//! search bounds, bounded aggregation, SGM, WTA, depth conversion and range
//! filtering. Input views are named `view_<t>_<s>.pgm` (zero-based).

pub mod config;
pub mod timing;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

pub use config::{ConfigError, GammaMode, InputMode, Overrides, PipelineConfig, RemapSource};
pub use timing::{report_format, TimingReport};

use crate::census::CensusField;
use crate::cost::{
    aggregate_cost, coarse_disparity, disparity_bounds, CensusLightField, DisparityRange, SearchBounds,
};
use crate::depthmap::{disparity_to_depth, range_filter};
use crate::io;
use crate::lightfield::{DepthMap, DisparityMap, GrayImage, Image, LightField, ViewIndex};
use crate::par;
use crate::preprocess::{apply_gamma, auto_gamma_all, debayer, to_grayscale, BayerMosaic, BayerPattern, RgbImage};
use crate::rectify::{apply_remap, RemapTable, ValidityMask};
use crate::sgm::{sgm_sum, wta_aggregated, SgmParams};
use crate::stream::{FrameMessage, FrameServer, PayloadKind, ServerConfig};
use crate::synthgen::{mosaic_from_rgb, render_lightfield, visibility_mask, SceneSpec};
use timing::timed;

/// How long a run waits for `stream_clients` receivers.
pub const STREAM_WAIT: Duration = Duration::from_secs(10);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Preprocess,
    Rectify,
    Census,
    Coarse,
    Aggregate,
    Depth,
    Output,
    Stream,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Preprocess => "preprocess",
            Stage::Rectify => "rectify",
            Stage::Census => "census",
            Stage::Coarse => "coarse",
            Stage::Aggregate => "aggregate",
            Stage::Depth => "depth",
            Stage::Output => "output",
            Stage::Stream => "stream",
        })
    }
}

#[derive(Debug, Error)]
#[error("[{stage}] {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

pub fn view_file_name(index: ViewIndex) -> String {
    format!("view_{}_{}.pgm", index.t, index.s)
}

fn grid_indices(rows: usize, cols: usize) -> Vec<ViewIndex> {
    (0..rows)
        .flat_map(|t| (0..cols).map(move |s| ViewIndex::new(s, t)))
        .collect()
}

/// A frame as it comes off the source.
#[derive(Clone, Debug)]
pub enum RawFrame {
    Views {
        light_field: LightField,
        ground_truth: Option<DisparityMap>,
    },
    Mosaics {
        rows: usize,
        cols: usize,
        reference: ViewIndex,
        mosaics: Vec<BayerMosaic>,
    },
}

/// Grayscale, rectified views ready for matching.
#[derive(Clone, Debug)]
pub struct Frame {
    pub light_field: LightField,
    pub masks: Option<Vec<ValidityMask>>,
    pub ground_truth: Option<DisparityMap>,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DepthResult {
    pub disparity: DisparityMap,
    /// Range-filtered.
    pub depth: DepthMap,
    pub coarse: DisparityMap,
    pub bounds: SearchBounds,
    pub evaluated_hypotheses: u64,
    pub exhaustive_hypotheses: u64,
    pub coarse_hypotheses: u64,
}

/// Validated configuration with the parsed parameters and remap table.
pub struct Pipeline {
    config: PipelineConfig,
    range: DisparityRange,
    sgm: SgmParams,
    remap: Option<RemapTable>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate().map_err(at(Stage::Config))?;
        let range = config.disparity_range().map_err(at(Stage::Config))?;
        let sgm = config.sgm_params().map_err(at(Stage::Config))?;
        let remap = match &config.remap {
            RemapSource::File(p) => Some(io::load_remap(p).map_err(|e| {
                PipelineError::new(Stage::Rectify, format!("{}: {e}", p.display()))
            })?),
            _ => None,
        };
        Ok(Self {
            config,
            range,
            sgm,
            remap,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn input(&self) -> &Path {
        self.config.input.as_deref().expect("validated")
    }

    pub fn load(&self) -> Result<RawFrame, PipelineError> {
        let input = self.input();
        if self.config.mode == InputMode::Synthetic {
            let spec = SceneSpec::load(input).map_err(|e| {
                PipelineError::new(Stage::Load, format!("{}: {e}", input.display()))
            })?;
            let (light_field, ground_truth) = render_lightfield(&spec).map_err(at(Stage::Load))?;
            return Ok(RawFrame::Views {
                light_field,
                ground_truth: Some(ground_truth),
            });
        }
        let (rows, cols) = self.config.grid;
        let indices = grid_indices(rows, cols);
        let images = par::map_slice(&indices, |&index| {
            let path = input.join(view_file_name(index));
            io::load_pgm(&path)
                .map(|p| p.to_gray8())
                .map_err(|e| PipelineError::new(Stage::Load, format!("{}: {e}", path.display())))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let reference = self.config.reference;
        match self.config.mode {
            InputMode::Rectified => Ok(RawFrame::Views {
                light_field: LightField::new(rows, cols, images, reference).map_err(at(Stage::Load))?,
                ground_truth: None,
            }),
            _ => {
                let pattern = self.config.bayer_pattern;
                let mosaics = images
                    .into_iter()
                    .map(|raw| BayerMosaic::new(raw, pattern))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(at(Stage::Load))?;
                Ok(RawFrame::Mosaics {
                    rows,
                    cols,
                    reference,
                    mosaics,
                })
            }
        }
    }

    fn gamma_value(&self, mean_source: impl FnOnce() -> Result<f64, PipelineError>) -> Result<Option<f64>, PipelineError> {
        match self.config.effective_gamma() {
            GammaMode::Off => Ok(None),
            GammaMode::Fixed(g) => Ok(Some(g)),
            GammaMode::Auto => mean_source().map(Some),
        }
    }

    /// Debayer, gamma, grayscale and remap.
    pub fn preprocess(&self, raw: RawFrame) -> Result<Frame, PipelineError> {
        let (light_field, ground_truth, gamma) = match raw {
            RawFrame::Views {
                light_field,
                ground_truth,
            } => {
                let (rows, cols, reference) = (light_field.rows(), light_field.cols(), light_field.reference());
                let gamma = self.gamma_value(|| auto_gamma_all(light_field.views()).map_err(at(Stage::Preprocess)))?;
                let light_field = match gamma {
                    None => light_field,
                    Some(g) => {
                        let views = par::map_slice(light_field.views(), |v| apply_gamma(v, g))
                            .into_iter()
                            .collect::<Result<Vec<GrayImage>, _>>()
                            .map_err(at(Stage::Preprocess))?;
                        LightField::new(rows, cols, views, reference).map_err(at(Stage::Preprocess))?
                    }
                };
                (light_field, ground_truth, gamma)
            }
            RawFrame::Mosaics {
                rows,
                cols,
                reference,
                mosaics,
            } => {
                let rgb: Vec<RgbImage> = par::map_slice(&mosaics, debayer);
                let gamma = self.gamma_value(|| auto_gamma_all(&rgb).map_err(at(Stage::Preprocess)))?;
                let gray = par::map_slice(&rgb, |img| match gamma {
                    Some(g) => apply_gamma(img, g).map(|c| to_grayscale(&c)),
                    None => Ok(to_grayscale(img)),
                })
                .into_iter()
                .collect::<Result<Vec<_>, _>>()
                .map_err(at(Stage::Preprocess))?;
                let lf = LightField::new(rows, cols, gray, reference).map_err(at(Stage::Preprocess))?;
                (lf, None, gamma)
            }
        };

        let identity;
        let table = match (&self.config.remap, &self.remap) {
            (RemapSource::None, _) => None,
            (RemapSource::Identity, _) => {
                identity = RemapTable::identity(
                    light_field.rows(),
                    light_field.cols(),
                    light_field.width(),
                    light_field.height(),
                );
                Some(&identity)
            }
            (RemapSource::File(_), table) => table.as_ref(),
        };
        let Some(table) = table else {
            return Ok(Frame {
                light_field,
                masks: None,
                ground_truth,
                gamma,
            });
        };
        if table.rows() != light_field.rows() || table.cols() != light_field.cols() {
            return Err(PipelineError::new(
                Stage::Rectify,
                format!(
                    "remap table covers {}x{} views, input has {}x{}",
                    table.rows(),
                    table.cols(),
                    light_field.rows(),
                    light_field.cols()
                ),
            ));
        }
        let (rows, cols, reference) = (light_field.rows(), light_field.cols(), light_field.reference());
        let mut views = Vec::with_capacity(rows * cols);
        let mut masks = Vec::with_capacity(rows * cols);
        for (i, view) in light_field.views().iter().enumerate() {
            let (img, mask) = apply_remap(view, table, i).map_err(at(Stage::Rectify))?;
            views.push(img);
            masks.push(mask);
        }
        Ok(Frame {
            light_field: LightField::new(rows, cols, views, reference).map_err(at(Stage::Rectify))?,
            masks: Some(masks),
            ground_truth,
            gamma,
        })
    }

    /// Census through range filtering. Adds stage times to `report`.
    pub fn estimate(&self, frame: &Frame, report: &mut TimingReport) -> Result<DepthResult, PipelineError> {
        let c = &self.config;
        let lf = &frame.light_field;
        let (coarse, coarse_hypotheses, field) = timed(&mut report.depth_initial_ms, || {
            let mut field = CensusLightField::from_light_field(lf, c.census_radius).map_err(at(Stage::Census))?;
            if let Some(masks) = &frame.masks {
                field = field.with_masks(masks.clone()).map_err(at(Stage::Census))?;
            }
            let (coarse, n) = coarse_disparity(&field, self.range, c.cross_mode).map_err(at(Stage::Coarse))?;
            Ok::<_, PipelineError>((coarse, n, field))
        })?;
        let (disparity, depth, bounds, volume_counts) = timed(&mut report.depth_final_ms, || {
            let bounds = disparity_bounds(&coarse, self.range, c.lambda, c.bound_window);
            let volume = aggregate_cost(&field, &field.other_views(), self.range, Some(&bounds))
                .map_err(at(Stage::Aggregate))?;
            let summed = sgm_sum(&volume, &self.sgm);
            let disparity = wta_aggregated(&summed, &volume);
            let geometry = c.geometry(lf.rows(), lf.cols()).map_err(at(Stage::Depth))?;
            let depth = range_filter(&disparity_to_depth(&disparity, &geometry), c.z_min, c.z_max)
                .map_err(at(Stage::Depth))?;
            Ok::<_, PipelineError>((disparity, depth, bounds, (volume.evaluated(), volume.exhaustive())))
        })?;
        report.evaluated_hypotheses += volume_counts.0;
        report.exhaustive_hypotheses += volume_counts.1;
        report.coarse_hypotheses += coarse_hypotheses;
        Ok(DepthResult {
            disparity,
            depth,
            coarse,
            bounds,
            evaluated_hypotheses: volume_counts.0,
            exhaustive_hypotheses: volume_counts.1,
            coarse_hypotheses,
        })
    }

    /// Load, preprocess and estimate one frame.
    pub fn process(&self, report: &mut TimingReport) -> Result<(Frame, DepthResult), PipelineError> {
        let raw = timed(&mut report.capture_ms, || self.load())?;
        let frame = timed(&mut report.preprocessing_ms, || self.preprocess(raw))?;
        let result = self.estimate(&frame, report)?;
        Ok((frame, result))
    }

    fn stream_message(&self, result: &DepthResult, frame_id: u64) -> Result<FrameMessage, PipelineError> {
        let (kind, map) = match self.config.stream_kind {
            PayloadKind::Disparity => (PayloadKind::Disparity, &result.disparity),
            _ => (PayloadKind::Depth, &result.depth),
        };
        FrameMessage::from_map(kind, map, frame_id, now_us()).map_err(at(Stage::Stream))
    }

    fn open_stream(&self) -> Result<Option<FrameServer>, PipelineError> {
        let Some(addr) = &self.config.stream else {
            return Ok(None);
        };
        let server = FrameServer::bind(addr.as_str(), ServerConfig::default()).map_err(at(Stage::Stream))?;
        log::info!("streaming on {}", server.local_addr());
        if self.config.stream_clients > 0 && !server.wait_for_clients(self.config.stream_clients, STREAM_WAIT) {
            log::warn!(
                "only {} of {} stream clients connected",
                server.client_count(),
                self.config.stream_clients
            );
        }
        Ok(Some(server))
    }
}

fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

/// Files written by a run, removed again if the run fails.
struct OutputGuard {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    keep: bool,
}

impl OutputGuard {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            dirs: Vec::new(),
            keep: false,
        }
    }

    fn dir(&mut self, path: &Path) -> Result<(), PipelineError> {
        if !path.is_dir() {
            fs::create_dir_all(path)
                .map_err(|e| PipelineError::new(Stage::Output, format!("{}: {e}", path.display())))?;
            self.dirs.push(path.to_owned());
        }
        Ok(())
    }

    fn write(
        &mut self,
        path: PathBuf,
        f: impl FnOnce(&Path) -> Result<(), io::FormatError>,
    ) -> Result<(), PipelineError> {
        self.files.push(path.clone());
        f(&path).map_err(|e| PipelineError::new(Stage::Output, format!("{}: {e}", path.display())))
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.keep {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

fn bool_image(mask: &Image<bool>) -> GrayImage {
    mask.map(|&b| if b { 255 } else { 0 })
}

fn bounds_maps(bounds: &SearchBounds) -> (Image<f32>, Image<f32>) {
    let (w, h) = (bounds.width(), bounds.height());
    (
        Image::from_fn(w, h, |u, v| bounds.get(u, v).0 as f32),
        Image::from_fn(w, h, |u, v| bounds.get(u, v).1 as f32),
    )
}

/// Census codes reduced to one byte per pixel for inspection.
fn census_image(field: &CensusField) -> GrayImage {
    let (w, h) = (field.width(), field.height());
    Image::from_fn(w, h, |u, v| (field.code(u, v) & 0xFF) as u8)
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub frame: Frame,
    pub result: DepthResult,
    pub report: TimingReport,
    pub files: Vec<PathBuf>,
}

/// One frame end to end: writes `disparity.pfm` and `depth.pfm` to the output
/// directory (plus `debug/` with `debug_dump`) and streams the result when
/// an address is configured.
pub fn run_pipeline(config: PipelineConfig) -> Result<RunOutput, PipelineError> {
    let pipeline = Pipeline::new(config)?;
    let c = pipeline.config();
    let mut report = TimingReport::default();
    let (frame, result) = pipeline.process(&mut report)?;

    let mut guard = OutputGuard::new();
    let sending_start = Instant::now();
    guard.dir(&c.out)?;
    guard.write(c.out.join("disparity.pfm"), |p| io::save_pfm(p, &result.disparity))?;
    guard.write(c.out.join("depth.pfm"), |p| io::save_pfm(p, &result.depth))?;
    if c.debug_dump {
        let debug = c.out.join("debug");
        guard.dir(&debug)?;
        for index in frame.light_field.indices().collect::<Vec<_>>() {
            guard.write(debug.join(view_file_name(index)), |p| {
                io::save_pgm(p, frame.light_field.view(index))
            })?;
        }
        let census = crate::census::census_transform(frame.light_field.reference_view(), c.census_radius)
            .map_err(at(Stage::Census))?;
        guard.write(debug.join("census_reference.pgm"), |p| io::save_pgm(p, &census_image(&census)))?;
        if let Some(masks) = &frame.masks {
            let reference = frame.light_field.linear_index(frame.light_field.reference());
            guard.write(debug.join("valid_reference.pgm"), |p| {
                io::save_pgm(p, &bool_image(&masks[reference]))
            })?;
        }
        guard.write(debug.join("coarse.pfm"), |p| io::save_pfm(p, &result.coarse))?;
        let (lo, hi) = bounds_maps(&result.bounds);
        guard.write(debug.join("bounds_min.pfm"), |p| io::save_pfm(p, &lo))?;
        guard.write(debug.join("bounds_max.pfm"), |p| io::save_pfm(p, &hi))?;
        if let Some(gt) = &frame.ground_truth {
            guard.write(debug.join("ground_truth.pfm"), |p| io::save_pfm(p, gt))?;
        }
    }
    if let Some(mut server) = pipeline.open_stream()? {
        server.publish(&pipeline.stream_message(&result, 0)?);
        server.shutdown();
    }
    report.sending_ms += timing::ms(sending_start.elapsed());

    if c.debug_dump {
        let path = c.out.join("debug").join("timing.txt");
        let text = report.to_kv();
        guard.write(path, |p| fs::write(p, text).map_err(io::FormatError::from))?;
    }
    guard.keep = true;
    Ok(RunOutput {
        frame,
        result,
        report,
        files: guard.files.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub frames: usize,
    pub overlap: bool,
    pub per_frame: Vec<TimingReport>,
    pub wall_ms: f64,
}

impl BenchReport {
    pub fn mean(&self) -> TimingReport {
        TimingReport::mean(&self.per_frame)
    }

    pub fn fps(&self) -> f64 {
        if self.wall_ms > 0.0 {
            self.frames as f64 * 1e3 / self.wall_ms
        } else {
            0.0
        }
    }
}

/// Processes the configured input `frames` times. With `overlap`, loading and
/// preprocessing of the next frame run on a second thread while the current
/// frame is matched. No files are written; frames are streamed if configured.
pub fn run_bench(config: PipelineConfig, frames: usize, overlap: bool) -> Result<BenchReport, PipelineError> {
    let pipeline = Pipeline::new(config)?;
    let mut server = pipeline.open_stream()?;
    let mut per_frame = Vec::with_capacity(frames);
    let start = Instant::now();

    let mut finish = |k: usize, result: &DepthResult, mut report: TimingReport| -> Result<(), PipelineError> {
        if let Some(server) = server.as_mut() {
            let msg = pipeline.stream_message(result, k as u64)?;
            timed(&mut report.sending_ms, || server.publish(&msg));
        }
        per_frame.push(report);
        Ok(())
    };

    if overlap {
        thread::scope(|scope| {
            let (tx, rx) = mpsc::sync_channel::<Result<(Frame, TimingReport), PipelineError>>(1);
            let producer = &pipeline;
            scope.spawn(move || {
                for _ in 0..frames {
                    let mut report = TimingReport::default();
                    let prepared = timed(&mut report.capture_ms, || producer.load())
                        .and_then(|raw| timed(&mut report.preprocessing_ms, || producer.preprocess(raw)));
                    let failed = prepared.is_err();
                    if tx.send(prepared.map(|f| (f, report))).is_err() || failed {
                        return;
                    }
                }
            });
            for k in 0..frames {
                let (frame, mut report) = rx
                    .recv()
                    .map_err(|_| PipelineError::new(Stage::Load, "frame source stopped"))??;
                let result = pipeline.estimate(&frame, &mut report)?;
                finish(k, &result, report)?;
            }
            Ok::<_, PipelineError>(())
        })?;
    } else {
        for k in 0..frames {
            let mut report = TimingReport::default();
            let (_, result) = pipeline.process(&mut report)?;
            finish(k, &result, report)?;
        }
    }
    let wall_ms = timing::ms(start.elapsed());
    if let Some(server) = server {
        server.shutdown();
    }
    Ok(BenchReport {
        frames,
        overlap,
        per_frame,
        wall_ms,
    })
}

/// Renders a scene file into `out`: one `view_<t>_<s>.pgm` per view (raw
/// mosaics when `bayer` is set), `ground_truth.pfm` and `visibility.pgm`.
pub fn synthesize(spec_path: &Path, out: &Path, bayer: Option<BayerPattern>) -> Result<Vec<PathBuf>, PipelineError> {
    let spec = SceneSpec::load(spec_path)
        .map_err(|e| PipelineError::new(Stage::Load, format!("{}: {e}", spec_path.display())))?;
    let (lf, gt) = render_lightfield(&spec).map_err(at(Stage::Load))?;
    let visible = visibility_mask(&spec).map_err(at(Stage::Load))?;
    let mut guard = OutputGuard::new();
    guard.dir(out)?;
    for index in lf.indices().collect::<Vec<_>>() {
        let view = lf.view(index);
        let img = match bayer {
            None => view.clone(),
            Some(pattern) => {
                let rgb = RgbImage::from_fn(view.width(), view.height(), |u, v| [view.get(u, v); 3]);
                mosaic_from_rgb(&rgb, pattern).map_err(at(Stage::Preprocess))?.into_raw()
            }
        };
        guard.write(out.join(view_file_name(index)), |p| io::save_pgm(p, &img))?;
    }
    guard.write(out.join("ground_truth.pfm"), |p| io::save_pfm(p, &gt))?;
    guard.write(out.join("visibility.pgm"), |p| io::save_pgm(p, &bool_image(&visible)))?;
    guard.keep = true;
    Ok(guard.files.clone())
}
