use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lfdepth::io::{kv, save_pfm};
use lfdepth::pipeline::{
    report_format, run_bench, run_pipeline, synthesize, Overrides, PipelineConfig, PipelineError, Stage,
};
use lfdepth::preprocess::BayerPattern;
use lfdepth::stream::{FrameClient, PayloadKind};

#[derive(Parser)]
#[command(name = "lfdepth", version, about = "Light field depth estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate depth for one frame.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<u32>,
        #[arg(long)]
        p1: Option<u32>,
        #[arg(long)]
        p2: Option<u32>,
        /// Depth working range in meters, MIN:MAX.
        #[arg(long, value_parser = parse_pair::<f64>)]
        range: Option<(f64, f64)>,
        /// Global disparity range, MIN:MAX.
        #[arg(long, value_parser = parse_pair::<i32>, allow_hyphen_values = true)]
        disparity: Option<(i32, i32)>,
        /// Publish the result to TCP clients on HOST:PORT.
        #[arg(long)]
        stream: Option<String>,
        #[arg(long)]
        debug_dump: bool,
        /// Also print the timing report as key=value lines.
        #[arg(long)]
        kv: bool,
    },
    /// Render a synthetic scene into view files.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write raw Bayer mosaics with this pattern instead of gray views.
        #[arg(long)]
        bayer: Option<BayerPattern>,
    },
    /// Process the configured input repeatedly and report mean stage times.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// Prepare frame k+1 while frame k is matched.
        #[arg(long)]
        overlap: bool,
        #[arg(long)]
        stream: Option<String>,
        #[arg(long)]
        kv: bool,
    },
    /// Receive streamed frames and write them as PFM files.
    Recv {
        addr: String,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many frames.
        #[arg(long)]
        frames: Option<u64>,
    },
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    kv::pair(s).ok_or_else(|| format!("expected MIN:MAX, got {s:?}"))
}

fn load_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    PipelineConfig::load(path).map_err(|e| PipelineError::new(Stage::Config, e))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run {
            config,
            input,
            out,
            lambda,
            p1,
            p2,
            range,
            disparity,
            stream,
            debug_dump,
            kv,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.apply(&Overrides {
                input,
                out,
                lambda,
                p1,
                p2,
                depth_range: range,
                disparity_range: disparity,
                stream,
                debug_dump,
            });
            let out = run_pipeline(cfg)?;
            print!("{}", report_format(&out.report));
            if kv {
                print!("{}", out.report.to_kv());
            }
            for f in &out.files {
                log::info!("wrote {}", f.display());
            }
        }
        Command::Synth { spec, out, bayer } => {
            let files = synthesize(&spec, &out, bayer)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Bench {
            config,
            frames,
            overlap,
            stream,
            kv,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.apply(&Overrides {
                stream,
                ..Default::default()
            });
            let report = run_bench(cfg, frames, overlap)?;
            let mean = report.mean();
            println!(
                "{} frames{}, mean per frame:",
                report.frames,
                if report.overlap { " (overlapped)" } else { "" }
            );
            print!("{}", report_format(&mean));
            println!("wall time {:.1} ms, {:.2} frames/s", report.wall_ms, report.fps());
            if let Some(r) = mean.reduction() {
                println!("search reduction {r:.2}x");
            }
            if kv {
                print!("{}", mean.to_kv());
            }
        }
        Command::Recv { addr, out, frames } => {
            std::fs::create_dir_all(&out).map_err(|e| PipelineError::new(Stage::Output, e))?;
            let client = FrameClient::connect(addr.as_str()).map_err(|e| PipelineError::new(Stage::Stream, e))?;
            let mut count = 0u64;
            for msg in client {
                let msg = msg.map_err(|e| PipelineError::new(Stage::Stream, e))?;
                let name = match msg.kind {
                    PayloadKind::Disparity => "disparity",
                    PayloadKind::Depth => "depth",
                    PayloadKind::Gray8 => "gray",
                };
                let Some(map) = msg
                    .to_map()
                    .or_else(|| msg.to_gray().map(|g| g.map(|&x| f32::from(x))))
                else {
                    continue;
                };
                let path = out.join(format!("{name}_{:06}.pfm", msg.frame_id));
                save_pfm(&path, &map).map_err(|e| PipelineError::new(Stage::Output, e))?;
                count += 1;
                if frames.is_some_and(|n| count >= n) {
                    break;
                }
            }
            println!("received {count} frames");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lfdepth: {e}");
            ExitCode::FAILURE
        }
    }
}
