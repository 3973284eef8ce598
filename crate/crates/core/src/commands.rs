//! The `cowskel` command line: fit, synth, detect, eval and render.
//!
//! Settings come from an optional JSON file (`--config`) overridden by
//! flags. The effective settings are echoed into every JSON output.
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::confmap::{read_cmap, Stream, DEFAULT_NMS_RADIUS, DEFAULT_NMS_THRESHOLD};
use crate::error::{Error, Result};
use crate::grouping::{DetectParams, DEFAULT_BANDWIDTH_FACTOR, DEFAULT_SUPPORT_GATE};
use crate::metrics::{evaluate, EvalParams, EvalReport, DEFAULT_LEGHOOF_THRESHOLD, DEFAULT_THETA_FACTOR};
use crate::model::{fit_constraints, ConstraintModel};
use crate::pipeline::{run_sequence, PipelineParams, DEFAULT_FPS};
use crate::render::{frame_image_name, render_frame, render_svg};
use crate::schema::Sequence;
use crate::synth::{load_scene_config, write_dataset, Manifest, Scene};
use crate::temporal::{TemporalParams, DEFAULT_GATE_FACTOR, DEFAULT_MEDIAN_WINDOW, DEFAULT_OUTLIER_FACTOR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub nms_radius: usize,
    pub nms_threshold: f64,
    pub bandwidth_factor: f64,
    pub support_gate: f64,
    pub median_window: usize,
    pub gate_factor: f64,
    pub outlier_factor: f64,
    pub theta_factor: f64,
    pub leghoof_threshold: f64,
    pub fps: f64,
    pub seed: Option<u64>,
    /// Detection worker threads; 0 uses every core.
    pub workers: usize,
    /// Also write SVG overlays when rendering.
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            input: None,
            output: None,
            nms_radius: DEFAULT_NMS_RADIUS,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            bandwidth_factor: DEFAULT_BANDWIDTH_FACTOR,
            support_gate: DEFAULT_SUPPORT_GATE,
            median_window: DEFAULT_MEDIAN_WINDOW,
            gate_factor: DEFAULT_GATE_FACTOR,
            outlier_factor: DEFAULT_OUTLIER_FACTOR,
            theta_factor: DEFAULT_THETA_FACTOR,
            leghoof_threshold: DEFAULT_LEGHOOF_THRESHOLD,
            fps: DEFAULT_FPS,
            seed: None,
            workers: 0,
            svg: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn pipeline(&self) -> PipelineParams {
        PipelineParams {
            detect: DetectParams {
                nms_radius: self.nms_radius,
                nms_threshold: self.nms_threshold,
                bandwidth_factor: self.bandwidth_factor,
                support_gate: self.support_gate,
            },
            temporal: TemporalParams {
                gate_factor: self.gate_factor,
                median_window: self.median_window,
                outlier_factor: self.outlier_factor,
            },
            fps: self.fps,
            workers: self.workers,
        }
    }

    pub fn eval(&self) -> EvalParams {
        EvalParams {
            leghoof_threshold: self.leghoof_threshold,
            theta_factor: self.theta_factor,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    fn validate(&self) -> std::result::Result<(), CliError> {
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return Err(CliError::Usage(format!(
                "--median-window must be odd and positive, got {}",
                self.median_window
            )));
        }
        let positive = [
            ("--bandwidth-factor", self.bandwidth_factor),
            ("--theta-factor", self.theta_factor),
            ("--leghoof-threshold", self.leghoof_threshold),
            ("--fps", self.fps),
        ];
        for (flag, v) in positive {
            if !(v > 0.0) {
                return Err(CliError::Usage(format!("{flag} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fits a constraint model to the upper-body labels in `labels`.
pub fn cmd_fit(labels: &Path, out: &Path, cfg: &RunConfig) -> Result<ConstraintModel> {
    let seq = Sequence::load(labels)?;
    let model = fit_constraints(&seq.upper_labels())?;
    log::info!(
        "fit: {} frames used, body length {:.1} px",
        model.frames_used,
        model.body_length()
    );
    let mut doc = model.to_json();
    doc.config = Some(cfg.to_value());
    write_json(&doc, out)?;
    log::info!("fit: wrote {}", out.display());
    Ok(model)
}

/// Generates a synthetic dataset from a scene config file.
pub fn cmd_synth(config: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<Manifest> {
    let mut scene_cfg = load_scene_config(config)?;
    if let Some(seed) = cfg.seed {
        scene_cfg.seed = seed;
    }
    let scene = Scene::new(scene_cfg)?;
    log::info!(
        "synth: {} frames, {} cows, seed {}",
        scene.len(),
        scene.config.cows.len(),
        scene.config.seed
    );
    let manifest = write_dataset(&scene, out_dir)?;
    log::info!("synth: wrote {} files to {}", manifest.files.len(), out_dir.display());
    Ok(manifest)
}

/// Frame indices of the `frame_NNNNNN.color.cmap` files in `dir`, sorted.
pub fn list_cmap_frames(dir: &Path) -> Result<Vec<u64>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let suffix = format!(".{}.cmap", Stream::Color.extension());
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(idx) = name.strip_prefix("frame_").and_then(|r| r.strip_suffix(&suffix)) {
            if let Ok(i) = idx.parse::<u64>() {
                frames.push(i);
            }
        }
    }
    frames.sort_unstable();
    Ok(frames)
}

/// Runs the full pipeline over the cmap frames in `dir`.
pub fn cmd_detect(model_path: &Path, dir: &Path, out: &Path, cfg: &RunConfig) -> Result<Sequence> {
    let model = ConstraintModel::load(model_path)?;
    let frames = list_cmap_frames(dir)?;
    if frames.is_empty() {
        return Err(Error::Format(format!("no cmap frames found in {}", dir.display())));
    }
    if let Some(w) = frames.windows(2).find(|w| w[1] != w[0] + 1) {
        return Err(Error::Format(format!(
            "frame indices are not contiguous: {} is followed by {}",
            w[0], w[1]
        )));
    }
    log::info!("detect: {} frames from {}", frames.len(), dir.display());
    let load = |i: usize| {
        let t = frames[i];
        let color = read_cmap(dir.join(crate::confmap::cmap_file_name(t, Stream::Color)))?;
        let diff = read_cmap(dir.join(crate::confmap::cmap_file_name(t, Stream::Diff)))?;
        if color.frame_index != t || diff.frame_index != t {
            return Err(Error::Format(format!(
                "frame {t}: header frame indices are {} and {}",
                color.frame_index, diff.frame_index
            )));
        }
        Ok((color, diff))
    };
    let (width, height) = {
        let (c, _) = load(0)?;
        (c.width, c.height)
    };
    let result = run_sequence(frames.len(), load, &model, &cfg.pipeline())?;
    let n_cows: usize = result.frames.iter().map(|f| f.cows.len()).sum();
    log::info!("detect: {} cows in {} tracks", n_cows, result.tracks.len());
    let mut seq = result.to_sequence(width, height);
    seq.config = Some(cfg.to_value());
    seq.save(out)?;
    log::info!("detect: wrote {}", out.display());
    Ok(seq)
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    config: serde_json::Value,
}

/// Scores detections against ground truth; `model` defines VCP validity.
pub fn cmd_eval(detections: &Path, truth: &Path, model_path: &Path, out: &Path, cfg: &RunConfig) -> Result<EvalReport> {
    let det = Sequence::load(detections)?;
    let gt = Sequence::load(truth)?;
    let model = ConstraintModel::load(model_path)?;
    let size = gt
        .size()
        .or(det.size())
        .ok_or_else(|| Error::Format(format!("{}: width and height are required", truth.display())))?;
    let report = evaluate(&det.frames, &gt.frames, &model, &cfg.eval(), size)?;
    write_json(
        &ReportFile {
            report: &report,
            config: cfg.to_value(),
        },
        out,
    )?;
    log::info!("eval: wrote {}", out.display());
    Ok(report)
}

/// Draws one PPM (and optionally SVG) overlay per detection frame.
pub fn cmd_render(detections: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<usize> {
    let det = Sequence::load(detections)?;
    let (w, h) = det
        .size()
        .ok_or_else(|| Error::Format(format!("{}: width and height are required", detections.display())))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for f in &det.frames {
        render_frame(f, w, h).write_ppm(out_dir.join(frame_image_name(f.index, "ppm")))?;
        if cfg.svg {
            let path = out_dir.join(frame_image_name(f.index, "svg"));
            std::fs::write(&path, render_svg(f, w, h)).map_err(|e| Error::io(&path, e))?;
        }
    }
    log::info!("render: {} frames to {}", det.frames.len(), out_dir.display());
    Ok(det.frames.len())
}

#[derive(Debug, Parser)]
#[command(name = "cowskel", version, about = "Cow skeleton grouping, tracking and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a constraint model to labelled skeletons (--input labels.json --output model.json)
    Fit,
    /// Generate a synthetic dataset (--input scene.json --output DIR)
    Synth,
    /// Detect, track and filter cows in a cmap directory (--model --input DIR --output detections.json)
    Detect,
    /// Score detections against ground truth (--model --input detections.json --truth truth.json --output report.json)
    Eval {
        #[arg(long)]
        truth: PathBuf,
    },
    /// Draw overlays for every detection frame (--input detections.json --output DIR)
    Render,
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub nms_radius: Option<usize>,
    #[arg(long, global = true)]
    pub nms_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub bandwidth_factor: Option<f64>,
    #[arg(long, global = true)]
    pub median_window: Option<usize>,
    #[arg(long, global = true)]
    pub theta_factor: Option<f64>,
    #[arg(long, global = true)]
    pub leghoof_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub svg: bool,
}

impl Flags {
    /// Config file contents with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone().into();
                }
            )*};
        }
        over!(model, input, output, seed);
        over!(
            nms_radius,
            nms_threshold,
            bandwidth_factor,
            median_window,
            theta_factor,
            leghoof_threshold,
            fps,
            workers
        );
        c.svg |= self.svg;
        Ok(c)
    }
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    v.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required for this command")))
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.flags.resolve()?;
    cfg.validate()?;
    match &cli.command {
        Command::Fit => {
            cmd_fit(
                required(&cfg.input, "--input")?,
                required(&cfg.output, "--output")?,
                &cfg,
            )?;
        }
        Command::Synth => {
            cmd_synth(
                required(&cfg.input, "--input")?,
                required(&cfg.output, "--output")?,
                &cfg,
            )?;
        }
        Command::Detect => {
            cmd_detect(
                required(&cfg.model, "--model")?,
                required(&cfg.input, "--input")?,
                required(&cfg.output, "--output")?,
                &cfg,
            )?;
        }
        Command::Eval { truth } => {
            let report = cmd_eval(
                required(&cfg.input, "--input")?,
                truth,
                required(&cfg.model, "--model")?,
                required(&cfg.output, "--output")?,
                &cfg,
            )?;
            print!("{}", report.to_table());
        }
        Command::Render => {
            cmd_render(
                required(&cfg.input, "--input")?,
                required(&cfg.output, "--output")?,
                &cfg,
            )?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `cowskel --help` for usage");
            }
            e.exit_code()
        }
    }
}
