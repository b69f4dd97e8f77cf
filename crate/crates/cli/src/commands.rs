use std::fmt;
use std::path::{Path, PathBuf};

use splatseg::camera::{import_colmap, read_cameras, write_cameras, Camera};
use splatseg::gaussian::GaussianCloud;
use splatseg::image_io::{write_label_png8, write_mask_png};
use splatseg::ply::{load_ply, save_ply};
use splatseg::prompt::{Polarity, PromptPoint};
use splatseg::provider::{FileProvider, HttpProvider, MaskProvider, OracleTarget};
use splatseg::render::{render_labeled, render_object_mask, RenderOptions};
use splatseg::seg::{segment, PromptInput, SegParams, SegmentationResult, VoteMode};
use splatseg::synth::{evaluate_run, gen_scene, preset, EvalReport, SynthScene};

use crate::args::{ConvertArgs, EvalArgs, GenArgs, SegmentArgs};

/// Environment variable naming the default mask service.
pub const PROVIDER_ENV: &str = "SPLATSEG_PROVIDER_URL";

/// A failed command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable inputs or invalid parameters (exit 2).
    Config(String),
    /// The pipeline started but could not finish (exit 3).
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Pipeline(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Pipeline(m) => write!(f, "pipeline aborted: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<splatseg::Error> for CliError {
    fn from(e: splatseg::Error) -> Self {
        use splatseg::Error as E;
        match e {
            E::Io { .. }
            | E::Stream(_)
            | E::Schema(_)
            | E::Data { .. }
            | E::Header(_)
            | E::EmptyCloud
            | E::Param(_)
            | E::Camera(_)
            | E::Config(_)
            | E::Image(_)
            | E::Json(_) => CliError::Config(e.to_string()),
            _ => CliError::Pipeline(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses `x,y[,fg|bg];...`.
pub fn parse_points(s: &str) -> CliResult<Vec<PromptPoint>> {
    let mut out = Vec::new();
    for item in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = item.split(',').map(str::trim).collect();
        let bad = || config(format!("--points: cannot parse `{item}`, expected x,y[,fg|bg]"));
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let x: f64 = parts[0].parse().map_err(|_| bad())?;
        let y: f64 = parts[1].parse().map_err(|_| bad())?;
        let polarity = match parts.get(2).copied() {
            None | Some("fg") | Some("foreground") => Polarity::Foreground,
            Some("bg") | Some("background") => Polarity::Background,
            Some(_) => return Err(bad()),
        };
        out.push(PromptPoint { x, y, polarity });
    }
    if out.is_empty() {
        return Err(config("--points: no points given"));
    }
    Ok(out)
}

fn read_config(path: &Path) -> CliResult<SegmentArgs> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config(format!("--config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config(format!("--config {}: {e}", path.display())))
}

/// Everything `segment` needs, resolved from flags and the config file.
pub struct SegmentJob {
    pub cloud: GaussianCloud,
    pub cameras: Vec<Camera>,
    pub scene: Option<SynthScene>,
    pub provider: Box<dyn MaskProvider>,
    pub view0: u32,
    pub points: Option<Vec<PromptPoint>>,
    pub params: SegParams,
    pub object: u16,
    pub out: PathBuf,
}

impl SegmentJob {
    pub fn resolve(args: SegmentArgs) -> CliResult<SegmentJob> {
        let args = match &args.config {
            Some(path) => {
                let file = read_config(path)?;
                args.merge(file)
            }
            None => args,
        };
        let mut params = SegParams::default();
        if let Some(t) = args.tau {
            params.tau = t;
        }
        if let Some(e) = args.epsilon {
            params.epsilon = e;
        }
        if let Some(g) = args.gd {
            params.gd = g.into();
        }
        if let Some(m) = args.mode {
            params.mode = m.into();
        }
        if let Some(v) = args.views_percent {
            params.views_percent = v;
        }
        params.discard_cut = args.discard_cut;
        params.validate()?;

        let (cloud, cameras, scene) = match (&args.preset, &args.scene) {
            (Some(_), Some(_)) => return Err(config("--preset and --scene are mutually exclusive")),
            (Some(name), None) => {
                let scene = gen_scene(&preset(name)?, args.seed.unwrap_or(0))?;
                (scene.cloud.clone(), scene.cameras.clone(), Some(scene))
            }
            (None, Some(path)) => {
                let cams = args
                    .cameras
                    .as_ref()
                    .ok_or_else(|| config("missing --cameras"))?;
                (load_ply(path)?, read_cameras(cams)?, None)
            }
            (None, None) => return Err(config("missing --scene (or --preset)")),
        };
        if cameras.is_empty() {
            return Err(config("camera file holds no cameras"));
        }

        let points = match (&args.points, &scene) {
            (Some(p), _) => Some(parse_points(p)?),
            (None, Some(s)) if args.masks.is_none() => {
                // The preset's default click lives in camera 0.
                if args.view0.is_some_and(|v| v != s.cameras[0].id) {
                    return Err(config("--view0 needs --points"));
                }
                Some(vec![s.default_prompt(args.object.unwrap_or(1))?])
            }
            (None, _) => None,
        };
        let view0 = args.view0.unwrap_or(cameras[0].id);
        if points.is_some() && !cameras.iter().any(|c| c.id == view0) {
            return Err(config(format!("--view0 {view0} is not a camera id")));
        }

        let provider: Box<dyn MaskProvider> = if let Some(dir) = &args.masks {
            if !dir.is_dir() {
                return Err(config(format!("--masks {} is not a directory", dir.display())));
            }
            Box::new(FileProvider::new(dir))
        } else if let Some(s) = &scene {
            Box::new(s.oracle(OracleTarget::FromPrompts))
        } else {
            let url = args
                .provider_url
                .clone()
                .or_else(|| std::env::var(PROVIDER_ENV).ok())
                .ok_or_else(|| {
                    config(format!(
                        "no mask source: pass --masks, --provider-url or set {PROVIDER_ENV}"
                    ))
                })?;
            Box::new(HttpProvider::new(url))
        };
        if points.is_none() && args.masks.is_none() {
            return Err(config("missing --points (required unless --masks is given)"));
        }

        Ok(SegmentJob {
            cloud,
            cameras,
            scene,
            provider,
            view0,
            points,
            params,
            object: args.object.unwrap_or(1),
            out: args.out.unwrap_or_else(|| PathBuf::from("splatseg-out")),
        })
    }
}

/// Files written by a segment run, relative to its output directory.
pub mod layout {
    pub const RESULT: &str = "result.json";
    pub const CLOUD: &str = "cloud.ply";
    pub const SEGMENTED: &str = "segmented.ply";
    pub const MASKS: &str = "masks";
    pub const METRICS: &str = "metrics";
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Active Gaussians assigned to `object`; binary runs only know label 1.
pub fn object_subset(result: &SegmentationResult, object: u16) -> Vec<usize> {
    let label = match result.params.mode {
        VoteMode::Binary => 1,
        VoteMode::Multi => object,
    };
    (0..result.len())
        .filter(|&i| result.active[i] && result.object_id[i] == label)
        .collect()
}

/// Runs the pipeline and writes result JSON, both PLYs, per-view masks and,
/// for presets, metrics.
pub fn run_segment(job: SegmentJob) -> CliResult<SegmentationResult> {
    let prompts = job.points.as_ref().map(|p| PromptInput {
        view0: job.view0,
        points: p,
    });
    let out = segment(
        &job.cloud,
        &job.cameras,
        job.provider.as_ref(),
        prompts,
        &job.params,
        &mut |phase| log::info!("{phase:?}"),
    )?;

    create_dir(&job.out)?;
    write_file(&job.out.join(layout::RESULT), out.result.to_json()?.as_bytes())?;
    save_ply(&out.cloud, job.out.join(layout::CLOUD))?;
    let subset = object_subset(&out.result, job.object);
    save_ply(&out.cloud.subset(&subset)?, job.out.join(layout::SEGMENTED))?;

    let masks = job.out.join(layout::MASKS);
    create_dir(&masks)?;
    let active = out.result.active_indices();
    for cam in &job.cameras {
        let path = masks.join(format!("view_{:03}.png", cam.id));
        match out.result.params.mode {
            VoteMode::Binary => {
                write_mask_png(&render_object_mask(&out.cloud, &subset, cam)?, &path)?;
            }
            VoteMode::Multi => {
                let rendered = render_labeled(
                    &out.cloud,
                    Some(&active),
                    &out.result.object_id,
                    cam,
                    &RenderOptions::default(),
                )?;
                write_label_png8(&rendered.id_map.expect("labels requested"), &path)?;
            }
        }
    }

    if let Some(scene) = &job.scene {
        let report = evaluate_run(scene, &out.cloud, &out.result, job.object)?;
        report.write(&job.out, layout::METRICS)?;
    }
    Ok(out.result)
}

pub fn run_gen(args: &GenArgs) -> CliResult<()> {
    let scene = gen_scene(&preset(&args.preset)?, args.seed)?;
    create_dir(&args.out)?;
    save_ply(&scene.cloud, args.out.join("scene.ply"))?;
    write_cameras(&scene.cameras, args.out.join("cameras.jsonl"))?;
    let (masks, labels) = (args.out.join("masks"), args.out.join("labels"));
    create_dir(&masks)?;
    create_dir(&labels)?;
    for (cam, gt) in scene.cameras.iter().zip(&scene.gt_masks) {
        write_mask_png(&gt.select(args.object), masks.join(format!("mask_{}.png", cam.id)))?;
        write_label_png8(gt, labels.join(format!("mask_{}.png", cam.id)))?;
    }
    Ok(())
}

pub fn run_eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let scene = gen_scene(&preset(&args.preset)?, args.seed)?;
    let text = std::fs::read_to_string(args.run.join(layout::RESULT))
        .map_err(|e| config(format!("{}: {e}", args.run.join(layout::RESULT).display())))?;
    let result = SegmentationResult::from_json(&text)?;
    let cloud = load_ply(args.run.join(layout::CLOUD))?;
    if cloud.len() != result.len() {
        return Err(config(format!(
            "{} holds {} Gaussians but the result covers {}",
            layout::CLOUD,
            cloud.len(),
            result.len()
        )));
    }
    let report = evaluate_run(&scene, &cloud, &result, args.object)?;
    report.write(&args.run, layout::METRICS)?;
    Ok(report)
}

pub fn run_convert(args: &ConvertArgs) -> CliResult<usize> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| config(format!("{}: {e}", p.display())))
    };
    let cams = import_colmap(&read(&args.cameras_txt)?, &read(&args.images_txt)?)?;
    write_cameras(&cams, &args.out)?;
    Ok(cams.len())
}
