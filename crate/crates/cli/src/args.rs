use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use splatseg::seg::{GdMode, VoteMode};

#[derive(Debug, Parser)]
#[command(name = "splatseg", version, about = "Segment objects in Gaussian splatting scenes from point prompts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one object (or every labelled object) and write the artifacts.
    Segment(SegmentArgs),
    /// Serve the interactive HTTP API.
    Serve(ServeArgs),
    /// Write a synthetic preset scene to disk.
    Gen(GenArgs),
    /// Score a segment run on a synthetic preset.
    Eval(EvalArgs),
    /// Convert a COLMAP text model to the camera JSON-lines format.
    ConvertColmap(ConvertArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GdArg {
    On,
    Off,
    Delete,
}

impl From<GdArg> for GdMode {
    fn from(g: GdArg) -> Self {
        match g {
            GdArg::On => GdMode::On,
            GdArg::Off => GdMode::Off,
            GdArg::Delete => GdMode::Delete,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Binary,
    Multi,
}

impl From<ModeArg> for VoteMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Binary => VoteMode::Binary,
            ModeArg::Multi => VoteMode::Multi,
        }
    }
}

/// Flags of `segment`. Every flag may also come from `--config`; flags win.
#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentArgs {
    /// TOML file with any of the flags below (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Scene PLY in the 3D-GS layout.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Camera JSON-lines file.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Use a built-in synthetic preset instead of --scene/--cameras.
    #[arg(long, conflicts_with_all = ["scene", "cameras"])]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Camera id of the view the points were clicked in.
    #[arg(long)]
    pub view0: Option<u32>,
    /// Clicks as `x,y[,fg|bg];...`.
    #[arg(long)]
    pub points: Option<String>,
    /// Directory of precomputed `mask_{id}.png` files.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Mask service URL; defaults to $SPLATSEG_PROVIDER_URL.
    #[arg(long)]
    pub provider_url: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub gd: Option<GdArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub views_percent: Option<f64>,
    /// Drop the out-of-mask child of each split instead of keeping it.
    #[arg(long)]
    pub discard_cut: bool,
    /// Object written to `segmented.ply` and scored by `eval`.
    #[arg(long)]
    pub object: Option<u16>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SegmentArgs {
    /// Fills unset flags from `file`.
    pub fn merge(self, file: SegmentArgs) -> SegmentArgs {
        SegmentArgs {
            config: self.config,
            scene: self.scene.or(file.scene),
            cameras: self.cameras.or(file.cameras),
            preset: self.preset.or(file.preset),
            seed: self.seed.or(file.seed),
            view0: self.view0.or(file.view0),
            points: self.points.or(file.points),
            masks: self.masks.or(file.masks),
            provider_url: self.provider_url.or(file.provider_url),
            tau: self.tau.or(file.tau),
            epsilon: self.epsilon.or(file.epsilon),
            gd: self.gd.or(file.gd),
            mode: self.mode.or(file.mode),
            views_percent: self.views_percent.or(file.views_percent),
            discard_cut: self.discard_cut || file.discard_cut,
            object: self.object.or(file.object),
            out: self.out.or(file.out),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["scene", "cameras"])]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Default mask service URL; defaults to $SPLATSEG_PROVIDER_URL.
    #[arg(long)]
    pub provider_url: Option<String>,
    /// Concurrent segmentation jobs; defaults to the number of hardware threads.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Object whose binary masks go to `masks/`.
    #[arg(long, default_value_t = 1)]
    pub object: u16,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory of a `segment` run on the same preset and seed.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub object: u16,
}

#[derive(Clone, Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub cameras_txt: PathBuf,
    #[arg(long)]
    pub images_txt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
