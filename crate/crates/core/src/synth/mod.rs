//! Synthetic scenes with known labels, and mask metrics for scoring runs.

pub mod eval;
pub mod metrics;
pub mod scene;

pub use eval::{evaluate_run, evaluate_subset, mean_metrics, EvalReport, ViewMetrics};
pub use metrics::{boundary_band, mask_metrics, mask_metrics_soft, MaskMetrics, DEFAULT_BAND};
pub use scene::{
    gen_scene, preset, preset_names, ring_cameras, ObjectSpec, SceneConfig, Shape, SynthScene,
};
