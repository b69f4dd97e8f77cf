//! Label assignment, boundary decomposition and voting.

pub mod boundary;
pub mod decompose;
pub mod labels;
pub mod pipeline;
pub mod vote;

pub use boundary::{
    compute_lambda2d, compute_lambda2d_with, find_boundary_gaussians, Endpoint, LAMBDA_MIN,
    LAMBDA_STEP,
};
pub use decompose::{decompose, DecompositionRecord};
pub use labels::{assign_view_labels, LabelMatrix, UNOBSERVED};
pub use pipeline::{
    run_view_pass, segment, select_views, GdMode, Phase, PromptInput, SegParams, SegState,
    SegmentOutput, SegmentationResult, ViewPassStats, VoteMode,
};
pub use vote::{vote_binary, vote_multiobject, ViewCount, Votes};
