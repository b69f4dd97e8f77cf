//! Interactive segmentation of 3D Gaussian Splatting scenes from 2D point prompts.
//!
//! The pipeline lifts clicks in one view to 3D anchors, gathers a mask per
//! view from a [`provider::MaskProvider`], labels Gaussians by where their
//! centers land in each mask, splits Gaussians that straddle a mask boundary,
//! and fuses the per-view labels by voting. See the guide under `book/` for
//! the geometry behind each step.

pub mod camera;
pub mod edit;
pub mod error;
pub mod gaussian;
pub mod image_io;
pub mod ply;
pub mod prompt;
pub mod provider;
pub mod render;
pub mod seg;
pub mod sh;
pub mod synth;

pub use error::{Error, Result};

/// The guide's snippets, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/clouds.md")]
    struct Clouds;
    #[doc = include_str!("../../../book/src/projection.md")]
    struct Projection;
    #[doc = include_str!("../../../book/src/rendering.md")]
    struct Rendering;
    #[doc = include_str!("../../../book/src/prompts.md")]
    struct Prompts;
    #[doc = include_str!("../../../book/src/voting.md")]
    struct Voting;
    #[doc = include_str!("../../../book/src/decomposition.md")]
    struct Decomposition;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    struct Synthetic;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
    #[doc = include_str!("../../../book/src/service.md")]
    struct Service;
}
