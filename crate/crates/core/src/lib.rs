//! Synthetic sketch labelings, sketch-recognition features, LLM feedback
//! evaluation and the nonparametric analysis battery that relates them.

// `!(x > 0.0)` guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod render;
pub mod stats;
pub mod synth;

pub use contour::{extract_contours, load_mask, Contour, MaskImage};
pub use error::{Error, Result};
pub use geometry::{path_length, BBox, Point2D};
pub use synth::{Labeling, ResampleConfig, Stroke};
