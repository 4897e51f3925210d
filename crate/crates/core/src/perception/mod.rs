//! Segmentation oracle and keypoint-stabilization pipeline: centroid,
//! front/back mask splitting, minimum-area oriented bounding box, and
//! stable clockwise keypoint ordering.

mod keypoints;
mod loss;
mod mask;
mod obb;
mod raster;
mod split;

pub use keypoints::{order_keypoints, signed_area, KeypointSet};
pub use loss::{splitter_loss, SplitterLoss, SplitterLossWeights, WeightSchedule, BCE_EPS};
pub use mask::{centroid, read_pgm, write_pgm, BinaryMask, SoftMask};
pub use obb::{convex_hull, min_area_obb, ObbCorners};
pub use raster::{project_footprint, project_front_hint, rasterize_car, RasterOutput};
pub use split::{split_mask, SplitResult};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PerceptionError {
    #[error("target projects to zero pixels inside the image")]
    TargetNotVisible,
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("front hint coincides with the mask centroid")]
    DegenerateHint,
    #[error("raster dimensions do not match")]
    ShapeMismatch,
    #[error("mask is empty or collinear; no rectangle fits")]
    DegenerateMask,
    #[error("corners do not split two and two between front and back")]
    AmbiguousAssignment,
}
