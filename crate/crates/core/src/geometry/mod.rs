//! Connected regions, longest-line extraction and the GeoDice loss family.

mod centroid;
mod components;
mod diameter;
pub mod loss;

pub use centroid::mass_center;
pub use components::{
    connected_area_check, connected_components, label_components, ConnectedRegion, DEFAULT_MIN_AREA,
};
pub use diameter::{
    angle_difference, direction, farthest_pair, farthest_point_refinement, fold_angle, LineSegment,
    EXHAUSTIVE_MAX_AREA,
};
pub use loss::{
    focal_loss, geo_alignment_loss, geodice_loss, label_angle, soft_iou_loss, weighted_dice_loss,
    LossConfig, LossError, LossValue, Objective,
};
