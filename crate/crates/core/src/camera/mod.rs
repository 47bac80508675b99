//! Camera poses, Plücker ray embeddings, trajectory normalization, and pose
//! error metrics.

mod plucker;
mod pose;
mod trajectory;

pub use plucker::{plucker_embed, plucker_pixel, PluckerOptions, RayDirection};
pub use pose::{axis_angle, intrinsics, random_rotation, CameraPose};
pub use trajectory::{
    format_trajectory, normalize_trajectory, parse_trajectory, pose_errors, read_trajectory, rotation_angle,
    trajectory_errors, write_trajectory, Normalization, Trajectory,
};
