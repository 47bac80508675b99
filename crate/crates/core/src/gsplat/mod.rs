//! Differentiable 3D Gaussian splatting.

mod cloud;
mod gradcheck;
mod image;
mod raster;

pub use cloud::{covariance_from, load_splat, quat_to_matrix, read_splat, save_splat, write_splat, GaussianCloud};
pub use gradcheck::{gradient_check_render, GradCheckReport};
pub use image::{quantize, read_png, write_png};
pub use raster::{
    project, rasterize, rasterize_backward, rasterize_forward, Projection, RasterState, RenderSettings, RenderedImage,
    SplatGrads, SplatParams, SplatVars, ALPHA_MAX,
};
