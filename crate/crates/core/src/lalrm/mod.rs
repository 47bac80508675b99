//! Latent reconstruction model: video latents and camera rays to 3D Gaussians.

mod config;
mod lift;
mod model;

pub use config::{LaLRMConfig, Variant};
pub use lift::{lift, lift_cloud, pixel_rays, splat_cloud, PixelRays};
pub use model::{FeatureMap, LaLRM};
