//! Camera-guided latent video diffusion and feed-forward Gaussian splatting
//! reconstruction from video latents, at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: tensors, reverse-mode autodiff, finite-difference oracle
//! - [`nn`]: parameter stores, layers, optimizer
//! - [`camera`]: poses, Plücker rays, trajectory normalization, pose errors
//! - [`codec`]: video ↔ latent mapping (lossless space-to-depth, learned)
//! - [`gsplat`]: differentiable Gaussian splatting rasterizer
//! - [`cam_dit`]: diffusion transformer with dual-branch camera conditioning
//! - [`lalrm`]: latent reconstruction model producing pixel-aligned Gaussians
//! - [`pipeline`]: data synthesis, losses, metrics, training, checkpoints
//! - [`cli`]: command-line workflows

pub mod cam_dit;
pub mod camera;
pub mod cli;
pub mod codec;
pub mod error;
pub mod gsplat;
pub mod lalrm;
pub mod nn;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
