use super::config::LaLRMConfig;
use crate::camera::Trajectory;
use crate::error::{contract_err, shape_err, Result};
use crate::gsplat::{GaussianCloud, SplatVars};
use crate::numerics::{Tape, Tensor, Var};

/// Per-pixel ray origins and unit directions, `[T·H·W, 3]` each, in the
/// order of the feature map rows.
#[derive(Clone, Debug)]
pub struct PixelRays {
    pub origins: Tensor,
    pub directions: Tensor,
}

/// Geometric viewing rays through pixel centers of a `height × width` raster.
/// The trajectory intrinsics must already match that raster.
pub fn pixel_rays(traj: &Trajectory, height: usize, width: usize) -> Result<PixelRays> {
    let n = traj.len() * height * width;
    let mut origins = Vec::with_capacity(3 * n);
    let mut directions = Vec::with_capacity(3 * n);
    for (f, pose) in traj.poses().iter().enumerate() {
        for y in 0..height {
            for x in 0..width {
                let d = pose.pixel_direction(x as f64 + 0.5, y as f64 + 0.5)?;
                if !d.iter().all(|v| v.is_finite()) {
                    return Err(shape_err!("frame {f}, pixel ({y}, {x}): degenerate viewing ray"));
                }
                origins.extend(pose.t.iter().map(|&v| v as f32));
                directions.extend(d.iter().map(|&v| v as f32));
            }
        }
    }
    Ok(PixelRays { origins: Tensor::new(&[n, 3], origins)?, directions: Tensor::new(&[n, 3], directions)? })
}

/// Maps the 12 raw channels to splat attributes: sigmoid colors, clamped
/// exponential scales, normalized quaternions, sigmoid opacities, and
/// positions at `origin + dist·dir` with `dist ∈ (near, far)`.
pub fn lift(tape: &mut Tape, features: Var, rays: &PixelRays, cfg: &LaLRMConfig) -> Result<SplatVars> {
    let s = tape.shape(features).to_vec();
    let n = rays.origins.shape()[0];
    if s != [n, 12] {
        return Err(contract_err!("lift: features {s:?} do not match {n} pixel rays"));
    }
    let rgb = tape.narrow(features, 1, 0, 3)?;
    let colors = tape.sigmoid(rgb);
    let raw_scale = tape.narrow(features, 1, 3, 3)?;
    let raw_scale = tape.clamp(raw_scale, (1e-6f32).ln(), (1e2f32).ln());
    let scales = tape.exp(raw_scale);
    let quat = tape.narrow(features, 1, 6, 4)?;
    let rotations = tape.l2_normalize(quat, 1e-8)?;
    let raw_opacity = tape.narrow(features, 1, 10, 1)?;
    let opacity = tape.sigmoid(raw_opacity);
    let opacities = tape.reshape(opacity, &[n])?;
    let raw_dist = tape.narrow(features, 1, 11, 1)?;
    let unit = tape.sigmoid(raw_dist);
    let dist = tape.scale(unit, (cfg.far - cfg.near) as f32);
    let dist = tape.add_scalar(dist, cfg.near as f32);
    let dirs = tape.constant(rays.directions.clone());
    let offset = tape.mul(dist, dirs)?;
    let origins = tape.constant(rays.origins.clone());
    let positions = tape.add(origins, offset)?;
    Ok(SplatVars { positions, scales, rotations, colors, opacities })
}

/// Reads splat attributes off the tape into a cloud.
pub fn splat_cloud(tape: &Tape, vars: &SplatVars) -> GaussianCloud {
    let take3 = |v: Var| tape.value(v).data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    GaussianCloud {
        positions: take3(vars.positions),
        scales: take3(vars.scales),
        rotations: tape.value(vars.rotations).data().chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
        colors: take3(vars.colors),
        opacities: tape.value(vars.opacities).data().to_vec(),
    }
}

/// Non-differentiable lift of a decoded `[T·H′·W′, 12]` feature map. `traj`
/// holds the source cameras at height `src_height`; they are rescaled to the
/// `(H′, W′)` Gaussian raster here.
pub fn lift_cloud(features: &Tensor, traj: &Trajectory, src_height: usize, raster: (usize, usize), cfg: &LaLRMConfig) -> Result<GaussianCloud> {
    let (height, width) = raster;
    let cams = traj.rescaled(height as f64 / src_height as f64);
    let rays = pixel_rays(&cams, height, width)?;
    let mut tape = Tape::new();
    let f = tape.constant(features.clone());
    let vars = lift(&mut tape, f, &rays, cfg)?;
    Ok(splat_cloud(&tape, &vars))
}
