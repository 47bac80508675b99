use nalgebra::Vector3;

use super::pose::CameraPose;
use super::trajectory::Trajectory;
use crate::error::{contract_err, Error, Result};
use crate::numerics::Tensor;

/// How the ray direction `d` of a pixel is formed before normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RayDirection {
    /// `d = R K⁻¹[u, v, 1]ᵀ + t`, with the additive camera center.
    #[default]
    WithTranslation,
    /// `d = R K⁻¹[u, v, 1]ᵀ`, the geometric viewing ray.
    Pure,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PluckerOptions {
    pub direction: RayDirection,
    /// Added to integer pixel indices; 0.5 samples pixel centers.
    pub pixel_offset: f64,
}

impl Default for PluckerOptions {
    fn default() -> Self {
        Self { direction: RayDirection::WithTranslation, pixel_offset: 0.5 }
    }
}

/// Plücker coordinates `(t × d′, d′)` of image point `(u, v)`, `d′ = d / ‖d‖`.
pub fn plucker_pixel(pose: &CameraPose, u: f64, v: f64, direction: RayDirection) -> Result<[f64; 6]> {
    let kinv = pose
        .k
        .try_inverse()
        .ok_or_else(|| contract_err!("plucker: intrinsics matrix is singular"))?;
    let mut d = pose.r * (kinv * Vector3::new(u, v, 1.0));
    if direction == RayDirection::WithTranslation {
        d += pose.t;
    }
    let n = d.norm();
    if !(n > 1e-12) {
        return Err(contract_err!("plucker: degenerate ray at ({u}, {v}), ‖d‖ = {n:e}"));
    }
    let d = d / n;
    let m = pose.t.cross(&d);
    Ok([m.x, m.y, m.z, d.x, d.y, d.z])
}

/// Per-pixel Plücker embedding of a trajectory, shape `[T, H, W, 6]`.
pub fn plucker_embed(traj: &Trajectory, height: usize, width: usize, opts: PluckerOptions) -> Result<Tensor> {
    if height == 0 || width == 0 {
        return Err(contract_err!("plucker_embed: raster must be at least 1×1, got {height}×{width}"));
    }
    let t = traj.len();
    let mut out = Vec::with_capacity(t * height * width * 6);
    for (f, pose) in traj.poses().iter().enumerate() {
        for v in 0..height {
            for u in 0..width {
                let p = plucker_pixel(pose, u as f64 + opts.pixel_offset, v as f64 + opts.pixel_offset, opts.direction)
                    .map_err(|e| match e {
                        Error::Contract(msg) => contract_err!("frame {f}, pixel (u={u}, v={v}): {msg}"),
                        other => other,
                    })?;
                out.extend(p.iter().map(|&x| x as f32));
            }
        }
    }
    Tensor::new(&[t, height, width, 6], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::intrinsics;
    use nalgebra::Matrix3;

    #[test]
    fn hand_derived_vectors() {
        let k = Matrix3::identity();
        let p = plucker_pixel(&CameraPose::identity(k), 0.0, 0.0, RayDirection::WithTranslation).unwrap();
        assert_eq!(p, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);

        let mut pose = CameraPose::identity(k);
        pose.t = Vector3::new(1.0, 0.0, 0.0);
        let p = plucker_pixel(&pose, 0.0, 0.0, RayDirection::WithTranslation).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [0.0, -h, 0.0, h, 0.0, h];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_pose_has_zero_moments() {
        let traj = Trajectory::new(vec![CameraPose::identity(Matrix3::identity())]).unwrap();
        let e = plucker_embed(&traj, 2, 2, PluckerOptions::default()).unwrap();
        assert_eq!(e.shape(), &[1, 2, 2, 6]);
        for px in e.data().chunks(6) {
            assert_eq!(&px[..3], &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn singular_intrinsics_and_degenerate_rays_fail() {
        let mut pose = CameraPose::identity(intrinsics(1.0, 1.0, 0.0, 0.0));
        pose.k[(0, 0)] = 0.0;
        assert!(plucker_pixel(&pose, 0.0, 0.0, RayDirection::Pure).is_err());
        let mut pose = CameraPose::identity(Matrix3::identity());
        pose.t = Vector3::new(0.0, 0.0, -1.0);
        assert!(plucker_pixel(&pose, 0.0, 0.0, RayDirection::WithTranslation).is_err());
    }
}
