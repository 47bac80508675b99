use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{contract_err, Result};
use crate::numerics::Rng;

/// Pinhole camera: world-from-camera rotation `r`, camera center `t`, and
/// intrinsics `k`. Camera axes follow the x-right, y-down, z-forward
/// convention, so a world point `x` has camera coordinates `rᵀ(x − t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPose {
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
    pub k: Matrix3<f64>,
}

pub fn intrinsics(fx: f64, fy: f64, cx: f64, cy: f64) -> Matrix3<f64> {
    Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0)
}

impl CameraPose {
    /// Validated constructor.
    pub fn new(r: Matrix3<f64>, t: Vector3<f64>, k: Matrix3<f64>) -> Result<Self> {
        let pose = Self { r, t, k };
        pose.validate(1e-5)?;
        Ok(pose)
    }

    pub fn identity(k: Matrix3<f64>) -> Self {
        Self { r: Matrix3::identity(), t: Vector3::zeros(), k }
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let ortho = (self.r.transpose() * self.r - Matrix3::identity()).abs().max();
        if !(ortho <= tol) {
            return Err(contract_err!("rotation is not orthonormal (max |RᵀR − I| = {ortho:e})"));
        }
        let det = self.r.determinant();
        if !((det - 1.0).abs() <= tol) {
            return Err(contract_err!("rotation determinant is {det}, expected +1"));
        }
        let k = &self.k;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(contract_err!("intrinsics are not upper-triangular"));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(contract_err!("focal lengths must be positive, got fx={} fy={}", k[(0, 0)], k[(1, 1)]));
        }
        if !self.t.iter().chain(self.r.iter()).chain(k.iter()).all(|v| v.is_finite()) {
            return Err(contract_err!("camera pose has non-finite entries"));
        }
        Ok(())
    }

    pub fn fx(&self) -> f64 {
        self.k[(0, 0)]
    }
    pub fn fy(&self) -> f64 {
        self.k[(1, 1)]
    }
    pub fn cx(&self) -> f64 {
        self.k[(0, 2)]
    }
    pub fn cy(&self) -> f64 {
        self.k[(1, 2)]
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>, k: Matrix3<f64>) -> Result<Self> {
        let z = target - eye;
        if z.norm() < 1e-12 {
            return Err(contract_err!("look_at: eye and target coincide"));
        }
        let z = z.normalize();
        // image y points down, so the camera x axis is forward × up
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(contract_err!("look_at: up vector is parallel to the viewing direction"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_columns(&[x, y, z]);
        Self::new(r, eye, k)
    }

    /// World point to camera coordinates.
    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.r.transpose() * (x - self.t)
    }

    /// Unit ray direction through image coordinates `(u, v)` in world space.
    pub fn pixel_direction(&self, u: f64, v: f64) -> Result<Vector3<f64>> {
        let kinv = self
            .k
            .try_inverse()
            .ok_or_else(|| contract_err!("intrinsics matrix is singular"))?;
        let d = self.r * (kinv * Vector3::new(u, v, 1.0));
        Ok(d.normalize())
    }

    /// Applies the rigid motion `x ↦ q·x + shift` to the camera.
    pub fn transformed(&self, q: &Matrix3<f64>, shift: &Vector3<f64>) -> Self {
        Self { r: q * self.r, t: q * self.t + shift, k: self.k }
    }

    /// Uniformly random rotation and a translation with entries in `[-extent, extent]`.
    pub fn random(rng: &mut Rng, k: Matrix3<f64>, extent: f64) -> Self {
        let r = random_rotation(rng);
        let t = Vector3::from_fn(|_, _| rng.uniform_f64(-extent, extent));
        Self { r, t, k }
    }
}

/// Uniform random rotation from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut Rng) -> Matrix3<f64> {
    let q = nalgebra::Quaternion::new(rng.normal_f64(), rng.normal_f64(), rng.normal_f64(), rng.normal_f64());
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// Rotation about `axis` by `angle` radians.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_faces_target() {
        let k = intrinsics(50.0, 50.0, 32.0, 24.0);
        let pose = CameraPose::look_at(Vector3::new(0.0, -1.0, -3.0), Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0), k).unwrap();
        let c = pose.to_camera(&Vector3::zeros());
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.z > 0.0);
        let above = pose.to_camera(&Vector3::new(0.0, -0.5, 0.0));
        assert!(above.y < 0.0);
        let right = pose.to_camera(&Vector3::new(0.5, 0.0, 0.0));
        assert!(right.x > 0.0);
    }

    #[test]
    fn rejects_bad_rotation_and_intrinsics() {
        let k = intrinsics(1.0, 1.0, 0.0, 0.0);
        assert!(CameraPose::new(Matrix3::identity() * 2.0, Vector3::zeros(), k).is_err());
        assert!(CameraPose::new(-Matrix3::identity(), Vector3::zeros(), k).is_err());
        assert!(CameraPose::new(Matrix3::identity(), Vector3::zeros(), intrinsics(-1.0, 1.0, 0.0, 0.0)).is_err());
    }
}
