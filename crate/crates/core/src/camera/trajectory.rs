use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::pose::CameraPose;
use crate::error::{contract_err, Error, Result};

/// Ordered camera poses, one per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    poses: Vec<CameraPose>,
    varying_intrinsics: bool,
}

impl Trajectory {
    /// Requires at least one pose and identical intrinsics on every frame.
    pub fn new(poses: Vec<CameraPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(contract_err!("trajectory must contain at least one pose"));
        }
        if let Some(f) = poses.iter().position(|p| p.k != poses[0].k) {
            return Err(contract_err!("frame {f} has different intrinsics; use Trajectory::with_varying_intrinsics"));
        }
        Ok(Self { poses, varying_intrinsics: false })
    }

    pub fn with_varying_intrinsics(poses: Vec<CameraPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(contract_err!("trajectory must contain at least one pose"));
        }
        Ok(Self { poses, varying_intrinsics: true })
    }

    pub fn poses(&self) -> &[CameraPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn has_varying_intrinsics(&self) -> bool {
        self.varying_intrinsics
    }

    /// Sub-trajectory of the given frame indices.
    pub fn select(&self, frames: &[usize]) -> Result<Self> {
        let poses = frames
            .iter()
            .map(|&f| {
                self.poses
                    .get(f)
                    .cloned()
                    .ok_or_else(|| contract_err!("frame {f} out of range for trajectory of length {}", self.len()))
            })
            .collect::<Result<Vec<_>>>()?;
        if poses.is_empty() {
            return Err(contract_err!("trajectory must contain at least one pose"));
        }
        Ok(Self { poses, varying_intrinsics: self.varying_intrinsics })
    }

    /// Same cameras with every focal length and principal point multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let scale = Matrix3::new(factor, 0.0, 0.0, 0.0, factor, 0.0, 0.0, 0.0, 1.0);
        let poses = self
            .poses
            .iter()
            .map(|p| CameraPose { k: scale * p.k, ..p.clone() })
            .collect();
        Self { poses, varying_intrinsics: self.varying_intrinsics }
    }

    pub fn map_poses(&self, f: impl Fn(&CameraPose) -> CameraPose) -> Self {
        Self { poses: self.poses.iter().map(f).collect(), varying_intrinsics: self.varying_intrinsics }
    }
}

/// The similarity `x ↦ r0ᵀ(x − t0) / scale` that maps a trajectory's world
/// frame onto its normalized frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub r0: Matrix3<f64>,
    pub t0: Vector3<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn of(traj: &Trajectory) -> Self {
        let first = &traj.poses[0];
        let r0 = first.r;
        let t0 = first.t;
        let max = traj
            .poses
            .iter()
            .map(|p| (r0.transpose() * (p.t - t0)).norm())
            .fold(0.0f64, f64::max);
        // a trajectory that is already at unit scale keeps its bits
        let scale = if max < 1e-8 || (max - 1.0).abs() <= 4.0 * f64::EPSILON { 1.0 } else { max };
        Self { r0, t0, scale }
    }

    pub fn apply_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.r0.transpose() * (x - self.t0) / self.scale
    }

    pub fn apply_pose(&self, p: &CameraPose) -> CameraPose {
        CameraPose {
            r: self.r0.transpose() * p.r,
            t: self.apply_point(&p.t),
            k: p.k,
        }
    }
}

/// Expresses every pose relative to the first and divides translations by
/// the largest translation norm (kept at 1 for static trajectories).
pub fn normalize_trajectory(traj: &Trajectory) -> Trajectory {
    let n = Normalization::of(traj);
    let mut out = traj.map_poses(|p| n.apply_pose(p));
    out.poses[0].r = Matrix3::identity();
    out.poses[0].t = Vector3::zeros();
    out
}

/// Geodesic angle between two rotations, in radians.
pub fn rotation_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let m = a.transpose() * b;
    let cos = (m.trace() - 1.0) / 2.0;
    let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = axis.norm() / 2.0;
    sin.atan2(cos.clamp(-1.0, 1.0))
}

/// Mean geodesic rotation error and mean translation distance between two
/// trajectories that are already normalized.
pub fn pose_errors(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(contract_err!("pose_errors: trajectories have {} and {} frames", a.len(), b.len()));
    }
    let n = a.len() as f64;
    let (mut r_err, mut t_err) = (0.0, 0.0);
    for (pa, pb) in a.poses.iter().zip(&b.poses) {
        r_err += rotation_angle(&pa.r, &pb.r);
        t_err += (pa.t - pb.t).norm();
    }
    Ok((r_err / n, t_err / n))
}

/// Normalizes both trajectories, then compares them with [`pose_errors`].
pub fn trajectory_errors(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64)> {
    pose_errors(&normalize_trajectory(a), &normalize_trajectory(b))
}

/// Text form: one `f fx fy cx cy r00 … r22 tx ty tz` record per line.
pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut s = String::from("# f fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz\n");
    for (f, p) in traj.poses.iter().enumerate() {
        let _ = write!(s, "{f} {} {} {} {}", p.fx(), p.fy(), p.cx(), p.cy());
        for i in 0..3 {
            for j in 0..3 {
                let _ = write!(s, " {}", p.r[(i, j)]);
            }
        }
        let _ = writeln!(s, " {} {} {}", p.t.x, p.t.y, p.t.z);
    }
    s
}

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| Error::format(path, lineno, format!("invalid number `{tok}`"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 17 {
            return Err(Error::format(path, lineno, format!("expected 17 fields, found {}", vals.len())));
        }
        if vals[0] != poses.len() as f64 {
            return Err(Error::format(path, lineno, format!("expected frame index {}, found {}", poses.len(), vals[0])));
        }
        let k = super::intrinsics(vals[1], vals[2], vals[3], vals[4]);
        let r = Matrix3::from_row_slice(&vals[5..14]);
        let t = Vector3::new(vals[14], vals[15], vals[16]);
        let pose = CameraPose::new(r, t, k).map_err(|e| Error::format(path, lineno, e.to_string()))?;
        poses.push(pose);
    }
    if poses.is_empty() {
        return Err(Error::format(path, 0, "trajectory file contains no frames"));
    }
    let varying = poses.iter().any(|p| p.k != poses[0].k);
    if varying {
        Trajectory::with_varying_intrinsics(poses)
    } else {
        Trajectory::new(poses)
    }
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    parse_trajectory(&text, path)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, format_trajectory(traj))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{axis_angle, intrinsics};

    fn pose_at(t: [f64; 3]) -> CameraPose {
        CameraPose { t: Vector3::from(t), ..CameraPose::identity(intrinsics(10.0, 10.0, 4.0, 4.0)) }
    }

    #[test]
    fn scale_divides_by_max_norm() {
        let traj = Trajectory::new(vec![pose_at([0.0; 3]), pose_at([0.0, 2.0, 0.0])]).unwrap();
        let n = normalize_trajectory(&traj);
        assert_eq!(n.poses()[1].t.norm(), 1.0);
        assert_eq!(normalize_trajectory(&n), n);
    }

    #[test]
    fn static_trajectory_keeps_unit_scale() {
        let traj = Trajectory::new(vec![pose_at([1.0, 2.0, 3.0]); 3]).unwrap();
        let n = normalize_trajectory(&traj);
        assert!(n.poses().iter().all(|p| p.t == Vector3::zeros()));
    }

    #[test]
    fn quarter_turn_error() {
        let a = Trajectory::new(vec![pose_at([0.0; 3])]).unwrap();
        let mut p = pose_at([0.0; 3]);
        p.r = axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let b = Trajectory::new(vec![p]).unwrap();
        let (r, t) = pose_errors(&a, &b).unwrap();
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn translation_error_and_length_mismatch() {
        let a = Trajectory::new(vec![pose_at([0.0; 3]), pose_at([1.0, 0.0, 0.0])]).unwrap();
        let b = Trajectory::new(vec![pose_at([0.0; 3]), pose_at([1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(pose_errors(&a, &b).unwrap(), (0.0, 0.0));
        let c = Trajectory::new(vec![pose_at([0.1, 0.0, 0.0])]).unwrap();
        let d = Trajectory::new(vec![pose_at([0.0; 3])]).unwrap();
        let (_, t) = pose_errors(&c, &d).unwrap();
        assert!((t - 0.1).abs() < 1e-15);
        assert!(pose_errors(&a, &c).is_err());
    }

    #[test]
    fn parse_reports_line_numbers() {
        let path = Path::new("t.txt");
        let text = "# header\n0 1 1 0 0 1 0 0 0 1 0 0 0 1 0 0 0\n1 1 1 0 0 1 0 0 0 1 0 0 0 1 x 0 0\n";
        match parse_trajectory(text, path) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "0 1 1 0 0 2 0 0 0 1 0 0 0 1 0 0 0\n";
        assert!(matches!(parse_trajectory(text, path), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn text_roundtrip_is_byte_stable() {
        let mut p = pose_at([0.25, -1.0 / 3.0, 7.0]);
        p.r = axis_angle(Vector3::new(1.0, 2.0, 3.0), 0.7);
        let traj = Trajectory::new(vec![pose_at([0.0; 3]), p]).unwrap();
        let text = format_trajectory(&traj);
        let back = parse_trajectory(&text, Path::new("x")).unwrap();
        assert_eq!(back, traj);
        assert_eq!(format_trajectory(&back), text);
    }
}
