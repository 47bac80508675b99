use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{contract_err, Error, Result};

/// Flat collection of 3D Gaussians. Quaternions are stored `(w, x, y, z)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<[f32; 3]>,
    pub scales: Vec<[f32; 3]>,
    pub rotations: Vec<[f32; 4]>,
    pub colors: Vec<[f32; 3]>,
    pub opacities: Vec<f32>,
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: [f32; 3], scale: [f32; 3], rotation: [f32; 4], color: [f32; 3], opacity: f32) {
        self.positions.push(position);
        self.scales.push(scale);
        self.rotations.push(rotation);
        self.colors.push(color);
        self.opacities.push(opacity);
    }

    pub fn extend(&mut self, other: &GaussianCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.scales.extend_from_slice(&other.scales);
        self.rotations.extend_from_slice(&other.rotations);
        self.colors.extend_from_slice(&other.colors);
        self.opacities.extend_from_slice(&other.opacities);
    }

    /// Checks field lengths, unit quaternions, positive scales, and
    /// opacities and colors in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.scales.len() != n || self.rotations.len() != n || self.colors.len() != n || self.opacities.len() != n {
            return Err(contract_err!("gaussian cloud fields have inconsistent lengths"));
        }
        for i in 0..n {
            let q = self.rotations[i];
            let norm = q.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-5 {
                return Err(contract_err!("gaussian {i}: quaternion norm {norm}"));
            }
            if !self.scales[i].iter().all(|&s| s > 0.0 && s.is_finite()) {
                return Err(contract_err!("gaussian {i}: scales must be positive, got {:?}", self.scales[i]));
            }
            let o = self.opacities[i];
            if !(0.0..=1.0).contains(&o) {
                return Err(contract_err!("gaussian {i}: opacity {o} outside [0, 1]"));
            }
            if !self.colors[i].iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(contract_err!("gaussian {i}: color {:?} outside [0, 1]", self.colors[i]));
            }
            if !self.positions[i].iter().all(|p| p.is_finite()) {
                return Err(contract_err!("gaussian {i}: non-finite position"));
            }
        }
        Ok(())
    }

    /// Applies `x ↦ q·x + shift` to positions and orientations.
    pub fn transformed(&self, q: &Matrix3<f64>, shift: &Vector3<f64>) -> Self {
        let rot = UnitQuaternion::from_matrix(q);
        let mut out = self.clone();
        for i in 0..self.len() {
            let p = Vector3::from(self.positions[i].map(f64::from));
            let p = q * p + shift;
            out.positions[i] = [p.x as f32, p.y as f32, p.z as f32];
            let [w, x, y, z] = self.rotations[i].map(f64::from);
            let r = rot.into_inner() * Quaternion::new(w, x, y, z);
            out.rotations[i] = [r.w as f32, r.i as f32, r.j as f32, r.k as f32];
        }
        out
    }

    /// Uniform similarity `x ↦ (x − t0)·R0 / scale`, as produced by trajectory normalization.
    pub fn normalized(&self, n: &crate::camera::Normalization) -> Self {
        let mut out = self.transformed(&n.r0.transpose(), &(-(n.r0.transpose() * n.t0)));
        for (p, s) in out.positions.iter_mut().zip(out.scales.iter_mut()) {
            *p = p.map(|v| (v as f64 / n.scale) as f32);
            *s = s.map(|v| (v as f64 / n.scale) as f32);
        }
        out
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// `Σ = R·diag(s²)·Rᵀ` for positive scales and a unit quaternion.
pub fn covariance_from(scale: [f64; 3], quat: [f64; 4]) -> Result<Matrix3<f64>> {
    let norm = quat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-3 {
        return Err(contract_err!("covariance_from: quaternion norm {norm} is not 1"));
    }
    if !scale.iter().all(|&s| s > 0.0) {
        return Err(contract_err!("covariance_from: scales must be positive, got {scale:?}"));
    }
    let r = quat_to_matrix(quat);
    let m = r * Matrix3::from_diagonal(&Vector3::from(scale));
    Ok(m * m.transpose())
}

const SPLAT_MAGIC: &[u8; 4] = b"WLND";
const SPLAT_VERSION: u32 = 1;

/// Serializes a cloud as `WLND`: magic, u32 version, u64 count, then the
/// positions, scales, quaternions, colors, and opacities as contiguous
/// little-endian f32 arrays.
pub fn write_splat(w: &mut impl Write, cloud: &GaussianCloud) -> Result<()> {
    w.write_all(SPLAT_MAGIC)?;
    w.write_all(&SPLAT_VERSION.to_le_bytes())?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(cloud.len() * 14 * 4);
    let mut put = |vals: &[f32]| vals.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    put(cloud.positions.as_flattened());
    put(cloud.scales.as_flattened());
    put(cloud.rotations.as_flattened());
    put(cloud.colors.as_flattened());
    put(&cloud.opacities);
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_splat(r: &mut impl Read, path: &Path) -> Result<GaussianCloud> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::format(path, 0, "truncated splat header"))?;
    if &header[..4] != SPLAT_MAGIC {
        return Err(Error::format(path, 0, "not a WLND splat file"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != SPLAT_VERSION {
        return Err(Error::format(path, 0, format!("unsupported splat version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != n * 14 * 4 {
        return Err(Error::format(path, 0, format!("expected {} payload bytes for {n} gaussians, found {}", n * 56, body.len())));
    }
    let floats: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let (pos, rest) = floats.split_at(3 * n);
    let (scl, rest) = rest.split_at(3 * n);
    let (rot, rest) = rest.split_at(4 * n);
    let (col, opa) = rest.split_at(3 * n);
    Ok(GaussianCloud {
        positions: pos.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        scales: scl.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        rotations: rot.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
        colors: col.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        opacities: opa.to_vec(),
    })
}

pub fn save_splat(path: &Path, cloud: &GaussianCloud) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_splat(&mut f, cloud)?;
    f.flush()?;
    Ok(())
}

pub fn load_splat(path: &Path) -> Result<GaussianCloud> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_splat(&mut f, path)
}
