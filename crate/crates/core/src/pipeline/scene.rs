use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{intrinsics, CameraPose, Trajectory};
use crate::codec::Video;
use crate::error::{contract_err, Result};
use crate::gsplat::{rasterize, GaussianCloud, RenderSettings};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Complexity {
    Small,
    Medium,
}

impl Complexity {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Complexity::Small),
            "medium" => Ok(Complexity::Medium),
            other => Err(contract_err!("unknown scene complexity `{other}` (expected small or medium)")),
        }
    }

    fn count(self) -> usize {
        match self {
            Complexity::Small => 150,
            Complexity::Medium => 400,
        }
    }
}

/// Frame count and raster of generated scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SceneSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self { frames: 17, height: 96, width: 144 }
    }
}

/// Ground-truth cloud, camera path, and the video rendered along it.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub cloud: GaussianCloud,
    pub trajectory: Trajectory,
    pub video: Video,
    pub seed: u64,
}

/// Focal length of generated cameras relative to image width.
const FOCAL: f64 = 0.85;

pub fn scene_intrinsics(height: usize, width: usize) -> nalgebra::Matrix3<f64> {
    let f = FOCAL * width as f64;
    intrinsics(f, f, width as f64 / 2.0, height as f64 / 2.0)
}

fn random_quat(rng: &mut Rng) -> [f32; 4] {
    let q: [f64; 4] = std::array::from_fn(|_| rng.normal_f64());
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    q.map(|v| (v / n) as f32)
}

fn clamp01(c: [f64; 3]) -> [f32; 3] {
    c.map(|v| v.clamp(0.0, 1.0) as f32)
}

/// Ground slab, colored blobs, and a backdrop shell in a y-down world.
fn random_cloud(rng: &mut Rng, count: usize) -> GaussianCloud {
    let mut cloud = GaussianCloud::default();
    let n_ground = count * 3 / 10;
    let n_back = count * 3 / 10;
    let n_blob = count - n_ground - n_back;
    let ground = [rng.uniform_f64(0.3, 0.6), rng.uniform_f64(0.3, 0.5), rng.uniform_f64(0.15, 0.35)];
    for _ in 0..n_ground {
        let p = [rng.uniform_f64(-3.5, 3.5), rng.uniform_f64(0.95, 1.05), rng.uniform_f64(1.0, 9.0)];
        let s = [rng.uniform_f64(0.25, 0.5), rng.uniform_f64(0.02, 0.05), rng.uniform_f64(0.25, 0.5)];
        let c = ground.map(|g| g + rng.uniform_f64(-0.12, 0.12));
        cloud.push(p.map(|v| v as f32), s.map(|v| v as f32), [1.0, 0.0, 0.0, 0.0], clamp01(c), rng.uniform(0.85, 1.0));
    }
    for _ in 0..n_blob {
        let p = [rng.uniform_f64(-1.6, 1.6), rng.uniform_f64(-0.9, 0.85), rng.uniform_f64(2.8, 6.0)];
        let base = rng.uniform_f64(0.08, 0.3);
        let s = [0; 3].map(|_| base * rng.uniform_f64(0.5, 1.5));
        let c = [0; 3].map(|_| rng.uniform_f64(0.0, 1.0));
        cloud.push(p.map(|v| v as f32), s.map(|v| v as f32), random_quat(rng), clamp01(c), rng.uniform(0.6, 1.0));
    }
    let sky = [rng.uniform_f64(0.4, 0.7), rng.uniform_f64(0.55, 0.8), rng.uniform_f64(0.7, 0.95)];
    for _ in 0..n_back {
        let yaw = rng.uniform_f64(-1.0, 1.0);
        let pitch = rng.uniform_f64(-0.75, 0.15);
        let r = 10.0;
        let p = [r * yaw.sin() * pitch.cos(), r * pitch.sin(), r * yaw.cos() * pitch.cos()];
        let s = [rng.uniform_f64(0.9, 1.6), rng.uniform_f64(0.9, 1.6), rng.uniform_f64(0.1, 0.3)];
        let shade = 1.0 + 0.4 * pitch;
        let c = sky.map(|v| v * shade + rng.uniform_f64(-0.05, 0.05));
        cloud.push(p.map(|v| v as f32), s.map(|v| v as f32), random_quat(rng), clamp01(c), rng.uniform(0.9, 1.0));
    }
    cloud
}

fn catmull_rom(p: &[Vector3<f64>], u: f64) -> Vector3<f64> {
    let segs = p.len() - 1;
    let x = (u * segs as f64).min(segs as f64 - 1e-9);
    let i = x.floor() as usize;
    let t = x - i as f64;
    let at = |j: isize| p[j.clamp(0, segs as isize) as usize];
    let (p0, p1, p2, p3) = (at(i as isize - 1), at(i as isize), at(i as isize + 1), at(i as isize + 2));
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * ((2.0 * p1) + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3)
}

/// Smooth look-at path through jittered waypoints near the origin.
fn random_trajectory(rng: &mut Rng, spec: &SceneSpec) -> Result<Trajectory> {
    let k = scene_intrinsics(spec.height, spec.width);
    let end = Vector3::new(rng.uniform_f64(-0.9, 0.9), rng.uniform_f64(-0.25, 0.1), rng.uniform_f64(-0.3, 0.6));
    let waypoints: Vec<Vector3<f64>> = (0..4)
        .map(|i| {
            let f = i as f64 / 3.0;
            let jitter = if i == 0 { Vector3::zeros() } else { Vector3::from_fn(|_, _| rng.uniform_f64(-0.12, 0.12)) };
            end * f + jitter
        })
        .collect();
    let target = Vector3::new(rng.uniform_f64(-0.3, 0.3), rng.uniform_f64(-0.2, 0.2), rng.uniform_f64(4.0, 5.0));
    let drift = Vector3::new(rng.uniform_f64(-0.4, 0.4), 0.0, 0.0);
    let up = Vector3::new(0.0, -1.0, 0.0);
    let poses = (0..spec.frames)
        .map(|f| {
            let u = if spec.frames > 1 { f as f64 / (spec.frames - 1) as f64 } else { 0.0 };
            CameraPose::look_at(catmull_rom(&waypoints, u), target + drift * u, up, k)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(poses)
}

/// Renderer settings shared by scene synthesis, training, and evaluation:
/// the defaults plus the usual 1/255 alpha cutoff.
pub fn render_settings(height: usize, width: usize) -> RenderSettings {
    RenderSettings { alpha_cutoff: 1.0 / 255.0, ..RenderSettings::new(height, width) }
}

/// Renders `cloud` along `traj` at the given raster.
pub fn render_video(cloud: &GaussianCloud, traj: &Trajectory, height: usize, width: usize) -> Result<Video> {
    let settings = render_settings(height, width);
    let frames = traj
        .poses()
        .par_iter()
        .map(|p| rasterize(cloud, p, &settings).map(|r| r.color))
        .collect::<Result<Vec<Tensor>>>()?;
    Video::from_frames(&frames)
}

/// Fully seeded synthetic scene.
pub fn generate_scene(seed: u64, complexity: Complexity, spec: &SceneSpec) -> Result<SyntheticScene> {
    if spec.frames == 0 || spec.height == 0 || spec.width == 0 {
        return Err(contract_err!("scene spec needs positive frames and raster"));
    }
    let mut rng = Rng::seed(seed);
    let cloud = random_cloud(&mut rng, complexity.count());
    let trajectory = random_trajectory(&mut rng, spec)?;
    let video = render_video(&cloud, &trajectory, spec.height, spec.width)?;
    Ok(SyntheticScene { cloud, trajectory, video, seed })
}

impl SyntheticScene {
    /// The same scene rendered at `factor`× the raster, with intrinsics rescaled.
    pub fn rerender(&self, height: usize, width: usize) -> Result<Self> {
        let factor = height as f64 / self.video.height() as f64;
        let trajectory = self.trajectory.rescaled(factor);
        let video = render_video(&self.cloud, &trajectory, height, width)?;
        Ok(Self { cloud: self.cloud.clone(), trajectory, video, seed: self.seed })
    }

    /// Half-resolution copy: 2×2 box-filtered frames and halved intrinsics.
    pub fn downsampled(&self) -> Result<Self> {
        let (t, h, w) = (self.video.frames(), self.video.height(), self.video.width());
        if h % 2 != 0 || w % 2 != 0 {
            return Err(contract_err!("cannot halve a {h}×{w} raster"));
        }
        let src = self.video.data.data();
        let (h2, w2) = (h / 2, w / 2);
        let mut out = vec![0.0f32; t * h2 * w2 * 3];
        for f in 0..t {
            for y in 0..h2 {
                for x in 0..w2 {
                    for k in 0..3 {
                        let at = |yy: usize, xx: usize| src[((f * h + yy) * w + xx) * 3 + k];
                        let sum = at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1);
                        out[((f * h2 + y) * w2 + x) * 3 + k] = 0.25 * sum;
                    }
                }
            }
        }
        let video = Video::new(Tensor::new(&[t, h2, w2, 3], out)?)?;
        Ok(Self { cloud: self.cloud.clone(), trajectory: self.trajectory.rescaled(0.5), video, seed: self.seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_nonconstant() {
        let spec = SceneSpec { frames: 3, height: 24, width: 36 };
        let a = generate_scene(4, Complexity::Small, &spec).unwrap();
        let b = generate_scene(4, Complexity::Small, &spec).unwrap();
        assert_eq!(a.video.data, b.video.data);
        a.cloud.validate().unwrap();
        assert!((50..=500).contains(&a.cloud.len()));
        for p in a.trajectory.poses() {
            p.validate(1e-9).unwrap();
        }
        for f in 0..3 {
            let fr = a.video.frame(f);
            let mean = fr.mean();
            let var = fr.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / fr.len() as f64;
            assert!(var > 1e-4, "frame {f} variance {var}");
        }
        let half = a.downsampled().unwrap();
        assert_eq!(half.video.data.shape(), &[3, 12, 18, 3]);
        let direct = a.rerender(12, 18).unwrap();
        let err = crate::pipeline::metrics::psnr(&half.video.frame(1), &direct.video.frame(1)).unwrap();
        assert!(err > 20.0, "{err}");
    }
}
