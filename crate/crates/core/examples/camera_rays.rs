//! Orbit trajectory, first-frame normalization, Plücker rays, and pose errors.
//!
//! cargo run --release --example camera_rays

use nalgebra::Vector3;
use wonderland::camera::{
    intrinsics, normalize_trajectory, plucker_embed, plucker_pixel, pose_errors, CameraPose, PluckerOptions, RayDirection, Trajectory,
};

fn main() -> wonderland::Result<()> {
    let k = intrinsics(60.0, 60.0, 32.0, 24.0);
    let target = Vector3::new(0.0, 0.0, 4.0);
    let orbit: Vec<CameraPose> = (0..9)
        .map(|i| {
            let a = 0.05 * i as f64;
            let eye = Vector3::new(2.0 * a.sin(), -0.2, 4.0 - 4.0 * a.cos());
            CameraPose::look_at(eye, target, Vector3::new(0.0, -1.0, 0.0), k)
        })
        .collect::<wonderland::Result<_>>()?;
    let traj = Trajectory::new(orbit)?;
    let norm = normalize_trajectory(&traj);
    let last = &norm.poses()[8];
    println!("normalized: pose 0 t = {:?}, pose 8 |t| = {:.4}", norm.poses()[0].t.as_slice(), last.t.norm());

    let emb = plucker_embed(&norm, 48, 64, PluckerOptions::default())?;
    println!("plucker embedding {:?}", emb.shape());
    let p = plucker_pixel(last, 10.5, 20.5, RayDirection::WithTranslation)?;
    let (m, d) = (Vector3::new(p[0], p[1], p[2]), Vector3::new(p[3], p[4], p[5]));
    println!("ray at (10.5, 20.5) in frame 8: |d| = {:.6}, m·d = {:.1e}", d.norm(), m.dot(&d));

    let jittered = traj.map_poses(|p| {
        let mut q = p.clone();
        q.t += Vector3::new(0.01, 0.0, -0.01);
        q
    });
    let (r, t) = pose_errors(&norm, &normalize_trajectory(&jittered))?;
    println!("after a translation jitter: R_err {r:.2e} rad, T_err {t:.4}");
    Ok(())
}
