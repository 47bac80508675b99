//! Renders a synthetic Gaussian scene along its camera path to PNG files and
//! checks rasterizer gradients against finite differences.
//!
//! cargo run --release --example render_scene -- [out_dir]

use std::path::PathBuf;

use wonderland::camera::{intrinsics, CameraPose};
use wonderland::gsplat::{gradient_check_render, save_splat, write_png, GaussianCloud, RenderSettings};
use wonderland::pipeline::{generate_scene, Complexity, SceneSpec};

fn main() -> wonderland::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "render_scene_out".into()));
    std::fs::create_dir_all(&out)?;
    let scene = generate_scene(5, Complexity::Medium, &SceneSpec::default())?;
    for f in 0..scene.video.frames() {
        write_png(&out.join(format!("frame_{f:05}.png")), &scene.video.frame(f))?;
    }
    save_splat(&out.join("scene.splat"), &scene.cloud)?;
    println!("{} gaussians, {} frames written to {}", scene.cloud.len(), scene.video.frames(), out.display());

    let mut small = GaussianCloud::default();
    for i in 0..5 {
        let x = 0.2 * i as f32 - 0.4;
        small.push([x, 0.1 * x, 3.0], [0.2, 0.15, 0.1], [0.9, 0.1 * x, 0.2, 0.1], [0.8, 0.3, 0.2 + x], 0.6);
    }
    let mut settings = RenderSettings::new(16, 16);
    settings.background = [0.1, 0.2, 0.3];
    let report = gradient_check_render(&small, &CameraPose::identity(intrinsics(16.0, 16.0, 8.0, 8.0)), &settings, 1e-3)?;
    for (name, err) in report.entries() {
        println!("gradient check {name:<9} relative error {err:.2e}");
    }
    Ok(())
}
