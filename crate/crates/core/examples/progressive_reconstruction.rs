//! The full image-to-3D path on one small scene: low-res LaLRM, camera-guided
//! DiT, high-res LaLRM fine-tuned with generated latents, then a cloud
//! reconstructed from a sampled latent and rendered along the trajectory.
//!
//! cargo run --release --example progressive_reconstruction -- [out_dir] [low_steps] [dit_steps] [high_steps]

use std::path::PathBuf;
use std::time::Instant;

use wonderland::cam_dit::{Branches, DiTConfig};
use wonderland::gsplat::{save_splat, write_png};
use wonderland::lalrm::{LaLRMConfig, Variant};
use wonderland::pipeline::{
    dit_examples, generate_scene, psnr, reconstruct_scene, render_frames, train_dit_model, train_lalrm, Complexity, DiTSchedule, EvalOptions,
    Protocol, SceneSpec, TrainConfig,
};

fn main() -> wonderland::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let out = PathBuf::from(args.get(1).map_or("progressive_out", String::as_str));
    let arg = |i: usize, d: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (low_steps, dit_steps, high_steps) = (arg(2, 150), arg(3, 300), arg(4, 200));
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64();

    let scene = generate_scene(5, Complexity::Small, &SceneSpec { frames: 9, height: 48, width: 48 })?;
    let (frames, stride) = (5, 2);
    let lcfg = LaLRMConfig { p_l: 3, ..Default::default() };

    let low_cfg = TrainConfig { steps: low_steps, warmup: low_steps / 20, frames, stride, clip_start: Some(0), ..Default::default() };
    let low = train_lalrm(&low_cfg, &lcfg, &[scene.downsampled()?], None, None, |_, _| {})?;
    println!("low_res: {low_steps} steps, final loss {:.5}  ({:.0}s)", low.losses.last().unwrap_or(&f64::NAN), elapsed());

    let dcfg = DiTConfig { patch_s: 2, ..Default::default() };
    let data = dit_examples(std::slice::from_ref(&scene), &dcfg, frames, stride, low_cfg.plucker)?;
    let schedule = DiTSchedule { base_steps: dit_steps, branch_steps: dit_steps / 3, ..Default::default() };
    let mut dit_loss = f64::NAN;
    let dit = train_dit_model(&dcfg, Branches::Dual, None, &data, &schedule, |_, l| dit_loss = l)?;
    println!("dit: {} + {} steps, last loss {dit_loss:.5}  ({:.0}s)", schedule.base_steps, schedule.branch_steps, elapsed());

    let high_cfg = TrainConfig { stage: Variant::HighRes, steps: high_steps, warmup: high_steps / 10, ..low_cfg };
    let mut generated = 0;
    let high = train_lalrm(&high_cfg, &lcfg, std::slice::from_ref(&scene), Some(low.model), Some(&dit), |s, _| generated += usize::from(s.generated))?;
    println!("high_res: {high_steps} steps ({generated} on generated latents), final loss {:.5}  ({:.0}s)", high.losses.last().unwrap_or(&f64::NAN), elapsed());

    let opts = EvalOptions { frames, stride, plucker: high_cfg.plucker, ..Default::default() };
    let rec = reconstruct_scene(&scene, Protocol::Generated { lalrm: &high.model, dit: &dit, steps: 25, seed: 0 }, &opts)?;
    let (h, w) = (scene.video.height(), scene.video.width());
    let all: Vec<usize> = (0..scene.video.frames()).collect();
    let renders = render_frames(&rec.cloud, &rec.cameras, &all, h, w)?;
    std::fs::create_dir_all(&out)?;
    save_splat(&out.join("cloud.splat"), &rec.cloud)?;
    for (f, img) in renders.iter().enumerate() {
        write_png(&out.join(format!("render_{f:02}.png")), img)?;
        let tag = if rec.seen.contains(&f) { "seen" } else { "unseen" };
        println!("frame {f:2} ({tag:6}) PSNR {:.2} dB", psnr(img, &scene.video.frame(f))?);
    }
    println!("{} gaussians written to {}  ({:.0}s)", rec.cloud.len(), out.display(), elapsed());
    Ok(())
}
