//! Overfits LaLRM to one synthetic scene at 48×72 and reports seen / unseen PSNR.
//!
//! cargo run --release --example train_lalrm -- [steps]

use std::time::Instant;

use wonderland::lalrm::LaLRMConfig;
use wonderland::pipeline::{evaluate, generate_scene, train_lalrm, window_means, Complexity, EvalOptions, Protocol, SceneSpec, TrainConfig};

fn main() -> wonderland::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let scene = generate_scene(7, Complexity::Small, &SceneSpec { frames: 17, height: 48, width: 72 })?;
    let lcfg = LaLRMConfig { p_l: 3, ..Default::default() };
    let cfg = TrainConfig { steps, warmup: steps / 20, clip_start: Some(0), ..Default::default() };
    let start = Instant::now();
    let out = train_lalrm(&cfg, &lcfg, std::slice::from_ref(&scene), None, None, |s, _| {
        if s.step % 50 == 0 {
            println!("step {:5}  loss {:.5}  lr {:.2e}  {:.1}s", s.step, s.loss, s.lr, start.elapsed().as_secs_f64());
        }
    })?;
    let secs = start.elapsed().as_secs_f64();
    println!("{steps} steps in {secs:.1}s ({:.3} s/step)", secs / steps as f64);
    println!("loss windows: {:?}", window_means(&out.losses, steps.div_ceil(10).max(1)));
    let report = evaluate(&[scene], Protocol::Latent(&out.model), &EvalOptions::default())?;
    println!(
        "seen PSNR {:.2} dB, unseen PSNR {:.2} dB, first-14 SSIM {:.3}",
        report.psnr_seen.unwrap_or(f64::NAN),
        report.psnr_unseen.unwrap_or(f64::NAN),
        report.ssim_first14.unwrap_or(f64::NAN)
    );
    Ok(())
}
