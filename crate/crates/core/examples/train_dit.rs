//! Overfits the camera-conditioned diffusion model to one scene's latent and
//! reports the per-element error of a deterministic sample.
//!
//! cargo run --release --example train_dit -- [base_steps] [branch_steps] [sample_steps]

use std::time::Instant;

use wonderland::cam_dit::{first_frame, sample, Branches, DiTConfig, SampleRequest};
use wonderland::codec::VideoLatent;
use wonderland::pipeline::{dit_examples, generate_scene, train_dit_model, window_means, Complexity, DiTSchedule, SceneSpec};

fn main() -> wonderland::Result<()> {
    let arg = |i: usize, d: usize| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (base_steps, branch_steps, sample_steps) = (arg(1, 300), arg(2, 100), arg(3, 25));
    let scene = generate_scene(7, Complexity::Small, &SceneSpec { frames: 17, height: 96, width: 144 })?;
    let cfg = DiTConfig { patch_s: 2, ..Default::default() };
    let data = dit_examples(std::slice::from_ref(&scene), &cfg, 9, 2, Default::default())?;
    println!("{} example(s), latent {:?}", data.len(), data[0].latent.data.shape());
    let schedule = DiTSchedule { base_steps, branch_steps, ..Default::default() };
    let start = Instant::now();
    let mut losses = Vec::new();
    let model = train_dit_model(&cfg, Branches::Dual, None, &data, &schedule, |step, loss| {
        losses.push(loss);
        if step % 50 == 0 {
            println!("step {step:5}  loss {loss:.5}  {:.1}s", start.elapsed().as_secs_f64());
        }
    })?;
    let secs = start.elapsed().as_secs_f64();
    println!("{} steps in {secs:.1}s ({:.3} s/step)", losses.len(), secs / losses.len().max(1) as f64);
    println!("loss windows: {:?}", window_means(&losses, losses.len().div_ceil(10).max(1)));

    let ex = &data[0];
    let image = VideoLatent { data: first_frame(&ex.latent.data)?, ..ex.latent.clone() };
    let out = sample(&model, &SampleRequest { image: &image, plucker: &ex.plucker, text: None, steps: sample_steps, seed: 0 })?;
    let n = out.data.len() as f64;
    let mae = out.data.data().iter().zip(ex.latent.data.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / n;
    println!("sample ({sample_steps} steps): latent MAE {mae:.4}, total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
