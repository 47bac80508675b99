//! Fast invariant suite behind `wonderland selfcheck`.

use crate::cam_dit::{first_frame, Branches, CamDiT, DiTConfig, DiTInput, DiffusionSchedule};
use crate::camera::{intrinsics, plucker_pixel, pose_errors, CameraPose, RayDirection, Trajectory};
use crate::codec::{Codec, LosslessCodec, Video};
use crate::error::Result;
use crate::gsplat::{gradient_check_render, GaussianCloud, RenderSettings};
use crate::lalrm::{LaLRM, LaLRMConfig};
use crate::nn::Graph;
use crate::numerics::{finite_diff_grad, relative_error, Rng, Tape, Tensor};

pub const FAULTS: &[&str] = &["codec.roundtrip"];

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(Option<&str>) -> Result<(bool, String)>;

pub fn checks() -> Vec<(&'static str, Check)> {
    vec![
        ("numerics.gradcheck", numerics_gradcheck),
        ("gsplat.gradcheck", gsplat_gradcheck),
        ("camera.plucker", camera_plucker),
        ("camera.pose_errors", camera_pose_errors),
        ("codec.roundtrip", codec_roundtrip),
        ("lalrm.token_length", lalrm_token_length),
        ("cam_dit.init_equivalence", dit_init_equivalence),
        ("cam_dit.fuse_identity", dit_fuse_identity),
        ("cam_dit.schedule", dit_schedule),
    ]
}

pub fn run(fault: Option<&str>) -> Vec<CheckResult> {
    checks()
        .into_iter()
        .map(|(name, f)| match f(fault) {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult { name, passed: false, detail: e.to_string() },
        })
        .collect()
}

fn numerics_gradcheck(_: Option<&str>) -> Result<(bool, String)> {
    let mut worst = 0.0f32;
    for seed in 0..5 {
        let mut rng = Rng::seed(seed);
        let x = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let w = Tensor::randn(&[4, 5], 0.5, &mut rng);
        let t = Tensor::randn(&[3, 5], 1.0, &mut rng);
        let loss = |tape: &mut Tape, xv| -> Result<_> {
            let wv = tape.constant(w.clone());
            let tv = tape.constant(t.clone());
            let y = tape.matmul(xv, wv)?;
            let y = tape.tanh(y);
            tape.mse(y, tv)
        };
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let l = loss(&mut tape, xv)?;
        tape.backward(l)?;
        let auto = tape.grad(xv).unwrap().clone();
        let fd = finite_diff_grad(
            |p| {
                let mut tape = Tape::new();
                let xv = tape.constant(p.clone());
                let l = loss(&mut tape, xv)?;
                Ok(tape.value(l).item()? as f64)
            },
            &x,
            1e-2,
        )?;
        worst = worst.max(relative_error(auto.data(), fd.data(), 1e-6));
    }
    Ok((worst < 1e-2, format!("max relative error {worst:.2e}")))
}

fn gsplat_gradcheck(_: Option<&str>) -> Result<(bool, String)> {
    let mut rng = Rng::seed(1);
    let mut cloud = GaussianCloud::default();
    for _ in 0..5 {
        let q: [f32; 4] = std::array::from_fn(|_| rng.normal());
        let n = q.iter().map(|v| v * v).sum::<f32>().sqrt();
        cloud.push(
            [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2.0, 4.0)],
            [rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)],
            q.map(|v| v / n),
            [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)],
            rng.uniform(0.3, 0.9),
        );
    }
    let pose = CameraPose::identity(intrinsics(16.0, 16.0, 8.0, 8.0));
    let mut s = RenderSettings::new(16, 16);
    s.background = [0.1, 0.2, 0.3];
    let report = gradient_check_render(&cloud, &pose, &s, 1e-3)?;
    Ok((report.max() < 1e-2, format!("max relative error {:.2e}", report.max())))
}

fn camera_plucker(_: Option<&str>) -> Result<(bool, String)> {
    let mut rng = Rng::seed(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let pose = CameraPose::random(&mut rng, intrinsics(30.0, 32.0, 15.0, 12.0), 3.0);
        for _ in 0..16 {
            let p = plucker_pixel(&pose, rng.uniform_f64(0.0, 30.0), rng.uniform_f64(0.0, 24.0), RayDirection::WithTranslation)?;
            let norm = (p[3] * p[3] + p[4] * p[4] + p[5] * p[5]).sqrt();
            let dot = p[0] * p[3] + p[1] * p[4] + p[2] * p[5];
            worst = worst.max((norm - 1.0).abs()).max(dot.abs());
        }
    }
    Ok((worst < 1e-5, format!("max deviation {worst:.2e}")))
}

fn camera_pose_errors(_: Option<&str>) -> Result<(bool, String)> {
    let mut rng = Rng::seed(3);
    let k = intrinsics(20.0, 20.0, 10.0, 10.0);
    let traj = Trajectory::new((0..5).map(|_| CameraPose::random(&mut rng, k, 2.0)).collect())?;
    let (r, t) = pose_errors(&traj, &traj)?;
    Ok((r == 0.0 && t == 0.0, format!("R_err {r:.1e}, T_err {t:.1e}")))
}

fn codec_roundtrip(fault: Option<&str>) -> Result<(bool, String)> {
    let mut rng = Rng::seed(4);
    let codec = LosslessCodec { r_t: 4, r_s: 8 };
    let video = Video::new(Tensor::rand_uniform(&[9, 16, 24, 3], 0.0, 1.0, &mut rng))?;
    let mut latent = codec.encode(&video)?;
    if fault == Some("codec.roundtrip") {
        latent.data.data_mut()[7] += 0.5;
    }
    let back = codec.decode(&latent)?;
    let exact = back.data.data() == video.data.data();
    Ok((exact, format!("latent {:?}, bit-exact {exact}", latent.data.shape())))
}

fn lalrm_token_length(_: Option<&str>) -> Result<(bool, String)> {
    let mut ok = true;
    let mut count = 0;
    for (t, h, w, p_l) in [(9, 48, 72, 3), (5, 32, 32, 2), (1, 16, 16, 2), (9, 96, 144, 3)] {
        let cfg = LaLRMConfig { num_blocks: 1, hidden: 8, heads: 2, p_l, ..Default::default() };
        let grid = cfg.latent_grid(1 + (t - 1) / cfg.r_t, h / cfg.r_s, w / cfg.r_s)?;
        let model = LaLRM::init(&cfg, grid, 0)?;
        let mut g = Graph::inference(&model.params);
        let z = Tensor::zeros(&[grid[0], h / cfg.r_s, w / cfg.r_s, cfg.latent_channels]);
        let lt = model.tokenize_latent(&mut g, &z)?;
        let nl = g.tape.shape(lt)[0];
        let pt = model.tokenize_pose(&mut g, &Tensor::zeros(&[t, h, w, 6]))?;
        let np = g.tape.shape(pt)[0];
        ok &= nl == np;
        count += 1;
    }
    Ok((ok, format!("{count} geometries")))
}

fn tiny_dit() -> DiTConfig {
    DiTConfig {
        num_blocks: 2,
        hidden: 16,
        heads: 2,
        mlp_ratio: 2,
        ctrl_blocks: 1,
        lora_rank: 2,
        latent_channels: 48,
        r_t: 2,
        r_s: 2,
        camera_hidden: 4,
        text_dim: 4,
        schedule_steps: 100,
        ..Default::default()
    }
}

fn dit_init_equivalence(_: Option<&str>) -> Result<(bool, String)> {
    let mut rng = Rng::seed(5);
    let mut base = CamDiT::init_base(&tiny_dit(), [3, 4, 4], 1)?;
    let p = base.params.get_mut("out.weight").unwrap();
    p.value = Tensor::randn(p.value.shape(), 0.1, &mut rng);
    let mut dual = base.clone();
    dual.attach_branches(Branches::Dual, 2)?;
    let z = Tensor::randn(&[3, 4, 4, 48], 1.0, &mut rng);
    let cond = first_frame(&Tensor::rand_uniform(&[3, 4, 4, 48], 0.0, 1.0, &mut rng))?;
    let plucker = Tensor::randn(&[5, 8, 8, 6], 1.0, &mut rng);
    let run = |m: &CamDiT| -> Result<Tensor> {
        let mut g = Graph::inference(&m.params);
        let out = m.forward(&mut g, &DiTInput { z_tau: &z, cond: &cond, plucker: Some(&plucker), text: None, tau: 40 })?;
        Ok(g.value(out).clone())
    };
    let diff = run(&base)?.max_abs_diff(&run(&dual)?)?;
    Ok((diff < 1e-5, format!("max abs diff {diff:.1e}")))
}

fn dit_fuse_identity(_: Option<&str>) -> Result<(bool, String)> {
    let mut rng = Rng::seed(6);
    let mut m = CamDiT::init_base(&tiny_dit(), [3, 4, 4], 1)?;
    m.attach_branches(Branches::Lora, 2)?;
    let o_v = Tensor::randn(&[48, 16], 1.0, &mut rng);
    let mut g = Graph::inference(&m.params);
    let a = g.input(o_v.clone());
    let b = g.input(Tensor::randn(&[48, 16], 1.0, &mut rng));
    let y = m.fuse_lora(&mut g, a, b)?;
    let diff = g.value(y).max_abs_diff(&o_v)?;
    Ok((diff < 1e-6, format!("max abs diff {diff:.1e}")))
}

fn dit_schedule(_: Option<&str>) -> Result<(bool, String)> {
    let s = DiffusionSchedule::cosine(1000)?;
    let worst = s.alpha.iter().zip(&s.sigma).map(|(a, b)| (a * a + b * b - 1.0).abs()).fold(0.0, f64::max);
    let mut rng = Rng::seed(7);
    let z = Tensor::randn(&[2, 3], 1.0, &mut rng);
    let eps = Tensor::randn(&[2, 3], 1.0, &mut rng);
    let ends = s.add_noise(&z, 0, &eps)? == z && s.add_noise(&z, 999, &eps)? == eps;
    Ok((worst < 1e-6 && ends, format!("max |α²+σ²−1| {worst:.1e}, endpoints exact {ends}")))
}
