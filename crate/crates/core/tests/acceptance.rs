//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! cargo test --release --test acceptance
//!
//! A subset can be selected by number: `cargo test --test acceptance -- 1 4 13`.

mod common;

use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use wonderland::cam_dit::{first_frame, sample, Branches, CamDiT, CameraBranch, DiTConfig, DiTInput, DiffusionSchedule, SampleRequest};
use wonderland::camera::{
    axis_angle, intrinsics, normalize_trajectory, plucker_embed, plucker_pixel, pose_errors, random_rotation, CameraPose,
    PluckerOptions, RayDirection, Trajectory,
};
use wonderland::codec::{Codec, LosslessCodec, Video, VideoLatent};
use wonderland::gsplat::{gradient_check_render, rasterize, read_png, RenderSettings};
use wonderland::lalrm::{lift_cloud, LaLRM, LaLRMConfig, Variant};
use wonderland::nn::{AdamW, Graph};
use wonderland::numerics::{Rng, Tensor};
use wonderland::pipeline::{
    dit_examples, evaluate, generate_scene, psnr, train_dit_model, train_lalrm, Complexity, DiTSchedule, EvalOptions, Protocol,
    SceneSpec, TrainConfig,
};
use wonderland::Error;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> wonderland::Result<Outcome> {
    Ok(Outcome { passed, detail: detail.into() })
}

type Criterion = fn() -> wonderland::Result<Outcome>;

fn main() {
    let criteria: [(&str, Criterion); 15] = [
        ("init-equivalence", c01_init_equivalence),
        ("fusion identity", c02_fusion_identity),
        ("zero branch", c03_zero_branch),
        ("plucker properties", c04_plucker),
        ("codec roundtrip", c05_codec_roundtrip),
        ("token-length identity", c06_token_length),
        ("gaussian count", c07_gaussian_count),
        ("rasterizer gradients", c08_raster_gradients),
        ("rigid invariance", c09_rigid_invariance),
        ("schedule", c10_schedule),
        ("lalrm overfit", c11_lalrm_overfit),
        ("diffusion overfit", c12_dit_overfit),
        ("pose metrics", c13_pose_metrics),
        ("progressive gating", c14_progressive_gating),
        ("end-to-end pipeline", c15_end_to_end),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = f();
        let secs = start.elapsed().as_secs_f64();
        let (passed, detail) = match result {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!("{} {n:>2} {name:<22} {detail} [{secs:.1}s]", if passed { "PASS" } else { "FAIL" });
        ran += 1;
        failed += usize::from(!passed);
    }
    println!("{ran} criteria, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

fn desk_dit() -> DiTConfig {
    DiTConfig { patch_s: 2, ..Default::default() }
}

fn perturb_base(model: &mut CamDiT, rng: &mut Rng) {
    let p = model.params.get_mut("out.weight").unwrap();
    p.value = Tensor::randn(p.value.shape(), 0.05, rng);
}

fn c01_init_equivalence() -> wonderland::Result<Outcome> {
    let start = Instant::now();
    let dims = [3, 12, 18];
    let mut rng = Rng::seed(101);
    let mut base = CamDiT::init_base(&desk_dit(), dims, 1)?;
    perturb_base(&mut base, &mut rng);
    let mut dual = base.clone();
    dual.attach_branches(Branches::Dual, 2)?;
    let mut worst = 0.0f32;
    let mut magnitude = 0.0f32;
    for _ in 0..10 {
        let z = Tensor::randn(&[3, 12, 18, 768], 1.0, &mut rng);
        let cond = first_frame(&Tensor::rand_uniform(&[3, 12, 18, 768], -1.0, 1.0, &mut rng))?;
        let plucker = Tensor::randn(&[9, 96, 144, 6], 1.0, &mut rng);
        let tau = 1 + rng.below(998);
        let run = |m: &CamDiT| -> wonderland::Result<Tensor> {
            let mut g = Graph::inference(&m.params);
            let out = m.forward(&mut g, &DiTInput { z_tau: &z, cond: &cond, plucker: Some(&plucker), text: None, tau })?;
            Ok(g.value(out).clone())
        };
        let a = run(&base)?;
        worst = worst.max(a.max_abs_diff(&run(&dual)?)?);
        magnitude = magnitude.max(a.data().iter().fold(0.0f32, |m, v| m.max(v.abs())));
    }
    let fast = within(start, Duration::from_secs(10));
    outcome(
        worst < 1e-5 && magnitude > 0.0 && fast,
        format!("max |dual − base| {worst:.1e} over 10 inputs (outputs up to {magnitude:.2}), runtime < 10 s: {fast}"),
    )
}

fn c02_fusion_identity() -> wonderland::Result<Outcome> {
    let mut m = CamDiT::init_base(&desk_dit(), [3, 12, 18], 3)?;
    m.attach_branches(Branches::Lora, 4)?;
    let mut rng = Rng::seed(102);
    let mut worst = 0.0f32;
    for _ in 0..20 {
        let n = 1 + rng.below(200);
        let o_v = Tensor::randn(&[n, m.cfg.hidden], 1.0, &mut rng);
        let mut g = Graph::inference(&m.params);
        let a = g.input(o_v.clone());
        let b = g.input(Tensor::randn(&[n, m.cfg.hidden], 1.0, &mut rng));
        let y = m.fuse_lora(&mut g, a, b)?;
        worst = worst.max(g.value(y).max_abs_diff(&o_v)?);
    }
    outcome(worst < 1e-6, format!("max |fuse(o_v, o_lora) − o_v| {worst:.1e} over 20 inputs"))
}

fn c03_zero_branch() -> wonderland::Result<Outcome> {
    let mut m = CamDiT::init_base(&desk_dit(), [3, 12, 18], 5)?;
    m.attach_branches(Branches::Dual, 6)?;
    let mut rng = Rng::seed(103);
    let p = Tensor::randn(&[9, 96, 144, 6], 1.0, &mut rng);
    let mut details = Vec::new();
    let mut ok = true;
    for (name, branch) in [("ctrl", CameraBranch::Ctrl), ("lora", CameraBranch::Lora)] {
        let (at_init, grads) = {
            let mut g = Graph::new(&m.params);
            let o = m.encode_camera(&mut g, &p, branch)?;
            let zero = g.value(o).data().iter().all(|&v| v == 0.0);
            let target = g.input(Tensor::randn(g.value(o).shape(), 1.0, &mut rng));
            let loss = g.tape.mse(o, target)?;
            g.backward(loss)?;
            (zero, g.grads())
        };
        let nonzero_grad = grads.values().any(|t| t.data().iter().any(|&v| v != 0.0));
        let mut stepped = m.clone();
        AdamW::default().step(&mut stepped.params, &grads, 1e-3)?;
        let mut g = Graph::inference(&stepped.params);
        let o = stepped.encode_camera(&mut g, &p, branch)?;
        let moved = g.value(o).data().iter().filter(|&&v| v != 0.0).count();
        ok &= at_init && nonzero_grad && moved > 0;
        details.push(format!("{name}: zero at init {at_init}, nonzero after step {moved}/{}", g.value(o).len()));
    }
    outcome(ok, details.join("; "))
}

fn c04_plucker() -> wonderland::Result<Outcome> {
    let mut rng = Rng::seed(104);
    let mut worst_norm = 0.0f64;
    let mut worst_dot = 0.0f64;
    for _ in 0..100 {
        let k = intrinsics(rng.uniform_f64(20.0, 200.0), rng.uniform_f64(20.0, 200.0), rng.uniform_f64(10.0, 80.0), rng.uniform_f64(10.0, 60.0));
        let pose = CameraPose::random(&mut rng, k, 5.0);
        for _ in 0..64 {
            let (u, v) = (rng.uniform_f64(0.0, 160.0), rng.uniform_f64(0.0, 120.0));
            let p = plucker_pixel(&pose, u, v, RayDirection::WithTranslation)?;
            let (m, d) = (Vector3::new(p[0], p[1], p[2]), Vector3::new(p[3], p[4], p[5]));
            worst_norm = worst_norm.max((d.norm() - 1.0).abs());
            worst_dot = worst_dot.max(m.dot(&d).abs());
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let k = Matrix3::identity();
    let a = plucker_pixel(&CameraPose::identity(k), 0.0, 0.0, RayDirection::WithTranslation)?;
    let mut moved = CameraPose::identity(k);
    moved.t = Vector3::new(1.0, 0.0, 0.0);
    let b = plucker_pixel(&moved, 0.0, 0.0, RayDirection::WithTranslation)?;
    let hand = |got: [f64; 6], want: [f64; 6]| got.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-4);
    let examples = hand(a, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]) && hand(b, [0.0, -h, 0.0, h, 0.0, h]);
    outcome(
        worst_norm < 1e-5 && worst_dot < 1e-5 && examples,
        format!("max |‖d‖−1| {worst_norm:.1e}, max |m·d| {worst_dot:.1e} over 6400 rays, hand-derived vectors match {examples}"),
    )
}

fn c05_codec_roundtrip() -> wonderland::Result<Outcome> {
    let codec = LosslessCodec::default();
    let mut rng = Rng::seed(105);
    let mut shapes: Vec<(usize, usize, usize)> = Vec::new();
    for t in [1, 5, 9, 49] {
        for h in [8, 16, 32] {
            for w in [8, 16, 32] {
                shapes.push((t, h, w));
            }
        }
    }
    shapes.extend([(1, 480, 720), (9, 480, 720), (49, 480, 720)]);
    let mut exact = 0;
    let mut full_grid = None;
    for &(t, h, w) in &shapes {
        let video = Video::new(Tensor::rand_uniform(&[t, h, w, 3], 0.0, 1.0, &mut rng))?;
        let latent = codec.encode(&video)?;
        if (t, h, w) == (49, 480, 720) {
            full_grid = Some(latent.data.shape()[..3].to_vec());
        }
        let back = codec.decode(&latent)?;
        exact += usize::from(back.data.shape() == video.data.shape() && back.data.data() == video.data.data());
    }
    let grid_ok = full_grid.as_deref() == Some(&[13, 60, 90][..]);
    outcome(
        exact == shapes.len() && grid_ok,
        format!("{exact}/{} shapes bit-exact, 49×480×720 → {full_grid:?}", shapes.len()),
    )
}

fn token_lengths(cfg: &LaLRMConfig, frames: usize, h: usize, w: usize) -> wonderland::Result<(usize, usize)> {
    let t = 1 + (frames - 1) / cfg.r_t;
    let grid = cfg.latent_grid(t, h / cfg.r_s, w / cfg.r_s)?;
    let model = LaLRM::init(cfg, grid, 0)?;
    let mut g = Graph::inference(&model.params);
    let z = Tensor::zeros(&[t, h / cfg.r_s, w / cfg.r_s, cfg.latent_channels]);
    let lt = model.tokenize_latent(&mut g, &z)?;
    let nl = g.tape.shape(lt)[0];
    let pt = model.tokenize_pose(&mut g, &Tensor::zeros(&[frames, h, w, 6]))?;
    let np = g.tape.shape(pt)[0];
    Ok((nl, np))
}

fn c06_token_length() -> wonderland::Result<Outcome> {
    let tiny = |p_l: usize, r_t: usize, r_s: usize| LaLRMConfig {
        num_blocks: 1,
        hidden: 8,
        heads: 2,
        p_l,
        r_t,
        r_s,
        latent_channels: 3 * r_t * r_s * r_s,
        ..Default::default()
    };
    let mut configs = vec![(tiny(2, 4, 8), 49, 480, 720)];
    for (frames, h, w) in [(1, 16, 16), (5, 16, 32), (9, 32, 32), (9, 48, 64), (13, 32, 48), (17, 64, 32)] {
        configs.push((tiny(2, 4, 8), frames, h, w));
    }
    for (frames, h, w) in [(9, 48, 72), (9, 96, 144), (1, 24, 24), (5, 48, 48)] {
        configs.push((tiny(3, 4, 8), frames, h, w));
    }
    for (frames, h, w) in [(3, 8, 8), (5, 12, 8), (7, 16, 20)] {
        configs.push((tiny(2, 2, 2), frames, h, w));
    }
    for (frames, h, w) in [(1, 4, 4), (4, 8, 12), (6, 12, 12)] {
        configs.push((tiny(1, 1, 4), frames, h, w));
    }
    for (frames, h, w) in [(9, 64, 64), (5, 32, 96), (13, 64, 128)] {
        configs.push((tiny(1, 4, 16), frames, h, w));
    }
    let mut matched = 0;
    let mut full = 0;
    for (i, (cfg, frames, h, w)) in configs.iter().enumerate() {
        let (nl, np) = token_lengths(cfg, *frames, *h, *w)?;
        matched += usize::from(nl == np);
        if i == 0 {
            full = nl;
        }
    }
    outcome(
        matched == configs.len() && configs.len() == 20 && full == 17550,
        format!("{matched}/{} configurations match, full-scale geometry {full} tokens", configs.len()),
    )
}

fn c07_gaussian_count() -> wonderland::Result<Outcome> {
    let (frames, h, w) = (9, 48, 72);
    let mut rng = Rng::seed(107);
    let k = intrinsics(60.0, 60.0, 36.0, 24.0);
    let traj = Trajectory::new((0..frames).map(|_| CameraPose::random(&mut rng, k, 1.0)).collect())?;
    let mut counts = Vec::new();
    for (variant, (sh, sw), expect) in [(Variant::LowRes, (h, w), frames * h * w), (Variant::HighRes, (2 * h, 2 * w), frames * h * w)] {
        let cfg = LaLRMConfig { num_blocks: 1, hidden: 16, heads: 2, p_l: 3, variant, ..Default::default() };
        let grid = cfg.latent_grid(1 + (frames - 1) / cfg.r_t, sh / cfg.r_s, sw / cfg.r_s)?;
        let model = LaLRM::init(&cfg, grid, 1)?;
        let latent = LosslessCodec { r_t: cfg.r_t, r_s: cfg.r_s }.encode(&Video::new(Tensor::rand_uniform(&[frames, sh, sw, 3], 0.0, 1.0, &mut rng))?)?;
        let traj = traj.rescaled(sh as f64 / h as f64);
        let plucker = plucker_embed(&traj, sh, sw, PluckerOptions::default())?;
        let mut g = Graph::inference(&model.params);
        let map = model.forward(&mut g, &latent, &plucker)?;
        let cloud = lift_cloud(g.value(map.g), &traj, sh, (map.height, map.width), &cfg)?;
        counts.push((variant.name(), sh, sw, cloud.len(), expect));
    }
    let full = LaLRMConfig { variant: Variant::HighRes, ..Default::default() };
    let (ph, pw) = full.gaussian_raster(480, 720);
    let full_count = 49 * ph * pw;
    let (lh, lw) = LaLRMConfig::default().gaussian_raster(480, 720);
    let ok = counts.iter().all(|c| c.3 == c.4) && full_count == 4_233_600 && 49 * lh * lw == 49 * 480 * 720;
    let desk: Vec<String> = counts.iter().map(|(n, sh, sw, got, want)| format!("{n} {frames}×{sh}×{sw} → {got} (want {want})")).collect();
    outcome(ok, format!("{}; full-scale high_res 49×{ph}×{pw} = {full_count}", desk.join(", ")))
}

fn c08_raster_gradients() -> wonderland::Result<Outcome> {
    let start = Instant::now();
    let pose = CameraPose::identity(intrinsics(16.0, 16.0, 8.0, 8.0));
    let mut worst = [0.0f32; 5];
    for seed in 0..5 {
        let mut rng = Rng::seed(1080 + seed);
        let cloud = common::random_cloud(&mut rng, 5);
        let mut s = RenderSettings::new(16, 16);
        s.background = [0.1, 0.2, 0.3];
        let report = gradient_check_render(&cloud, &pose, &s, 1e-3)?;
        for (w, e) in worst.iter_mut().zip(report.entries()) {
            *w = w.max(e.1);
        }
    }
    let fast = within(start, Duration::from_secs(60));
    let max = worst.iter().copied().fold(0.0, f32::max);
    let classes = ["position", "scale", "rotation", "color", "opacity"];
    let shown: Vec<String> = classes.iter().zip(worst).map(|(c, e)| format!("{c} {e:.1e}")).collect();
    outcome(
        max < 1e-2 && fast,
        format!("max relative error {}, runtime < 60 s: {fast}", shown.join(", ")),
    )
}

fn c09_rigid_invariance() -> wonderland::Result<Outcome> {
    let mut worst = 0.0f32;
    for seed in 0..10 {
        let mut rng = Rng::seed(1090 + seed);
        let cloud = common::random_cloud(&mut rng, 12);
        let pose = CameraPose::identity(intrinsics(24.0, 24.0, 12.0, 12.0));
        let q = random_rotation(&mut rng);
        let shift = Vector3::new(rng.uniform_f64(-3.0, 3.0), rng.uniform_f64(-3.0, 3.0), rng.uniform_f64(-3.0, 3.0));
        let s = RenderSettings::new(24, 24);
        let a = rasterize(&cloud, &pose, &s)?;
        let b = rasterize(&cloud.transformed(&q, &shift), &pose.transformed(&q, &shift), &s)?;
        worst = worst.max(a.color.max_abs_diff(&b.color)?);
    }
    outcome(worst < 1e-4, format!("max pixel difference {worst:.1e} over 10 seeds"))
}

fn c10_schedule() -> wonderland::Result<Outcome> {
    let steps = DiTConfig::default().schedule_steps;
    let s = DiffusionSchedule::cosine(steps)?;
    let worst = s.alpha.iter().zip(&s.sigma).map(|(a, b)| (a * a + b * b - 1.0).abs()).fold(0.0, f64::max);
    let mut rng = Rng::seed(110);
    let mut exact = true;
    for _ in 0..10 {
        let z = Tensor::randn(&[3, 4, 5], 1.0, &mut rng);
        let eps = Tensor::randn(&[3, 4, 5], 1.0, &mut rng);
        exact &= s.add_noise(&z, 0, &eps)? == z && s.add_noise(&z, steps - 1, &eps)? == eps;
    }
    outcome(worst < 1e-6 && exact, format!("max |α²+σ²−1| {worst:.1e} over {steps} steps, endpoint identities exact {exact}"))
}

fn c11_lalrm_overfit() -> wonderland::Result<Outcome> {
    let start = Instant::now();
    let scene = generate_scene(7, Complexity::Small, &SceneSpec { frames: 17, height: 48, width: 72 })?;
    let lcfg = LaLRMConfig { p_l: 3, ..Default::default() };
    let cfg = TrainConfig { steps: 2000, clip_start: Some(0), ..Default::default() };
    let out = train_lalrm(&cfg, &lcfg, std::slice::from_ref(&scene), None, None, |_, _| {})?;
    let report = evaluate(&[scene], Protocol::Latent(&out.model), &EvalOptions::default())?;
    let (seen, unseen) = (report.psnr_seen.unwrap_or(f64::NAN), report.psnr_unseen.unwrap_or(f64::NAN));
    let fast = within(start, Duration::from_secs(30 * 60));
    outcome(
        seen >= 30.0 && unseen >= 20.0 && fast,
        format!("2000 steps, seen PSNR {seen:.2} dB, unseen PSNR {unseen:.2} dB, runtime < 30 min: {fast}"),
    )
}

const DIT_SAMPLE_STEPS: usize = 25;

fn c12_dit_overfit() -> wonderland::Result<Outcome> {
    let start = Instant::now();
    let scene = generate_scene(7, Complexity::Small, &SceneSpec { frames: 17, height: 96, width: 144 })?;
    let cfg = desk_dit();
    let data = dit_examples(std::slice::from_ref(&scene), &cfg, 9, 2, PluckerOptions::default())?;
    let schedule = DiTSchedule::default();
    let model = train_dit_model(&cfg, Branches::Dual, None, &data, &schedule, |_, _| {})?;
    let ex = &data[0];
    let image = VideoLatent { data: first_frame(&ex.latent.data)?, ..ex.latent.clone() };
    let req = SampleRequest { image: &image, plucker: &ex.plucker, text: None, steps: DIT_SAMPLE_STEPS, seed: 0 };
    let a = sample(&model, &req)?;
    let b = sample(&model, &req)?;
    let deterministic = a.data == b.data;
    let mae = a.data.data().iter().zip(ex.latent.data.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.data.len() as f64;
    let fast = within(start, Duration::from_secs(30 * 60));
    outcome(
        mae < 0.1 && deterministic && fast,
        format!(
            "{} + {} steps, {DIT_SAMPLE_STEPS}-step sample MAE {mae:.4}, deterministic {deterministic}, runtime < 30 min: {fast}",
            schedule.base_steps, schedule.branch_steps
        ),
    )
}

fn c13_pose_metrics() -> wonderland::Result<Outcome> {
    let mut rng = Rng::seed(113);
    let k = intrinsics(50.0, 50.0, 25.0, 25.0);
    let mut self_zero = true;
    let mut invariance = 0.0f64;
    let mut idempotent = true;
    for _ in 0..20 {
        let n = 2 + rng.below(8);
        let a = Trajectory::new((0..n).map(|_| CameraPose::random(&mut rng, k, 3.0)).collect())?;
        let b = Trajectory::new((0..n).map(|_| CameraPose::random(&mut rng, k, 3.0)).collect())?;
        self_zero &= pose_errors(&a, &a)? == (0.0, 0.0);
        let q = random_rotation(&mut rng);
        let shift = Vector3::new(rng.uniform_f64(-5.0, 5.0), rng.uniform_f64(-5.0, 5.0), rng.uniform_f64(-5.0, 5.0));
        let moved = |t: &Trajectory| t.map_poses(|p| p.transformed(&q, &shift));
        let (r0, t0) = pose_errors(&normalize_trajectory(&a), &normalize_trajectory(&b))?;
        let (r1, t1) = pose_errors(&normalize_trajectory(&moved(&a)), &normalize_trajectory(&moved(&b)))?;
        invariance = invariance.max((r0 - r1).abs()).max((t0 - t1).abs());
        let once = normalize_trajectory(&a);
        let twice = normalize_trajectory(&once);
        idempotent &= once.poses().iter().zip(twice.poses()).all(|(x, y)| x.r == y.r && x.t == y.t && x.k == y.k);
    }
    let id = CameraPose::identity(k);
    let mut turned = id.clone();
    turned.r = axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
    let (r, _) = pose_errors(&Trajectory::new(vec![id])?, &Trajectory::new(vec![turned])?)?;
    let quarter = (r - std::f64::consts::FRAC_PI_2).abs();
    outcome(
        self_zero && quarter < 1e-6 && invariance < 1e-5 && idempotent,
        format!(
            "self errors zero {self_zero}, 90° case off by {quarter:.1e}, rigid-transform change {invariance:.1e}, idempotent {idempotent}"
        ),
    )
}

const GATING_LOW_STEPS: usize = 200;

fn c14_progressive_gating() -> wonderland::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let data = root.join("data");
    common::cli(&["synth", "--seed", "14", "--scenes", "2", "--out", common::path(&data)])?;
    let gated = common::cli(&["train", "--model", "lalrm", "--stage", "high_res", "--dataset", common::path(&data), "--out", common::path(&root.join("hi0"))]);
    let state_error = matches!(gated, Err(Error::State(_)));
    let low = root.join("low");
    let low_steps = GATING_LOW_STEPS.to_string();
    common::cli(&["train", "--model", "lalrm", "--stage", "low_res", "--dataset", common::path(&data), "--out", common::path(&low), "--steps", &low_steps, "--set", "train.eval_every=0"])?;
    let high = root.join("high");
    let code = common::cli(&[
        "train", "--model", "lalrm", "--stage", "high_res", "--dataset", common::path(&data), "--out", common::path(&high),
        "--init", common::path(&low.join("lalrm_low_res.wlck")), "--steps", "500",
        "--set", "train.dit_mix=0", "--set", "train.eval_every=0",
    ])?;
    let losses: Vec<f64> = common::read_losses(&high.join("loss_high_res.csv")).into_iter().map(|r| r.1).collect();
    let windows = wonderland::pipeline::window_means(&losses, 100);
    let monotone = windows.len() == 5 && windows.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = windows.iter().map(|v| format!("{v:.4}")).collect();
    outcome(
        state_error && code == 0 && monotone,
        format!("ungated run gives state error {state_error}; 100-step loss means over 500 steps [{}] decreasing {monotone}", shown.join(", ")),
    )
}

const E2E_LOW_STEPS: usize = 1000;
const E2E_HIGH_STEPS: usize = 500;

fn c15_end_to_end() -> wonderland::Result<Outcome> {
    let start = Instant::now();
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let p = |name: &str| root.join(name);
    let data = p("data");
    let mut codes = Vec::new();
    codes.push(common::cli(&["synth", "--seed", "7", "--scenes", "1", "--out", common::path(&data)])?);
    codes.push(common::cli(&["train", "--model", "dit", "--dataset", common::path(&data), "--out", common::path(&p("dit"))])?);
    let dit = p("dit").join("dit.wlck");
    let low_steps = E2E_LOW_STEPS.to_string();
    codes.push(common::cli(&[
        "train", "--model", "lalrm", "--stage", "low_res", "--dataset", common::path(&data), "--out", common::path(&p("low")),
        "--steps", &low_steps, "--set", "train.clip_start=0",
    ])?);
    let high_steps = E2E_HIGH_STEPS.to_string();
    codes.push(common::cli(&[
        "train", "--model", "lalrm", "--stage", "high_res", "--dataset", common::path(&data), "--out", common::path(&p("high")),
        "--init", common::path(&p("low").join("lalrm_low_res.wlck")), "--dit", common::path(&dit),
        "--steps", &high_steps, "--set", "train.clip_start=0",
    ])?);
    let lalrm = p("high").join("lalrm_high_res.wlck");
    let scene = data.join("scene_00000");
    codes.push(common::cli(&[
        "reconstruct", "--image", common::path(&scene.join("frames").join("frame_00000.png")),
        "--trajectory", common::path(&scene.join("trajectory.txt")), "--dit", common::path(&dit),
        "--lalrm", common::path(&lalrm), "--out", common::path(&p("rec")),
    ])?);
    codes.push(common::cli(&[
        "eval", "--checkpoint", common::path(&lalrm), "--dataset", common::path(&data), "--dit", common::path(&dit),
        "--report", common::path(&p("eval").join("report.json")),
    ])?);
    let all_zero = codes.iter().all(|&c| c == 0);
    let mut seen = Vec::new();
    for f in (0..17).step_by(2) {
        let name = format!("frame_{f:05}.png");
        let render = read_png(&p("rec").join("renders").join(&name))?;
        let truth = read_png(&scene.join("frames").join(&name))?;
        seen.push(psnr(&render, &truth)?);
    }
    let seen_psnr = seen.iter().sum::<f64>() / seen.len() as f64;
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    outcome(
        all_zero && minutes < 90.0 && seen_psnr >= 25.0,
        format!("exit codes {codes:?}, reconstruct seen-view PSNR {seen_psnr:.2} dB, total {minutes:.1} min (< 90)"),
    )
}
