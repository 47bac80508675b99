use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::{resolve_config, write_run_lock, EvalArgs, ModelKind, ReconstructArgs, SynthArgs, TrainArgs};
use crate::cam_dit::{sample, Branches, CamDiT, DiTConfig, SampleRequest};
use crate::camera::{read_trajectory, trajectory_errors, CameraPose, Normalization, Trajectory};
use crate::codec::{Codec, LosslessCodec, Video};
use crate::error::{contract_err, Error, Result};
use crate::gsplat::{read_png, save_splat, write_png};
use crate::lalrm::{LaLRM, LaLRMConfig, Variant};
use crate::pipeline::{
    clip_at,    dit_checkpoint, dit_examples, dit_from_checkpoint, evaluate, generate_scene, lalrm_checkpoint, lalrm_from_checkpoint,
    load_latent, reconstruct as reconstruct_cloud, reconstruct_scene, render_frames, save_latent, scene_dir, train_dit_model, train_lalrm,
    write_frames, write_report, write_scene, Checkpoint, Complexity, DiTSchedule, EvalOptions, Protocol, SceneSpec,
    SyntheticScene, TrainConfig,
};

/// Resolved settings of one command: defaults, then the config file, then flags.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub values: BTreeMap<String, String>,
    pub out: PathBuf,
}

impl RunConfig {
    fn get(&self, k: &str) -> Option<String> {
        self.values.get(k).cloned()
    }

    fn parse<T: std::str::FromStr>(&self, k: &str, default: T) -> Result<T> {
        match self.values.get(k) {
            Some(v) => v.parse().map_err(|_| contract_err!("{k}: invalid value `{v}`")),
            None => Ok(default),
        }
    }
}

fn io_err(msg: String) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, msg))
}

/// Desk-geometry defaults of the model configs.
fn lalrm_defaults() -> LaLRMConfig {
    LaLRMConfig { p_l: 3, ..Default::default() }
}

fn dit_defaults() -> DiTConfig {
    DiTConfig { patch_s: 2, ..Default::default() }
}

fn pairs(v: Vec<(String, String)>) -> Vec<(&'static str, String)> {
    v.into_iter().map(|(k, v)| (&*Box::leak(k.into_boxed_str()), v)).collect()
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let complexity = Complexity::parse(&a.complexity)?;
    let spec = SceneSpec { frames: a.frames, height: a.height, width: a.width };
    std::fs::create_dir_all(&a.out)?;
    let cfg: BTreeMap<String, String> = [
        ("synth.seed", a.seed.to_string()),
        ("synth.scenes", a.scenes.to_string()),
        ("synth.complexity", a.complexity.clone()),
        ("synth.frames", a.frames.to_string()),
        ("synth.height", a.height.to_string()),
        ("synth.width", a.width.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    write_run_lock(&a.out, "synth", &cfg)?;
    for i in 0..a.scenes {
        let seed = a.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let scene = generate_scene(seed, complexity, &spec)?;
        write_scene(&scene_dir(&a.out, i), &scene)?;
        println!("scene {i}: {} gaussians, {} frames", scene.cloud.len(), scene.video.frames());
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let scenes = crate::pipeline::read_dataset(&a.dataset)?;
    if scenes.is_empty() {
        return Err(contract_err!("dataset {} holds no scenes", a.dataset.display()));
    }
    match a.model {
        ModelKind::Lalrm => train_lalrm_cmd(a, scenes),
        ModelKind::Dit => train_dit_cmd(a, scenes),
    }
}

fn train_lalrm_cmd(a: &TrainArgs, scenes: Vec<SyntheticScene>) -> Result<()> {
    let stage = Variant::parse(a.stage.as_deref().unwrap_or("low_res"))?;
    let mut defaults = pairs(lalrm_defaults().to_pairs());
    defaults.extend(pairs(TrainConfig { stage, ..Default::default() }.to_pairs()));
    defaults.push(("train.eval_every", "250".into()));
    let mut values = resolve_config(&a.common, &defaults)?;
    values.insert("train.stage".into(), stage.name().into());
    if let Some(s) = a.steps {
        values.insert("train.steps".into(), s.to_string());
    }
    if let Some(s) = a.common.seed {
        values.insert("train.seed".into(), s.to_string());
    }
    let rc = RunConfig { values, out: a.out.clone() };
    let cfg = TrainConfig::from_pairs(|k| rc.get(k))?;
    let lcfg = LaLRMConfig::from_pairs(|k| rc.get(k))?;
    let eval_every: usize = rc.parse("train.eval_every", 250)?;

    let init = match (&a.init, stage) {
        (Some(p), _) => Some(lalrm_from_checkpoint(&Checkpoint::load(p)?)?),
        (None, Variant::HighRes) => {
            return Err(Error::State(
                "high_res training needs a low_res checkpoint: run `wonderland train --model lalrm --stage low_res` first and pass its checkpoint with --init".into(),
            ))
        }
        (None, Variant::LowRes) => None,
    };
    let dit = match &a.dit {
        Some(p) => Some(dit_from_checkpoint(&Checkpoint::load(p)?)?),
        None if stage == Variant::HighRes && cfg.dit_mix > 0.0 => {
            return Err(Error::State(
                "high_res training mixes in generated latents: pass a trained diffusion checkpoint with --dit, or set train.dit_mix = 0".into(),
            ))
        }
        None => None,
    };
    let scenes = match stage {
        Variant::LowRes => scenes.iter().map(SyntheticScene::downsampled).collect::<Result<Vec<_>>>()?,
        Variant::HighRes => scenes,
    };
    write_run_lock(&rc.out, "train lalrm", &rc.values)?;
    let name = stage.name();
    let mut csv = std::io::BufWriter::new(std::fs::File::create(rc.out.join(format!("loss_{name}.csv")))?);
    writeln!(csv, "step,loss,lr,generated")?;
    let eval_dir = rc.out.join(format!("eval_{name}"));
    std::fs::create_dir_all(&eval_dir)?;
    let opts = EvalOptions { frames: cfg.frames, stride: cfg.stride, plucker: cfg.plucker, ..Default::default() };
    let preview_scene = scenes[0].clone();
    let mut io_error = None;
    let outcome = train_lalrm(&cfg, &lcfg, &scenes, init, dit.as_ref(), |s, model| {
        let line = writeln!(csv, "{},{},{},{}", s.step, s.loss, s.lr, u8::from(s.generated));
        if let Err(e) = line {
            io_error.get_or_insert(Error::Io(e));
        }
        let last = s.step + 1 == cfg.steps;
        if s.step % 50 == 0 || last {
            println!("step {:6}  loss {:.6}  lr {:.2e}", s.step, s.loss, s.lr);
        }
        if eval_every > 0 && (s.step % eval_every == 0 || last) {
            if let Err(e) = preview(model, &preview_scene, &opts, &eval_dir.join(format!("step_{:05}.png", s.step))) {
                io_error.get_or_insert(e);
            }
        }
    })?;
    csv.flush()?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let mut extra = cfg.to_pairs();
    extra.push(("train.final_loss".into(), outcome.losses.last().copied().unwrap_or(f64::NAN).to_string()));
    let path = rc.out.join(format!("lalrm_{name}.wlck"));
    lalrm_checkpoint(&outcome.model, extra).save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn preview(model: &LaLRM, scene: &SyntheticScene, opts: &EvalOptions, path: &Path) -> Result<()> {
    let rec = reconstruct_scene(scene, Protocol::Latent(model), opts)?;
    let frame = rec.seen[rec.seen.len() / 2];
    let img = render_frames(&rec.cloud, &rec.cameras, &[frame], scene.video.height(), scene.video.width())?;
    write_png(path, &img[0])
}

fn train_dit_cmd(a: &TrainArgs, scenes: Vec<SyntheticScene>) -> Result<()> {
    let mut defaults = pairs(dit_defaults().to_pairs());
    defaults.extend(pairs(DiTSchedule::default().to_pairs()));
    defaults.push(("dit_train.branches", "dual".into()));
    defaults.push(("train.frames", "9".into()));
    defaults.push(("train.stride", "2".into()));
    let mut values = resolve_config(&a.common, &defaults)?;
    values.insert("dit.branches".into(), "none".into());
    if let Some(b) = &a.branches {
        values.insert("dit_train.branches".into(), b.clone());
    }
    let branches = Branches::parse(&values["dit_train.branches"])?;
    if let Some(s) = a.steps {
        let key = if branches == Branches::None { "dit_train.base_steps" } else { "dit_train.branch_steps" };
        values.insert(key.into(), s.to_string());
    }
    if let Some(s) = a.common.seed {
        values.insert("dit_train.seed".into(), s.to_string());
    }
    let rc = RunConfig { values, out: a.out.clone() };
    let dcfg = DiTConfig::from_pairs(|k| rc.get(k))?;
    let schedule = DiTSchedule::from_pairs(&rc.values)?;
    let frames: usize = rc.parse("train.frames", 9)?;
    let stride: usize = rc.parse("train.stride", 2)?;
    let base = match &a.init {
        Some(p) => Some(dit_from_checkpoint(&Checkpoint::load(p)?)?),
        None => None,
    };
    write_run_lock(&rc.out, "train dit", &rc.values)?;
    let data = dit_examples(&scenes, &dcfg, frames, stride, Default::default())?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(rc.out.join("loss_dit.csv"))?);
    writeln!(csv, "step,loss")?;
    let mut io_error = None;
    let model = train_dit_model(&dcfg, branches, base, &data, &schedule, |step, loss| {
        if let Err(e) = writeln!(csv, "{step},{loss}") {
            io_error.get_or_insert(Error::Io(e));
        }
        if step % 50 == 0 {
            println!("step {step:6}  loss {loss:.6}");
        }
    })?;
    csv.flush()?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let path = rc.out.join("dit.wlck");
    let mut extra = schedule.to_pairs();
    extra.push(("train.frames".into(), frames.to_string()));
    extra.push(("train.stride".into(), stride.to_string()));
    dit_checkpoint(&model, extra).save(&path)?;
    println!("wrote {}", path.display());

    let ex = &data[0];
    let codec = LosslessCodec { r_t: dcfg.r_t, r_s: dcfg.r_s };
    let image = crate::codec::VideoLatent { data: crate::cam_dit::first_frame(&ex.latent.data)?, ..ex.latent.clone() };
    let req = SampleRequest { image: &image, plucker: &ex.plucker, text: None, steps: model.cfg.steps, seed: schedule.seed };
    let sampled = sample(&model, &req)?;
    let mae = sampled.data.data().iter().zip(ex.latent.data.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>()
        / sampled.data.len() as f64;
    println!("sample of example 0: latent MAE {mae:.4}");
    let video = codec.decode(&sampled)?;
    write_frames(&rc.out.join("eval_dit"), (0..video.frames()).map(|f| video.frame(f).map(|v| v.clamp(0.0, 1.0))))?;
    Ok(())
}

/// `n` cameras on a circle of `radius` around `first`'s center, in its image
/// plane, all looking at the point `depth` ahead of it.
pub fn orbit_poses(first: &CameraPose, depth: f64, radius: f64, n: usize) -> Result<Vec<CameraPose>> {
    let (x, y, z) = (first.r.column(0).into_owned(), first.r.column(1).into_owned(), first.r.column(2).into_owned());
    let target = first.t + z * depth;
    (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let eye: Vector3<f64> = first.t + radius * (a.cos() * x + a.sin() * y);
            CameraPose::look_at(eye, target, -y, first.k)
        })
        .collect()
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let rc = RunConfig { values: resolve_config(&a.common, &[])?, out: a.out.clone() };
    let traj = read_trajectory(&a.trajectory)?;
    let image = read_png(&a.image)?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let lalrm_ck = Checkpoint::load(&a.lalrm)?;
    let lalrm = lalrm_from_checkpoint(&lalrm_ck)?;
    let tcfg = TrainConfig::from_pairs(|k| lalrm_ck.get(k))?;
    let seen_idx: Vec<usize> = if traj.len() == tcfg.frames {
        (0..traj.len()).collect()
    } else {
        clip_at(traj.len(), tcfg.frames, tcfg.stride, 0)?.seen
    };
    let norm = Normalization::of(&traj.select(&seen_idx)?);
    let all: Vec<CameraPose> = traj.poses().iter().map(|p| norm.apply_pose(p)).collect();
    let seen = Trajectory::new(seen_idx.iter().map(|&f| all[f].clone()).collect())?;
    let codec = LosslessCodec { r_t: lalrm.cfg.r_t, r_s: lalrm.cfg.r_s };
    let [lt, lh, lw, _] = codec.latent_shape(seen.len(), h, w)?;
    let grid = lalrm.cfg.latent_grid(lt, lh, lw)?;
    if grid != lalrm.grid()? {
        return Err(contract_err!(
            "{}×{w} input gives latent grid {grid:?} but the {} checkpoint was trained on {:?}; use a checkpoint trained at this raster (high_res)",
            h,
            lalrm.cfg.variant.name(),
            lalrm.grid()?
        ));
    }
    let mut values = rc.values.clone();
    let latent = if a.skip_dit {
        let p = a.latent.as_ref().ok_or_else(|| contract_err!("--skip-dit needs --latent PATH"))?;
        values.insert("reconstruct.latent".into(), p.display().to_string());
        load_latent(p)?
    } else {
        let p = a.dit.as_ref().ok_or_else(|| contract_err!("reconstruct needs --dit CKPT (or --skip-dit with --latent)"))?;
        let dit = dit_from_checkpoint(&Checkpoint::load(p)?)?;
        let steps = a.steps.unwrap_or(dit.cfg.steps);
        let seed = a.common.seed.unwrap_or(0);
        values.insert("reconstruct.steps".into(), steps.to_string());
        values.insert("reconstruct.seed".into(), seed.to_string());
        let codec = LosslessCodec { r_t: dit.cfg.r_t, r_s: dit.cfg.r_s };
        let cond = codec.encode(&Video::from_frames(&[image.clone()])?)?;
        let plucker = crate::camera::plucker_embed(&seen, h, w, tcfg.plucker)?;
        sample(&dit, &SampleRequest { image: &cond, plucker: &plucker, text: None, steps, seed })?
    };
    values.insert("reconstruct.image".into(), a.image.display().to_string());
    values.insert("reconstruct.trajectory".into(), a.trajectory.display().to_string());
    values.insert("reconstruct.lalrm".into(), a.lalrm.display().to_string());
    write_run_lock(&rc.out, "reconstruct", &values)?;

    let cloud = reconstruct_cloud(&lalrm, &latent, &seen, h, w, tcfg.plucker)?;
    save_splat(&rc.out.join("cloud.splat"), &cloud)?;
    save_latent(&rc.out.join("latent.wlck"), &latent)?;
    let renders = render_frames(&cloud, &all, &(0..all.len()).collect::<Vec<_>>(), h, w)?;
    write_frames(&rc.out.join("renders"), renders)?;
    let depth = {
        let mut d: Vec<f64> = cloud.positions.iter().map(|p| seen.poses()[0].to_camera(&Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)).z).collect();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2].max(0.5)
    };
    let orbit = orbit_poses(&seen.poses()[0], depth, 0.1 * depth, 8)?;
    let renders = render_frames(&cloud, &orbit, &(0..orbit.len()).collect::<Vec<_>>(), h, w)?;
    write_frames(&rc.out.join("orbit"), renders)?;
    println!("{} gaussians ({} variant) written to {}", cloud.len(), lalrm.cfg.variant.name(), rc.out.display());
    Ok(())
}

/// Scenes at the raster the model was trained for.
fn match_raster(model: &LaLRM, scenes: Vec<SyntheticScene>) -> Result<Vec<SyntheticScene>> {
    let fits = |s: &SyntheticScene| -> bool {
        let (h, w) = (s.video.height(), s.video.width());
        h % model.cfg.r_s == 0
            && w % model.cfg.r_s == 0
            && model.cfg.latent_grid(1, h / model.cfg.r_s, w / model.cfg.r_s).ok().map(|g| g[1..] == model.grid().unwrap_or_default()[1..]).unwrap_or(false)
    };
    scenes.into_iter().map(|s| if fits(&s) { Ok(s) } else { s.downsampled() }).collect()
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if let Some(paths) = &a.trajectories {
        let (ta, tb) = (read_trajectory(&paths[0])?, read_trajectory(&paths[1])?);
        let (r, t) = trajectory_errors(&ta, &tb)?;
        println!("R_err {r:.6} rad ({:.4} deg)", r.to_degrees());
        println!("T_err {t:.6}");
        return Ok(());
    }
    let dataset = a.dataset.as_ref().ok_or_else(|| contract_err!("eval needs --dataset (or --trajectories A B)"))?;
    let report_path = a.report.as_ref().ok_or_else(|| contract_err!("eval needs --report PATH"))?;
    if !dataset.is_dir() {
        return Err(io_err(format!("dataset {} does not exist", dataset.display())));
    }
    let mut values = resolve_config(&a.common, &[])?;
    values.insert("eval.dataset".into(), dataset.display().to_string());
    let scenes = crate::pipeline::read_dataset(dataset)?;
    let seed = a.common.seed.unwrap_or(0);
    let report = if a.ground_truth {
        values.insert("eval.protocol".into(), "ground_truth".into());
        evaluate(&scenes, Protocol::GroundTruth, &EvalOptions::default())?
    } else {
        let p = a.checkpoint.as_ref().ok_or_else(|| contract_err!("eval needs --checkpoint (or --ground-truth)"))?;
        let ck = Checkpoint::load(p)?;
        let model = lalrm_from_checkpoint(&ck)?;
        let tcfg = TrainConfig::from_pairs(|k| ck.get(k))?;
        let opts = EvalOptions { frames: tcfg.frames, stride: tcfg.stride, plucker: tcfg.plucker, ..Default::default() };
        values.insert("eval.checkpoint".into(), p.display().to_string());
        let dit: Option<CamDiT> = match &a.dit {
            Some(d) => Some(dit_from_checkpoint(&Checkpoint::load(d)?)?),
            None => None,
        };
        let scenes = if dit.is_some() { scenes } else { match_raster(&model, scenes)? };
        match &dit {
            Some(d) => {
                let steps = a.steps.unwrap_or(d.cfg.steps);
                values.insert("eval.protocol".into(), "generated".into());
                values.insert("eval.steps".into(), steps.to_string());
                values.insert("eval.seed".into(), seed.to_string());
                evaluate(&scenes, Protocol::Generated { lalrm: &model, dit: d, steps, seed }, &opts)?
            }
            None => {
                values.insert("eval.protocol".into(), "latent".into());
                evaluate(&scenes, Protocol::Latent(&model), &opts)?
            }
        }
    };
    let dir = report_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    write_run_lock(dir, "eval", &values)?;
    write_report(report_path, &report)?;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>10}", "scene", "psnr_14", "ssim_14", "psnr_uns", "ssim_uns", "psnr_seen");
    for m in &report.scenes {
        println!(
            "{:>6} {:>10.3} {:>10.4} {:>10.3} {:>10.4} {:>10.3}",
            m.scene, m.psnr_first14, m.ssim_first14, m.psnr_unseen, m.ssim_unseen, m.psnr_seen
        );
    }
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "mean",
        f(report.psnr_first14),
        f(report.ssim_first14),
        f(report.psnr_unseen),
        f(report.ssim_unseen),
        f(report.psnr_seen)
    );
    println!("{} scenes, report written to {}", report.n_scenes, report_path.display());
    Ok(())
}
