use super::clip::{clip_at, sample_clip, ClipSample};
use super::loss::{loss_recon, LossWeights, PerceptualNet};
use super::scene::{render_settings, SyntheticScene};
use crate::cam_dit::{sample, CamDiT, SampleRequest};
use crate::camera::{plucker_embed, CameraPose, Normalization, PluckerOptions, Trajectory};
use crate::codec::{Codec, LosslessCodec, Video, VideoLatent};
use crate::error::{contract_err, numeric_err, Error, Result};
use crate::gsplat::GaussianCloud;
use crate::lalrm::{lift, lift_cloud, pixel_rays, LaLRM, LaLRMConfig, Variant};
use crate::nn::{AdamW, CosineSchedule, Graph};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub stage: Variant,
    /// Seen frames per clip `T` and their stride `s`.
    pub frames: usize,
    pub stride: usize,
    /// Supervision views per step `V`, of which `seen_views` (`V′`) are seen frames.
    pub views: usize,
    pub seen_views: usize,
    pub loss: LossWeights,
    pub lr: f64,
    pub warmup: usize,
    pub min_lr_ratio: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub seed: u64,
    /// Probability of replacing a clip by a diffusion-sampled latent (high_res only).
    pub dit_mix: f64,
    pub dit_sample_steps: usize,
    /// Fixed clip start frame; random when `None`.
    pub clip_start: Option<usize>,
    pub plucker: PluckerOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Variant::LowRes,
            frames: 9,
            stride: 2,
            views: 6,
            seen_views: 3,
            loss: LossWeights::default(),
            lr: 1e-3,
            warmup: 100,
            min_lr_ratio: 0.05,
            weight_decay: 1e-4,
            steps: 2000,
            seed: 0,
            dit_mix: 0.25,
            dit_sample_steps: 10,
            clip_start: None,
            plucker: PluckerOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seen_views > self.views {
            return Err(contract_err!("V′ = {} exceeds V = {}", self.seen_views, self.views));
        }
        if self.seen_views > self.frames {
            return Err(contract_err!("V′ = {} exceeds the {} seen frames", self.seen_views, self.frames));
        }
        if self.views == 0 || self.frames == 0 || self.stride == 0 {
            return Err(contract_err!("views, frames, and stride must be positive"));
        }
        if !(0.0..=1.0).contains(&self.dit_mix) {
            return Err(contract_err!("dit_mix must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("stage", self.stage.name().to_string()),
            ("frames", self.frames.to_string()),
            ("stride", self.stride.to_string()),
            ("views", self.views.to_string()),
            ("seen_views", self.seen_views.to_string()),
            ("lambda_mse", self.loss.mse.to_string()),
            ("lambda_perc", self.loss.perceptual.to_string()),
            ("lr", self.lr.to_string()),
            ("warmup", self.warmup.to_string()),
            ("min_lr_ratio", self.min_lr_ratio.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("dit_mix", self.dit_mix.to_string()),
            ("dit_sample_steps", self.dit_sample_steps.to_string()),
            ("clip_start", self.clip_start.map_or("random".into(), |v| v.to_string())),
            ("plucker_direction", direction_name(self.plucker).into()),
        ]
        .into_iter()
        .map(|(k, v)| (format!("train.{k}"), v))
        .collect()
    }

    pub fn from_pairs(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let d = Self::default();
        fn parsed<T: std::str::FromStr>(get: &dyn Fn(&str) -> Option<String>, k: &str, dflt: T) -> Result<T> {
            match get(&format!("train.{k}")) {
                Some(v) => v.parse().map_err(|_| contract_err!("train.{k}: invalid value `{v}`")),
                None => Ok(dflt),
            }
        }
        let get: &dyn Fn(&str) -> Option<String> = &get;
        let cfg = Self {
            stage: match get("train.stage") {
                Some(v) => Variant::parse(&v)?,
                None => d.stage,
            },
            frames: parsed(get, "frames", d.frames)?,
            stride: parsed(get, "stride", d.stride)?,
            views: parsed(get, "views", d.views)?,
            seen_views: parsed(get, "seen_views", d.seen_views)?,
            loss: LossWeights {
                mse: parsed(get, "lambda_mse", d.loss.mse)?,
                perceptual: parsed(get, "lambda_perc", d.loss.perceptual)?,
            },
            lr: parsed(get, "lr", d.lr)?,
            warmup: parsed(get, "warmup", d.warmup)?,
            min_lr_ratio: parsed(get, "min_lr_ratio", d.min_lr_ratio)?,
            weight_decay: parsed(get, "weight_decay", d.weight_decay)?,
            steps: parsed(get, "steps", d.steps)?,
            seed: parsed(get, "seed", d.seed)?,
            dit_mix: parsed(get, "dit_mix", d.dit_mix)?,
            dit_sample_steps: parsed(get, "dit_sample_steps", d.dit_sample_steps)?,
            clip_start: match get("train.clip_start").as_deref() {
                None | Some("random") => None,
                Some(v) => Some(v.parse().map_err(|_| contract_err!("train.clip_start: invalid value `{v}`"))?),
            },
            plucker: PluckerOptions { direction: parse_direction(get("train.plucker_direction").as_deref())?, ..Default::default() },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn direction_name(o: PluckerOptions) -> &'static str {
    match o.direction {
        crate::camera::RayDirection::WithTranslation => "with_translation",
        crate::camera::RayDirection::Pure => "pure",
    }
}

fn parse_direction(s: Option<&str>) -> Result<crate::camera::RayDirection> {
    use crate::camera::RayDirection;
    match s {
        None | Some("with_translation") => Ok(RayDirection::WithTranslation),
        Some("pure") => Ok(RayDirection::Pure),
        Some(o) => Err(contract_err!("train.plucker_direction: unknown value `{o}`")),
    }
}

/// Model inputs for one clip, in the frame of its first seen camera.
#[derive(Clone, Debug)]
pub struct ClipInputs {
    pub clip: ClipSample,
    pub normalization: Normalization,
    /// Normalized cameras of the seen frames.
    pub seen: Trajectory,
    /// Normalized cameras of every source frame, indexed like the scene.
    pub all: Vec<CameraPose>,
    pub plucker: Tensor,
    pub video: Video,
}

pub fn clip_inputs(scene: &SyntheticScene, clip: &ClipSample, opts: PluckerOptions) -> Result<ClipInputs> {
    let raw = scene.trajectory.select(&clip.seen)?;
    let normalization = Normalization::of(&raw);
    let all: Vec<CameraPose> = scene.trajectory.poses().iter().map(|p| normalization.apply_pose(p)).collect();
    let seen = Trajectory::new(clip.seen.iter().map(|&f| all[f].clone()).collect())?;
    let plucker = plucker_embed(&seen, scene.video.height(), scene.video.width(), opts)?;
    let video = scene.video.select(&clip.seen)?;
    Ok(ClipInputs { clip: clip.clone(), normalization, seen, all, plucker, video })
}

/// Feed-forward reconstruction of a latent observed by `seen` cameras at an
/// `height × width` source raster.
pub fn reconstruct(model: &LaLRM, latent: &VideoLatent, seen: &Trajectory, height: usize, width: usize, opts: PluckerOptions) -> Result<GaussianCloud> {
    let plucker = plucker_embed(seen, height, width, opts)?;
    let mut g = Graph::inference(&model.params);
    let map = model.forward(&mut g, latent, &plucker)?;
    lift_cloud(g.value(map.g), seen, height, (map.height, map.width), &model.cfg)
}

#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub generated: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: LaLRM,
    pub losses: Vec<f64>,
}

/// Progressive LaLRM training. `low_res` starts fresh (or resumes a low-res
/// model); `high_res` requires a model from the low-res stage and converts
/// it to the high-res decoder.
pub fn train_lalrm(
    cfg: &TrainConfig,
    lcfg: &LaLRMConfig,
    scenes: &[SyntheticScene],
    init: Option<LaLRM>,
    dit: Option<&CamDiT>,
    mut on_step: impl FnMut(&StepInfo, &LaLRM),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(contract_err!("train_lalrm: no scenes"));
    }
    let (h, w) = (scenes[0].video.height(), scenes[0].video.width());
    if scenes.iter().any(|s| s.video.height() != h || s.video.width() != w) {
        return Err(contract_err!("train_lalrm: scenes must share one raster"));
    }
    let codec = LosslessCodec { r_t: lcfg.r_t, r_s: lcfg.r_s };
    let [lt, lh, lw, _] = codec.latent_shape(cfg.frames, h, w)?;
    let mut model = match (cfg.stage, init) {
        (Variant::LowRes, None) => LaLRM::init(&LaLRMConfig { variant: Variant::LowRes, ..lcfg.clone() }, lcfg.latent_grid(lt, lh, lw)?, cfg.seed)?,
        (Variant::LowRes, Some(m)) if m.cfg.variant == Variant::LowRes => m,
        (Variant::LowRes, Some(_)) => return Err(Error::State("low_res training cannot resume a high_res checkpoint".into())),
        (Variant::HighRes, None) => {
            return Err(Error::State(
                "high_res training needs a low_res checkpoint; train the low_res stage first and pass its checkpoint".into(),
            ))
        }
        (Variant::HighRes, Some(m)) if m.cfg.variant == Variant::LowRes => m.to_high_res()?,
        (Variant::HighRes, Some(m)) => m,
    };
    let grid = model.cfg.latent_grid(lt, lh, lw)?;
    if grid != model.grid()? {
        return Err(contract_err!(
            "scene raster {h}×{w} gives token grid {grid:?}, but the model expects {:?}",
            model.grid()?
        ));
    }
    if cfg.stage == Variant::HighRes && cfg.dit_mix > 0.0 && dit.is_none() {
        return Err(Error::State("high_res training with dit_mix > 0 needs a trained dit checkpoint".into()));
    }
    let mut rng = Rng::seed(cfg.seed ^ 0x1A1);
    let schedule = CosineSchedule { peak: cfg.lr, warmup: cfg.warmup, total: cfg.steps, min_ratio: cfg.min_lr_ratio };
    let mut opt = AdamW::with_weight_decay(cfg.weight_decay);
    let net = PerceptualNet::default();
    let settings = render_settings(h, w);
    let (gh, gw) = model.cfg.gaussian_raster(h, w);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let scene = &scenes[rng.below(scenes.len())];
        let n = scene.video.frames();
        let clip = match cfg.clip_start {
            Some(f0) => clip_at(n, cfg.frames, cfg.stride, f0)?,
            None => sample_clip(n, cfg.frames, cfg.stride, &mut rng)?,
        };
        let inputs = clip_inputs(scene, &clip, cfg.plucker)?;
        let generated = cfg.stage == Variant::HighRes && dit.is_some() && cfg.dit_mix > 0.0 && rng.uniform_f64(0.0, 1.0) < cfg.dit_mix;
        let (latent, targets_video, views) = if generated {
            let dit = dit.unwrap();
            let image = codec.encode(&inputs.video.select(&[0])?)?;
            let req = SampleRequest {
                image: &image,
                plucker: &inputs.plucker,
                text: None,
                steps: cfg.dit_sample_steps,
                seed: rng.next_u64(),
            };
            let latent = sample(dit, &req)?;
            let decoded = codec.decode(&latent)?;
            let mut idx: Vec<usize> = (0..cfg.frames).collect();
            rng.shuffle(&mut idx);
            idx.truncate(cfg.views.min(cfg.frames));
            let views: Vec<(usize, CameraPose)> = idx.iter().map(|&i| (i, inputs.seen.poses()[i].clone())).collect();
            (latent, decoded, views)
        } else {
            let latent = codec.encode(&inputs.video)?;
            let mut seen_idx: Vec<usize> = (0..cfg.frames).collect();
            rng.shuffle(&mut seen_idx);
            seen_idx.truncate(cfg.seen_views);
            let mut unseen = clip.unseen.clone();
            let want = cfg.views - cfg.seen_views;
            if want > unseen.len() {
                return Err(contract_err!("{want} unseen views requested but the clip holds only {}", unseen.len()));
            }
            rng.shuffle(&mut unseen);
            unseen.truncate(want);
            let mut views: Vec<(usize, CameraPose)> =
                seen_idx.iter().map(|&i| (clip.seen[i], inputs.all[clip.seen[i]].clone())).collect();
            views.extend(unseen.iter().map(|&f| (f, inputs.all[f].clone())));
            (latent, scene.video.clone(), views)
        };
        let lr = schedule.lr(step);
        let (loss, grads) = {
            let mut g = Graph::new(&model.params);
            let map = model.forward(&mut g, &latent, &inputs.plucker)?;
            let rays = pixel_rays(&inputs.seen.rescaled(gh as f64 / h as f64), gh, gw)?;
            let vars = lift(&mut g.tape, map.g, &rays, &model.cfg)?;
            let mut rendered = Vec::with_capacity(views.len());
            let mut targets = Vec::with_capacity(views.len());
            for (f, pose) in &views {
                let (img, _) = g.tape.rasterize(vars, pose, &settings)?;
                rendered.push(img);
                targets.push(targets_video.frame(*f));
            }
            let l = loss_recon(&mut g.tape, &rendered, &targets, cfg.loss, &net)?;
            let value = g.value(l).item()? as f64;
            if !value.is_finite() {
                return Err(numeric_err!("lalrm training produced a non-finite loss at step {step}"));
            }
            g.backward(l)?;
            (value, g.grads())
        };
        opt.step(&mut model.params, &grads, lr)
            .map_err(|e| numeric_err!("lalrm training failed at step {step}: {e}"))?;
        losses.push(loss);
        on_step(&StepInfo { step, loss, lr, generated }, &model);
    }
    Ok(TrainOutcome { model, losses })
}

/// Mean of consecutive non-overlapping windows of `values`.
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    values.chunks_exact(window.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}
