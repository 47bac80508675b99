use rayon::prelude::*;
use serde::Serialize;

use super::clip::clip_at;
use super::metrics::{psnr, ssim};
use super::scene::{render_settings, SyntheticScene};
use super::train::{clip_inputs, reconstruct};
use crate::cam_dit::{sample, CamDiT, SampleRequest};
use crate::camera::{CameraPose, PluckerOptions};
use crate::codec::{Codec, LosslessCodec, VideoLatent};
use crate::error::{Error, Result};
use crate::gsplat::{rasterize, GaussianCloud};
use crate::lalrm::LaLRM;
use crate::numerics::Tensor;

/// Where the evaluated cloud comes from.
#[derive(Clone, Copy, Debug)]
pub enum Protocol<'a> {
    /// Render the scene's own ground-truth cloud.
    GroundTruth,
    /// LaLRM on the encoded seen frames.
    Latent(&'a LaLRM),
    /// LaLRM on a latent sampled by the DiT from the first frame and the seen cameras.
    Generated { lalrm: &'a LaLRM, dit: &'a CamDiT, steps: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub frames: usize,
    pub stride: usize,
    /// Frames after the conditioning frame used for the near-range metrics.
    pub near_frames: usize,
    pub plucker: PluckerOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { frames: 9, stride: 2, near_frames: 14, plucker: PluckerOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SceneMetrics {
    pub scene: usize,
    pub psnr_first14: f64,
    pub ssim_first14: f64,
    pub psnr_unseen: f64,
    pub ssim_unseen: f64,
    pub psnr_seen: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub psnr_first14: Option<f64>,
    pub ssim_first14: Option<f64>,
    pub psnr_unseen: Option<f64>,
    pub ssim_unseen: Option<f64>,
    pub psnr_seen: Option<f64>,
    pub n_scenes: usize,
    pub scenes: Vec<SceneMetrics>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Cloud plus the cameras (in the cloud's frame) of every source frame.
pub struct Reconstruction {
    pub cloud: GaussianCloud,
    pub cameras: Vec<CameraPose>,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    pub latent: Option<VideoLatent>,
}

pub fn reconstruct_scene(scene: &SyntheticScene, protocol: Protocol<'_>, opts: &EvalOptions) -> Result<Reconstruction> {
    let clip = clip_at(scene.video.frames(), opts.frames, opts.stride, 0)?;
    if let Protocol::GroundTruth = protocol {
        return Ok(Reconstruction {
            cloud: scene.cloud.clone(),
            cameras: scene.trajectory.poses().to_vec(),
            seen: clip.seen,
            unseen: clip.unseen,
            latent: None,
        });
    }
    let inputs = clip_inputs(scene, &clip, opts.plucker)?;
    let (h, w) = (scene.video.height(), scene.video.width());
    let (model, latent) = match protocol {
        Protocol::Latent(m) => (m, LosslessCodec { r_t: m.cfg.r_t, r_s: m.cfg.r_s }.encode(&inputs.video)?),
        Protocol::Generated { lalrm, dit, steps, seed } => {
            let codec = LosslessCodec { r_t: dit.cfg.r_t, r_s: dit.cfg.r_s };
            let image = codec.encode(&inputs.video.select(&[0])?)?;
            let req = SampleRequest { image: &image, plucker: &inputs.plucker, text: None, steps, seed };
            (lalrm, sample(dit, &req)?)
        }
        Protocol::GroundTruth => unreachable!(),
    };
    let cloud = reconstruct(model, &latent, &inputs.seen, h, w, opts.plucker)?;
    Ok(Reconstruction { cloud, cameras: inputs.all, seen: clip.seen, unseen: clip.unseen, latent: Some(latent) })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn render_frames(cloud: &GaussianCloud, cameras: &[CameraPose], frames: &[usize], height: usize, width: usize) -> Result<Vec<Tensor>> {
    let settings = render_settings(height, width);
    frames.par_iter().map(|&f| rasterize(cloud, &cameras[f], &settings).map(|r| r.color)).collect()
}

pub fn evaluate_scene(index: usize, scene: &SyntheticScene, protocol: Protocol<'_>, opts: &EvalOptions) -> Result<SceneMetrics> {
    let rec = reconstruct_scene(scene, protocol, opts)?;
    let n = scene.video.frames();
    let (h, w) = (scene.video.height(), scene.video.width());
    let near: Vec<usize> = (1..n.min(opts.near_frames + 1)).collect();
    let score = |frames: &[usize]| -> Result<(f64, f64)> {
        let renders = render_frames(&rec.cloud, &rec.cameras, frames, h, w)?;
        let mut p = Vec::with_capacity(frames.len());
        let mut s = Vec::with_capacity(frames.len());
        for (img, &f) in renders.iter().zip(frames) {
            let target = scene.video.frame(f);
            p.push(psnr(img, &target)?);
            s.push(ssim(img, &target)?);
        }
        Ok((mean(&p), mean(&s)))
    };
    let (psnr_first14, ssim_first14) = score(&near)?;
    let (psnr_unseen, ssim_unseen) = score(&rec.unseen)?;
    let (psnr_seen, _) = score(&rec.seen)?;
    Ok(SceneMetrics { scene: index, psnr_first14, ssim_first14, psnr_unseen, ssim_unseen, psnr_seen })
}

/// Mean metrics over `scenes`; an empty list gives an empty report.
pub fn evaluate(scenes: &[SyntheticScene], protocol: Protocol<'_>, opts: &EvalOptions) -> Result<EvalReport> {
    let per_scene = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| evaluate_scene(i, s, protocol, opts))
        .collect::<Result<Vec<_>>>()?;
    if per_scene.is_empty() {
        return Ok(EvalReport::default());
    }
    let agg = |f: fn(&SceneMetrics) -> f64| -> Option<f64> {
        let v: Vec<f64> = per_scene.iter().map(f).filter(|x| x.is_finite()).collect();
        (!v.is_empty()).then(|| mean(&v))
    };
    Ok(EvalReport {
        psnr_first14: agg(|m| m.psnr_first14),
        ssim_first14: agg(|m| m.ssim_first14),
        psnr_unseen: agg(|m| m.psnr_unseen),
        ssim_unseen: agg(|m| m.ssim_unseen),
        psnr_seen: agg(|m| m.psnr_seen),
        n_scenes: per_scene.len(),
        scenes: per_scene,
    })
}

pub fn write_report(path: &std::path::Path, report: &EvalReport) -> Result<()> {
    std::fs::write(path, report.to_json() + "\n").map_err(Error::Io)
}
