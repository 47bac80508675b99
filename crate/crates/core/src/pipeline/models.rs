use std::collections::BTreeMap;

use super::checkpoint::Checkpoint;
use super::clip::clip_at;
use super::scene::SyntheticScene;
use super::train::clip_inputs;
use crate::cam_dit::{train_dit, Branches, CamDiT, DiTConfig, DiTExample, DiTTrainOptions};
use crate::camera::PluckerOptions;
use crate::codec::{Codec, LosslessCodec};
use crate::error::{contract_err, Result};
use crate::lalrm::{LaLRM, LaLRMConfig};

const KIND: &str = "kind";

fn expect_kind(ck: &Checkpoint, kind: &str) -> Result<()> {
    match ck.get(KIND) {
        Some(k) if k == kind => Ok(()),
        Some(k) => Err(contract_err!("expected a {kind} checkpoint, found {k}")),
        None => Err(contract_err!("checkpoint has no `{KIND}` entry")),
    }
}

pub fn lalrm_checkpoint(model: &LaLRM, extra: Vec<(String, String)>) -> Checkpoint {
    let mut ck = Checkpoint::default();
    ck.set(KIND, "lalrm");
    ck.extend_config(model.cfg.to_pairs());
    ck.extend_config(extra);
    ck.put_params("lalrm.", &model.params);
    ck
}

pub fn lalrm_from_checkpoint(ck: &Checkpoint) -> Result<LaLRM> {
    expect_kind(ck, "lalrm")?;
    let cfg = LaLRMConfig::from_pairs(|k| ck.get(k))?;
    let model = LaLRM { cfg, params: ck.params("lalrm.") };
    model.grid()?;
    Ok(model)
}

pub fn dit_checkpoint(model: &CamDiT, extra: Vec<(String, String)>) -> Checkpoint {
    let mut ck = Checkpoint::default();
    ck.set(KIND, "dit");
    ck.extend_config(model.cfg.to_pairs());
    let [t, h, w] = model.latent_dims;
    ck.set("dit.latent_dims", format!("{t},{h},{w}"));
    ck.extend_config(extra);
    ck.put_params("dit.", &model.params);
    ck
}

pub fn dit_from_checkpoint(ck: &Checkpoint) -> Result<CamDiT> {
    expect_kind(ck, "dit")?;
    let cfg = DiTConfig::from_pairs(|k| ck.get(k))?;
    let dims: Vec<usize> = ck
        .require("dit.latent_dims")?
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| contract_err!("dit.latent_dims: invalid entry `{v}`")))
        .collect::<Result<_>>()?;
    let dims: [usize; 3] = dims.try_into().map_err(|_| contract_err!("dit.latent_dims needs three entries"))?;
    CamDiT::from_parts(cfg, ck.params("dit."), dims)
}

/// One training example per valid clip start of every scene.
pub fn dit_examples(scenes: &[SyntheticScene], cfg: &DiTConfig, frames: usize, stride: usize, opts: PluckerOptions) -> Result<Vec<DiTExample>> {
    let codec = LosslessCodec { r_t: cfg.r_t, r_s: cfg.r_s };
    let mut out = Vec::new();
    for scene in scenes {
        let n = scene.video.frames();
        let span = stride * (frames - 1);
        if span >= n {
            return Err(contract_err!("scene has {n} frames but a clip spans {}", span + 1));
        }
        for f0 in 0..n - span {
            let clip = clip_at(n, frames, stride, f0)?;
            let inputs = clip_inputs(scene, &clip, opts)?;
            out.push(DiTExample { latent: codec.encode(&inputs.video)?, plucker: inputs.plucker, text: None });
        }
    }
    Ok(out)
}

/// Settings of the two-phase diffusion training: base pretraining without
/// camera branches, then branch fine-tuning on a frozen base.
#[derive(Clone, Debug, PartialEq)]
pub struct DiTSchedule {
    pub base_steps: usize,
    pub branch_steps: usize,
    pub lr: f64,
    pub branch_lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for DiTSchedule {
    fn default() -> Self {
        Self { base_steps: 1500, branch_steps: 500, lr: 1e-3, branch_lr: 1e-3, batch: 1, seed: 0 }
    }
}

impl DiTSchedule {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("base_steps", self.base_steps.to_string()),
            ("branch_steps", self.branch_steps.to_string()),
            ("lr", self.lr.to_string()),
            ("branch_lr", self.branch_lr.to_string()),
            ("batch", self.batch.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (format!("dit_train.{k}"), v))
        .collect()
    }

    pub fn from_pairs(cfg: &BTreeMap<String, String>) -> Result<Self> {
        let d = Self::default();
        fn get<T: std::str::FromStr>(cfg: &BTreeMap<String, String>, k: &str, dflt: T) -> Result<T> {
            match cfg.get(&format!("dit_train.{k}")) {
                Some(v) => v.parse().map_err(|_| contract_err!("dit_train.{k}: invalid value `{v}`")),
                None => Ok(dflt),
            }
        }
        Ok(Self {
            base_steps: get(cfg, "base_steps", d.base_steps)?,
            branch_steps: get(cfg, "branch_steps", d.branch_steps)?,
            lr: get(cfg, "lr", d.lr)?,
            branch_lr: get(cfg, "branch_lr", d.branch_lr)?,
            batch: get(cfg, "batch", d.batch)?,
            seed: get(cfg, "seed", d.seed)?,
        })
    }
}

/// Trains a diffusion model on `data`. Without `base`, a base model is first
/// pretrained; `branches` are then attached and fine-tuned. Losses of both
/// phases are reported in order through `on_step(global_step, loss)`.
pub fn train_dit_model(
    cfg: &DiTConfig,
    branches: Branches,
    base: Option<CamDiT>,
    data: &[DiTExample],
    schedule: &DiTSchedule,
    mut on_step: impl FnMut(usize, f64),
) -> Result<CamDiT> {
    let first = data.first().ok_or_else(|| contract_err!("no diffusion training examples"))?;
    let dims = [first.latent.frames(), first.latent.height(), first.latent.width()];
    let mut offset = 0;
    let mut model = match base {
        Some(m) => m,
        None => {
            let mut m = CamDiT::init_base(&DiTConfig { branches: Branches::None, ..cfg.clone() }, dims, schedule.seed)?;
            let opts = DiTTrainOptions { steps: schedule.base_steps, lr: schedule.lr, batch: schedule.batch, seed: schedule.seed };
            if opts.steps > 0 {
                train_dit(&mut m, data, &opts, &mut on_step)?;
            }
            offset = opts.steps;
            m
        }
    };
    if model.latent_dims != dims {
        return Err(contract_err!("base model latent dims {:?} differ from the data {:?}", model.latent_dims, dims));
    }
    if branches != Branches::None {
        model.attach_branches(branches, schedule.seed ^ 0xB4A)?;
        let opts = DiTTrainOptions { steps: schedule.branch_steps, lr: schedule.branch_lr, batch: schedule.batch, seed: schedule.seed ^ 1 };
        if opts.steps > 0 {
            train_dit(&mut model, data, &opts, |s, l| on_step(offset + s, l))?;
        }
    }
    Ok(model)
}
