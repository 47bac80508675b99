use std::collections::BTreeMap;

use super::model::{CamDiT, DiTInput};
use crate::codec::VideoLatent;
use crate::error::{contract_err, numeric_err, shape_err, Error, Result};
use crate::nn::{accumulate_grads, AdamW, CosineSchedule, Graph};
use crate::numerics::{Rng, Tensor};

/// One training clip: its latent, the Plücker embedding of its source
/// frames, and an optional condition embedding.
#[derive(Clone, Debug)]
pub struct DiTExample {
    pub latent: VideoLatent,
    pub plucker: Tensor,
    pub text: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: f64,
    pub grads: BTreeMap<String, Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiTTrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for DiTTrainOptions {
    fn default() -> Self {
        Self { steps: 1000, lr: 1e-3, batch: 1, seed: 0 }
    }
}

/// First latent frame `[1, h, w, c]`.
pub fn first_frame(z: &Tensor) -> Result<Tensor> {
    let s = z.shape();
    if s.len() != 4 {
        return Err(shape_err!("latent must be rank 4, got {s:?}"));
    }
    let n = s[1] * s[2] * s[3];
    Tensor::new(&[1, s[1], s[2], s[3]], z.data()[..n].to_vec())
}

/// Samples `τ ~ U{1, …, S−1}` and `ε ~ N(0, I)` per example and returns the
/// batch-mean of `w(τ)·‖ε̂ − ε‖²` with gradients for trainable parameters
/// only. `w` is the min-SNR weight when configured, else 1.
/// `min(SNR, γ) / SNR`, which is 1 at the pure-noise end where SNR = 0.
pub(crate) fn min_snr_weight(alpha: f64, sigma: f64, gamma: f64) -> f64 {
    let snr = alpha * alpha / (sigma * sigma);
    if snr <= gamma {
        1.0
    } else {
        gamma / snr
    }
}

pub fn training_step(model: &CamDiT, batch: &[DiTExample], rng: &mut Rng) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(contract_err!("training_step: empty batch"));
    }
    let mut grads = BTreeMap::new();
    let mut total = 0.0;
    for ex in batch {
        let z = model.normalize(&ex.latent.data);
        let cond = first_frame(&z)?;
        let tau = 1 + rng.below(model.schedule.num_steps - 1);
        let eps = Tensor::randn(z.shape(), 1.0, rng);
        let z_tau = model.schedule.add_noise(&z, tau, &eps)?;
        let mut g = Graph::new(&model.params);
        let input = DiTInput { z_tau: &z_tau, cond: &cond, plucker: Some(&ex.plucker), text: ex.text.as_ref(), tau };
        let pred = model.forward(&mut g, &input)?;
        let target = g.input(eps);
        let loss = g.tape.mse(pred, target)?;
        let loss = match model.cfg.min_snr {
            Some(gamma) => {
                let w = min_snr_weight(model.schedule.alpha[tau], model.schedule.sigma[tau], gamma);
                g.tape.scale(loss, w as f32)
            }
            None => loss,
        };
        let value = g.value(loss).item()? as f64;
        if !value.is_finite() {
            return Err(numeric_err!("cam_dit: non-finite loss at step τ = {tau}"));
        }
        g.backward(loss)?;
        accumulate_grads(&mut grads, g.grads());
        total += value;
    }
    let inv = 1.0 / batch.len() as f32;
    for t in grads.values_mut() {
        *t = t.map(|v| v * inv);
    }
    Ok(StepOutput { loss: total / batch.len() as f64, grads })
}

/// AdamW with warmup and cosine decay over `data`, cycling in a seeded
/// shuffled order. Returns the per-step losses.
pub fn train_dit(
    model: &mut CamDiT,
    data: &[DiTExample],
    opts: &DiTTrainOptions,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(contract_err!("train_dit: dataset is empty"));
    }
    let mut rng = Rng::seed(opts.seed);
    let schedule = CosineSchedule { peak: opts.lr, warmup: (opts.steps / 20).max(1), total: opts.steps, min_ratio: 0.05 };
    let mut opt = AdamW::with_weight_decay(0.0);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let mut batch = Vec::with_capacity(opts.batch);
        for _ in 0..opts.batch.max(1) {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(data[order[cursor]].clone());
            cursor += 1;
        }
        let out = training_step(model, &batch, &mut rng)?;
        opt.step(&mut model.params, &out.grads, schedule.lr(step))
            .map_err(|e| numeric_err!("cam_dit training failed at step {step}: {e}"))?;
        on_step(step, out.loss);
        losses.push(out.loss);
    }
    Ok(losses)
}

/// Conditioning for [`sample`].
#[derive(Clone, Copy, Debug)]
pub struct SampleRequest<'a> {
    /// Clean latent of the conditioning image, `[1, h, w, c]`.
    pub image: &'a VideoLatent,
    /// Plücker embedding of the target trajectory; fixes the frame count.
    pub plucker: &'a Tensor,
    pub text: Option<&'a Tensor>,
    pub steps: usize,
    pub seed: u64,
}

/// Deterministic DDIM (`η = 0`) from pure noise. The clean-latent estimate
/// is clipped to `x0_clip` at every step.
pub fn sample(model: &CamDiT, req: &SampleRequest<'_>) -> Result<VideoLatent> {
    if model.params.is_empty() || !model.params.contains("patch.weight") {
        return Err(Error::State("cam_dit: no weights loaded".into()));
    }
    let cfg = &model.cfg;
    let frames = req.plucker.shape().first().copied().unwrap_or(0);
    if frames == 0 || (frames - 1) % cfg.r_t != 0 {
        return Err(shape_err!("trajectory of {frames} frames does not map onto latent frames with r_t = {}", cfg.r_t));
    }
    let t = 1 + (frames - 1) / cfg.r_t;
    let s = req.image.data.shape();
    if s.len() != 4 || s[0] != 1 {
        return Err(shape_err!("image latent must be [1, h, w, c], got {s:?}"));
    }
    if [t, s[1], s[2]] != model.latent_dims {
        return Err(shape_err!("requested latent {:?} differs from the model's {:?}", [t, s[1], s[2]], model.latent_dims));
    }
    let cond = model.normalize(&req.image.data);
    let mut rng = Rng::seed(req.seed);
    let mut z = Tensor::randn(&[t, s[1], s[2], s[3]], 1.0, &mut rng);
    let taus = model.schedule.sampling_steps(req.steps)?;
    let mut x0 = z.clone();
    for w in taus.windows(2) {
        let (tau, next) = (w[0], w[1]);
        let mut g = Graph::inference(&model.params);
        let input = DiTInput { z_tau: &z, cond: &cond, plucker: Some(req.plucker), text: req.text, tau };
        let pred = model.forward(&mut g, &input)?;
        let eps = g.value(pred);
        let (a, sg) = (model.schedule.alpha[tau] as f32, model.schedule.sigma[tau] as f32);
        let clip = cfg.x0_clip;
        x0 = Tensor::new(
            z.shape(),
            z.data()
                .iter()
                .zip(eps.data())
                .map(|(&zi, &e)| {
                    let x = (zi - sg * e) / a;
                    clip.map_or(x, |c| x.clamp(-c, c))
                })
                .collect(),
        )
        .map_err(|e| numeric_err!("cam_dit sampling diverged at τ = {tau}: {e}"))?;
        let (an, sn) = (model.schedule.alpha[next] as f32, model.schedule.sigma[next] as f32);
        let e_hat: Vec<f32> = z.data().iter().zip(x0.data()).map(|(&zi, &xi)| (zi - a * xi) / sg).collect();
        z = Tensor::new(z.shape(), x0.data().iter().zip(&e_hat).map(|(&xi, &ei)| an * xi + sn * ei).collect())?;
    }
    Ok(VideoLatent { data: model.denormalize(&x0), codec_id: req.image.codec_id.clone(), r_t: req.image.r_t, r_s: req.image.r_s })
}
