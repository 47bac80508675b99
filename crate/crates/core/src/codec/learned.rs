use nalgebra::DMatrix;

use super::lossless::{LosslessCodec, LOSSLESS_ID};
use super::video::{Codec, Video, VideoLatent};
use crate::error::{contract_err, numeric_err, Result};
use crate::nn::layers::{init_zero_linear, linear};
use crate::nn::{AdamW, CosineSchedule, Graph, ParamStore};
use crate::numerics::{Rng, Tensor, Var};

pub const LEARNED_ID: &str = "learned";

#[derive(Clone, Debug, PartialEq)]
pub struct LearnedCodecConfig {
    /// Latent channel count `c`.
    pub channels: usize,
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub r_t: usize,
    pub r_s: usize,
}

impl Default for LearnedCodecConfig {
    fn default() -> Self {
        Self { channels: 16, hidden: 128, steps: 500, lr: 2e-3, seed: 0, r_t: 4, r_s: 8 }
    }
}

/// Block encoder/decoder with kernel = stride = `(r_t, r_s, r_s)`.
///
/// Each folded block is projected linearly to `c` channels. The decoder is
/// the transposed projection plus a residual MLP. Projections start as a
/// random orthonormal pair, so a full-width latent is lossless from the
/// first step.
#[derive(Clone, Debug)]
pub struct LearnedCodec {
    pub fold: LosslessCodec,
    pub params: ParamStore,
}

#[derive(Clone, Debug)]
pub struct CodecTraining {
    pub codec: LearnedCodec,
    pub losses: Vec<f64>,
}

impl LearnedCodec {
    pub fn init(cfg: &LearnedCodecConfig) -> Result<Self> {
        let fold = LosslessCodec { r_t: cfg.r_t, r_s: cfg.r_s };
        let width = fold.channels();
        if cfg.channels == 0 || cfg.channels > width {
            return Err(contract_err!("latent channels must be in 1..={width}, got {}", cfg.channels));
        }
        let mut rng = Rng::seed(cfg.seed);
        let g = DMatrix::<f64>::from_fn(width, cfg.channels, |_, _| rng.normal_f64());
        let q = g.qr().q();
        let enc: Vec<f32> = (0..width)
            .flat_map(|i| (0..cfg.channels).map(move |j| (i, j)))
            .map(|(i, j)| q[(i, j)] as f32)
            .collect();
        let dec: Vec<f32> = (0..cfg.channels)
            .flat_map(|j| (0..width).map(move |i| (i, j)))
            .map(|(i, j)| q[(i, j)] as f32)
            .collect();
        let mut params = ParamStore::new();
        params.insert("enc.weight", Tensor::new(&[width, cfg.channels], enc)?, true);
        params.insert("enc.bias", Tensor::zeros(&[cfg.channels]), true);
        params.insert("dec.weight", Tensor::new(&[cfg.channels, width], dec)?, true);
        params.insert("dec.bias", Tensor::zeros(&[width]), true);
        crate::nn::layers::init_linear(&mut params, &mut rng, "dec.fc1", cfg.channels, cfg.hidden, 1.0);
        init_zero_linear(&mut params, "dec.fc2", cfg.hidden, width);
        Ok(Self { fold, params })
    }

    pub fn channels(&self) -> usize {
        self.params.get("enc.bias").map(|p| p.value.len()).unwrap_or(0)
    }

    fn encode_tokens(g: &mut Graph<'_>, x: Var) -> Result<Var> {
        linear(g, "enc", x, 1.0)
    }

    fn decode_tokens(g: &mut Graph<'_>, z: Var) -> Result<Var> {
        let base = linear(g, "dec", z, 1.0)?;
        let h = linear(g, "dec.fc1", z, 1.0)?;
        let h = g.tape.silu(h);
        let r = linear(g, "dec.fc2", h, 1.0)?;
        g.tape.add(base, r)
    }

    fn folded_tokens(&self, video: &Video) -> Result<(Tensor, [usize; 3])> {
        let z = self.fold.encode(video)?;
        let [t, h, w] = [z.frames(), z.height(), z.width()];
        let x = z.data.into_reshape(&[t * h * w, self.fold.channels()])?.map(|v| v - 0.5);
        Ok((x, [t, h, w]))
    }
}

impl Codec for LearnedCodec {
    fn id(&self) -> &str {
        LEARNED_ID
    }

    fn encode(&self, video: &Video) -> Result<VideoLatent> {
        let (x, [t, h, w]) = self.folded_tokens(video)?;
        let mut g = Graph::inference(&self.params);
        let xv = g.input(x);
        let z = Self::encode_tokens(&mut g, xv)?;
        let data = g.value(z).reshape(&[t, h, w, self.channels()])?;
        Ok(VideoLatent { data, codec_id: LEARNED_ID.into(), r_t: self.fold.r_t, r_s: self.fold.r_s })
    }

    fn decode(&self, latent: &VideoLatent) -> Result<Video> {
        if latent.codec_id != LEARNED_ID {
            return Err(contract_err!("latent was produced by codec `{}`, not `{LEARNED_ID}`", latent.codec_id));
        }
        let [t, h, w] = [latent.frames(), latent.height(), latent.width()];
        let mut g = Graph::inference(&self.params);
        let zv = g.input(latent.data.reshape(&[t * h * w, latent.channels()])?);
        let y = Self::decode_tokens(&mut g, zv)?;
        let folded = g.value(y).map(|v| v + 0.5).into_reshape(&[t, h, w, self.fold.channels()])?;
        self.fold.decode(&VideoLatent {
            data: folded,
            codec_id: LOSSLESS_ID.into(),
            r_t: self.fold.r_t,
            r_s: self.fold.r_s,
        })
    }
}

/// Fits a learned codec to `dataset` by minimizing the mean squared
/// reconstruction error of folded blocks.
pub fn train_learned_codec(dataset: &[Video], cfg: &LearnedCodecConfig) -> Result<CodecTraining> {
    if dataset.is_empty() {
        return Err(contract_err!("train_learned_codec: dataset is empty"));
    }
    let mut codec = LearnedCodec::init(cfg)?;
    let tokens = dataset
        .iter()
        .map(|v| codec.folded_tokens(v).map(|(x, _)| x))
        .collect::<Result<Vec<_>>>()?;
    let schedule = CosineSchedule { peak: cfg.lr, warmup: (cfg.steps / 20).max(1), total: cfg.steps, min_ratio: 0.05 };
    let mut opt = AdamW::with_weight_decay(0.0);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let x = &tokens[step % tokens.len()];
        let (loss, grads) = {
            let mut g = Graph::new(&codec.params);
            let xv = g.input(x.clone());
            let z = LearnedCodec::encode_tokens(&mut g, xv)?;
            let y = LearnedCodec::decode_tokens(&mut g, z)?;
            let loss = g.tape.mse(y, xv)?;
            let value = g.value(loss).item()? as f64;
            if !value.is_finite() {
                return Err(numeric_err!("learned codec training diverged at step {step}"));
            }
            g.backward(loss)?;
            (value, g.grads())
        };
        opt.step(&mut codec.params, &grads, schedule.lr(step))
            .map_err(|e| numeric_err!("learned codec training failed at step {step}: {e}"))?;
        losses.push(loss);
    }
    Ok(CodecTraining { codec, losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_width_latent_is_near_lossless_at_init() {
        let cfg = LearnedCodecConfig { channels: 48, r_t: 1, r_s: 4, ..Default::default() };
        let codec = LearnedCodec::init(&cfg).unwrap();
        let mut rng = Rng::seed(5);
        let v = Video::new(Tensor::rand_uniform(&[2, 8, 8, 3], 0.0, 1.0, &mut rng)).unwrap();
        let z = codec.encode(&v).unwrap();
        assert_eq!(z.data.shape(), &[2, 2, 2, 48]);
        let back = codec.decode(&z).unwrap();
        assert!(back.data.max_abs_diff(&v.data).unwrap() < 1e-5);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(train_learned_codec(&[], &LearnedCodecConfig::default()).is_err());
    }
}
