use super::config::{LaLRMConfig, Variant};
use crate::codec::VideoLatent;
use crate::error::{contract_err, numeric_err, shape_err, Result};
use crate::nn::layers::{block, init_block, init_layer_norm, init_linear, layer_norm, linear, Activation, BlockSpec};
use crate::nn::{Graph, ParamStore};
use crate::numerics::{ConvGeometry, Rng, Tensor, Var};

/// Latent reconstruction model: latent + Plücker embedding → per-pixel
/// Gaussian features `[T·H′·W′, 12]`.
#[derive(Clone, Debug)]
pub struct LaLRM {
    pub cfg: LaLRMConfig,
    pub params: ParamStore,
}

/// Decoder output with its raster.
#[derive(Clone, Copy, Debug)]
pub struct FeatureMap {
    /// `[T·H′·W′, 12]` raw channels: rgb, scale, quaternion, opacity, distance.
    pub g: Var,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

fn logit(p: f64) -> f32 {
    (p / (1.0 - p)).ln() as f32
}

impl LaLRM {
    /// Fresh model for a token grid `[t, h/p_l, w/p_l]`.
    pub fn init(cfg: &LaLRMConfig, grid: [usize; 3], seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::seed(seed);
        let d = cfg.hidden;
        let mut p = ParamStore::new();
        let lat_in = cfg.p_l * cfg.p_l * cfg.latent_channels;
        p.insert("tok_latent.weight", Tensor::randn(&[1, cfg.p_l, cfg.p_l, cfg.latent_channels, d], 1.0 / (lat_in as f32).sqrt(), &mut rng), true);
        p.insert("tok_latent.bias", Tensor::zeros(&[d]), true);
        let ps = cfg.p_l * cfg.r_s;
        let pose_in = cfg.r_t * ps * ps * 6;
        p.insert("tok_pose.weight", Tensor::randn(&[cfg.r_t, ps, ps, 6, d], 1.0 / (pose_in as f32).sqrt(), &mut rng), true);
        p.insert("tok_pose.bias", Tensor::zeros(&[d]), true);
        let [t, gh, gw] = grid;
        p.insert("pos_latent", Tensor::randn(&[t, gh, gw, d], 0.02, &mut rng), true);
        p.insert("pos_pose", Tensor::randn(&[t, gh, gw, d], 0.02, &mut rng), true);
        init_linear(&mut p, &mut rng, "in_proj", 2 * d, d, 1.0);
        let spec = Self::block_spec(cfg);
        for i in 0..cfg.num_blocks {
            init_block(&mut p, &mut rng, &format!("blocks.{i}"), &spec);
        }
        init_layer_norm(&mut p, "out_ln", d);
        let [kt, ks, _] = cfg.deconv_strides();
        p.insert("decoder.weight", Tensor::randn(&[d, kt, ks, ks, 12], 0.1 / (d as f32).sqrt(), &mut rng), true);
        let scale = (cfg.init_scale.ln()) as f32;
        let dist = logit((cfg.init_distance - cfg.near) / (cfg.far - cfg.near));
        let bias = vec![0.0, 0.0, 0.0, scale, scale, scale, 1.0, 0.0, 0.0, 0.0, logit(cfg.init_opacity), dist];
        p.insert("decoder.bias", Tensor::new(&[12], bias)?, true);
        Ok(Self { cfg: cfg.clone(), params: p })
    }

    fn block_spec(cfg: &LaLRMConfig) -> BlockSpec {
        BlockSpec { dim: cfg.hidden, heads: cfg.heads, mlp_ratio: cfg.mlp_ratio, activation: Activation::Gelu }
    }

    /// Token grid the positional embeddings were built for.
    pub fn grid(&self) -> Result<[usize; 3]> {
        let s = self.params.tensor("pos_latent")?.shape();
        Ok([s[0], s[1], s[2]])
    }

    /// Patch-projects a `[t, h, w, c]` latent to `[N_l, d]` tokens.
    pub fn tokenize_latent(&self, g: &mut Graph<'_>, latent: &Tensor) -> Result<Var> {
        let s = latent.shape();
        if s.len() != 4 || s[3] != self.cfg.latent_channels {
            return Err(shape_err!("latent must be [t, h, w, {}], got {s:?}", self.cfg.latent_channels));
        }
        let grid = self.cfg.latent_grid(s[0], s[1], s[2])?;
        let x = g.input(latent.clone());
        let w = g.param("tok_latent.weight")?;
        let b = g.param("tok_latent.bias")?;
        let y = g.tape.conv3d(x, w, Some(b), ConvGeometry::patch([1, self.cfg.p_l, self.cfg.p_l]))?;
        g.tape.reshape(y, &[grid.iter().product(), self.cfg.hidden])
    }

    /// Patchifies a `[T, H, W, 6]` Plücker embedding with temporal stride
    /// `r_t` and spatial stride `p_l·r_s`. Frame 0 forms its own temporal
    /// group, as in the codec.
    pub fn tokenize_pose(&self, g: &mut Graph<'_>, plucker: &Tensor) -> Result<Var> {
        let s = plucker.shape();
        if s.len() != 4 || s[3] != 6 {
            return Err(shape_err!("plücker embedding must be [T, H, W, 6], got {s:?}"));
        }
        let grid = self.cfg.pose_grid(s[0], s[1], s[2])?;
        let frame = s[1] * s[2] * 6;
        let pad = self.cfg.r_t - 1;
        let mut data = Vec::with_capacity((s[0] + pad) * frame);
        for _ in 0..pad {
            data.extend_from_slice(&plucker.data()[..frame]);
        }
        data.extend_from_slice(plucker.data());
        let x = g.input(Tensor::new(&[s[0] + pad, s[1], s[2], 6], data)?);
        let w = g.param("tok_pose.weight")?;
        let b = g.param("tok_pose.bias")?;
        let ps = self.cfg.p_l * self.cfg.r_s;
        let y = g.tape.conv3d(x, w, Some(b), ConvGeometry::patch([self.cfg.r_t, ps, ps]))?;
        g.tape.reshape(y, &[grid.iter().product(), self.cfg.hidden])
    }

    /// Full forward pass to the 12-channel Gaussian feature map.
    pub fn forward(&self, g: &mut Graph<'_>, latent: &VideoLatent, plucker: &Tensor) -> Result<FeatureMap> {
        let cfg = &self.cfg;
        let o_l = self.tokenize_latent(g, &latent.data)?;
        let o_p = self.tokenize_pose(g, plucker)?;
        let (nl, np) = (g.tape.shape(o_l)[0], g.tape.shape(o_p)[0]);
        if nl != np {
            return Err(contract_err!("pose tokens ({np}) do not match latent tokens ({nl})"));
        }
        let grid = cfg.latent_grid(latent.frames(), latent.height(), latent.width())?;
        if grid != self.grid()? {
            return Err(shape_err!("latent token grid {grid:?} differs from the model grid {:?}", self.grid()?));
        }
        let d = cfg.hidden;
        let pos_l = g.param("pos_latent")?;
        let pos_l = g.tape.reshape(pos_l, &[nl, d])?;
        let pos_p = g.param("pos_pose")?;
        let pos_p = g.tape.reshape(pos_p, &[nl, d])?;
        let o_l = g.tape.add(o_l, pos_l)?;
        let o_p = g.tape.add(o_p, pos_p)?;
        let x = g.tape.concat(&[o_l, o_p], 1)?;
        let mut x = linear(g, "in_proj", x, 1.0)?;
        let spec = Self::block_spec(cfg);
        for i in 0..cfg.num_blocks {
            x = block(g, &format!("blocks.{i}"), x, &spec, 1.0)?;
            if !g.value(x).data().iter().all(|v| v.is_finite()) {
                return Err(numeric_err!("lalrm: non-finite activations after block {i}"));
            }
        }
        let x = layer_norm(g, "out_ln", x)?;
        let x = g.tape.reshape(x, &[grid[0], grid[1], grid[2], d])?;
        let w = g.param("decoder.weight")?;
        let b = g.param("decoder.bias")?;
        let y = g.tape.conv_transpose3d(x, w, Some(b), ConvGeometry::patch(cfg.deconv_strides()))?;
        let ys = g.tape.shape(y).to_vec();
        let frames = 1 + (grid[0] - 1) * cfg.r_t;
        let y = g.tape.narrow(y, 0, cfg.r_t - 1, frames)?;
        let gmap = g.tape.reshape(y, &[frames * ys[1] * ys[2], 12])?;
        Ok(FeatureMap { g: gmap, frames, height: ys[1], width: ys[2] })
    }

    /// Copy of the model adapted to the high-res variant at twice the source
    /// raster: decoder kernels are 2×2-averaged and positional embeddings are
    /// bilinearly resampled to the doubled token grid.
    pub fn to_high_res(&self) -> Result<Self> {
        if self.cfg.variant == Variant::HighRes {
            return Err(contract_err!("model already uses the high-res variant"));
        }
        let mut cfg = self.cfg.clone();
        cfg.variant = Variant::HighRes;
        cfg.validate()?;
        let mut params = self.params.clone();
        let w = self.params.tensor("decoder.weight")?;
        let s = w.shape().to_vec();
        let (d, kt, ks) = (s[0], s[1], s[2]);
        let half = ks / 2;
        let mut out = vec![0.0f32; d * kt * half * half * 12];
        for c in 0..d {
            for t in 0..kt {
                for y in 0..half {
                    for x in 0..half {
                        for o in 0..12 {
                            let mut acc = 0.0;
                            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                acc += w.data()[((((c * kt + t) * ks + 2 * y + dy) * ks) + 2 * x + dx) * 12 + o];
                            }
                            out[((((c * kt + t) * half + y) * half) + x) * 12 + o] = acc / 4.0;
                        }
                    }
                }
            }
        }
        params.insert("decoder.weight", Tensor::new(&[d, kt, half, half, 12], out)?, true);
        for name in ["pos_latent", "pos_pose"] {
            let p = self.params.tensor(name)?;
            params.insert(name, upsample_grid(p), true);
        }
        Ok(Self { cfg, params })
    }
}

/// Bilinear ×2 upsampling of a `[t, h, w, d]` grid over its spatial axes,
/// sampling at half-pixel-aligned centers.
fn upsample_grid(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (t, h, w, d) = (s[0], s[1], s[2], s[3]);
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; t * h2 * w2 * d];
    let coord = |i: usize, n: usize| -> (usize, usize, f32) {
        let src = ((i as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f32);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, src - lo as f32)
    };
    for f in 0..t {
        for y in 0..h2 {
            let (y0, y1, fy) = coord(y, h);
            for xx in 0..w2 {
                let (x0, x1, fx) = coord(xx, w);
                for c in 0..d {
                    let at = |yy: usize, xi: usize| x.data()[((f * h + yy) * w + xi) * d + c];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    out[((f * h2 + y) * w2 + xx) * d + c] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    Tensor::raw(vec![t, h2, w2, d], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{plucker_embed, CameraPose, PluckerOptions, Trajectory};
    use crate::camera::intrinsics;

    fn tiny_cfg() -> LaLRMConfig {
        LaLRMConfig { p_l: 1, num_blocks: 1, hidden: 8, heads: 2, mlp_ratio: 2, r_t: 2, r_s: 2, latent_channels: 24, ..Default::default() }
    }

    fn inputs(frames: usize, h: usize, w: usize, cfg: &LaLRMConfig, rng: &mut Rng) -> (VideoLatent, Tensor) {
        let t = 1 + (frames - 1) / cfg.r_t;
        let latent = VideoLatent {
            data: Tensor::randn(&[t, h / cfg.r_s, w / cfg.r_s, cfg.latent_channels], 1.0, rng),
            codec_id: "lossless-s2d".into(),
            r_t: cfg.r_t,
            r_s: cfg.r_s,
        };
        let poses = (0..frames)
            .map(|_| CameraPose::random(rng, intrinsics(w as f64, w as f64, w as f64 / 2.0, h as f64 / 2.0), 1.0))
            .collect();
        let traj = Trajectory::new(poses).unwrap();
        (latent, plucker_embed(&traj, h, w, PluckerOptions::default()).unwrap())
    }

    #[test]
    fn feature_map_has_one_row_per_pixel() {
        let cfg = tiny_cfg();
        let mut rng = Rng::seed(1);
        let (z, p) = inputs(5, 4, 6, &cfg, &mut rng);
        let grid = cfg.latent_grid(z.frames(), z.height(), z.width()).unwrap();
        let model = LaLRM::init(&cfg, grid, 0).unwrap();
        let mut g = Graph::new(&model.params);
        let out = model.forward(&mut g, &z, &p).unwrap();
        assert_eq!((out.frames, out.height, out.width), (5, 4, 6));
        assert_eq!(g.value(out.g).shape(), &[5 * 4 * 6, 12]);
    }

    #[test]
    fn high_res_variant_halves_the_gaussian_raster() {
        let cfg = tiny_cfg();
        let mut rng = Rng::seed(2);
        let (z, p) = inputs(3, 4, 4, &cfg, &mut rng);
        let model = LaLRM::init(&cfg, cfg.latent_grid(z.frames(), z.height(), z.width()).unwrap(), 0).unwrap();
        let hi = model.to_high_res().unwrap();
        let (z2, p2) = inputs(3, 8, 8, &cfg, &mut rng);
        let mut g = Graph::new(&hi.params);
        let out = hi.forward(&mut g, &z2, &p2).unwrap();
        assert_eq!((out.frames, out.height, out.width), (3, 4, 4));
        let _ = (z, p);
    }

    #[test]
    fn zero_decoder_gives_zero_features() {
        let cfg = tiny_cfg();
        let mut rng = Rng::seed(3);
        let (z, p) = inputs(3, 4, 4, &cfg, &mut rng);
        let mut model = LaLRM::init(&cfg, cfg.latent_grid(z.frames(), z.height(), z.width()).unwrap(), 0).unwrap();
        for name in ["decoder.weight", "decoder.bias"] {
            let t = model.params.get_mut(name).unwrap();
            t.value = Tensor::zeros(t.value.shape());
        }
        let mut g = Graph::inference(&model.params);
        let out = model.forward(&mut g, &z, &p).unwrap();
        assert!(g.value(out.g).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_pose_length_is_rejected() {
        let cfg = tiny_cfg();
        let mut rng = Rng::seed(4);
        let (z, _) = inputs(5, 4, 4, &cfg, &mut rng);
        let (_, p) = inputs(3, 4, 4, &cfg, &mut rng);
        let model = LaLRM::init(&cfg, cfg.latent_grid(z.frames(), z.height(), z.width()).unwrap(), 0).unwrap();
        let mut g = Graph::new(&model.params);
        assert!(model.forward(&mut g, &z, &p).is_err());
    }
}
