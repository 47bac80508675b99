use super::video::{latent_frames, Codec, Video, VideoLatent};
use crate::error::{contract_err, shape_err, Result};
use crate::numerics::Tensor;

pub const LOSSLESS_ID: &str = "lossless-s2d";

/// Space-to-depth codec: every `r_t × r_s × r_s × 3` block is folded into
/// the channel axis. Frame 0 is its own temporal group, replicated `r_t`
/// times so that all groups have the same width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LosslessCodec {
    pub r_t: usize,
    pub r_s: usize,
}

impl Default for LosslessCodec {
    fn default() -> Self {
        Self { r_t: 4, r_s: 8 }
    }
}

impl LosslessCodec {
    pub fn channels(&self) -> usize {
        3 * self.r_t * self.r_s * self.r_s
    }

    /// Source frame held by slot `dt` of temporal group `g`.
    fn source_frame(&self, g: usize, dt: usize) -> usize {
        if g == 0 {
            0
        } else {
            1 + (g - 1) * self.r_t + dt
        }
    }

    pub fn latent_shape(&self, frames: usize, height: usize, width: usize) -> Result<[usize; 4]> {
        let t = latent_frames(frames, self.r_t)?;
        if height % self.r_s != 0 {
            return Err(shape_err!("height axis: H = {height} is not divisible by r_s = {}", self.r_s));
        }
        if width % self.r_s != 0 {
            return Err(shape_err!("width axis: W = {width} is not divisible by r_s = {}", self.r_s));
        }
        Ok([t, height / self.r_s, width / self.r_s, self.channels()])
    }

    /// Visits every (latent index, video index) pair of the folding.
    fn for_each_pair(&self, t: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize)) {
        let (rt, rs) = (self.r_t, self.r_s);
        let (hh, ww) = (h * rs, w * rs);
        let c = self.channels();
        for g in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let base = ((g * h + y) * w + x) * c;
                    let mut ch = 0;
                    for dt in 0..rt {
                        let frame = self.source_frame(g, dt);
                        for dy in 0..rs {
                            let row = ((frame * hh) + y * rs + dy) * ww + x * rs;
                            for dx in 0..rs {
                                let src = (row + dx) * 3;
                                for k in 0..3 {
                                    f(base + ch, src + k);
                                    ch += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Codec for LosslessCodec {
    fn id(&self) -> &str {
        LOSSLESS_ID
    }

    fn encode(&self, video: &Video) -> Result<VideoLatent> {
        let [t, h, w, c] = self.latent_shape(video.frames(), video.height(), video.width())?;
        let src = video.data.data();
        let mut out = vec![0.0f32; t * h * w * c];
        self.for_each_pair(t, h, w, |li, vi| out[li] = src[vi]);
        Ok(VideoLatent {
            data: Tensor::raw(vec![t, h, w, c], out),
            codec_id: LOSSLESS_ID.to_string(),
            r_t: self.r_t,
            r_s: self.r_s,
        })
    }

    fn decode(&self, latent: &VideoLatent) -> Result<Video> {
        if latent.codec_id != LOSSLESS_ID {
            return Err(contract_err!("latent was produced by codec `{}`, not `{LOSSLESS_ID}`", latent.codec_id));
        }
        if latent.r_t != self.r_t || latent.r_s != self.r_s {
            return Err(contract_err!(
                "latent rates (r_t={}, r_s={}) differ from codec rates (r_t={}, r_s={})",
                latent.r_t, latent.r_s, self.r_t, self.r_s
            ));
        }
        let s = latent.data.shape();
        if s.len() != 4 || s[3] != self.channels() {
            return Err(shape_err!("latent shape {s:?} does not have {} channels", self.channels()));
        }
        let (t, h, w) = (s[0], s[1], s[2]);
        let frames = 1 + (t - 1) * self.r_t;
        let mut out = vec![0.0f32; frames * h * self.r_s * w * self.r_s * 3];
        let src = latent.data.data();
        let first_group = h * w * self.channels();
        let slot = 3 * self.r_s * self.r_s;
        // frame 0 comes from slot 0 of group 0; its replicas are skipped
        self.for_each_pair(t, h, w, |li, vi| {
            if li >= first_group || li % self.channels() < slot {
                out[vi] = src[li];
            }
        });
        Video::new(Tensor::raw(vec![frames, h * self.r_s, w * self.r_s, 3], out))
    }
}
