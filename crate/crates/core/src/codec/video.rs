use crate::error::{contract_err, Result};
use crate::numerics::Tensor;

/// RGB frames `[T, H, W, 3]` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub data: Tensor,
    pub fps: f32,
}

impl Video {
    pub fn new(data: Tensor) -> Result<Self> {
        let s = data.shape();
        if s.len() != 4 || s[3] != 3 {
            return Err(contract_err!("video must have shape [T, H, W, 3], got {s:?}"));
        }
        Ok(Self { data, fps: 8.0 })
    }

    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| contract_err!("video needs at least one frame"))?;
        let fs = first.shape().to_vec();
        let mut data = Vec::with_capacity(frames.len() * first.len());
        for (i, f) in frames.iter().enumerate() {
            if f.shape() != fs.as_slice() {
                return Err(contract_err!("frame {i} has shape {:?}, expected {fs:?}", f.shape()));
            }
            data.extend_from_slice(f.data());
        }
        let mut shape = vec![frames.len()];
        shape.extend(fs);
        Self::new(Tensor::new(&shape, data)?)
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }
    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }
    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    /// Frame `f` as an `[H, W, 3]` tensor.
    pub fn frame(&self, f: usize) -> Tensor {
        let n = self.height() * self.width() * 3;
        Tensor::raw(vec![self.height(), self.width(), 3], self.data.data()[f * n..(f + 1) * n].to_vec())
    }

    pub fn select(&self, frames: &[usize]) -> Result<Self> {
        let list = frames
            .iter()
            .map(|&f| {
                if f < self.frames() {
                    Ok(self.frame(f))
                } else {
                    Err(contract_err!("frame {f} out of range for video of {} frames", self.frames()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_frames(&list)
    }
}

/// Compressed video `[t, h, w, c]` tagged with the codec that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoLatent {
    pub data: Tensor,
    pub codec_id: String,
    pub r_t: usize,
    pub r_s: usize,
}

impl VideoLatent {
    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }
    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }
    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }
    pub fn channels(&self) -> usize {
        self.data.shape()[3]
    }

    /// Number of source frames this latent decodes to.
    pub fn source_frames(&self) -> usize {
        1 + (self.frames() - 1) * self.r_t
    }
}

/// Latent frame count `1 + (T − 1) / r_t`, or a shape error if `r_t ∤ T − 1`.
pub fn latent_frames(frames: usize, r_t: usize) -> Result<usize> {
    if frames == 0 || (frames - 1) % r_t != 0 {
        return Err(crate::error::shape_err!(
            "temporal axis: T − 1 = {} is not divisible by r_t = {r_t}",
            frames as i64 - 1
        ));
    }
    Ok(1 + (frames - 1) / r_t)
}

/// Common interface of the lossless and learned codecs.
pub trait Codec {
    fn id(&self) -> &str;
    fn encode(&self, video: &Video) -> Result<VideoLatent>;
    fn decode(&self, latent: &VideoLatent) -> Result<Video>;
}
