//! Video ↔ latent mapping with temporal rate `r_t` and spatial rate `r_s`.

mod learned;
mod lossless;
mod video;

pub use learned::{train_learned_codec, CodecTraining, LearnedCodec, LearnedCodecConfig, LEARNED_ID};
pub use lossless::{LosslessCodec, LOSSLESS_ID};
pub use video::{latent_frames, Codec, Video, VideoLatent};
