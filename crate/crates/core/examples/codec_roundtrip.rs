//! Lossless space-to-depth codec on a rendered clip, and a small learned codec.
//!
//! cargo run --release --example codec_roundtrip

use wonderland::codec::{train_learned_codec, Codec, LearnedCodecConfig, LosslessCodec};
use wonderland::pipeline::{generate_scene, psnr, Complexity, SceneSpec};

fn main() -> wonderland::Result<()> {
    let scene = generate_scene(3, Complexity::Small, &SceneSpec { frames: 9, height: 48, width: 72 })?;
    let codec = LosslessCodec::default();
    let latent = codec.encode(&scene.video)?;
    let back = codec.decode(&latent)?;
    println!(
        "lossless: video {:?} → latent {:?}, bit-exact {}",
        scene.video.data.shape(),
        latent.data.shape(),
        back.data == scene.video.data
    );

    let cfg = LearnedCodecConfig { channels: 64, steps: 200, ..Default::default() };
    let trained = train_learned_codec(std::slice::from_ref(&scene.video), &cfg)?;
    let rec = trained.codec.decode(&trained.codec.encode(&scene.video)?)?;
    println!(
        "learned ({} channels): loss {:.5} → {:.5}, frame 4 PSNR {:.2} dB",
        cfg.channels,
        trained.losses.first().copied().unwrap_or(f64::NAN),
        trained.losses.last().copied().unwrap_or(f64::NAN),
        psnr(&rec.frame(4), &scene.video.frame(4))?
    );
    Ok(())
}
