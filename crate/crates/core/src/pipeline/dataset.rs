use std::path::{Path, PathBuf};

use super::checkpoint::Checkpoint;
use super::scene::SyntheticScene;
use crate::camera::{read_trajectory, write_trajectory};
use crate::codec::{Video, VideoLatent};
use crate::error::{Error, Result};
use crate::gsplat::{load_splat, read_png, save_splat, write_png};
use crate::numerics::Tensor;

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const CLOUD_FILE: &str = "cloud.splat";
pub const FRAMES_DIR: &str = "frames";

pub fn frame_name(f: usize) -> String {
    format!("frame_{f:05}.png")
}

pub fn write_frames(dir: &Path, frames: impl IntoIterator<Item = Tensor>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (f, frame) in frames.into_iter().enumerate() {
        write_png(&dir.join(frame_name(f)), &frame)?;
    }
    Ok(())
}

/// Reads `frame_00000.png, frame_00001.png, …` until the first gap.
pub fn read_frames(dir: &Path) -> Result<Video> {
    let mut frames = Vec::new();
    loop {
        let p = dir.join(frame_name(frames.len()));
        if !p.exists() {
            break;
        }
        frames.push(read_png(&p)?);
    }
    if frames.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: no frames", dir.display()),
        )));
    }
    Video::from_frames(&frames)
}

pub fn scene_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("scene_{i:05}"))
}

/// Writes trajectory, PNG frames, and the ground-truth splat.
pub fn write_scene(dir: &Path, scene: &SyntheticScene) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_trajectory(&dir.join(TRAJECTORY_FILE), &scene.trajectory)?;
    save_splat(&dir.join(CLOUD_FILE), &scene.cloud)?;
    write_frames(&dir.join(FRAMES_DIR), (0..scene.video.frames()).map(|f| scene.video.frame(f)))?;
    std::fs::write(dir.join("seed.txt"), format!("{}\n", scene.seed))?;
    Ok(())
}

pub fn read_scene(dir: &Path) -> Result<SyntheticScene> {
    let trajectory = read_trajectory(&dir.join(TRAJECTORY_FILE))?;
    let cloud = load_splat(&dir.join(CLOUD_FILE))?;
    let video = read_frames(&dir.join(FRAMES_DIR))?;
    if video.frames() != trajectory.len() {
        return Err(crate::error::contract_err!(
            "{}: {} frames but {} cameras",
            dir.display(),
            video.frames(),
            trajectory.len()
        ));
    }
    let seed = std::fs::read_to_string(dir.join("seed.txt")).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0);
    Ok(SyntheticScene { cloud, trajectory, video, seed })
}

/// All `scene_*` subdirectories in name order.
pub fn read_dataset(root: &Path) -> Result<Vec<SyntheticScene>> {
    if !root.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("dataset {} does not exist", root.display()),
        )));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("scene_")))
        .collect();
    dirs.sort();
    dirs.iter().map(|d| read_scene(d)).collect()
}

pub fn latent_to_checkpoint(latent: &VideoLatent) -> Checkpoint {
    let mut ck = Checkpoint::default();
    ck.set("kind", "latent");
    ck.set("latent.codec_id", &latent.codec_id);
    ck.set("latent.r_t", latent.r_t);
    ck.set("latent.r_s", latent.r_s);
    ck.tensors.insert("latent".into(), latent.data.clone());
    ck
}

pub fn latent_from_checkpoint(ck: &Checkpoint) -> Result<VideoLatent> {
    let parse = |k: &str| -> Result<usize> {
        ck.require(k)?.parse().map_err(|_| crate::error::contract_err!("{k} is not an integer"))
    };
    let data = ck
        .tensors
        .get("latent")
        .cloned()
        .ok_or_else(|| crate::error::contract_err!("latent file has no `latent` tensor"))?;
    if data.rank() != 4 {
        return Err(crate::error::shape_err!("latent must be rank 4, got {:?}", data.shape()));
    }
    Ok(VideoLatent { data, codec_id: ck.require("latent.codec_id")?.to_string(), r_t: parse("latent.r_t")?, r_s: parse("latent.r_s")? })
}

pub fn save_latent(path: &Path, latent: &VideoLatent) -> Result<()> {
    latent_to_checkpoint(latent).save(path)
}

pub fn load_latent(path: &Path) -> Result<VideoLatent> {
    latent_from_checkpoint(&Checkpoint::load(path)?)
}
