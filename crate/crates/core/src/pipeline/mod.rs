//! Losses, metrics, clip sampling, synthetic scenes, LaLRM training,
//! evaluation, and checkpoint files.

mod checkpoint;
mod clip;
mod dataset;
mod eval;
mod loss;
mod metrics;
mod models;
mod scene;
mod train;

pub use checkpoint::{format_config, parse_config, read_config, Checkpoint};
pub use clip::{clip_at, sample_clip, ClipSample};
pub use dataset::{
    frame_name, latent_from_checkpoint, latent_to_checkpoint, load_latent, read_dataset, read_frames, read_scene,
    save_latent, scene_dir, write_frames, write_scene,
};
pub use eval::{evaluate, evaluate_scene, reconstruct_scene, render_frames, write_report, EvalOptions, EvalReport, Protocol, Reconstruction, SceneMetrics};
pub use loss::{loss_recon, loss_recon_value, LossWeights, PerceptualNet};
pub use metrics::{mse, psnr, ssim, PSNR_CAP};
pub use models::{
    dit_checkpoint, dit_examples, dit_from_checkpoint, lalrm_checkpoint, lalrm_from_checkpoint, train_dit_model, DiTSchedule,
};
pub use scene::{generate_scene, render_settings, render_video, scene_intrinsics, Complexity, SceneSpec, SyntheticScene};
pub use train::{clip_inputs, reconstruct, train_lalrm, window_means, ClipInputs, StepInfo, TrainConfig, TrainOutcome};
