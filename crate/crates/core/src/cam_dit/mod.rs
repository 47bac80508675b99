//! Camera-guided latent video diffusion transformer with dual-branch
//! (ControlNet and LoRA) camera conditioning.

mod config;
mod model;
mod schedule;
mod train;

pub use config::{Branches, DiTConfig, Prediction};
pub use model::{is_branch_param, token_grid, CamDiT, CameraBranch, DiTInput};
pub use schedule::DiffusionSchedule;
pub use train::{first_frame, sample, train_dit, training_step, DiTExample, DiTTrainOptions, SampleRequest, StepOutput};

#[cfg(test)]
mod tests;
