use crate::error::{contract_err, Result};

/// Which camera-conditioning branches are attached to the base model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branches {
    #[default]
    None,
    Lora,
    Ctrl,
    Dual,
}

impl Branches {
    pub fn lora(self) -> bool {
        matches!(self, Branches::Lora | Branches::Dual)
    }

    pub fn ctrl(self) -> bool {
        matches!(self, Branches::Ctrl | Branches::Dual)
    }

    pub fn name(self) -> &'static str {
        match self {
            Branches::None => "none",
            Branches::Lora => "lora",
            Branches::Ctrl => "ctrl",
            Branches::Dual => "dual",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Branches::None),
            "lora" => Ok(Branches::Lora),
            "ctrl" => Ok(Branches::Ctrl),
            "dual" => Ok(Branches::Dual),
            other => Err(contract_err!("unknown branch set `{other}` (expected none, lora, ctrl, or dual)")),
        }
    }
}

/// What the transformer head outputs. Either way [`CamDiT::forward`](super::CamDiT::forward)
/// returns the noise estimate `ε̂`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Prediction {
    /// The head is `ε̂` itself.
    Eps,
    /// The head is the clean latent `x̂₀` and `ε̂ = (z_τ − α_τ x̂₀) / σ_τ`.
    #[default]
    X0,
}

impl Prediction {
    pub fn name(self) -> &'static str {
        match self {
            Prediction::Eps => "eps",
            Prediction::X0 => "x0",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eps" => Ok(Prediction::Eps),
            "x0" => Ok(Prediction::X0),
            other => Err(contract_err!("unknown prediction `{other}` (expected eps or x0)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiTConfig {
    pub num_blocks: usize,
    pub hidden: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Base blocks copied into the ControlNet branch.
    pub ctrl_blocks: usize,
    pub lora_rank: usize,
    pub lora_scale: f32,
    /// Adapt every base block with LoRA. When false only the first
    /// `ctrl_blocks` blocks are adapted.
    pub lora_all_blocks: bool,
    /// Freeze the base weights once branches are attached.
    pub freeze_base: bool,
    pub patch_t: usize,
    pub patch_s: usize,
    pub latent_channels: usize,
    pub r_t: usize,
    pub r_s: usize,
    /// Hidden width of the camera encoders.
    pub camera_hidden: usize,
    /// Width of the opaque condition embedding `y`.
    pub text_dim: usize,
    pub branches: Branches,
    pub schedule_steps: usize,
    /// Default number of sampling steps.
    pub steps: usize,
    /// Latents enter the model as `(z − shift)·scale`.
    pub latent_shift: f32,
    pub latent_scale: f32,
    /// Bound on the predicted clean latent during sampling, in model units.
    pub x0_clip: Option<f32>,
    pub prediction: Prediction,
    /// Min-SNR-γ loss weight `min(SNR, γ) / SNR`; `None` trains unweighted.
    pub min_snr: Option<f64>,
}

impl Default for DiTConfig {
    fn default() -> Self {
        Self {
            num_blocks: 8,
            hidden: 128,
            heads: 4,
            mlp_ratio: 4,
            ctrl_blocks: 4,
            lora_rank: 8,
            lora_scale: 1.0,
            lora_all_blocks: true,
            freeze_base: true,
            patch_t: 1,
            patch_s: 1,
            latent_channels: 768,
            r_t: 4,
            r_s: 8,
            camera_hidden: 32,
            text_dim: 16,
            branches: Branches::None,
            schedule_steps: 1000,
            steps: 50,
            latent_shift: 0.5,
            latent_scale: 2.0,
            x0_clip: Some(1.0),
            prediction: Prediction::X0,
            min_snr: Some(5.0),
        }
    }
}

impl DiTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 {
            return Err(contract_err!("dit.num_blocks must be positive"));
        }
        if self.ctrl_blocks == 0 || self.ctrl_blocks > self.num_blocks {
            return Err(contract_err!("dit.ctrl_blocks must lie in 1..={}, got {}", self.num_blocks, self.ctrl_blocks));
        }
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(contract_err!("dit.hidden {} is not divisible by {} heads", self.hidden, self.heads));
        }
        if self.lora_rank == 0 || self.patch_t == 0 || self.patch_s == 0 || self.r_t == 0 || self.r_s == 0 {
            return Err(contract_err!("dit ranks, patch sizes, and compression rates must be positive"));
        }
        if self.schedule_steps < 2 || self.steps == 0 {
            return Err(contract_err!("dit schedule needs ≥ 2 steps and sampling ≥ 1 step"));
        }
        if self.min_snr.is_some_and(|g| !(g > 0.0)) {
            return Err(contract_err!("dit.min_snr must be positive"));
        }
        if self.latent_scale == 0.0 {
            return Err(contract_err!("dit.latent_scale must be nonzero"));
        }
        Ok(())
    }

    /// Base blocks that carry LoRA adapters when the LoRA branch is attached.
    pub fn lora_block_count(&self) -> usize {
        if self.lora_all_blocks {
            self.num_blocks
        } else {
            self.ctrl_blocks
        }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("num_blocks", self.num_blocks.to_string()),
            ("hidden", self.hidden.to_string()),
            ("heads", self.heads.to_string()),
            ("mlp_ratio", self.mlp_ratio.to_string()),
            ("ctrl_blocks", self.ctrl_blocks.to_string()),
            ("lora_rank", self.lora_rank.to_string()),
            ("lora_scale", self.lora_scale.to_string()),
            ("lora_all_blocks", self.lora_all_blocks.to_string()),
            ("freeze_base", self.freeze_base.to_string()),
            ("patch_t", self.patch_t.to_string()),
            ("patch_s", self.patch_s.to_string()),
            ("latent_channels", self.latent_channels.to_string()),
            ("r_t", self.r_t.to_string()),
            ("r_s", self.r_s.to_string()),
            ("camera_hidden", self.camera_hidden.to_string()),
            ("text_dim", self.text_dim.to_string()),
            ("branches", self.branches.name().to_string()),
            ("schedule_steps", self.schedule_steps.to_string()),
            ("steps", self.steps.to_string()),
            ("latent_shift", self.latent_shift.to_string()),
            ("latent_scale", self.latent_scale.to_string()),
            ("x0_clip", self.x0_clip.map_or("none".to_string(), |v| v.to_string())),
            ("prediction", self.prediction.name().to_string()),
            ("min_snr", self.min_snr.map_or("none".to_string(), |v| v.to_string())),
        ]
        .into_iter()
        .map(|(k, v)| (format!("dit.{k}"), v))
        .collect()
    }

    pub fn from_pairs(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let d = Self::default();
        fn parsed<T: std::str::FromStr>(get: &dyn Fn(&str) -> Option<String>, k: &str, dflt: T) -> Result<T> {
            match get(&format!("dit.{k}")) {
                Some(v) => v.parse().map_err(|_| contract_err!("dit.{k}: invalid value `{v}`")),
                None => Ok(dflt),
            }
        }
        let get: &dyn Fn(&str) -> Option<String> = &get;
        let cfg = Self {
            num_blocks: parsed(get, "num_blocks", d.num_blocks)?,
            hidden: parsed(get, "hidden", d.hidden)?,
            heads: parsed(get, "heads", d.heads)?,
            mlp_ratio: parsed(get, "mlp_ratio", d.mlp_ratio)?,
            ctrl_blocks: parsed(get, "ctrl_blocks", d.ctrl_blocks)?,
            lora_rank: parsed(get, "lora_rank", d.lora_rank)?,
            lora_scale: parsed(get, "lora_scale", d.lora_scale)?,
            lora_all_blocks: parsed(get, "lora_all_blocks", d.lora_all_blocks)?,
            freeze_base: parsed(get, "freeze_base", d.freeze_base)?,
            patch_t: parsed(get, "patch_t", d.patch_t)?,
            patch_s: parsed(get, "patch_s", d.patch_s)?,
            latent_channels: parsed(get, "latent_channels", d.latent_channels)?,
            r_t: parsed(get, "r_t", d.r_t)?,
            r_s: parsed(get, "r_s", d.r_s)?,
            camera_hidden: parsed(get, "camera_hidden", d.camera_hidden)?,
            text_dim: parsed(get, "text_dim", d.text_dim)?,
            branches: match get("dit.branches") {
                Some(v) => Branches::parse(&v)?,
                None => d.branches,
            },
            schedule_steps: parsed(get, "schedule_steps", d.schedule_steps)?,
            steps: parsed(get, "steps", d.steps)?,
            latent_shift: parsed(get, "latent_shift", d.latent_shift)?,
            latent_scale: parsed(get, "latent_scale", d.latent_scale)?,
            x0_clip: match get("dit.x0_clip").as_deref() {
                Some("none") => None,
                Some(v) => Some(v.parse().map_err(|_| contract_err!("dit.x0_clip: invalid value `{v}`"))?),
                None => d.x0_clip,
            },
            prediction: match get("dit.prediction") {
                Some(v) => Prediction::parse(&v)?,
                None => d.prediction,
            },
            min_snr: match get("dit.min_snr").as_deref() {
                Some("none") => None,
                Some(v) => Some(v.parse().map_err(|_| contract_err!("dit.min_snr: invalid value `{v}`"))?),
                None => d.min_snr,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_roundtrip() {
        let cfg = DiTConfig { branches: Branches::Ctrl, x0_clip: None, lora_rank: 256, ..Default::default() };
        let pairs = cfg.to_pairs();
        let back = DiTConfig::from_pairs(|k| pairs.iter().find(|(n, _)| n == k).map(|(_, v)| v.clone())).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn full_scale_geometry_is_expressible() {
        let cfg = DiTConfig { num_blocks: 42, ctrl_blocks: 21, hidden: 3072, heads: 48, lora_rank: 256, ..Default::default() };
        cfg.validate().unwrap();
        assert!(DiTConfig { ctrl_blocks: 43, ..cfg.clone() }.validate().is_err());
        assert!(DiTConfig { heads: 5, ..cfg }.validate().is_err());
    }
}
