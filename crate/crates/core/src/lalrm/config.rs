use crate::error::{contract_err, shape_err, Result};

/// Which transposed-convolution decoder the model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Strides `(r_t, p_l·r_s, p_l·r_s)`: one Gaussian per source pixel.
    LowRes,
    /// Strides `(r_t, p_l·r_s/2, p_l·r_s/2)`: one Gaussian per 2×2 pixel block.
    HighRes,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::LowRes => "low_res",
            Variant::HighRes => "high_res",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "low_res" => Ok(Variant::LowRes),
            "high_res" => Ok(Variant::HighRes),
            other => Err(contract_err!("unknown variant `{other}` (expected low_res or high_res)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaLRMConfig {
    /// Latent spatial patch size.
    pub p_l: usize,
    pub num_blocks: usize,
    pub hidden: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub r_t: usize,
    pub r_s: usize,
    pub latent_channels: usize,
    pub variant: Variant,
    /// Ray-distance range in normalized camera units.
    pub near: f64,
    pub far: f64,
    /// Decoder bias targets at initialization.
    pub init_scale: f64,
    pub init_opacity: f64,
    pub init_distance: f64,
}

impl Default for LaLRMConfig {
    fn default() -> Self {
        Self {
            p_l: 2,
            num_blocks: 6,
            hidden: 128,
            heads: 4,
            mlp_ratio: 4,
            r_t: 4,
            r_s: 8,
            latent_channels: 768,
            variant: Variant::LowRes,
            near: 0.1,
            far: 100.0,
            init_scale: 0.02,
            init_opacity: 0.5,
            init_distance: 2.0,
        }
    }
}

impl LaLRMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_l == 0 || self.r_t == 0 || self.r_s == 0 {
            return Err(contract_err!("p_l, r_t, and r_s must be positive"));
        }
        if self.hidden % self.heads != 0 {
            return Err(contract_err!("hidden {} is not divisible by heads {}", self.hidden, self.heads));
        }
        if self.variant == Variant::HighRes && (self.p_l * self.r_s) % 2 != 0 {
            return Err(contract_err!("high-res variant needs an even p_l·r_s, got {}", self.p_l * self.r_s));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(contract_err!("ray distance range needs 0 < near < far"));
        }
        if !(self.init_distance > self.near && self.init_distance < self.far) {
            return Err(contract_err!("init_distance must lie inside (near, far)"));
        }
        Ok(())
    }

    /// Decoder strides `(temporal, spatial, spatial)`.
    pub fn deconv_strides(&self) -> [usize; 3] {
        let s = match self.variant {
            Variant::LowRes => self.p_l * self.r_s,
            Variant::HighRes => self.p_l * self.r_s / 2,
        };
        [self.r_t, s, s]
    }

    /// Gaussian raster `(H′, W′)` for a source raster `(H, W)`.
    pub fn gaussian_raster(&self, height: usize, width: usize) -> (usize, usize) {
        match self.variant {
            Variant::LowRes => (height, width),
            Variant::HighRes => (height / 2, width / 2),
        }
    }

    /// Token grid of a `t × h × w` latent.
    pub fn latent_grid(&self, t: usize, h: usize, w: usize) -> Result<[usize; 3]> {
        if h % self.p_l != 0 || w % self.p_l != 0 {
            return Err(shape_err!("latent {h}×{w} is not divisible by the patch size p_l = {}", self.p_l));
        }
        Ok([t, h / self.p_l, w / self.p_l])
    }

    /// Token grid of a `T × H × W` Plücker embedding.
    pub fn pose_grid(&self, frames: usize, height: usize, width: usize) -> Result<[usize; 3]> {
        let s = self.p_l * self.r_s;
        if frames == 0 || (frames - 1) % self.r_t != 0 {
            return Err(shape_err!("pose frames: T − 1 = {} is not divisible by r_t = {}", frames as i64 - 1, self.r_t));
        }
        if height % s != 0 || width % s != 0 {
            return Err(shape_err!("pose raster {height}×{width} is not divisible by p_l·r_s = {s}"));
        }
        Ok([1 + (frames - 1) / self.r_t, height / s, width / s])
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("p_l", self.p_l.to_string()),
            ("num_blocks", self.num_blocks.to_string()),
            ("hidden", self.hidden.to_string()),
            ("heads", self.heads.to_string()),
            ("mlp_ratio", self.mlp_ratio.to_string()),
            ("r_t", self.r_t.to_string()),
            ("r_s", self.r_s.to_string()),
            ("latent_channels", self.latent_channels.to_string()),
            ("variant", self.variant.name().to_string()),
            ("near", self.near.to_string()),
            ("far", self.far.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("init_opacity", self.init_opacity.to_string()),
            ("init_distance", self.init_distance.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (format!("lalrm.{k}"), v))
        .collect()
    }

    pub fn from_pairs(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let d = Self::default();
        let num = |k: &str, dflt: usize| -> Result<usize> {
            match get(&format!("lalrm.{k}")) {
                Some(v) => v.parse().map_err(|_| contract_err!("lalrm.{k}: invalid integer `{v}`")),
                None => Ok(dflt),
            }
        };
        let real = |k: &str, dflt: f64| -> Result<f64> {
            match get(&format!("lalrm.{k}")) {
                Some(v) => v.parse().map_err(|_| contract_err!("lalrm.{k}: invalid number `{v}`")),
                None => Ok(dflt),
            }
        };
        let cfg = Self {
            p_l: num("p_l", d.p_l)?,
            num_blocks: num("num_blocks", d.num_blocks)?,
            hidden: num("hidden", d.hidden)?,
            heads: num("heads", d.heads)?,
            mlp_ratio: num("mlp_ratio", d.mlp_ratio)?,
            r_t: num("r_t", d.r_t)?,
            r_s: num("r_s", d.r_s)?,
            latent_channels: num("latent_channels", d.latent_channels)?,
            variant: match get("lalrm.variant") {
                Some(v) => Variant::parse(&v)?,
                None => d.variant,
            },
            near: real("near", d.near)?,
            far: real("far", d.far)?,
            init_scale: real("init_scale", d.init_scale)?,
            init_opacity: real("init_opacity", d.init_opacity)?,
            init_distance: real("init_distance", d.init_distance)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_token_counts() {
        let cfg = LaLRMConfig::default();
        let l = cfg.latent_grid(13, 60, 90).unwrap();
        let p = cfg.pose_grid(49, 480, 720).unwrap();
        assert_eq!(l, p);
        assert_eq!(l.iter().product::<usize>(), 17550);
        let cfg3 = LaLRMConfig { p_l: 3, ..cfg.clone() };
        assert_eq!(cfg3.latent_grid(13, 60, 90).unwrap().iter().product::<usize>(), 7800);
        assert_eq!(cfg.latent_grid(1, 2, 2).unwrap(), [1, 1, 1]);
        assert_eq!(cfg.pose_grid(1, 16, 16).unwrap(), [1, 1, 1]);
        assert!(cfg.latent_grid(13, 60, 45).is_err());
    }

    #[test]
    fn variant_strides_and_counts() {
        let mut cfg = LaLRMConfig::default();
        assert_eq!(cfg.deconv_strides(), [4, 16, 16]);
        cfg.variant = Variant::HighRes;
        assert_eq!(cfg.deconv_strides(), [4, 8, 8]);
        let (h, w) = cfg.gaussian_raster(480, 720);
        assert_eq!(49 * h * w, 4_233_600);
    }

    #[test]
    fn pairs_roundtrip() {
        let cfg = LaLRMConfig { p_l: 3, variant: Variant::HighRes, init_scale: 0.125, ..Default::default() };
        let pairs = cfg.to_pairs();
        let back = LaLRMConfig::from_pairs(|k| pairs.iter().find(|(n, _)| n == k).map(|(_, v)| v.clone())).unwrap();
        assert_eq!(back, cfg);
    }
}
