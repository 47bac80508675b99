use super::cloud::GaussianCloud;
use super::raster::{rasterize_backward, rasterize_forward, RenderSettings, SplatParams};
use crate::camera::CameraPose;
use crate::error::Result;
use crate::numerics::{finite_diff_grad, relative_error, Tensor};

/// Largest relative gradient error per attribute class.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub position: f32,
    pub scale: f32,
    pub rotation: f32,
    pub color: f32,
    pub opacity: f32,
}

impl GradCheckReport {
    pub fn entries(&self) -> [(&'static str, f32); 5] {
        [
            ("position", self.position),
            ("scale", self.scale),
            ("rotation", self.rotation),
            ("color", self.color),
            ("opacity", self.opacity),
        ]
    }

    pub fn max(&self) -> f32 {
        self.entries().iter().map(|e| e.1).fold(0.0, f32::max)
    }
}

/// Mean squared difference between the render and the background image.
fn image_loss(image: &[f64], settings: &RenderSettings) -> f64 {
    let n = image.len() as f64;
    image
        .chunks_exact(3)
        .map(|px| (0..3).map(|k| (px[k] - settings.background[k]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n
}

/// Compares rasterizer gradients of a mean squared image loss with central
/// finite differences of step `h`, attribute class by attribute class.
pub fn gradient_check_render(cloud: &GaussianCloud, pose: &CameraPose, settings: &RenderSettings, h: f32) -> Result<GradCheckReport> {
    let params = SplatParams::of(cloud);
    let state = rasterize_forward(&params, pose, settings)?;
    let n = state.image.len() as f64;
    let d_image: Vec<f64> = state
        .image
        .chunks_exact(3)
        .flat_map(|px| (0..3).map(move |k| 2.0 * (px[k] - settings.background[k]) / n))
        .collect();
    let grads = rasterize_backward(&params, &state, &d_image);

    let flat = |v: &[f32]| Tensor::from_shape_vec(&[v.len().max(1)], if v.is_empty() { vec![0.0] } else { v.to_vec() });
    let classes: [(&[f64], usize); 5] = [
        (&grads.positions, 0),
        (&grads.scales, 1),
        (&grads.rotations, 2),
        (&grads.colors, 3),
        (&grads.opacities, 4),
    ];
    let mut errs = [0.0f32; 5];
    if cloud.is_empty() {
        return Ok(GradCheckReport { position: 0.0, scale: 0.0, rotation: 0.0, color: 0.0, opacity: 0.0 });
    }
    for (analytic, class) in classes {
        let original: Vec<f32> = match class {
            0 => params.positions.to_vec(),
            1 => params.scales.to_vec(),
            2 => params.rotations.to_vec(),
            3 => params.colors.to_vec(),
            _ => params.opacities.to_vec(),
        };
        let x = flat(&original)?;
        let numeric = finite_diff_grad(
            |probe| {
                let mut p = params;
                let d = probe.data();
                match class {
                    0 => p.positions = d,
                    1 => p.scales = d,
                    2 => p.rotations = d,
                    3 => p.colors = d,
                    _ => p.opacities = d,
                }
                let s = rasterize_forward(&p, pose, settings)?;
                Ok(image_loss(&s.image, settings))
            },
            &x,
            h,
        )?;
        let analytic: Vec<f32> = analytic.iter().map(|&v| v as f32).collect();
        errs[class] = relative_error(&analytic, numeric.data(), 1e-6);
    }
    Ok(GradCheckReport { position: errs[0], scale: errs[1], rotation: errs[2], color: errs[3], opacity: errs[4] })
}
