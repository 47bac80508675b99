//! Exact depth-sorted splatting with a hand-written backward pass.
//!
//! All geometry is evaluated in `f64`. Each pixel keeps the list of
//! Gaussians that touched it together with their alpha and the transmittance
//! in front of them, so the backward pass needs no division by `1 − α`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use super::cloud::{quat_to_matrix, GaussianCloud};
use crate::camera::CameraPose;
use crate::error::{contract_err, numeric_err, Result};
use crate::numerics::{Tape, Tensor, Var};

pub const ALPHA_MAX: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings {
    pub height: usize,
    pub width: usize,
    pub background: [f64; 3],
    pub near: f64,
    pub far: f64,
    /// Contributions with alpha below this value are skipped. Any positive
    /// value makes the image a discontinuous function of the attributes.
    pub alpha_cutoff: f64,
    /// Half-width of the screen-space bounding box in standard deviations.
    /// At 6 the truncation jump is below 2e-8 of the opacity.
    pub cull_sigma: f64,
    /// Isotropic screen-space variance added to every projected covariance.
    pub dilation: f64,
    /// Compositing of a pixel stops once its transmittance falls below this.
    pub min_transmittance: f64,
}

impl RenderSettings {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            background: [0.0; 3],
            near: 0.01,
            far: 1000.0,
            alpha_cutoff: 0.0,
            cull_sigma: 6.0,
            dilation: 0.3,
            min_transmittance: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(contract_err!("render raster must be at least 1×1"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(contract_err!("render settings need 0 < near < far, got {} and {}", self.near, self.far));
        }
        if !(0.0..1.0).contains(&self.alpha_cutoff) {
            return Err(contract_err!("alpha cutoff {} outside [0, 1)", self.alpha_cutoff));
        }
        Ok(())
    }
}

/// Color `[H, W, 3]` and accumulated opacity `[H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub color: Tensor,
    pub alpha: Tensor,
}

/// Borrowed flat attribute arrays: positions/scales/colors `3N`, quaternions
/// `4N` (need not be normalized), opacities `N`.
#[derive(Clone, Copy, Debug)]
pub struct SplatParams<'a> {
    pub positions: &'a [f32],
    pub scales: &'a [f32],
    pub rotations: &'a [f32],
    pub colors: &'a [f32],
    pub opacities: &'a [f32],
}

impl<'a> SplatParams<'a> {
    pub fn of(cloud: &'a GaussianCloud) -> Self {
        Self {
            positions: cloud.positions.as_flattened(),
            scales: cloud.scales.as_flattened(),
            rotations: cloud.rotations.as_flattened(),
            colors: cloud.colors.as_flattened(),
            opacities: &cloud.opacities,
        }
    }

    pub fn len(&self) -> usize {
        self.opacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacities.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if self.positions.len() != 3 * n
            || self.scales.len() != 3 * n
            || self.rotations.len() != 4 * n
            || self.colors.len() != 3 * n
        {
            return Err(contract_err!("splat attribute arrays disagree on the gaussian count {n}"));
        }
        Ok(())
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub mean2d: [f64; 2],
    /// Dilated 2×2 covariance `[a, b, c]` for `[[a, b], [b, c]]`.
    pub cov2d: [f64; 3],
    pub depth: f64,
}

/// Everything the backward pass needs about one projected Gaussian.
#[derive(Clone, Debug)]
struct Projected {
    u: f64,
    v: f64,
    depth: f64,
    conic: [f64; 3],
    /// Half-extents of the screen-space bounding box.
    radius: [f64; 2],
    pc: Vector3<f64>,
    world_to_cam: Matrix3<f64>,
    jw: Matrix2x3<f64>,
    sigma: Matrix3<f64>,
    cov: Matrix2<f64>,
    rot: Matrix3<f64>,
    m: Matrix3<f64>,
    qhat: [f64; 4],
    qnorm: f64,
    scale: [f64; 3],
}

fn project_one(p: &SplatParams<'_>, i: usize, pose: &CameraPose, settings: &RenderSettings) -> Option<Projected> {
    let mu = Vector3::new(p.positions[3 * i] as f64, p.positions[3 * i + 1] as f64, p.positions[3 * i + 2] as f64);
    let world_to_cam = pose.r.transpose();
    let pc = world_to_cam * (mu - pose.t);
    let z = pc.z;
    if !(z >= settings.near && z <= settings.far) {
        return None;
    }
    let q = [0, 1, 2, 3].map(|k| p.rotations[4 * i + k] as f64);
    let qnorm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(qnorm > 1e-12) {
        return None;
    }
    let qhat = q.map(|v| v / qnorm);
    let scale = [0, 1, 2].map(|k| p.scales[3 * i + k] as f64);
    let rot = quat_to_matrix(qhat);
    let m = rot * Matrix3::from_diagonal(&Vector3::from(scale));
    let sigma = m * m.transpose();
    let (fx, fy) = (pose.fx(), pose.fy());
    let j = Matrix2x3::new(fx / z, 0.0, -fx * pc.x / (z * z), 0.0, fy / z, -fy * pc.y / (z * z));
    let jw = j * world_to_cam;
    let mut cov = jw * sigma * jw.transpose();
    cov[(0, 0)] += settings.dilation;
    cov[(1, 1)] += settings.dilation;
    let mut det = cov.determinant();
    if !(det > 1e-12) {
        // retry once with a larger dilation before giving up on this Gaussian
        cov[(0, 0)] += 1.0;
        cov[(1, 1)] += 1.0;
        det = cov.determinant();
        if !(det > 1e-12) {
            return None;
        }
    }
    let conic = [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det];
    let radius = if settings.alpha_cutoff > 0.0 {
        // exact box of the ellipse outside which alpha falls below the cutoff
        let o = (p.opacities[i] as f64).min(ALPHA_MAX);
        if o < settings.alpha_cutoff {
            return None;
        }
        let k = settings.cull_sigma.min((2.0 * (o / settings.alpha_cutoff).ln()).sqrt());
        [k * cov[(0, 0)].sqrt(), k * cov[(1, 1)].sqrt()]
    } else {
        let mid = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
        let lambda = mid + (mid * mid - det).max(0.0).sqrt();
        [settings.cull_sigma * lambda.sqrt(); 2]
    };
    Some(Projected {
        u: fx * pc.x / z + pose.cx(),
        v: fy * pc.y / z + pose.cy(),
        depth: z,
        conic,
        radius,
        pc,
        world_to_cam,
        jw,
        sigma,
        cov,
        rot,
        m,
        qhat,
        qnorm,
        scale,
    })
}

/// EWA projection of Gaussian `i` into `pose`; `None` when culled.
pub fn project(cloud: &GaussianCloud, i: usize, pose: &CameraPose, settings: &RenderSettings) -> Option<Projection> {
    let p = project_one(&SplatParams::of(cloud), i, pose, settings)?;
    Some(Projection { mean2d: [p.u, p.v], cov2d: [p.cov[(0, 0)], p.cov[(0, 1)], p.cov[(1, 1)]], depth: p.depth })
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    /// Depth rank of the Gaussian, an index into `RasterState::hot`.
    rank: u32,
    alpha: f64,
    trans: f64,
}

/// Forward state retained for the backward pass.
pub struct RasterState {
    settings: RenderSettings,
    pose: CameraPose,
    projected: Vec<Option<Projected>>,
    hot: Vec<Hot>,
    offsets: Vec<usize>,
    entries: Vec<Entry>,
    final_trans: Vec<f64>,
    /// Linear color `[H·W·3]` in `f64`.
    pub image: Vec<f64>,
}

impl RasterState {
    pub fn color_tensor(&self) -> Tensor {
        let s = &self.settings;
        Tensor::raw(vec![s.height, s.width, 3], self.image.iter().map(|&v| v as f32).collect())
    }

    pub fn alpha_tensor(&self) -> Tensor {
        let s = &self.settings;
        Tensor::raw(vec![s.height, s.width], self.final_trans.iter().map(|&t| (1.0 - t) as f32).collect())
    }

    /// Per-pixel compositing weights `αᵢTᵢ` (front to back) and the background weight.
    pub fn pixel_weights(&self, row: usize, col: usize) -> (Vec<f64>, f64) {
        let px = row * self.settings.width + col;
        let w = self.entries[self.offsets[px]..self.offsets[px + 1]].iter().map(|e| e.alpha * e.trans).collect();
        (w, self.final_trans[px])
    }
}

pub fn rasterize_forward(p: &SplatParams<'_>, pose: &CameraPose, settings: &RenderSettings) -> Result<RasterState> {
    settings.validate()?;
    p.check()?;
    let n = p.len();
    if n > 0 {
        let finite = p.positions.iter().chain(p.scales).chain(p.rotations).chain(p.colors).chain(p.opacities).all(|v| v.is_finite());
        if !finite {
            return Err(numeric_err!("rasterize: gaussian attributes contain NaN or infinity"));
        }
    }
    let (h, w) = (settings.height, settings.width);
    let projected: Vec<Option<Projected>> = (0..n).into_par_iter().map(|i| project_one(p, i, pose, settings)).collect();

    let mut order: Vec<usize> = (0..n).filter(|&i| projected[i].is_some()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (projected[a].as_ref().unwrap().depth, projected[b].as_ref().unwrap().depth);
        da.total_cmp(&db).then(a.cmp(&b))
    });
    let hot: Vec<Hot> = order
        .iter()
        .map(|&g| {
            let pr = projected[g].as_ref().unwrap();
            Hot {
                u: pr.u,
                v: pr.v,
                conic: pr.conic,
                opacity: p.opacities[g] as f64,
                color: [0, 1, 2].map(|k| p.colors[3 * g + k] as f64),
                gaussian: g as u32,
            }
        })
        .collect();

    // bin each Gaussian into the pixels of its bounding box, in depth order
    let bbox = |g: usize| -> Option<(usize, usize, usize, usize)> {
        let pr = projected[g].as_ref().unwrap();
        let x0 = (pr.u - pr.radius[0] - 0.5).ceil().max(0.0);
        let x1 = (pr.u + pr.radius[0] - 0.5).floor().min(w as f64 - 1.0);
        let y0 = (pr.v - pr.radius[1] - 0.5).ceil().max(0.0);
        let y1 = (pr.v + pr.radius[1] - 0.5).floor().min(h as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
    };
    let boxes: Vec<Option<(usize, usize, usize, usize)>> = order.iter().map(|&g| bbox(g)).collect();
    let mut bin_offsets = vec![0usize; h * w + 1];
    for &(x0, x1, y0, y1) in boxes.iter().flatten() {
        for y in y0..=y1 {
            for x in x0..=x1 {
                bin_offsets[y * w + x + 1] += 1;
            }
        }
    }
    for i in 0..h * w {
        bin_offsets[i + 1] += bin_offsets[i];
    }
    let mut bins = vec![0u32; bin_offsets[h * w]];
    let mut cursor = bin_offsets.clone();
    for (rank, b) in boxes.iter().enumerate() {
        if let Some((x0, x1, y0, y1)) = *b {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let px = y * w + x;
                    bins[cursor[px]] = rank as u32;
                    cursor[px] += 1;
                }
            }
        }
    }

    let rows: Vec<RowOut> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut out = RowOut::default();
            for x in 0..w {
                let px = y * w + x;
                let (sx, sy) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut trans = 1.0f64;
                let mut color = [0.0f64; 3];
                let mut count = 0;
                for &r in &bins[bin_offsets[px]..bin_offsets[px + 1]] {
                    let g = &hot[r as usize];
                    let (dx, dy) = (sx - g.u, sy - g.v);
                    let [a, b, c] = g.conic;
                    let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
                    if power > 0.0 {
                        continue;
                    }
                    let alpha = (g.opacity * power.exp()).min(ALPHA_MAX);
                    if alpha < settings.alpha_cutoff || alpha <= 0.0 {
                        continue;
                    }
                    for k in 0..3 {
                        color[k] += g.color[k] * alpha * trans;
                    }
                    out.entries.push(Entry { rank: r, alpha, trans });
                    count += 1;
                    trans *= 1.0 - alpha;
                    if trans < settings.min_transmittance {
                        break;
                    }
                }
                for k in 0..3 {
                    color[k] += settings.background[k] * trans;
                }
                out.counts.push(count);
                out.trans.push(trans);
                out.color.extend_from_slice(&color);
            }
            out
        })
        .collect();

    let mut offsets = Vec::with_capacity(h * w + 1);
    offsets.push(0);
    let mut entries = Vec::new();
    let mut final_trans = Vec::with_capacity(h * w);
    let mut image = Vec::with_capacity(h * w * 3);
    for row in rows {
        for c in row.counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        entries.extend(row.entries);
        final_trans.extend(row.trans);
        image.extend(row.color);
    }
    Ok(RasterState { settings: settings.clone(), pose: pose.clone(), projected, hot, offsets, entries, final_trans, image })
}

/// Per-pixel data of one projected Gaussian, stored in depth order.
#[derive(Clone, Copy, Debug)]
struct Hot {
    u: f64,
    v: f64,
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    gaussian: u32,
}

#[derive(Default)]
struct RowOut {
    entries: Vec<Entry>,
    counts: Vec<usize>,
    trans: Vec<f64>,
    color: Vec<f64>,
}

/// Gradients of the five attribute classes, laid out like [`SplatParams`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplatGrads {
    pub positions: Vec<f64>,
    pub scales: Vec<f64>,
    pub rotations: Vec<f64>,
    pub colors: Vec<f64>,
    pub opacities: Vec<f64>,
}

/// Backpropagates `d_image = ∂L/∂color` (`[H·W·3]`) to every attribute.
pub fn rasterize_backward(p: &SplatParams<'_>, state: &RasterState, d_image: &[f64]) -> SplatGrads {
    let n = p.len();
    let s = &state.settings;
    let (h, w) = (s.height, s.width);
    // screen-space gradients per depth rank: u, v, conic a, b, c
    let m = state.hot.len();
    let mut g2d = vec![[0.0f64; 5]; m];
    let mut d_color_r = vec![[0.0f64; 3]; m];
    let mut d_opacity_r = vec![0.0f64; m];

    for px in 0..h * w {
        let (y, x) = (px / w, px % w);
        let (sx, sy) = (x as f64 + 0.5, y as f64 + 0.5);
        let dc = &d_image[3 * px..3 * px + 3];
        if dc.iter().all(|&v| v == 0.0) {
            continue;
        }
        let tf = state.final_trans[px];
        let mut suffix = [0.0f64; 3];
        for k in 0..3 {
            suffix[k] = s.background[k] * tf;
        }
        for e in state.entries[state.offsets[px]..state.offsets[px + 1]].iter().rev() {
            let r = e.rank as usize;
            let g = &state.hot[r];
            let weight = e.alpha * e.trans;
            let mut d_alpha = 0.0;
            for k in 0..3 {
                d_color_r[r][k] += dc[k] * weight;
                d_alpha += dc[k] * (g.color[k] * e.trans - suffix[k] / (1.0 - e.alpha));
                suffix[k] += g.color[k] * weight;
            }
            let (dx, dy) = (sx - g.u, sy - g.v);
            let [a, b, c] = g.conic;
            let gauss = (-0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)).exp();
            if g.opacity * gauss > ALPHA_MAX {
                continue;
            }
            d_opacity_r[r] += d_alpha * gauss;
            // alpha = o·exp(−q/2)
            let d_q = d_alpha * (-0.5 * e.alpha);
            let acc = &mut g2d[r];
            acc[0] += d_q * -(2.0 * a * dx + 2.0 * b * dy);
            acc[1] += d_q * -(2.0 * b * dx + 2.0 * c * dy);
            acc[2] += d_q * dx * dx;
            acc[3] += d_q * 2.0 * dx * dy;
            acc[4] += d_q * dy * dy;
        }
    }
    let mut d_color = vec![0.0f64; 3 * n];
    let mut d_opacity = vec![0.0f64; n];
    let mut g2d_by_gaussian = vec![[0.0f64; 5]; n];
    for (r, g) in state.hot.iter().enumerate() {
        let gi = g.gaussian as usize;
        d_color[3 * gi..3 * gi + 3].copy_from_slice(&d_color_r[r]);
        d_opacity[gi] = d_opacity_r[r];
        g2d_by_gaussian[gi] = g2d[r];
    }
    let g2d = g2d_by_gaussian;

    let mut grads = SplatGrads {
        positions: vec![0.0; 3 * n],
        scales: vec![0.0; 3 * n],
        rotations: vec![0.0; 4 * n],
        colors: d_color,
        opacities: d_opacity,
    };
    let (fx, fy) = (state.pose.fx(), state.pose.fy());
    for (i, pr) in state.projected.iter().enumerate() {
        let Some(pr) = pr else { continue };
        let [du, dv, da, db, dcc] = g2d[i];
        if du == 0.0 && dv == 0.0 && da == 0.0 && db == 0.0 && dcc == 0.0 {
            continue;
        }
        // conic = cov⁻¹: ∂L/∂cov = −X·G·X with G the symmetric conic gradient
        let x = Matrix2::new(pr.conic[0], pr.conic[1], pr.conic[1], pr.conic[2]);
        let g_conic = Matrix2::new(da, 0.5 * db, 0.5 * db, dcc);
        let g_cov = -(x * g_conic * x);
        // cov = T·Σ·Tᵀ with T = J·W
        let t = pr.jw;
        let g_sigma = t.transpose() * g_cov * t;
        let g_t = 2.0 * g_cov * t * pr.sigma;
        let g_j = g_t * pr.world_to_cam.transpose();
        let (px, py, z) = (pr.pc.x, pr.pc.y, pr.pc.z);
        let mut g_pc = Vector3::zeros();
        g_pc.x += du * fx / z;
        g_pc.y += dv * fy / z;
        g_pc.z += -du * fx * px / (z * z) - dv * fy * py / (z * z);
        g_pc.z += g_j[(0, 0)] * (-fx / (z * z));
        g_pc.x += g_j[(0, 2)] * (-fx / (z * z));
        g_pc.z += g_j[(0, 2)] * (2.0 * fx * px / (z * z * z));
        g_pc.z += g_j[(1, 1)] * (-fy / (z * z));
        g_pc.y += g_j[(1, 2)] * (-fy / (z * z));
        g_pc.z += g_j[(1, 2)] * (2.0 * fy * py / (z * z * z));
        let g_mu = pr.world_to_cam.transpose() * g_pc;
        for k in 0..3 {
            grads.positions[3 * i + k] = g_mu[k];
        }
        // Σ = M·Mᵀ with M = R·diag(s)
        let g_m = 2.0 * g_sigma * pr.m;
        let mut g_r = Matrix3::zeros();
        for k in 0..3 {
            let mut acc = 0.0;
            for r in 0..3 {
                acc += g_m[(r, k)] * pr.rot[(r, k)];
                g_r[(r, k)] = g_m[(r, k)] * pr.scale[k];
            }
            grads.scales[3 * i + k] = acc;
        }
        let g_qhat = quat_matrix_vjp(pr.qhat, &g_r);
        let dot: f64 = (0..4).map(|k| g_qhat[k] * pr.qhat[k]).sum();
        for k in 0..4 {
            grads.rotations[4 * i + k] = (g_qhat[k] - dot * pr.qhat[k]) / pr.qnorm;
        }
    }
    grads
}

/// `∂L/∂q` for `R = quat_to_matrix(q)` given `∂L/∂R`.
fn quat_matrix_vjp(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = q;
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = Matrix3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = Matrix3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    [dw, dx, dy, dz].map(|d| d.component_mul(g).sum())
}

/// Renders a cloud without recording gradients.
pub fn rasterize(cloud: &GaussianCloud, pose: &CameraPose, settings: &RenderSettings) -> Result<RenderedImage> {
    let state = rasterize_forward(&SplatParams::of(cloud), pose, settings)?;
    Ok(RenderedImage { color: state.color_tensor(), alpha: state.alpha_tensor() })
}

/// Attribute handles for [`Tape::rasterize`]: positions `[N, 3]`, scales
/// `[N, 3]`, quaternions `[N, 4]`, colors `[N, 3]`, opacities `[N]`.
#[derive(Clone, Copy, Debug)]
pub struct SplatVars {
    pub positions: Var,
    pub scales: Var,
    pub rotations: Var,
    pub colors: Var,
    pub opacities: Var,
}

impl Tape {
    /// Differentiable render; returns the `[H, W, 3]` color node and the
    /// (non-differentiable) accumulated alpha.
    pub fn rasterize(&mut self, vars: SplatVars, pose: &CameraPose, settings: &RenderSettings) -> Result<(Var, Tensor)> {
        let ins = [vars.positions, vars.scales, vars.rotations, vars.colors, vars.opacities];
        let state = {
            let p = SplatParams {
                positions: self.value(ins[0]).data(),
                scales: self.value(ins[1]).data(),
                rotations: self.value(ins[2]).data(),
                colors: self.value(ins[3]).data(),
                opacities: self.value(ins[4]).data(),
            };
            rasterize_forward(&p, pose, settings)?
        };
        let color = state.color_tensor();
        let alpha = state.alpha_tensor();
        let out = self.push(color, &ins, move |ctx| {
            let p = SplatParams {
                positions: ctx.inputs[0].data(),
                scales: ctx.inputs[1].data(),
                rotations: ctx.inputs[2].data(),
                colors: ctx.inputs[3].data(),
                opacities: ctx.inputs[4].data(),
            };
            let d: Vec<f64> = ctx.grad.iter().map(|&v| v as f64).collect();
            let g = rasterize_backward(&p, &state, &d);
            let cast = |v: Vec<f64>| Some(v.into_iter().map(|x| x as f32).collect());
            vec![cast(g.positions), cast(g.scales), cast(g.rotations), cast(g.colors), cast(g.opacities)]
        });
        Ok((out, alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{intrinsics, random_rotation};
    use crate::gsplat::gradient_check_render;
    use crate::numerics::Rng;
    use nalgebra::UnitQuaternion;

    fn camera(size: usize) -> CameraPose {
        let f = size as f64;
        CameraPose::identity(intrinsics(f, f, f / 2.0, f / 2.0))
    }

    pub(crate) fn random_cloud(rng: &mut Rng, n: usize) -> GaussianCloud {
        let mut c = GaussianCloud::default();
        for _ in 0..n {
            let q = UnitQuaternion::from_matrix(&random_rotation(rng));
            c.push(
                [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2.0, 4.0)],
                [rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)],
                [q.w as f32, q.i as f32, q.j as f32, q.k as f32],
                [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)],
                rng.uniform(0.3, 0.9),
            );
        }
        c
    }

    #[test]
    fn empty_cloud_shows_background() {
        let mut s = RenderSettings::new(4, 5);
        s.background = [0.2, 0.4, 0.6];
        let img = rasterize(&GaussianCloud::default(), &camera(4), &s).unwrap();
        for px in img.color.data().chunks(3) {
            assert_eq!(px, &[0.2, 0.4, 0.6]);
        }
        assert!(img.alpha.data().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn single_gaussian_peaks_at_its_pixel() {
        let mut c = GaussianCloud::default();
        // pixel (5, 9) has its center at (5.5, 9.5) in image coordinates
        let pose = camera(16);
        let z = 3.0;
        c.push([((5.5 - 8.0) / 16.0 * z) as f32, ((9.5 - 8.0) / 16.0 * z) as f32, z as f32], [0.1; 3], [1.0, 0.0, 0.0, 0.0], [1.0; 3], 1.0);
        let img = rasterize(&c, &pose, &RenderSettings::new(16, 16)).unwrap();
        let lum: Vec<f32> = img.color.data().chunks(3).map(|p| p[0]).collect();
        let arg = lum.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!((arg % 16, arg / 16), (5, 9));
    }

    #[test]
    fn opaque_front_gaussian_hides_the_back() {
        let mut c = GaussianCloud::default();
        c.push([0.0, 0.0, 2.0], [0.5; 3], [1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0);
        c.push([0.0, 0.0, 3.0], [0.5; 3], [1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0);
        let pose = CameraPose::identity(intrinsics(8.0, 8.0, 4.5, 4.5));
        let state = rasterize_forward(&SplatParams::of(&c), &pose, &RenderSettings::new(8, 8)).unwrap();
        let (w, _) = state.pixel_weights(4, 4);
        assert!((w[0] - ALPHA_MAX).abs() < 1e-6);
        if w.len() > 1 {
            assert!(w[1] < 1e-3);
        }
    }

    #[test]
    fn weights_form_an_affine_combination() {
        let mut rng = Rng::seed(11);
        let c = random_cloud(&mut rng, 12);
        let mut s = RenderSettings::new(16, 16);
        s.min_transmittance = 0.0;
        let state = rasterize_forward(&SplatParams::of(&c), &camera(16), &s).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let (w, bg) = state.pixel_weights(y, x);
                let sum: f64 = w.iter().sum();
                assert!(sum <= 1.0 + 1e-12);
                assert!((sum + bg - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn permutation_does_not_change_the_render() {
        let mut rng = Rng::seed(12);
        let c = random_cloud(&mut rng, 10);
        let mut perm: Vec<usize> = (0..10).collect();
        rng.shuffle(&mut perm);
        let mut p = GaussianCloud::default();
        for &i in &perm {
            p.push(c.positions[i], c.scales[i], c.rotations[i], c.colors[i], c.opacities[i]);
        }
        let s = RenderSettings::new(16, 16);
        let a = rasterize(&c, &camera(16), &s).unwrap();
        let b = rasterize(&p, &camera(16), &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rigid_motion_of_scene_and_camera_is_invisible() {
        for seed in 0..3 {
            let mut rng = Rng::seed(100 + seed);
            let c = random_cloud(&mut rng, 8);
            let q = random_rotation(&mut rng);
            let shift = Vector3::new(rng.uniform_f64(-3.0, 3.0), rng.uniform_f64(-3.0, 3.0), rng.uniform_f64(-3.0, 3.0));
            let s = RenderSettings::new(16, 16);
            let a = rasterize(&c, &camera(16), &s).unwrap();
            let b = rasterize(&c.transformed(&q, &shift), &camera(16).transformed(&q, &shift), &s).unwrap();
            assert!(a.color.max_abs_diff(&b.color).unwrap() < 1e-4);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::seed(seed);
            let c = random_cloud(&mut rng, 5);
            let mut s = RenderSettings::new(16, 16);
            s.background = [0.1, 0.2, 0.3];
            let report = gradient_check_render(&c, &camera(16), &s, 1e-3).unwrap();
            assert!(report.max() < 1e-2, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn zero_opacity_has_zero_gradients() {
        let mut rng = Rng::seed(4);
        let mut c = random_cloud(&mut rng, 5);
        c.opacities.iter_mut().for_each(|o| *o = 0.0);
        let s = RenderSettings::new(16, 16);
        let state = rasterize_forward(&SplatParams::of(&c), &camera(16), &s).unwrap();
        let g = rasterize_backward(&SplatParams::of(&c), &state, &vec![1.0; 16 * 16 * 3]);
        assert!(g.positions.iter().chain(&g.scales).chain(&g.rotations).chain(&g.colors).all(|&v| v == 0.0));
    }

    #[test]
    fn projection_geometry() {
        let mut c = GaussianCloud::default();
        c.push([0.0, 0.0, 1.0], [0.1; 3], [1.0, 0.0, 0.0, 0.0], [1.0; 3], 1.0);
        c.push([0.2, 0.1, 1.0], [0.1; 3], [1.0, 0.0, 0.0, 0.0], [1.0; 3], 1.0);
        c.push([0.4, 0.2, 2.0], [0.1; 3], [1.0, 0.0, 0.0, 0.0], [1.0; 3], 1.0);
        c.push([0.0, 0.0, -1.0], [0.1; 3], [1.0, 0.0, 0.0, 0.0], [1.0; 3], 1.0);
        let pose = CameraPose::identity(intrinsics(1.0, 1.0, 3.0, 2.0));
        let s = RenderSettings::new(4, 6);
        assert_eq!(project(&c, 0, &pose, &s).unwrap().mean2d, [3.0, 2.0]);
        let near = project(&c, 1, &pose, &s).unwrap().mean2d;
        let far = project(&c, 2, &pose, &s).unwrap().mean2d;
        assert!((near[0] - 3.0 - (far[0] - 3.0)).abs() < 1e-7 && (near[1] - far[1]).abs() < 1e-7);
        assert!(project(&c, 3, &pose, &s).is_none());
    }
}
