//! Normalization, softmax, and attention primitives over the last axis.

use super::linalg::gemm;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

fn last_dim(shape: &[usize]) -> Result<(usize, usize)> {
    let d = *shape.last().ok_or_else(|| shape_err!("expected rank ≥ 1"))?;
    Ok((shape.iter().product::<usize>() / d, d))
}

impl Tape {
    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (rows, d) = last_dim(&shape)?;
        let xs = self.value(x).data();
        let mut out = vec![0.0f32; xs.len()];
        for r in 0..rows {
            softmax_row(&xs[r * d..(r + 1) * d], &mut out[r * d..(r + 1) * d]);
        }
        Ok(self.push(Tensor::raw(shape, out), &[x], move |ctx| {
            let y = ctx.output.data();
            let g = ctx.grad;
            let mut gx = vec![0.0; g.len()];
            for r in 0..rows {
                let (ys, gs) = (&y[r * d..(r + 1) * d], &g[r * d..(r + 1) * d]);
                let dot: f32 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                for i in 0..d {
                    gx[r * d + i] = ys[i] * (gs[i] - dot);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Normalizes each row of the last axis to zero mean and unit variance
    /// (biased variance, no affine parameters).
    pub fn layer_norm(&mut self, x: Var, eps: f32) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (rows, d) = last_dim(&shape)?;
        let xs = self.value(x).data();
        let mut out = vec![0.0f32; xs.len()];
        let mut inv_std = vec![0.0f32; rows];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f32>() / d as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for i in 0..d {
                out[r * d + i] = (row[i] - mean) * is;
            }
        }
        Ok(self.push(Tensor::raw(shape, out), &[x], move |ctx| {
            let y = ctx.output.data();
            let g = ctx.grad;
            let mut gx = vec![0.0; g.len()];
            for r in 0..rows {
                let (ys, gs) = (&y[r * d..(r + 1) * d], &g[r * d..(r + 1) * d]);
                let mg = gs.iter().sum::<f32>() / d as f32;
                let mgy = gs.iter().zip(ys).map(|(a, b)| a * b).sum::<f32>() / d as f32;
                for i in 0..d {
                    gx[r * d + i] = inv_std[r] * (gs[i] - mg - ys[i] * mgy);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Scales each row of the last axis to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var, eps: f32) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (rows, d) = last_dim(&shape)?;
        let xs = self.value(x).data();
        let mut out = vec![0.0f32; xs.len()];
        let mut norms = vec![0.0f32; rows];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let n = row.iter().map(|v| v * v).sum::<f32>().sqrt().max(eps);
            norms[r] = n;
            for i in 0..d {
                out[r * d + i] = row[i] / n;
            }
        }
        Ok(self.push(Tensor::raw(shape, out), &[x], move |ctx| {
            let y = ctx.output.data();
            let g = ctx.grad;
            let mut gx = vec![0.0; g.len()];
            for r in 0..rows {
                let (ys, gs) = (&y[r * d..(r + 1) * d], &g[r * d..(r + 1) * d]);
                let dot: f32 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                for i in 0..d {
                    gx[r * d + i] = (gs[i] - ys[i] * dot) / norms[r];
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Exact multi-head scaled dot-product attention.
    ///
    /// `q`, `k`, `v` are `[N, d]` token matrices; head `h` uses columns
    /// `h·d/heads .. (h+1)·d/heads`. Output is `[N, d]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let sq = self.shape(q).to_vec();
        if sq.len() != 2 || self.shape(k) != sq.as_slice() || self.shape(v) != sq.as_slice() {
            return Err(shape_err!(
                "attention needs equal [N, d] inputs, got {:?} {:?} {:?}",
                sq,
                self.shape(k),
                self.shape(v)
            ));
        }
        let (n, d) = (sq[0], sq[1]);
        if heads == 0 || d % heads != 0 {
            return Err(shape_err!("attention: width {d} not divisible by {heads} heads"));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let (qs, ks, vs) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut out = vec![0.0f32; n * d];
        let mut probs = vec![0.0f32; heads * n * n];
        for h in 0..heads {
            let qh = head_cols(qs, n, d, h, dh);
            let kh = head_cols(ks, n, d, h, dh);
            let vh = head_cols(vs, n, d, h, dh);
            let p = &mut probs[h * n * n..(h + 1) * n * n];
            gemm(n, dh, n, &qh, false, &kh, true, p, false);
            for r in 0..n {
                let row = &mut p[r * n..(r + 1) * n];
                row.iter_mut().for_each(|x| *x *= scale);
                let tmp = row.to_vec();
                softmax_row(&tmp, row);
            }
            let mut oh = vec![0.0f32; n * dh];
            gemm(n, n, dh, p, false, &vh, false, &mut oh, false);
            scatter_cols(&oh, &mut out, n, d, h, dh);
        }
        Ok(self.push(Tensor::raw(vec![n, d], out), &[q, k, v], move |ctx| {
            let (qs, ks, vs) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.inputs[2].data());
            let mut gq = vec![0.0f32; n * d];
            let mut gk = vec![0.0f32; n * d];
            let mut gv = vec![0.0f32; n * d];
            for h in 0..heads {
                let qh = head_cols(qs, n, d, h, dh);
                let kh = head_cols(ks, n, d, h, dh);
                let vh = head_cols(vs, n, d, h, dh);
                let go = head_cols(ctx.grad, n, d, h, dh);
                let p = &probs[h * n * n..(h + 1) * n * n];
                let mut gvh = vec![0.0f32; n * dh];
                gemm(n, n, dh, p, true, &go, false, &mut gvh, false);
                let mut gp = vec![0.0f32; n * n];
                gemm(n, dh, n, &go, false, &vh, true, &mut gp, false);
                // softmax backward, then fold in the 1/sqrt(dh) scale
                for r in 0..n {
                    let (pr, gr) = (&p[r * n..(r + 1) * n], &mut gp[r * n..(r + 1) * n]);
                    let dot: f32 = pr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                    for i in 0..n {
                        gr[i] = pr[i] * (gr[i] - dot) * scale;
                    }
                }
                let mut gqh = vec![0.0f32; n * dh];
                gemm(n, n, dh, &gp, false, &kh, false, &mut gqh, false);
                let mut gkh = vec![0.0f32; n * dh];
                gemm(n, n, dh, &gp, true, &qh, false, &mut gkh, false);
                scatter_cols(&gqh, &mut gq, n, d, h, dh);
                scatter_cols(&gkh, &mut gk, n, d, h, dh);
                scatter_cols(&gvh, &mut gv, n, d, h, dh);
            }
            vec![
                ctx.needs[0].then_some(gq),
                ctx.needs[1].then_some(gk),
                ctx.needs[2].then_some(gv),
            ]
        }))
    }
}

fn softmax_row(x: &[f32], out: &mut [f32]) {
    let m = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut s = 0.0f32;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        s += *o;
    }
    let inv = 1.0 / s;
    out.iter_mut().for_each(|o| *o *= inv);
}

fn head_cols(x: &[f32], n: usize, d: usize, h: usize, dh: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(n * dh);
    for r in 0..n {
        out.extend_from_slice(&x[r * d + h * dh..r * d + (h + 1) * dh]);
    }
    out
}

fn scatter_cols(src: &[f32], dst: &mut [f32], n: usize, d: usize, h: usize, dh: usize) {
    for r in 0..n {
        dst[r * d + h * dh..r * d + (h + 1) * dh].copy_from_slice(&src[r * dh..(r + 1) * dh]);
    }
}
