//! Strided 3D convolution and transposed convolution on channels-last
//! volumes (`[D, H, W, C]`), with 2D wrappers (`[H, W, C]`).
//!
//! Both are lowered to im2col / col2im plus a single matrix product.

use super::linalg::gemm;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

/// Kernel size, stride, and symmetric zero padding per spatial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    /// Non-overlapping patchification: kernel equals stride, no padding.
    pub fn patch(size: [usize; 3]) -> Self {
        Self::new(size, size, [0; 3])
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Output grid of a forward convolution over an input grid.
    pub fn conv_out(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for i in 0..3 {
            let padded = input[i] + 2 * self.padding[i];
            if self.stride[i] == 0 || padded < self.kernel[i] {
                return Err(shape_err!(
                    "conv: axis {i} of size {} (padding {}) is smaller than kernel {}",
                    input[i],
                    self.padding[i],
                    self.kernel[i]
                ));
            }
            out[i] = (padded - self.kernel[i]) / self.stride[i] + 1;
        }
        Ok(out)
    }

    /// Output grid of a transposed convolution over an input grid.
    pub fn transpose_out(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for i in 0..3 {
            let full = (input[i] - 1) * self.stride[i] + self.kernel[i];
            if full <= 2 * self.padding[i] {
                return Err(shape_err!("conv_transpose: padding consumes axis {i}"));
            }
            out[i] = full - 2 * self.padding[i];
        }
        Ok(out)
    }
}

/// Gathers `cols[P_small, K·ch]` from a big grid, where small position `o` and
/// kernel offset `k` read big position `o·stride − padding + k`.
fn im2col(big: &[f32], big_dims: [usize; 3], ch: usize, small_dims: [usize; 3], g: &ConvGeometry) -> Vec<f32> {
    let kv = g.kernel_volume();
    let p = small_dims.iter().product::<usize>();
    let mut cols = vec![0.0f32; p * kv * ch];
    for_each_pair(big_dims, small_dims, g, |o, k, b| {
        let dst = (o * kv + k) * ch;
        cols[dst..dst + ch].copy_from_slice(&big[b * ch..(b + 1) * ch]);
    });
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back into the big grid.
fn col2im(cols: &[f32], big_dims: [usize; 3], ch: usize, small_dims: [usize; 3], g: &ConvGeometry) -> Vec<f32> {
    let kv = g.kernel_volume();
    let mut big = vec![0.0f32; big_dims.iter().product::<usize>() * ch];
    for_each_pair(big_dims, small_dims, g, |o, k, b| {
        let src = (o * kv + k) * ch;
        for c in 0..ch {
            big[b * ch + c] += cols[src + c];
        }
    });
    big
}

/// Visits every in-bounds (small position, kernel offset, big position) triple.
fn for_each_pair(
    big: [usize; 3],
    small: [usize; 3],
    g: &ConvGeometry,
    mut f: impl FnMut(usize, usize, usize),
) {
    let [kd, kh, kw] = g.kernel;
    for od in 0..small[0] {
        for oh in 0..small[1] {
            for ow in 0..small[2] {
                let o = (od * small[1] + oh) * small[2] + ow;
                for a in 0..kd {
                    let Some(bd) = offset(od, a, g.stride[0], g.padding[0], big[0]) else { continue };
                    for b in 0..kh {
                        let Some(bh) = offset(oh, b, g.stride[1], g.padding[1], big[1]) else { continue };
                        for c in 0..kw {
                            let Some(bw) = offset(ow, c, g.stride[2], g.padding[2], big[2]) else { continue };
                            let k = (a * kh + b) * kw + c;
                            f(o, k, (bd * big[1] + bh) * big[2] + bw);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn offset(o: usize, k: usize, stride: usize, pad: usize, size: usize) -> Option<usize> {
    let pos = (o * stride + k).checked_sub(pad)?;
    (pos < size).then_some(pos)
}

fn grid(shape: &[usize], what: &str) -> Result<([usize; 3], usize)> {
    if shape.len() != 4 {
        return Err(shape_err!("{what}: expected [D, H, W, C], got {shape:?}"));
    }
    Ok(([shape[0], shape[1], shape[2]], shape[3]))
}

fn col_sums(g: &[f32], cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; cols];
    for row in g.chunks(cols) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
    out
}

impl Tape {
    /// 3D convolution: `x [D, H, W, C]`, `w [kd, kh, kw, C, O]`, `b [O]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let (in_dims, c) = grid(self.shape(x), "conv3d input")?;
        let ws = self.shape(w).to_vec();
        if ws.len() != 5 || ws[..3] != geom.kernel || ws[3] != c {
            return Err(shape_err!(
                "conv3d weight {ws:?} incompatible with kernel {:?} and {c} input channels",
                geom.kernel
            ));
        }
        let o = ws[4];
        let out_dims = geom.conv_out(in_dims)?;
        let p: usize = out_dims.iter().product();
        let kc = geom.kernel_volume() * c;
        let cols = im2col(self.value(x).data(), in_dims, c, out_dims, &geom);
        let mut out = vec![0.0f32; p * o];
        gemm(p, kc, o, &cols, false, self.value(w).data(), false, &mut out, false);
        let y = self.push(
            Tensor::raw(vec![out_dims[0], out_dims[1], out_dims[2], o], out),
            &[x, w],
            move |ctx| {
                let g = ctx.grad;
                let gx = ctx.needs[0].then(|| {
                    let mut gcols = vec![0.0f32; p * kc];
                    gemm(p, o, kc, g, false, ctx.inputs[1].data(), true, &mut gcols, false);
                    col2im(&gcols, in_dims, c, out_dims, &geom)
                });
                let gw = ctx.needs[1].then(|| {
                    let cols = im2col(ctx.inputs[0].data(), in_dims, c, out_dims, &geom);
                    let mut gw = vec![0.0f32; kc * o];
                    gemm(kc, p, o, &cols, true, g, false, &mut gw, false);
                    gw
                });
                vec![gx, gw]
            },
        );
        self.add_channel_bias(y, b, o)
    }

    /// Transposed 3D convolution: `x [D, H, W, C]`, `w [C, kd, kh, kw, O]`,
    /// `b [O]`; output extent is `(in − 1)·stride + kernel − 2·padding`.
    pub fn conv_transpose3d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let (in_dims, c) = grid(self.shape(x), "conv_transpose3d input")?;
        let ws = self.shape(w).to_vec();
        if ws.len() != 5 || ws[0] != c || ws[1..4] != geom.kernel {
            return Err(shape_err!(
                "conv_transpose3d weight {ws:?} incompatible with kernel {:?} and {c} input channels",
                geom.kernel
            ));
        }
        let o = ws[4];
        let out_dims = geom.transpose_out(in_dims)?;
        let p: usize = in_dims.iter().product();
        let ko = geom.kernel_volume() * o;
        let mut cols = vec![0.0f32; p * ko];
        gemm(p, c, ko, self.value(x).data(), false, self.value(w).data(), false, &mut cols, false);
        let out = col2im(&cols, out_dims, o, in_dims, &geom);
        let y = self.push(
            Tensor::raw(vec![out_dims[0], out_dims[1], out_dims[2], o], out),
            &[x, w],
            move |ctx| {
                let gcols = im2col(ctx.grad, out_dims, o, in_dims, &geom);
                let gx = ctx.needs[0].then(|| {
                    let mut gx = vec![0.0f32; p * c];
                    gemm(p, ko, c, &gcols, false, ctx.inputs[1].data(), true, &mut gx, false);
                    gx
                });
                let gw = ctx.needs[1].then(|| {
                    let mut gw = vec![0.0f32; c * ko];
                    gemm(c, p, ko, ctx.inputs[0].data(), true, &gcols, false, &mut gw, false);
                    gw
                });
                vec![gx, gw]
            },
        );
        self.add_channel_bias(y, b, o)
    }

    /// 2D convolution: `x [H, W, C]`, `w [kh, kw, C, O]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 {
            return Err(shape_err!("conv2d: input {xs:?}, weight {ws:?}"));
        }
        let x3 = self.reshape(x, &[1, xs[0], xs[1], xs[2]])?;
        let w3 = self.reshape(w, &[1, ws[0], ws[1], ws[2], ws[3]])?;
        let geom = ConvGeometry::new(
            [1, kernel[0], kernel[1]],
            [1, stride[0], stride[1]],
            [0, padding[0], padding[1]],
        );
        let y = self.conv3d(x3, w3, b, geom)?;
        let ys = self.shape(y).to_vec();
        self.reshape(y, &ys[1..])
    }

    fn add_channel_bias(&mut self, y: Var, b: Option<Var>, o: usize) -> Result<Var> {
        let Some(b) = b else { return Ok(y) };
        if self.shape(b) != [o] {
            return Err(shape_err!("bias {:?} does not match {o} output channels", self.shape(b)));
        }
        let mut out = self.value(y).clone();
        let bs = self.value(b).data().to_vec();
        for row in out.data_mut().chunks_mut(o) {
            row.iter_mut().zip(&bs).for_each(|(v, bb)| *v += bb);
        }
        Ok(self.push(out, &[y, b], move |ctx| {
            vec![
                ctx.needs[0].then(|| ctx.grad.to_vec()),
                ctx.needs[1].then(|| col_sums(ctx.grad, o)),
            ]
        }))
    }
}
