//! Elementwise, reduction, shape, and matrix-product ops.
//!
//! Broadcasting follows the trailing-dimension rule: shapes are aligned on
//! their last axis and each aligned pair must be equal or contain a 1. A
//! missing leading axis behaves like a 1. Nothing else is broadcast.

use super::linalg::gemm;
use super::tape::{Tape, Var};
use super::tensor::{strides_of, Tensor};
use crate::error::{shape_err, Result};

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let db = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(shape_err!("cannot broadcast {a:?} with {b:?}")),
        };
    }
    Ok(out)
}

/// For every flat output index, the flat index into an input of shape
/// `input` broadcast to `out`. `None` when the shapes are identical.
pub(crate) fn broadcast_index(input: &[usize], out: &[usize]) -> Option<Vec<usize>> {
    if input == out {
        return None;
    }
    let n: usize = out.iter().product();
    let n_in: usize = input.iter().product();
    let r = out.len();
    // Fast path: input is a trailing suffix of the output shape.
    if input.len() <= r && input == &out[r - input.len()..] {
        return Some((0..n).map(|i| i % n_in).collect());
    }
    let in_strides = strides_of(input);
    let mut strides = vec![0usize; r];
    for i in 0..input.len() {
        let oi = r - input.len() + i;
        if input[i] != 1 {
            strides[oi] = in_strides[i];
        }
    }
    let mut idx = Vec::with_capacity(n);
    let mut counter = vec![0usize; r];
    let mut flat = 0usize;
    for _ in 0..n {
        idx.push(flat);
        for ax in (0..r).rev() {
            counter[ax] += 1;
            flat += strides[ax];
            if counter[ax] < out[ax] {
                break;
            }
            flat -= strides[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    Some(idx)
}

fn reduce_to(grad: &[f32], map: &Option<Vec<usize>>, n_in: usize) -> Vec<f32> {
    match map {
        None => grad.to_vec(),
        Some(idx) => {
            let mut g = vec![0.0; n_in];
            for (o, &i) in idx.iter().enumerate() {
                g[i] += grad[o];
            }
            g
        }
    }
}

#[inline]
fn at(data: &[f32], map: &Option<Vec<usize>>, o: usize) -> f32 {
    match map {
        None => data[o],
        Some(idx) => data[idx[o]],
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Tape {
    fn binary(&mut self, a: Var, b: Var, op: Binary) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(&sa, &sb)?;
        let ma = broadcast_index(&sa, &out_shape);
        let mb = broadcast_index(&sb, &out_shape);
        let n: usize = out_shape.iter().product();
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f32> = (0..n)
            .map(|o| {
                let (x, y) = (at(da, &ma, o), at(db, &mb, o));
                match op {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                }
            })
            .collect();
        let (na, nb) = (da.len(), db.len());
        Ok(self.push(Tensor::raw(out_shape, data), &[a, b], move |ctx| {
            let g = ctx.grad;
            let (xa, xb) = (ctx.inputs[0].data(), ctx.inputs[1].data());
            let ga = ctx.needs[0].then(|| match op {
                Binary::Add | Binary::Sub => reduce_to(g, &ma, na),
                Binary::Mul => {
                    let t: Vec<f32> = (0..g.len()).map(|o| g[o] * at(xb, &mb, o)).collect();
                    reduce_to(&t, &ma, na)
                }
                Binary::Div => {
                    let t: Vec<f32> = (0..g.len()).map(|o| g[o] / at(xb, &mb, o)).collect();
                    reduce_to(&t, &ma, na)
                }
            });
            let gb = ctx.needs[1].then(|| match op {
                Binary::Add => reduce_to(g, &mb, nb),
                Binary::Sub => {
                    let t: Vec<f32> = g.iter().map(|x| -x).collect();
                    reduce_to(&t, &mb, nb)
                }
                Binary::Mul => {
                    let t: Vec<f32> = (0..g.len()).map(|o| g[o] * at(xa, &ma, o)).collect();
                    reduce_to(&t, &mb, nb)
                }
                Binary::Div => {
                    let t: Vec<f32> = (0..g.len())
                        .map(|o| {
                            let y = at(xb, &mb, o);
                            -g[o] * at(xa, &ma, o) / (y * y)
                        })
                        .collect();
                    reduce_to(&t, &mb, nb)
                }
            });
            vec![ga, gb]
        }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Div)
    }

    /// Applies `f` elementwise; `df(x, y)` returns the derivative at input `x`
    /// with output `y = f(x)`.
    pub fn unary(&mut self, x: Var, f: impl Fn(f32) -> f32, df: impl Fn(f32, f32) -> f32 + 'static) -> Var {
        let out = self.value(x).map(f);
        self.push(out, &[x], move |ctx| {
            let xs = ctx.inputs[0].data();
            let ys = ctx.output.data();
            let g = (0..ctx.grad.len())
                .map(|i| ctx.grad[i] * df(xs[i], ys[i]))
                .collect();
            vec![Some(g)]
        })
    }

    pub fn scale(&mut self, x: Var, c: f32) -> Var {
        self.unary(x, move |v| v * c, move |_, _| c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f32) -> Var {
        self.unary(x, move |v| v + c, |_, _| 1.0)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f32::exp, |_, y| y)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f32::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f32::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, |x, _| 2.0 * x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f32::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (1.0 - y))
    }

    /// `x · sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v * sigmoid(v),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        const C: f32 = 0.797_884_6; // sqrt(2/pi)
        self.unary(
            x,
            |v| 0.5 * v * (1.0 + (C * (v + 0.044715 * v * v * v)).tanh()),
            |x, _| {
                let u = C * (x + 0.044715 * x * x * x);
                let t = u.tanh();
                let du = C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            },
        )
    }

    /// Clamps to `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f32, hi: f32) -> Var {
        self.unary(
            x,
            move |v| v.clamp(lo, hi),
            move |x, _| if x < lo || x > hi { 0.0 } else { 1.0 },
        )
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        self.push(Tensor::scalar(s as f32), &[x], |ctx| {
            vec![Some(vec![ctx.grad[0]; ctx.inputs[0].len()])]
        })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f32;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Sums over one axis, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(shape_err!("sum_axis: axis {axis} out of range for {shape:?}"));
        }
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xs = self.value(x).data();
        let mut out = vec![0.0f32; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += xs[base + i];
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        Ok(self.push(Tensor::raw(out_shape, out), &[x], move |ctx| {
            let mut g = vec![0.0; outer * n * inner];
            for o in 0..outer {
                for k in 0..n {
                    let base = (o * n + k) * inner;
                    g[base..base + inner].copy_from_slice(&ctx.grad[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(g)]
        }))
    }

    /// Mean squared difference as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        Ok(self.mean(sq))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, &[x], |ctx| vec![Some(ctx.grad.to_vec())]))
    }

    /// Repeats along broadcast axes (trailing rule) to an explicit shape.
    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if broadcast_shape(&sx, shape)? != shape {
            return Err(shape_err!("cannot broadcast {sx:?} to {shape:?}"));
        }
        let map = broadcast_index(&sx, shape);
        let xs = self.value(x).data();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|o| at(xs, &map, o)).collect();
        let n_in = xs.len();
        Ok(self.push(Tensor::raw(shape.to_vec(), data), &[x], move |ctx| {
            vec![Some(reduce_to(ctx.grad, &map, n_in))]
        }))
    }

    /// General axis permutation: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let r = shape.len();
        let mut seen = vec![false; r];
        if axes.len() != r || axes.iter().any(|&a| a >= r || std::mem::replace(&mut seen[a], true)) {
            return Err(shape_err!("permute: {axes:?} is not a permutation of rank {r}"));
        }
        let (out, src) = permute_data(self.value(x), axes);
        Ok(self.push(out, &[x], move |ctx| {
            let mut g = vec![0.0; ctx.grad.len()];
            for (o, &s) in src.iter().enumerate() {
                g[s] = ctx.grad[o];
            }
            vec![Some(g)]
        }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 2 {
            return Err(shape_err!("transpose expects rank 2, got {:?}", self.shape(x)));
        }
        self.permute(x, &[1, 0])
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*xs.first().ok_or_else(|| shape_err!("concat of nothing"))?)
            .to_vec();
        if axis >= first.len() {
            return Err(shape_err!("concat: axis {axis} out of range for {first:?}"));
        }
        let mut sizes = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.shape(v);
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(shape_err!("concat along {axis}: {first:?} vs {s:?}"));
            }
            sizes.push(s[axis]);
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = sizes.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, &sz) in xs.iter().zip(&sizes) {
                let d = self.value(v).data();
                data.extend_from_slice(&d[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        Ok(self.push(Tensor::raw(shape, data), xs, move |ctx| {
            let mut grads: Vec<Vec<f32>> = sizes.iter().map(|&s| Vec::with_capacity(outer * s * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (g, &sz) in grads.iter_mut().zip(&sizes) {
                    g.extend_from_slice(&ctx.grad[off..off + sz * inner]);
                    off += sz * inner;
                }
            }
            grads
                .into_iter()
                .zip(&ctx.needs)
                .map(|(g, &need)| need.then_some(g))
                .collect()
        }))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(shape_err!(
                "narrow({axis}, {start}, {len}) out of range for {shape:?}"
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xs = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&xs[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        Ok(self.push(Tensor::raw(out_shape, data), &[x], move |ctx| {
            let mut g = vec![0.0; outer * n * inner];
            for o in 0..outer {
                let base = (o * n + start) * inner;
                g[base..base + len * inner]
                    .copy_from_slice(&ctx.grad[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(g)]
        }))
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err!(
                "matmul dimension mismatch: {sa:?} · {sb:?}"
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut c, false);
        Ok(self.push(Tensor::raw(vec![m, n], c), &[a, b], move |ctx| {
            let ga = ctx.needs[0].then(|| {
                let mut g = vec![0.0; m * k];
                gemm(m, n, k, ctx.grad, false, ctx.inputs[1].data(), true, &mut g, false);
                g
            });
            let gb = ctx.needs[1].then(|| {
                let mut g = vec![0.0; k * n];
                gemm(k, m, n, ctx.inputs[0].data(), true, ctx.grad, false, &mut g, false);
                g
            });
            vec![ga, gb]
        }))
    }

    /// `x[.., k] · w[k×n] (+ b[n])`, flattening the leading axes of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let k = *sx.last().ok_or_else(|| shape_err!("linear on a scalar"))?;
        if sw.len() != 2 || sw[0] != k {
            return Err(shape_err!("linear: input {sx:?} vs weight {sw:?}"));
        }
        let rows = sx.iter().product::<usize>() / k;
        let x2 = if sx.len() == 2 { x } else { self.reshape(x, &[rows, k])? };
        let mut y = self.matmul(x2, w)?;
        if let Some(b) = b {
            y = self.add(y, b)?;
        }
        if sx.len() != 2 {
            let mut out_shape = sx;
            *out_shape.last_mut().unwrap() = sw[1];
            y = self.reshape(y, &out_shape)?;
        }
        Ok(y)
    }
}

/// Permutes tensor data; also returns, per output element, its source index.
pub(crate) fn permute_data(t: &Tensor, axes: &[usize]) -> (Tensor, Vec<usize>) {
    let shape = t.shape();
    let in_strides = strides_of(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = t.len();
    let r = out_shape.len();
    let mut src = Vec::with_capacity(n);
    let mut counter = vec![0usize; r];
    let mut flat = 0usize;
    for _ in 0..n {
        src.push(flat);
        for ax in (0..r).rev() {
            counter[ax] += 1;
            flat += strides[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            flat -= strides[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    let xs = t.data();
    let data = src.iter().map(|&s| xs[s]).collect();
    (Tensor::raw(out_shape, data), src)
}

#[inline]
pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::eye(2));
        let ii = tape.matmul(i, i).unwrap();
        assert_eq!(tape.value(ii), &Tensor::eye(2));

        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.constant(t(&[2, 1], &[1., 1.]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[3., 7.]);

        let x = tape.constant(Tensor::zeros(&[2, 3]));
        let y = tape.constant(Tensor::zeros(&[4, 5]));
        let err = tape.matmul(x, y).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 5]"), "{err}");
    }

    #[test]
    fn broadcasting_follows_trailing_rule() {
        assert_eq!(broadcast_shape(&[4, 3], &[3]).unwrap(), vec![4, 3]);
        assert_eq!(broadcast_shape(&[4, 1], &[1, 3]).unwrap(), vec![4, 3]);
        assert!(broadcast_shape(&[4, 3], &[4]).is_err());

        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]), true);
        let b = tape.leaf(t(&[2, 1], &[10., 20.]), true);
        let c = tape.mul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[10., 20., 30., 80., 100., 120.]);
        let s = tape.sum(c);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(b).unwrap().data(), &[6., 15.]);
        assert_eq!(tape.grad(a).unwrap().data(), &[10., 10., 10., 20., 20., 20.]);
    }

    #[test]
    fn permute_and_narrow() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 3], &[0., 1., 2., 3., 4., 5.]));
        let y = tape.transpose(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0., 3., 1., 4., 2., 5.]);
        let z = tape.narrow(x, 1, 1, 2).unwrap();
        assert_eq!(tape.value(z).data(), &[1., 2., 4., 5.]);
        let c = tape.concat(&[x, z], 1).unwrap();
        assert_eq!(tape.shape(c), &[2, 5]);
        assert!(tape.permute(x, &[0, 0]).is_err());
    }
}
