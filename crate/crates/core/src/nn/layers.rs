//! Parameter initializers and the layers shared by both transformers.
//!
//! A layer is a function of a [`Graph`] and a parameter-name prefix; the
//! matching `init_*` function creates its parameters in a [`ParamStore`].

use super::params::{Graph, ParamStore};
use crate::error::Result;
use crate::numerics::{Rng, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Gelu,
}

impl Activation {
    pub fn apply(self, g: &mut Graph<'_>, x: Var) -> Var {
        match self {
            Activation::Silu => g.tape.silu(x),
            Activation::Gelu => g.tape.gelu(x),
        }
    }
}

/// `weight [in, out]` with `N(0, gain²/in)` entries and a zero `bias [out]`.
pub fn init_linear(store: &mut ParamStore, rng: &mut Rng, prefix: &str, fan_in: usize, fan_out: usize, gain: f32) {
    let std = gain / (fan_in as f32).sqrt();
    store.insert(format!("{prefix}.weight"), Tensor::randn(&[fan_in, fan_out], std, rng), true);
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[fan_out]), true);
}

/// All-zero linear layer: contributes nothing until its weights are trained.
pub fn init_zero_linear(store: &mut ParamStore, prefix: &str, fan_in: usize, fan_out: usize) {
    store.insert(format!("{prefix}.weight"), Tensor::zeros(&[fan_in, fan_out]), true);
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[fan_out]), true);
}

/// Low-rank adapter on an existing linear layer: `lora_a` random, `lora_b`
/// zero, so the adapted layer is unchanged at initialization.
pub fn init_lora(store: &mut ParamStore, rng: &mut Rng, prefix: &str, fan_in: usize, fan_out: usize, rank: usize) {
    let std = 1.0 / (fan_in as f32).sqrt();
    store.insert(format!("{prefix}.lora_a"), Tensor::randn(&[fan_in, rank], std, rng), true);
    store.insert(format!("{prefix}.lora_b"), Tensor::zeros(&[rank, fan_out]), true);
}

pub fn init_layer_norm(store: &mut ParamStore, prefix: &str, dim: usize) {
    store.insert(format!("{prefix}.gamma"), Tensor::ones(&[dim]), true);
    store.insert(format!("{prefix}.beta"), Tensor::zeros(&[dim]), true);
}

/// `x·W + b`, plus `scale·(x·A)·B` when a LoRA adapter is present.
pub fn linear(g: &mut Graph<'_>, prefix: &str, x: Var, lora_scale: f32) -> Result<Var> {
    let w = g.param(&format!("{prefix}.weight"))?;
    let b = g.param(&format!("{prefix}.bias"))?;
    let y = g.tape.linear(x, w, Some(b))?;
    let a_name = format!("{prefix}.lora_a");
    if !g.has(&a_name) {
        return Ok(y);
    }
    let a = g.param(&a_name)?;
    let bb = g.param(&format!("{prefix}.lora_b"))?;
    let xa = g.tape.linear(x, a, None)?;
    let delta = g.tape.linear(xa, bb, None)?;
    let delta = if lora_scale == 1.0 { delta } else { g.tape.scale(delta, lora_scale) };
    g.tape.add(y, delta)
}

pub fn layer_norm(g: &mut Graph<'_>, prefix: &str, x: Var) -> Result<Var> {
    let n = g.tape.layer_norm(x, 1e-5)?;
    let gamma = g.param(&format!("{prefix}.gamma"))?;
    let beta = g.param(&format!("{prefix}.beta"))?;
    let y = g.tape.mul(n, gamma)?;
    g.tape.add(y, beta)
}

#[derive(Clone, Copy, Debug)]
pub struct BlockSpec {
    pub dim: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub activation: Activation,
}

/// Pre-norm transformer block parameters under `prefix`.
pub fn init_block(store: &mut ParamStore, rng: &mut Rng, prefix: &str, spec: &BlockSpec) {
    let d = spec.dim;
    let h = d * spec.mlp_ratio;
    init_layer_norm(store, &format!("{prefix}.ln1"), d);
    init_linear(store, rng, &format!("{prefix}.attn.qkv"), d, 3 * d, 1.0);
    init_linear(store, rng, &format!("{prefix}.attn.out"), d, d, 0.5);
    init_layer_norm(store, &format!("{prefix}.ln2"), d);
    init_linear(store, rng, &format!("{prefix}.mlp.fc1"), d, h, 1.0);
    init_linear(store, rng, &format!("{prefix}.mlp.fc2"), h, d, 0.5);
}

/// `x + attn(ln1(x))`, then `x + mlp(ln2(x))` on a `[N, d]` token matrix.
pub fn block(g: &mut Graph<'_>, prefix: &str, x: Var, spec: &BlockSpec, lora_scale: f32) -> Result<Var> {
    let d = spec.dim;
    let h = layer_norm(g, &format!("{prefix}.ln1"), x)?;
    let qkv = linear(g, &format!("{prefix}.attn.qkv"), h, lora_scale)?;
    let q = g.tape.narrow(qkv, 1, 0, d)?;
    let k = g.tape.narrow(qkv, 1, d, d)?;
    let v = g.tape.narrow(qkv, 1, 2 * d, d)?;
    let a = g.tape.attention(q, k, v, spec.heads)?;
    let a = linear(g, &format!("{prefix}.attn.out"), a, lora_scale)?;
    let x = g.tape.add(x, a)?;
    let h = layer_norm(g, &format!("{prefix}.ln2"), x)?;
    let h = linear(g, &format!("{prefix}.mlp.fc1"), h, lora_scale)?;
    let h = spec.activation.apply(g, h);
    let h = linear(g, &format!("{prefix}.mlp.fc2"), h, lora_scale)?;
    g.tape.add(x, h)
}

/// Sinusoidal embedding of a scalar position into `dim` channels.
pub fn sinusoidal(position: f32, dim: usize) -> Tensor {
    let half = dim / 2;
    let mut out = vec![0.0f32; dim];
    for i in 0..half {
        let freq = (-(10_000f32.ln()) * i as f32 / half as f32).exp();
        out[i] = (position * freq).sin();
        out[half + i] = (position * freq).cos();
    }
    Tensor::raw(vec![dim], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lora_leaves_linear_unchanged() {
        let mut rng = Rng::seed(1);
        let mut store = ParamStore::new();
        init_linear(&mut store, &mut rng, "l", 4, 3, 1.0);
        let x = Tensor::randn(&[5, 4], 1.0, &mut rng);

        let mut g = Graph::inference(&store);
        let xv = g.input(x.clone());
        let plain = linear(&mut g, "l", xv, 1.0).unwrap();
        let plain = g.value(plain).clone();

        init_lora(&mut store, &mut rng, "l", 4, 3, 2);
        let mut g = Graph::inference(&store);
        let xv = g.input(x);
        let adapted = linear(&mut g, "l", xv, 1.0).unwrap();
        assert_eq!(g.value(adapted), &plain);
    }

    #[test]
    fn block_preserves_shape() {
        let mut rng = Rng::seed(2);
        let mut store = ParamStore::new();
        let spec = BlockSpec { dim: 8, heads: 2, mlp_ratio: 2, activation: Activation::Gelu };
        init_block(&mut store, &mut rng, "b", &spec);
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::randn(&[6, 8], 1.0, &mut rng));
        let y = block(&mut g, "b", x, &spec, 1.0).unwrap();
        assert_eq!(g.value(y).shape(), &[6, 8]);
    }
}
