use crate::error::{contract_err, Result};
use crate::numerics::{Rng, Tape, Tensor, Var};

const PERCEPTUAL_SEED: u64 = 0x5EED_F00D;

/// Fixed random-weight convolutional feature pyramid: three 3×3 stride-2
/// stages with tanh activations.
#[derive(Clone, Debug)]
pub struct PerceptualNet {
    weights: Vec<Tensor>,
}

impl Default for PerceptualNet {
    fn default() -> Self {
        Self::new(&[3, 8, 16, 32])
    }
}

impl PerceptualNet {
    pub fn new(channels: &[usize]) -> Self {
        let mut rng = Rng::seed(PERCEPTUAL_SEED);
        let weights = channels
            .windows(2)
            .map(|c| Tensor::randn(&[3, 3, c[0], c[1]], (2.0 / (9 * c[0]) as f32).sqrt(), &mut rng))
            .collect();
        Self { weights }
    }

    /// Feature maps of every stage for an `[H, W, 3]` image node.
    pub fn features(&self, tape: &mut Tape, image: Var) -> Result<Vec<Var>> {
        let mut x = image;
        let mut out = Vec::with_capacity(self.weights.len());
        for w in &self.weights {
            let wv = tape.constant(w.clone());
            let y = tape.conv2d(x, wv, None, [3, 3], [2, 2], [1, 1])?;
            x = tape.tanh(y);
            out.push(x);
        }
        Ok(out)
    }
}

/// Loss weights `λ₁` (pixel MSE) and `λ₂` (feature-pyramid MSE).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mse: f32,
    pub perceptual: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mse: 1.0, perceptual: 0.5 }
    }
}

/// `λ₁·L_mse + λ₂·L_perc` averaged over views. `L_perc` is the mean over
/// pyramid stages of the feature-map MSE.
pub fn loss_recon(tape: &mut Tape, rendered: &[Var], targets: &[Tensor], weights: LossWeights, net: &PerceptualNet) -> Result<Var> {
    if rendered.len() != targets.len() || rendered.is_empty() {
        return Err(contract_err!("loss_recon: {} renders for {} targets", rendered.len(), targets.len()));
    }
    let mut terms = Vec::with_capacity(rendered.len());
    for (&r, t) in rendered.iter().zip(targets) {
        if tape.shape(r) != t.shape() {
            return Err(contract_err!("loss_recon: render {:?} vs target {:?}", tape.shape(r), t.shape()));
        }
        let tv = tape.constant(t.clone());
        let pix = tape.mse(r, tv)?;
        let mut view = tape.scale(pix, weights.mse);
        if weights.perceptual != 0.0 {
            let fr = net.features(tape, r)?;
            let ft = net.features(tape, tv)?;
            let k = fr.len() as f32;
            for (a, b) in fr.into_iter().zip(ft) {
                let m = tape.mse(a, b)?;
                let m = tape.scale(m, weights.perceptual / k);
                view = tape.add(view, m)?;
            }
        }
        terms.push(view);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(tape.scale(total, 1.0 / rendered.len() as f32))
}

/// Value of [`loss_recon`] for plain images.
pub fn loss_recon_value(rendered: &[Tensor], targets: &[Tensor], weights: LossWeights, net: &PerceptualNet) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = rendered.iter().map(|r| tape.constant(r.clone())).collect();
    let l = loss_recon(&mut tape, &vars, targets, weights, net)?;
    Ok(tape.value(l).item()? as f64)
}
