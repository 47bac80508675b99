use crate::error::{contract_err, Result};
use crate::numerics::Tensor;

/// Cosine variance-preserving noise schedule: `α_τ = cos(π/2 · τ/(S−1))`,
/// `σ_τ = sin(π/2 · τ/(S−1))`, with the endpoints pinned to `(1, 0)` and
/// `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    pub num_steps: usize,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn cosine(num_steps: usize) -> Result<Self> {
        if num_steps < 2 {
            return Err(contract_err!("diffusion schedule needs at least 2 steps, got {num_steps}"));
        }
        let last = num_steps - 1;
        let (mut alpha, mut sigma) = (Vec::with_capacity(num_steps), Vec::with_capacity(num_steps));
        for tau in 0..num_steps {
            let (a, s) = if tau == last {
                (0.0, 1.0)
            } else {
                let u = std::f64::consts::FRAC_PI_2 * tau as f64 / last as f64;
                (u.cos(), u.sin())
            };
            alpha.push(a);
            sigma.push(s);
        }
        Ok(Self { num_steps, alpha, sigma })
    }

    /// Largest step with `α > 0`; sampling starts here from pure noise.
    pub fn last_invertible(&self) -> usize {
        (0..self.num_steps).rev().find(|&t| self.alpha[t] > 0.0).unwrap_or(0)
    }

    /// `τ_max, …, 0` spaced evenly over `steps` model evaluations.
    pub fn sampling_steps(&self, steps: usize) -> Result<Vec<usize>> {
        if steps == 0 {
            return Err(contract_err!("sampling needs at least one step"));
        }
        let top = self.last_invertible();
        let mut out: Vec<usize> = (0..steps)
            .map(|i| ((top as f64) * (1.0 - i as f64 / steps as f64)).round() as usize)
            .collect();
        out.dedup();
        out.push(0);
        out.dedup();
        Ok(out)
    }

    /// `α_τ·z + σ_τ·ε`.
    pub fn add_noise(&self, z: &Tensor, tau: usize, eps: &Tensor) -> Result<Tensor> {
        if tau >= self.num_steps {
            return Err(contract_err!("step {tau} outside the schedule of {} steps", self.num_steps));
        }
        if z.shape() != eps.shape() {
            return Err(contract_err!("noise shape {:?} differs from latent shape {:?}", eps.shape(), z.shape()));
        }
        let (a, s) = (self.alpha[tau] as f32, self.sigma[tau] as f32);
        let data = z.data().iter().zip(eps.data()).map(|(&x, &e)| a * x + s * e).collect();
        Tensor::new(z.shape(), data)
    }
}
