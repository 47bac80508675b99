use crate::error::{contract_err, Result};
use crate::numerics::Tensor;

/// PSNR cap returned for (near-)identical images.
pub const PSNR_CAP: f64 = 99.0;

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(contract_err!("image shapes differ: {:?} vs {:?}", a.shape(), b.shape()));
    }
    if a.shape().len() != 3 {
        return Err(contract_err!("images must be [H, W, C], got {:?}", a.shape()));
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair(a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    Ok(s / a.len() as f64)
}

/// `10·log₁₀(1/MSE)` for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    let m = mse(a, b)?;
    if m < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> [f64; 11] {
    let mut w = [0.0; 11];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - 5.0;
        *v = (-x * x / (2.0 * 1.5 * 1.5)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Mean SSIM over all valid 11×11 windows (Gaussian σ = 1.5) and channels.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair(a, b)?;
    let [h, w, c] = [a.shape()[0], a.shape()[1], a.shape()[2]];
    if h < 11 || w < 11 {
        return Err(contract_err!("ssim needs images of at least 11×11, got {h}×{w}"));
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let win = gaussian_window();
    let (ad, bd) = (a.data(), b.data());
    let (oh, ow) = (h - 10, w - 10);
    let mut total = 0.0;
    for ch in 0..c {
        let px = |d: &[f32], y: usize, x: usize| d[(y * w + x) * c + ch] as f64;
        // separable filtering of the five moment images, horizontal pass first
        let mut horiz = vec![[0.0f64; 5]; h * ow];
        for y in 0..h {
            for x in 0..ow {
                let mut m = [0.0; 5];
                for (k, wk) in win.iter().enumerate() {
                    let (va, vb) = (px(ad, y, x + k), px(bd, y, x + k));
                    m[0] += wk * va;
                    m[1] += wk * vb;
                    m[2] += wk * va * va;
                    m[3] += wk * vb * vb;
                    m[4] += wk * va * vb;
                }
                horiz[y * ow + x] = m;
            }
        }
        for y in 0..oh {
            for x in 0..ow {
                let mut m = [0.0; 5];
                for (k, wk) in win.iter().enumerate() {
                    let r = horiz[(y + k) * ow + x];
                    for i in 0..5 {
                        m[i] += wk * r[i];
                    }
                }
                let (mu_a, mu_b) = (m[0], m[1]);
                let va = m[2] - mu_a * mu_a;
                let vb = m[3] - mu_b * mu_b;
                let cov = m[4] - mu_a * mu_b;
                total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
            }
        }
    }
    Ok(total / (c * oh * ow) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn psnr_closed_forms() {
        let a = Tensor::zeros(&[4, 4, 3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = Tensor::full(&[4, 4, 3], 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-4);
        assert!(psnr(&a, &Tensor::ones(&[4, 4, 3])).unwrap().abs() < 1e-9);
        assert!(psnr(&a, &Tensor::zeros(&[4, 3, 3])).is_err());
    }

    #[test]
    fn ssim_examples() {
        let mut rng = Rng::seed(2);
        let a = Tensor::rand_uniform(&[16, 20, 3], 0.0, 1.0, &mut rng);
        let b = Tensor::rand_uniform(&[16, 20, 3], 0.0, 1.0, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        let zero = Tensor::zeros(&[12, 12, 1]);
        let one = Tensor::ones(&[12, 12, 1]);
        let expected = 0.01f64.powi(2) / (1.0 + 0.01f64.powi(2));
        assert!((ssim(&zero, &one).unwrap() - expected).abs() < 1e-9);
        assert!(ssim(&Tensor::zeros(&[10, 12, 1]), &Tensor::zeros(&[10, 12, 1])).is_err());
    }
}
