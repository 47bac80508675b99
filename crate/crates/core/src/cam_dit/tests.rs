use super::*;
use crate::codec::VideoLatent;
use crate::nn::{AdamW, Graph};
use crate::numerics::{Rng, Tensor};

fn tiny() -> DiTConfig {
    DiTConfig {
        num_blocks: 3,
        hidden: 16,
        heads: 2,
        mlp_ratio: 2,
        ctrl_blocks: 2,
        lora_rank: 2,
        latent_channels: 8,
        r_t: 2,
        r_s: 2,
        camera_hidden: 4,
        text_dim: 4,
        schedule_steps: 100,
        ..Default::default()
    }
}

fn example(rng: &mut Rng) -> DiTExample {
    DiTExample {
        latent: VideoLatent {
            data: Tensor::rand_uniform(&[3, 4, 4, 8], 0.0, 1.0, rng),
            codec_id: "lossless-s2d".into(),
            r_t: 2,
            r_s: 2,
        },
        plucker: Tensor::randn(&[5, 8, 8, 6], 1.0, rng),
        text: Some(Tensor::randn(&[4], 1.0, rng)),
    }
}

fn predict(model: &CamDiT, ex: &DiTExample, z_tau: &Tensor, tau: usize) -> Tensor {
    let cond = first_frame(&model.normalize(&ex.latent.data)).unwrap();
    let mut g = Graph::inference(&model.params);
    let input = DiTInput { z_tau, cond: &cond, plucker: Some(&ex.plucker), text: ex.text.as_ref(), tau };
    let out = model.forward(&mut g, &input).unwrap();
    g.value(out).clone()
}

fn perturb_out(model: &mut CamDiT, rng: &mut Rng) {
    let p = model.params.get_mut("out.weight").unwrap();
    p.value = Tensor::randn(p.value.shape(), 0.1, rng);
}

#[test]
fn dual_branch_is_inert_at_attach() {
    let mut rng = Rng::seed(0);
    let mut base = CamDiT::init_base(&tiny(), [3, 4, 4], 1).unwrap();
    perturb_out(&mut base, &mut rng);
    let mut dual = base.clone();
    dual.attach_branches(Branches::Dual, 2).unwrap();
    for _ in 0..3 {
        let ex = example(&mut rng);
        let z = Tensor::randn(&[3, 4, 4, 8], 1.0, &mut rng);
        let tau = 1 + rng.below(99);
        let a = predict(&base, &ex, &z, tau);
        let b = predict(&dual, &ex, &z, tau);
        assert_eq!(b.shape(), &[3, 4, 4, 8]);
        assert!(a.max_abs_diff(&b).unwrap() < 1e-5);
    }
}

#[test]
fn fuse_is_identity_at_init() {
    let mut rng = Rng::seed(3);
    let mut m = CamDiT::init_base(&tiny(), [3, 4, 4], 1).unwrap();
    m.attach_branches(Branches::Lora, 2).unwrap();
    let o_v = Tensor::randn(&[49, 16], 1.0, &mut rng);
    let o_l = Tensor::randn(&[49, 16], 1.0, &mut rng);
    let mut g = Graph::inference(&m.params);
    let (a, b) = (g.input(o_v.clone()), g.input(o_l));
    let y = m.fuse_lora(&mut g, a, b).unwrap();
    assert!(g.value(y).max_abs_diff(&o_v).unwrap() < 1e-6);
    let short = g.input(Tensor::zeros(&[48, 16]));
    assert!(m.fuse_lora(&mut g, a, short).is_err());
}

#[test]
fn camera_encoders_start_at_zero_and_move_after_one_step() {
    let mut rng = Rng::seed(4);
    let mut m = CamDiT::init_base(&tiny(), [3, 4, 4], 1).unwrap();
    m.attach_branches(Branches::Dual, 2).unwrap();
    let p = Tensor::randn(&[5, 8, 8, 6], 1.0, &mut rng);
    for branch in [CameraBranch::Ctrl, CameraBranch::Lora] {
        let grads = {
            let mut g = Graph::new(&m.params);
            let o = m.encode_camera(&mut g, &p, branch).unwrap();
            assert_eq!(g.value(o).shape(), &[48, 16]);
            assert!(g.value(o).data().iter().all(|&v| v == 0.0));
            let target = g.input(Tensor::ones(&[48, 16]));
            let loss = g.tape.mse(o, target).unwrap();
            g.backward(loss).unwrap();
            g.grads()
        };
        let mut opt = AdamW::default();
        let mut stepped = m.clone();
        opt.step(&mut stepped.params, &grads, 1e-2).unwrap();
        let mut g = Graph::inference(&stepped.params);
        let o = stepped.encode_camera(&mut g, &p, branch).unwrap();
        assert!(g.value(o).data().iter().any(|&v| v != 0.0));
    }
    let mut g = Graph::inference(&m.params);
    let bad = Tensor::zeros(&[5, 7, 8, 6]);
    let err = m.encode_camera(&mut g, &bad, CameraBranch::Ctrl).unwrap_err().to_string();
    assert!(err.contains("spatial downsample 2"), "{err}");
}

#[test]
fn patchify_counts_and_zero_latent() {
    let cfg = DiTConfig { patch_s: 2, latent_channels: 4, ..tiny() };
    assert_eq!(token_grid(&cfg, [13, 30, 44]).unwrap().iter().product::<usize>(), 4290);
    assert!(token_grid(&cfg, [13, 30, 45]).is_err());
    let m = CamDiT::init_base(&cfg, [2, 4, 4], 0).unwrap();
    let mut g = Graph::inference(&m.params);
    let o = m.patchify_video(&mut g, &Tensor::zeros(&[2, 4, 4, 8])).unwrap();
    assert!(g.value(o).max_abs_diff(m.params.tensor("pos").unwrap()).unwrap() == 0.0);
}

#[test]
fn frozen_base_receives_no_gradients() {
    let mut rng = Rng::seed(5);
    let mut m = CamDiT::init_base(&tiny(), [3, 4, 4], 1).unwrap();
    let base_names: Vec<String> = m.params.names().map(str::to_string).collect();
    m.attach_branches(Branches::Dual, 2).unwrap();
    let trainable = m.trainable_names();
    for n in &trainable {
        assert!(!base_names.contains(n) || n.contains(".lora_"), "{n}");
    }
    assert!(trainable.iter().any(|n| n.contains(".lora_")));
    let out = training_step(&m, &[example(&mut rng)], &mut rng).unwrap();
    for n in out.grads.keys() {
        assert!(super::is_branch_param(n), "frozen parameter {n} got a gradient");
    }
}

#[test]
fn untrained_loss_is_near_noise_variance() {
    let mut rng = Rng::seed(6);
    let cfg = DiTConfig { prediction: Prediction::Eps, min_snr: None, ..tiny() };
    let m = CamDiT::init_base(&cfg, [3, 4, 4], 1).unwrap();
    let batch: Vec<_> = (0..4).map(|_| example(&mut rng)).collect();
    let out = training_step(&m, &batch, &mut rng).unwrap();
    assert!((out.loss - 1.0).abs() < 0.3, "{}", out.loss);
    assert!(training_step(&m, &[], &mut rng).is_err());
}

#[test]
fn every_branch_set_builds_and_trains() {
    let mut rng = Rng::seed(7);
    let data = vec![example(&mut rng)];
    for b in [Branches::Lora, Branches::Ctrl, Branches::Dual] {
        let mut m = CamDiT::init_base(&tiny(), [3, 4, 4], 1).unwrap();
        m.attach_branches(b, 2).unwrap();
        let losses = train_dit(&mut m, &data, &DiTTrainOptions { steps: 3, ..Default::default() }, |_, _| {}).unwrap();
        assert_eq!(losses.len(), 3);
        assert!(m.attach_branches(b, 3).is_err());
    }
}

#[test]
fn sampling_is_deterministic_and_shaped() {
    let mut rng = Rng::seed(8);
    let mut m = CamDiT::init_base(&tiny(), [3, 4, 4], 1).unwrap();
    m.attach_branches(Branches::Dual, 2).unwrap();
    let ex = example(&mut rng);
    let image = VideoLatent { data: first_frame(&ex.latent.data).unwrap(), ..ex.latent.clone() };
    let req = SampleRequest { image: &image, plucker: &ex.plucker, text: None, steps: 1, seed: 9 };
    let a = sample(&m, &req).unwrap();
    assert_eq!(a.data.shape(), &[3, 4, 4, 8]);
    assert!(a.data.data().iter().all(|v| v.is_finite()));
    let b = sample(&m, &SampleRequest { steps: 4, ..req }).unwrap();
    let c = sample(&m, &SampleRequest { steps: 4, ..req }).unwrap();
    assert_eq!(b.data, c.data);
    let mut empty = m.clone();
    empty.params = crate::nn::ParamStore::new();
    assert!(matches!(sample(&empty, &req), Err(crate::Error::State(_))));
}

#[test]
fn x0_head_gives_noise_estimate_by_hand_formula() {
    let mut rng = Rng::seed(12);
    let mut m = CamDiT::init_base(&tiny(), [3, 4, 4], 1).unwrap();
    perturb_out(&mut m, &mut rng);
    let mut raw = m.clone();
    raw.cfg.prediction = Prediction::Eps;
    let ex = example(&mut rng);
    let z = Tensor::randn(&[3, 4, 4, 8], 1.0, &mut rng);
    for tau in [1, 37, 99] {
        let head = predict(&raw, &ex, &z, tau);
        let eps = predict(&m, &ex, &z, tau);
        let (a, s) = (m.schedule.alpha[tau], m.schedule.sigma[tau]);
        let mut worst = 0.0f64;
        for ((&zi, &hi), &ei) in z.data().iter().zip(head.data()).zip(eps.data()) {
            let want = (zi as f64 - a * hi as f64) / s;
            worst = worst.max((want - ei as f64).abs() / want.abs().max(1.0));
        }
        assert!(worst < 1e-4, "τ = {tau}: {worst}");
    }
    let mut g = Graph::inference(&m.params);
    let cond = first_frame(&z).unwrap();
    let input = DiTInput { z_tau: &z, cond: &cond, plucker: None, text: None, tau: 0 };
    assert!(m.forward(&mut g, &input).is_err());
}

#[test]
fn min_snr_weight_scales_the_loss() {
    let mut rng = Rng::seed(13);
    let mut m = CamDiT::init_base(&DiTConfig { min_snr: None, ..tiny() }, [3, 4, 4], 1).unwrap();
    perturb_out(&mut m, &mut rng);
    let ex = example(&mut rng);
    let mut weighted = m.clone();
    weighted.cfg.min_snr = Some(0.5);
    let (mut r1, mut r2) = (Rng::seed(14), Rng::seed(14));
    let plain = training_step(&m, std::slice::from_ref(&ex), &mut r1).unwrap().loss;
    let low = training_step(&weighted, std::slice::from_ref(&ex), &mut r2).unwrap().loss;
    let tau = 1 + Rng::seed(14).below(m.schedule.num_steps - 1);
    let snr = (m.schedule.alpha[tau] / m.schedule.sigma[tau]).powi(2);
    let w = snr.min(0.5) / snr;
    assert!((low - w * plain).abs() <= 1e-5 * plain.max(1.0), "{low} vs {w}·{plain}");
}

#[test]
fn min_snr_weight_is_finite_over_the_whole_schedule() {
    let s = DiffusionSchedule::cosine(1000).unwrap();
    for tau in 1..1000 {
        let w = train::min_snr_weight(s.alpha[tau], s.sigma[tau], 5.0);
        assert!(w.is_finite() && w > 0.0 && w <= 1.0, "τ = {tau}: {w}");
    }
    assert_eq!(train::min_snr_weight(0.0, 1.0, 5.0), 1.0);
    assert!((train::min_snr_weight(0.9, 0.1, 5.0) - 5.0 / 81.0).abs() < 1e-12);
}
