#![allow(dead_code)]

use ndarray::Array2;
use nvdp_clip::bottleneck::{Architecture, BottleneckSettings, Noise, ToyModel};
use nvdp_clip::{ClipConfig, DpPosterior, Example, PosteriorDataset, PriorSpec, RealVec, RenyiOrder};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rv(v: Vec<f64>) -> RealVec {
    RealVec::new(v).unwrap()
}

pub fn random_posterior(rng: &mut ChaCha8Rng, k: usize, d: usize) -> DpPosterior {
    let means = (0..k).map(|_| rv((0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())).collect();
    let stds = (0..k).map(|_| rv((0..d).map(|_| rng.gen_range(0.05..2.5)).collect())).collect();
    let alphas = (0..k).map(|_| rng.gen_range(0.01..4.0)).collect();
    let kappas = (0..k).map(|_| rng.gen_range(0.2..1.5)).collect();
    DpPosterior::with_kappas(means, stds, alphas, kappas).unwrap()
}

pub fn random_prior(rng: &mut ChaCha8Rng, d: usize) -> PriorSpec {
    PriorSpec::new(
        rv((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        rv((0..d).map(|_| rng.gen_range(0.5..2.0)).collect()),
        rng.gen_range(0.5..3.0),
    )
    .unwrap()
}

/// Dataset with unit kappas (the prior comparison uses the example's kappas).
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> PosteriorDataset {
    let k = rng.gen_range(1..4);
    let d = rng.gen_range(1..5);
    let prior = random_prior(rng, d);
    let examples = (0..n)
        .map(|i| {
            let mut p = random_posterior(rng, k, d);
            p.kappas = vec![1.0; k];
            Example { id: format!("e{i:03}"), posterior: p }
        })
        .collect();
    let lambda = RenyiOrder::new(rng.gen_range(1.05..3.0)).unwrap();
    PosteriorDataset { lambda, prior, examples }
}

pub fn random_clip(rng: &mut ChaCha8Rng, lambda: RenyiOrder) -> ClipConfig {
    let lo = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.3) };
    ClipConfig::new(rng.gen_range(0.5..4.0), lo, rng.gen_range(0.4..1.5), lambda).unwrap()
}

pub fn tiny_arch() -> Architecture {
    Architecture { input_dim: 3, hidden_dim: 4, latent_dim: 2, n_components: 3, classes: 3 }
}

pub fn tiny_batch(rng: &mut ChaCha8Rng, arch: &Architecture, n: usize) -> (Array2<f64>, Vec<usize>, Noise) {
    let x = Array2::from_shape_fn((n, arch.input_dim), |_| rng.gen_range(-1.5..1.5));
    let y = (0..n).map(|_| rng.gen_range(0..arch.classes)).collect();
    let noise = Noise::sample(rng, n, arch);
    (x, y, noise)
}

/// Largest relative error between the analytic gradient and a central
/// difference over every parameter, with the denominator floored at 1e-6.
pub fn max_gradient_error(
    model: &ToyModel,
    x: &Array2<f64>,
    y: &[usize],
    noise: &Noise,
    settings: &BottleneckSettings,
) -> (f64, String) {
    let h = 1e-5;
    let (_, grad) = model.loss_and_grad(x.view(), y, noise, settings).unwrap();
    let loss = |m: &ToyModel| m.forward(x.view(), y, noise, settings).unwrap().losses.total;
    let mut probe = model.clone();
    let mut worst = (0.0, String::new());
    for t in 0..10 {
        let len = grad.tensors()[t].len();
        for i in 0..len {
            let orig = probe.params.tensors()[t][i];
            probe.params.tensors_mut()[t][i] = orig + h;
            let up = loss(&probe);
            probe.params.tensors_mut()[t][i] = orig - h;
            let down = loss(&probe);
            probe.params.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad.tensors()[t][i];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            if err > worst.0 {
                worst = (err, format!("{}[{i}]: analytic {analytic}, numeric {numeric}", nvdp_clip::bottleneck::model::PARAM_NAMES[t]));
            }
        }
    }
    worst
}

/// Distance of the unclipped head outputs from every clip boundary.
pub fn boundary_clearance(model: &ToyModel, x: &Array2<f64>, cfg: &ClipConfig) -> f64 {
    let raw = BottleneckSettings { lambda_g: 0.0, lambda_d: 0.0, clip: None };
    assert_eq!(cfg.effective_alpha_floor(), raw.alpha_floor(), "raw and clipped alphas must share the floor");
    let prior = &model.prior;
    let mut clearance = f64::INFINITY;
    for post in model.posteriors(x.view(), &raw).unwrap() {
        for i in 0..post.n_components() {
            let dist: f64 = post.means[i].iter().zip(prior.mean.iter()).map(|(m, c)| (m - c).powi(2)).sum::<f64>().sqrt();
            clearance = clearance.min((dist - cfg.c_mu()).abs());
            for (s, p) in post.stds[i].iter().zip(prior.std.iter()) {
                clearance = clearance.min((s - nvdp_clip::clipping::sigma_floor(*p, cfg.lambda())).abs());
            }
            clearance = clearance.min((post.alphas[i] - cfg.c_alpha_max()).abs());
        }
    }
    clearance
}

/// Whether clipping changes at least one head output on this batch.
pub fn clipping_active(model: &ToyModel, x: &Array2<f64>, cfg: &ClipConfig) -> bool {
    let raw = BottleneckSettings { lambda_g: 0.0, lambda_d: 0.0, clip: None };
    let clipped = BottleneckSettings { clip: Some(*cfg), ..raw };
    model.posteriors(x.view(), &raw).unwrap() != model.posteriors(x.view(), &clipped).unwrap()
}
