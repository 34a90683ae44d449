//! Encoder → Dirichlet-process bottleneck → pooled sample → linear head, with
//! hand-written reverse-mode gradients.
//!
//! There is no skip path around the bottleneck: the classifier only ever sees
//! the pooled latent sample.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clipping::{clip_alpha, clip_mean, sigma_floor, ClipConfig, ALPHA_FLOOR_EPS};
use crate::numerics::{digamma, log_gamma, softplus, softplus_grad, softplus_inverse, trigamma, RealVec};
use crate::posterior::{DpPosterior, PriorSpec};

/// Added to every standard deviation so it stays strictly positive.
pub const SIGMA_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite loss (task {task}, gaussian {gaussian}, dirichlet {dirichlet})")]
    NonFiniteLoss { task: f64, gaussian: f64, dirichlet: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("input has {found} features, model expects {expected}")]
    InputShape { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub n_components: usize,
    pub classes: usize,
}

/// Trainable weights. Matrices map column inputs to row outputs; the
/// per-component heads are stacked component-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub enc_w: Array2<f64>,
    pub enc_b: Array1<f64>,
    pub mu_w: Array2<f64>,
    pub mu_b: Array1<f64>,
    pub sigma_w: Array2<f64>,
    pub sigma_b: Array1<f64>,
    pub alpha_w: Array2<f64>,
    pub alpha_b: Array1<f64>,
    pub cls_w: Array2<f64>,
    pub cls_b: Array1<f64>,
}

pub const PARAM_NAMES: [&str; 10] =
    ["enc_w", "enc_b", "mu_w", "mu_b", "sigma_w", "sigma_b", "alpha_w", "alpha_b", "cls_w", "cls_b"];

impl Params {
    pub fn zeros(a: &Architecture) -> Self {
        let kd = a.n_components * a.latent_dim;
        Self {
            enc_w: Array2::zeros((a.hidden_dim, a.input_dim)),
            enc_b: Array1::zeros(a.hidden_dim),
            mu_w: Array2::zeros((kd, a.hidden_dim)),
            mu_b: Array1::zeros(kd),
            sigma_w: Array2::zeros((kd, a.hidden_dim)),
            sigma_b: Array1::zeros(kd),
            alpha_w: Array2::zeros((a.n_components, a.hidden_dim)),
            alpha_b: Array1::zeros(a.n_components),
            cls_w: Array2::zeros((a.classes, a.latent_dim)),
            cls_b: Array1::zeros(a.classes),
        }
    }

    /// Flat views in [`PARAM_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 10] {
        fn s(v: Option<&[f64]>) -> &[f64] {
            v.expect("parameters are contiguous")
        }
        [
            s(self.enc_w.as_slice()),
            s(self.enc_b.as_slice()),
            s(self.mu_w.as_slice()),
            s(self.mu_b.as_slice()),
            s(self.sigma_w.as_slice()),
            s(self.sigma_b.as_slice()),
            s(self.alpha_w.as_slice()),
            s(self.alpha_b.as_slice()),
            s(self.cls_w.as_slice()),
            s(self.cls_b.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
        fn s(v: Option<&mut [f64]>) -> &mut [f64] {
            v.expect("parameters are contiguous")
        }
        [
            s(self.enc_w.as_slice_mut()),
            s(self.enc_b.as_slice_mut()),
            s(self.mu_w.as_slice_mut()),
            s(self.mu_b.as_slice_mut()),
            s(self.sigma_w.as_slice_mut()),
            s(self.sigma_b.as_slice_mut()),
            s(self.alpha_w.as_slice_mut()),
            s(self.alpha_b.as_slice_mut()),
            s(self.cls_w.as_slice_mut()),
            s(self.cls_b.as_slice_mut()),
        ]
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Per-forward settings: regulariser weights and optional clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BottleneckSettings {
    pub lambda_g: f64,
    pub lambda_d: f64,
    pub clip: Option<ClipConfig>,
}

impl BottleneckSettings {
    /// Lower bound added to every pseudo-count.
    pub fn alpha_floor(&self) -> f64 {
        self.clip.map_or(ALPHA_FLOOR_EPS, |c| c.effective_alpha_floor())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub arch: Architecture,
    pub params: Params,
    pub prior: PriorSpec,
    pub rng_seed: u64,
}

/// Standard-normal draws for each (example, component, dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct Noise(pub Array3<f64>);

fn sample_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

impl Noise {
    pub fn zeros(batch: usize, arch: &Architecture) -> Self {
        Noise(Array3::zeros((batch, arch.n_components, arch.latent_dim)))
    }

    pub fn sample<R: Rng>(rng: &mut R, batch: usize, arch: &Architecture) -> Self {
        Noise(Array3::from_shape_fn((batch, arch.n_components, arch.latent_dim), |_| sample_normal(rng)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    pub task: f64,
    pub gaussian: f64,
    pub dirichlet: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub posteriors: Vec<DpPosterior>,
    pub logits: Array2<f64>,
    /// Batch means.
    pub losses: Losses,
}

impl ForwardPass {
    pub fn predictions(&self) -> Vec<usize> {
        self.logits
            .axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect()
    }
}

impl ToyModel {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises") + "\n"
    }

    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Random weights scaled by `1/sqrt(fan_in)`; heads start near the prior.
    pub fn init(arch: Architecture, prior: PriorSpec, seed: u64, alpha_floor: f64) -> Self {
        assert_eq!(prior.dim(), arch.latent_dim, "prior dimension must match the latent dimension");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&arch);
        let fill = |m: &mut Array2<f64>, rng: &mut ChaCha8Rng| {
            let scale = 1.0 / (m.ncols() as f64).sqrt();
            m.mapv_inplace(|_| scale * sample_normal(rng));
        };
        fill(&mut params.enc_w, &mut rng);
        fill(&mut params.mu_w, &mut rng);
        fill(&mut params.cls_w, &mut rng);
        // σ and α heads start small so initial parameters stay close to the prior
        fill(&mut params.sigma_w, &mut rng);
        params.sigma_w.mapv_inplace(|v| 0.1 * v);
        fill(&mut params.alpha_w, &mut rng);
        params.alpha_w.mapv_inplace(|v| 0.1 * v);
        for (i, b) in params.sigma_b.iter_mut().enumerate() {
            let s0 = prior.std[i % arch.latent_dim];
            *b = softplus_inverse(0.5 * s0).expect("prior std is positive");
        }
        let b_k = prior.component_alpha(arch.n_components);
        let start = (b_k - alpha_floor).max(0.05);
        params.alpha_b.fill(softplus_inverse(start).expect("positive"));
        Self { arch, params, prior, rng_seed: seed }
    }

    fn check_inputs(&self, inputs: &ArrayView2<f64>) -> Result<(), ModelError> {
        if inputs.nrows() == 0 {
            return Err(ModelError::EmptyBatch);
        }
        if inputs.ncols() != self.arch.input_dim {
            return Err(ModelError::InputShape { expected: self.arch.input_dim, found: inputs.ncols() });
        }
        Ok(())
    }

    /// Forward pass only.
    pub fn forward(
        &self,
        inputs: ArrayView2<f64>,
        labels: &[usize],
        noise: &Noise,
        settings: &BottleneckSettings,
    ) -> Result<ForwardPass, ModelError> {
        self.run(inputs, labels, noise, settings, false).map(|(p, _)| p)
    }

    /// Forward pass plus the gradient of the mean total loss.
    pub fn loss_and_grad(
        &self,
        inputs: ArrayView2<f64>,
        labels: &[usize],
        noise: &Noise,
        settings: &BottleneckSettings,
    ) -> Result<(ForwardPass, Params), ModelError> {
        self.run(inputs, labels, noise, settings, true).map(|(p, g)| (p, g.expect("requested")))
    }

    /// Posterior parameters only (no sampling, no loss).
    pub fn posteriors(&self, inputs: ArrayView2<f64>, settings: &BottleneckSettings) -> Result<Vec<DpPosterior>, ModelError> {
        self.check_inputs(&inputs)?;
        Ok(inputs.axis_iter(Axis(0)).map(|x| self.encode(x, settings).posterior()).collect())
    }

    fn encode(&self, x: ArrayView1<f64>, settings: &BottleneckSettings) -> Encoded {
        let p = &self.params;
        let (k, d) = (self.arch.n_components, self.arch.latent_dim);
        let h = (p.enc_w.dot(&x) + &p.enc_b).mapv(f64::tanh);
        let mu_raw = p.mu_w.dot(&h) + &p.mu_b;
        let s_pre = p.sigma_w.dot(&h) + &p.sigma_b;
        let a_pre = p.alpha_w.dot(&h) + &p.alpha_b;
        let floor = settings.alpha_floor();

        let mut comps = Vec::with_capacity(k);
        for i in 0..k {
            let raw_mu: Vec<f64> = mu_raw.slice(ndarray::s![i * d..(i + 1) * d]).to_vec();
            let raw_sigma: Vec<f64> = (0..d).map(|j| softplus(s_pre[i * d + j]) + SIGMA_EPS).collect();
            let raw_alpha = softplus(a_pre[i]) + floor;
            let comp = match &settings.clip {
                None => Component {
                    mu: raw_mu,
                    sigma_mask: vec![true; d],
                    sigma: raw_sigma,
                    alpha: raw_alpha,
                    alpha_pass: true,
                    mean_projection: None,
                },
                Some(cfg) => {
                    let prior_mean = &self.prior.mean;
                    let diff: Vec<f64> = raw_mu.iter().zip(prior_mean.iter()).map(|(m, c)| m - c).collect();
                    let dist = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let raw = RealVec::new(raw_mu.clone()).unwrap_or_else(|_| RealVec::zeros(d));
                    let mu = if raw_mu.iter().all(|v| v.is_finite()) {
                        clip_mean(&raw, prior_mean, cfg.c_mu()).expect("dimensions match").into_inner()
                    } else {
                        raw_mu.clone()
                    };
                    let mean_projection = (dist > cfg.c_mu()).then(|| MeanProjection {
                        scale: cfg.c_mu() / dist,
                        unit: diff.iter().map(|v| v / dist).collect(),
                    });
                    let floors: Vec<f64> = self.prior.std.iter().map(|&s0| sigma_floor(s0, cfg.lambda())).collect();
                    let sigma_mask: Vec<bool> = raw_sigma.iter().zip(&floors).map(|(s, f)| s >= f).collect();
                    let sigma = raw_sigma.iter().zip(&floors).map(|(s, f)| s.max(*f)).collect();
                    let alpha = clip_alpha(raw_alpha, cfg);
                    Component {
                        mu,
                        sigma,
                        sigma_mask,
                        alpha_pass: alpha == raw_alpha,
                        alpha,
                        mean_projection,
                    }
                }
            };
            comps.push(comp);
        }
        Encoded { h, s_pre, a_pre, comps }
    }

    fn run(
        &self,
        inputs: ArrayView2<f64>,
        labels: &[usize],
        noise: &Noise,
        settings: &BottleneckSettings,
        want_grad: bool,
    ) -> Result<(ForwardPass, Option<Params>), ModelError> {
        self.check_inputs(&inputs)?;
        let batch = inputs.nrows();
        assert_eq!(labels.len(), batch, "one label per input row");
        let (k, d, c) = (self.arch.n_components, self.arch.latent_dim, self.arch.classes);
        let p = &self.params;
        let prior_mean = &self.prior.mean;
        let prior_std = &self.prior.std;
        let b_k = self.prior.component_alpha(k);
        let b_total = self.prior.alpha0_prior;
        let scale = 1.0 / batch as f64;

        let mut grads = want_grad.then(|| Params::zeros(&self.arch));
        let mut logits = Array2::zeros((batch, c));
        let mut posteriors = Vec::with_capacity(batch);
        let mut sums = Losses::default();

        for (n, x) in inputs.axis_iter(Axis(0)).enumerate() {
            let enc = self.encode(x, settings);
            let eps = noise.0.index_axis(Axis(0), n);

            let a_total: f64 = enc.comps.iter().map(|c| c.alpha).sum();
            let w: Vec<f64> = enc.comps.iter().map(|c| c.alpha / a_total).collect();
            let z: Vec<Vec<f64>> = enc
                .comps
                .iter()
                .enumerate()
                .map(|(i, comp)| (0..d).map(|j| comp.mu[j] + comp.sigma[j] * eps[[i, j]]).collect())
                .collect();
            let mut zbar = Array1::<f64>::zeros(d);
            for i in 0..k {
                for j in 0..d {
                    zbar[j] += w[i] * z[i][j];
                }
            }
            let out = p.cls_w.dot(&zbar) + &p.cls_b;
            let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + out.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let task = lse - out[labels[n]];

            // Gaussian KL of each component to the prior, weighted by w
            let mut kl_g = vec![0.0; k];
            for (i, comp) in enc.comps.iter().enumerate() {
                for j in 0..d {
                    let (m, s, m0, s0) = (comp.mu[j], comp.sigma[j], prior_mean[j], prior_std[j]);
                    kl_g[i] += (s0 / s).ln() + (s * s + (m - m0) * (m - m0)) / (2.0 * s0 * s0) - 0.5;
                }
            }
            let l_g: f64 = w.iter().zip(&kl_g).map(|(w, kl)| w * kl).sum();

            // Dirichlet KL to the prior pseudo-counts
            let lg = |v: f64| log_gamma(v).unwrap_or(f64::NAN);
            let dg = |v: f64| digamma(v).unwrap_or(f64::NAN);
            let psi_total = dg(a_total);
            let mut l_d = lg(a_total) - lg(b_total);
            for comp in &enc.comps {
                l_d += lg(b_k) - lg(comp.alpha) + (comp.alpha - b_k) * (dg(comp.alpha) - psi_total);
            }

            sums.task += task;
            sums.gaussian += l_g;
            sums.dirichlet += l_d;
            logits.row_mut(n).assign(&out);
            posteriors.push(enc.posterior());

            let Some(g) = grads.as_mut() else { continue };
            if !(task.is_finite() && l_g.is_finite() && l_d.is_finite()) {
                continue;
            }

            // head
            let mut g_out: Array1<f64> = out.mapv(|v| (v - lse).exp() * scale);
            g_out[labels[n]] -= scale;
            for r in 0..c {
                for j in 0..d {
                    g.cls_w[[r, j]] += g_out[r] * zbar[j];
                }
                g.cls_b[r] += g_out[r];
            }
            let g_zbar = p.cls_w.t().dot(&g_out);

            // mixture weights and component parameters
            let lg_scale = settings.lambda_g * scale;
            let g_w: Vec<f64> =
                (0..k).map(|i| (0..d).map(|j| g_zbar[j] * z[i][j]).sum::<f64>() + lg_scale * kl_g[i]).collect();
            let g_w_mean: f64 = g_w.iter().zip(&w).map(|(a, b)| a * b).sum();
            let tri_total = trigamma(a_total).unwrap_or(f64::NAN);

            let mut g_h = Array1::<f64>::zeros(self.arch.hidden_dim);
            for (i, comp) in enc.comps.iter().enumerate() {
                let mut g_mu = vec![0.0; d];
                let mut g_sigma = vec![0.0; d];
                for j in 0..d {
                    let (m, s, m0, s0) = (comp.mu[j], comp.sigma[j], prior_mean[j], prior_std[j]);
                    g_mu[j] = w[i] * g_zbar[j] + lg_scale * w[i] * (m - m0) / (s0 * s0);
                    g_sigma[j] = w[i] * g_zbar[j] * eps[[i, j]] + lg_scale * w[i] * (s / (s0 * s0) - 1.0 / s);
                }
                let mut g_alpha = (g_w[i] - g_w_mean) / a_total;
                g_alpha += settings.lambda_d
                    * scale
                    * ((comp.alpha - b_k) * trigamma(comp.alpha).unwrap_or(f64::NAN) - (a_total - b_total) * tri_total);

                // back through the clip operators
                if let Some(proj) = &comp.mean_projection {
                    let dot: f64 = proj.unit.iter().zip(&g_mu).map(|(u, g)| u * g).sum();
                    for j in 0..d {
                        g_mu[j] = proj.scale * (g_mu[j] - proj.unit[j] * dot);
                    }
                }
                for j in 0..d {
                    if !comp.sigma_mask[j] {
                        g_sigma[j] = 0.0;
                    }
                }
                if !comp.alpha_pass {
                    g_alpha = 0.0;
                }

                for j in 0..d {
                    let row = i * d + j;
                    let g_s_pre = g_sigma[j] * softplus_grad(enc.s_pre[row]);
                    for hcol in 0..self.arch.hidden_dim {
                        g.mu_w[[row, hcol]] += g_mu[j] * enc.h[hcol];
                        g.sigma_w[[row, hcol]] += g_s_pre * enc.h[hcol];
                        g_h[hcol] += p.mu_w[[row, hcol]] * g_mu[j] + p.sigma_w[[row, hcol]] * g_s_pre;
                    }
                    g.mu_b[row] += g_mu[j];
                    g.sigma_b[row] += g_s_pre;
                }
                let g_a_pre = g_alpha * softplus_grad(enc.a_pre[i]);
                for hcol in 0..self.arch.hidden_dim {
                    g.alpha_w[[i, hcol]] += g_a_pre * enc.h[hcol];
                    g_h[hcol] += p.alpha_w[[i, hcol]] * g_a_pre;
                }
                g.alpha_b[i] += g_a_pre;
            }

            // encoder
            for r in 0..self.arch.hidden_dim {
                let g_pre = g_h[r] * (1.0 - enc.h[r] * enc.h[r]);
                for col in 0..self.arch.input_dim {
                    g.enc_w[[r, col]] += g_pre * x[col];
                }
                g.enc_b[r] += g_pre;
            }
        }

        let losses = Losses {
            task: sums.task * scale,
            gaussian: sums.gaussian * scale,
            dirichlet: sums.dirichlet * scale,
            total: (sums.task + settings.lambda_g * sums.gaussian + settings.lambda_d * sums.dirichlet) * scale,
        };
        if !(losses.task.is_finite() && losses.gaussian.is_finite() && losses.dirichlet.is_finite()) {
            return Err(ModelError::NonFiniteLoss {
                task: losses.task,
                gaussian: losses.gaussian,
                dirichlet: losses.dirichlet,
            });
        }
        Ok((ForwardPass { posteriors, logits, losses }, grads))
    }
}

struct MeanProjection {
    scale: f64,
    unit: Vec<f64>,
}

struct Component {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    sigma_mask: Vec<bool>,
    alpha: f64,
    alpha_pass: bool,
    mean_projection: Option<MeanProjection>,
}

struct Encoded {
    h: Array1<f64>,
    s_pre: Array1<f64>,
    a_pre: Array1<f64>,
    comps: Vec<Component>,
}

impl Encoded {
    fn posterior(&self) -> DpPosterior {
        let to_vec = |v: &[f64]| RealVec::new(v.to_vec()).unwrap_or_else(|_| RealVec::zeros(0));
        DpPosterior {
            means: self.comps.iter().map(|c| to_vec(&c.mu)).collect(),
            stds: self.comps.iter().map(|c| to_vec(&c.sigma)).collect(),
            alphas: self.comps.iter().map(|c| c.alpha).collect(),
            kappas: vec![1.0; self.comps.len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order::RenyiOrder;

    fn arch() -> Architecture {
        Architecture { input_dim: 3, hidden_dim: 4, latent_dim: 2, n_components: 3, classes: 2 }
    }

    fn model() -> ToyModel {
        ToyModel::init(arch(), PriorSpec::isotropic(2, 1.0, 1.0).unwrap(), 3, ALPHA_FLOOR_EPS)
    }

    fn batch() -> (Array2<f64>, Vec<usize>) {
        (Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.7 + j as f64 * 0.3), vec![0, 1, 1, 0])
    }

    fn plain() -> BottleneckSettings {
        BottleneckSettings { lambda_g: 0.3, lambda_d: 0.3, clip: None }
    }

    #[test]
    fn loss_decomposes() {
        let m = model();
        let (x, y) = batch();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Noise::sample(&mut rng, 4, &m.arch);
        let pass = m.forward(x.view(), &y, &noise, &plain()).unwrap();
        let l = pass.losses;
        assert!((l.total - (l.task + 0.3 * l.gaussian + 0.3 * l.dirichlet)).abs() < 1e-10);
        assert_eq!(pass.posteriors.len(), 4);
        assert_eq!(pass.predictions().len(), 4);
    }

    #[test]
    fn prior_outputs_have_zero_regularisers() {
        let mut m = model();
        let a = m.arch;
        let p = &mut m.params;
        p.mu_w.fill(0.0);
        p.mu_b.fill(0.0);
        p.sigma_w.fill(0.0);
        p.sigma_b.fill(softplus_inverse(1.0 - SIGMA_EPS).unwrap());
        p.alpha_w.fill(0.0);
        p.alpha_b.fill(softplus_inverse(1.0 / a.n_components as f64 - ALPHA_FLOOR_EPS).unwrap());
        let (x, y) = batch();
        let pass = m.forward(x.view(), &y, &Noise::zeros(4, &a), &plain()).unwrap();
        assert!(pass.losses.gaussian.abs() < 1e-10, "{:?}", pass.losses);
        assert!(pass.losses.dirichlet.abs() < 1e-10, "{:?}", pass.losses);
    }

    #[test]
    fn clipped_posteriors_respect_bounds() {
        let mut m = model();
        m.params.mu_b.fill(5.0);
        m.params.alpha_b.fill(3.0);
        let cfg = ClipConfig::new(1.0, 0.0, 0.5, RenyiOrder::DEFAULT).unwrap();
        let settings = BottleneckSettings { clip: Some(cfg), ..plain() };
        let (x, _) = batch();
        for post in m.posteriors(x.view(), &settings).unwrap() {
            for i in 0..post.n_components() {
                assert!(crate::numerics::l2_norm(&post.means[i]).unwrap() <= 1.0);
                assert!(post.alphas[i] <= 0.5);
                assert!(post.stds[i].iter().all(|&s| s >= sigma_floor(1.0, RenyiOrder::DEFAULT)));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model();
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(matches!(m.forward(empty.view(), &[], &Noise::zeros(0, &m.arch), &plain()), Err(ModelError::EmptyBatch)));
        let wide = Array2::<f64>::zeros((1, 5));
        assert!(matches!(m.posteriors(wide.view(), &plain()), Err(ModelError::InputShape { .. })));
    }
}
