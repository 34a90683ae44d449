//! Clipping operators that keep posterior parameters inside the region where
//! the divergence bound is defined and small.
//!
//! * means are projected onto an L2 ball of radius `c_mu` around the prior mean;
//! * standard deviations are floored at `sqrt((λ−1)/λ)` times the prior std;
//! * pseudo-counts are clamped to `[max(c_alpha_min, 1e-3), c_alpha_max]`.
//!
//! Inputs lying exactly on a boundary pass through unchanged, and every
//! operator is idempotent bit for bit.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{sigma_prime, LOG_GAMMA_MARGIN, PRIOR_ID};
use crate::numerics::{l2_norm, NumericsError, RealVec};
use crate::order::RenyiOrder;
use crate::posterior::{DpPosterior, PosteriorDataset, PriorSpec};

/// Smallest pseudo-count ever produced by [`clip_alpha`], whatever the
/// configured lower bound.
pub const ALPHA_FLOOR_EPS: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ClipError {
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("prior std must be > 0, got {value} at dim {dim}")]
    NonPositivePriorStd { dim: usize, value: f64 },
    #[error("invalid clip config: {0}")]
    InvalidConfig(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// Clipping budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawClipConfig", into = "RawClipConfig")]
pub struct ClipConfig {
    c_mu: f64,
    c_alpha_min: f64,
    c_alpha_max: f64,
    lambda: RenyiOrder,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClipConfig {
    c_mu: f64,
    c_alpha_min: f64,
    c_alpha_max: f64,
    lambda: RenyiOrder,
}

impl TryFrom<RawClipConfig> for ClipConfig {
    type Error = ClipError;

    fn try_from(r: RawClipConfig) -> Result<Self, ClipError> {
        ClipConfig::new(r.c_mu, r.c_alpha_min, r.c_alpha_max, r.lambda)
    }
}

impl From<ClipConfig> for RawClipConfig {
    fn from(c: ClipConfig) -> Self {
        RawClipConfig { c_mu: c.c_mu, c_alpha_min: c.c_alpha_min, c_alpha_max: c.c_alpha_max, lambda: c.lambda }
    }
}

impl ClipConfig {
    pub fn new(c_mu: f64, c_alpha_min: f64, c_alpha_max: f64, lambda: RenyiOrder) -> Result<Self, ClipError> {
        let bad = |m: String| Err(ClipError::InvalidConfig(m));
        if !(c_mu > 0.0 && c_mu.is_finite()) {
            return bad(format!("c_mu must be > 0, got {c_mu}"));
        }
        if !(c_alpha_min >= 0.0 && c_alpha_max.is_finite() && c_alpha_min < c_alpha_max) {
            return bad(format!("need 0 <= c_alpha_min < c_alpha_max, got ({c_alpha_min}, {c_alpha_max})"));
        }
        if c_alpha_min.max(ALPHA_FLOOR_EPS) > c_alpha_max {
            return bad(format!("c_alpha_max {c_alpha_max} is below the pseudo-count floor {ALPHA_FLOOR_EPS}"));
        }
        Ok(Self { c_mu, c_alpha_min, c_alpha_max, lambda })
    }

    /// Task/backbone budget `(c_mu, c_alpha_min, c_alpha_max)` at λ = 1.1.
    /// Names are `<backbone>/<task>`, e.g. `bert-base/mrpc`.
    pub fn preset(name: &str) -> Result<Self, ClipError> {
        let (backbone, task) = name.split_once('/').ok_or_else(|| ClipError::UnknownPreset(name.into()))?;
        let col = match backbone {
            "bert-base" => 0,
            "bert-large" => 1,
            "roberta-base" => 2,
            _ => return Err(ClipError::UnknownPreset(name.into())),
        };
        let row = PRESETS
            .iter()
            .find(|(t, _)| *t == task)
            .ok_or_else(|| ClipError::UnknownPreset(name.into()))?;
        let (c_mu, c_min, c_max) = row.1[col];
        Self::new(c_mu, c_min, c_max, RenyiOrder::DEFAULT)
    }

    pub fn preset_names() -> impl Iterator<Item = String> {
        PRESETS.iter().flat_map(|(task, _)| {
            ["bert-base", "bert-large", "roberta-base"].into_iter().map(move |b| format!("{b}/{task}"))
        })
    }

    pub fn c_mu(&self) -> f64 {
        self.c_mu
    }

    pub fn c_alpha_min(&self) -> f64 {
        self.c_alpha_min
    }

    pub fn c_alpha_max(&self) -> f64 {
        self.c_alpha_max
    }

    pub fn lambda(&self) -> RenyiOrder {
        self.lambda
    }

    /// Lower clamp bound actually applied: `max(c_alpha_min, 1e-3)`.
    pub fn effective_alpha_floor(&self) -> f64 {
        self.c_alpha_min.max(ALPHA_FLOOR_EPS)
    }

    /// `λ·floor − (λ−1)·cap`. Positive means every lnΓ argument that mixes
    /// two clipped pseudo-counts stays positive.
    pub fn alpha_margin(&self) -> f64 {
        let l = self.lambda.value();
        l * self.effective_alpha_floor() - (l - 1.0) * self.c_alpha_max
    }
}

// (c_mu, c_alpha_min, c_alpha_max) for BERT-Base, BERT-Large, RoBERTa-Base.
const PRESETS: [(&str, [(f64, f64, f64); 3]); 5] = [
    ("mrpc", [(2.0, 0.0, 0.5), (3.0, 0.0, 0.7), (3.0, 0.0, 0.7)]),
    ("qnli", [(7.0, 0.0, 1.0), (7.0, 0.0, 1.0), (7.0, 0.0, 1.0)]),
    ("sst2", [(2.0, 0.0, 1.0), (3.0, 0.0, 1.0), (3.0, 0.0, 1.0)]),
    ("rte", [(6.0, 0.0, 0.5), (6.0, 0.0, 0.6), (6.0, 0.0, 0.6)]),
    ("stsb", [(10.0, 0.0, 1.0), (10.0, 0.0, 1.0), (10.0, 0.0, 1.0)]),
];

/// Projects `mu` onto the ball of radius `c_mu` centred at `prior_mean`.
pub fn clip_mean(mu: &RealVec, prior_mean: &RealVec, c_mu: f64) -> Result<RealVec, ClipError> {
    if mu.len() != prior_mean.len() {
        return Err(ClipError::LengthMismatch(mu.len(), prior_mean.len()));
    }
    let diff: Vec<f64> = mu.iter().zip(prior_mean.iter()).map(|(m, p)| m - p).collect();
    let dist = l2_norm(&diff)?;
    if dist <= c_mu {
        return Ok(mu.clone());
    }
    let project = |scale: f64| -> Vec<f64> { diff.iter().zip(prior_mean.iter()).map(|(d, p)| p + d * scale).collect() };
    let distance = |v: &[f64]| {
        let d: Vec<f64> = v.iter().zip(prior_mean.iter()).map(|(x, p)| x - p).collect();
        l2_norm(&d).expect("non-empty")
    };
    // Rounding can leave the projected point a few ulps outside the ball,
    // which would break idempotence; shrink until it is inside.
    let mut scale = c_mu / dist;
    let mut out = project(scale);
    let mut step = f64::EPSILON;
    while distance(&out) > c_mu {
        scale *= 1.0 - step;
        step *= 2.0;
        out = project(scale);
    }
    Ok(RealVec::new(out)?)
}

/// Floors each standard deviation at `sqrt((λ−1)/λ)·prior_std`.
pub fn clip_sigma(sigma: &RealVec, prior_std: &RealVec, lambda: RenyiOrder) -> Result<RealVec, ClipError> {
    if sigma.len() != prior_std.len() {
        return Err(ClipError::LengthMismatch(sigma.len(), prior_std.len()));
    }
    let mut out = Vec::with_capacity(sigma.len());
    for (dim, (&s, &p)) in sigma.iter().zip(prior_std.iter()).enumerate() {
        if !(p > 0.0 && p.is_finite()) {
            return Err(ClipError::NonPositivePriorStd { dim, value: p });
        }
        out.push(s.max(sigma_floor(p, lambda)));
    }
    Ok(RealVec::new(out)?)
}

/// Floor applied by [`clip_sigma`] for one dimension: the smallest float
/// `>= sqrt((λ−1)/λ)·prior_std` whose σ′ radicand against `prior_std` is
/// strictly positive. At the exact real floor the radicand is zero and the
/// bound is infinite.
pub fn sigma_floor(prior_std: f64, lambda: RenyiOrder) -> f64 {
    let l = lambda.value();
    let mut s = lambda.sigma_floor_ratio() * prior_std;
    while !((1.0 - l) * prior_std * prior_std + l * s * s > 0.0) {
        s = s.next_up();
    }
    s
}

/// Clamps a pseudo-count to `[effective_alpha_floor, c_alpha_max]`.
pub fn clip_alpha(alpha: f64, cfg: &ClipConfig) -> f64 {
    alpha.clamp(cfg.effective_alpha_floor(), cfg.c_alpha_max)
}

/// Applies all three operators to every component.
pub fn clip_posterior(p: &DpPosterior, prior: &PriorSpec, cfg: &ClipConfig) -> Result<DpPosterior, ClipError> {
    let means = p.means.iter().map(|m| clip_mean(m, &prior.mean, cfg.c_mu)).collect::<Result<_, _>>()?;
    let stds = p.stds.iter().map(|s| clip_sigma(s, &prior.std, cfg.lambda)).collect::<Result<_, _>>()?;
    let alphas = p.alphas.iter().map(|&a| clip_alpha(a, cfg)).collect();
    Ok(DpPosterior { means, stds, alphas, kappas: p.kappas.clone() })
}

/// Clips every example of a dataset against its own prior.
pub fn clip_dataset(ds: &PosteriorDataset, cfg: &ClipConfig) -> Result<PosteriorDataset, ClipError> {
    let mut out = ds.clone();
    for ex in &mut out.examples {
        ex.posterior = clip_posterior(&ex.posterior, &ds.prior, cfg)?;
    }
    Ok(out)
}

/// A constraint that a clipped dataset fails.
#[derive(Debug, Clone, PartialEq)]
pub enum CertificateViolation {
    MeanOutsideBall { id: String, component: usize, distance: f64 },
    SigmaBelowFloor { id: String, component: usize, dim: usize, sigma: f64, floor: f64 },
    AlphaOutOfRange { id: String, component: usize, alpha: f64 },
    SigmaRadicand { id_q: String, id_qp: String, component: usize, dim: usize, radicand: f64 },
    LogGammaArgument { id_q: String, id_qp: String, component: Option<usize>, argument: f64 },
}

impl fmt::Display for CertificateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CertificateViolation::*;
        match self {
            MeanOutsideBall { id, component, distance } => {
                write!(f, "{id}[{component}]: mean at distance {distance} from prior mean")
            }
            SigmaBelowFloor { id, component, dim, sigma, floor } => {
                write!(f, "{id}[{component}][{dim}]: sigma {sigma} below floor {floor}")
            }
            AlphaOutOfRange { id, component, alpha } => write!(f, "{id}[{component}]: alpha {alpha} out of range"),
            SigmaRadicand { id_q, id_qp, component, dim, radicand } => {
                write!(f, "({id_q}, {id_qp}) component {component} dim {dim}: sigma' radicand {radicand}")
            }
            LogGammaArgument { id_q, id_qp, component, argument } => match component {
                Some(i) => write!(f, "({id_q}, {id_qp}) component {i}: lnGamma argument {argument}"),
                None => write!(f, "({id_q}, {id_qp}) global: lnGamma argument {argument}"),
            },
        }
    }
}

/// Outcome of [`feasibility_certificate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `λ·floor − (λ−1)·cap`; see [`ClipConfig::alpha_margin`].
    pub alpha_margin: f64,
    /// No standard deviation in the dataset exceeds the prior std, so the
    /// σ floor also covers every pair of examples.
    pub sigmas_within_prior: bool,
    /// The configuration alone rules out infeasible pairs.
    pub guaranteed: bool,
    /// Exhaustive check found nothing.
    pub holds: bool,
    pub violations: Vec<CertificateViolation>,
}

/// Checks a clipped dataset: per-example clip constraints, and for every
/// ordered pair (other examples and the prior as `q'`) that each σ′ radicand
/// and each lnΓ argument of the bound is positive.
pub fn feasibility_certificate(ds: &PosteriorDataset, cfg: &ClipConfig) -> Certificate {
    let mut violations = Vec::new();
    let floor_a = cfg.effective_alpha_floor();

    for ex in &ds.examples {
        let p = &ex.posterior;
        for i in 0..p.n_components() {
            let diff: Vec<f64> = p.means[i].iter().zip(ds.prior.mean.iter()).map(|(m, c)| m - c).collect();
            let distance = l2_norm(&diff).unwrap_or(0.0);
            if distance > cfg.c_mu {
                violations.push(CertificateViolation::MeanOutsideBall { id: ex.id.clone(), component: i, distance });
            }
            for (j, (&s, &ps)) in p.stds[i].iter().zip(ds.prior.std.iter()).enumerate() {
                let floor = sigma_floor(ps, cfg.lambda);
                if s < floor {
                    violations.push(CertificateViolation::SigmaBelowFloor {
                        id: ex.id.clone(),
                        component: i,
                        dim: j,
                        sigma: s,
                        floor,
                    });
                }
            }
            let a = p.alphas[i];
            if !(floor_a..=cfg.c_alpha_max).contains(&a) {
                violations.push(CertificateViolation::AlphaOutOfRange { id: ex.id.clone(), component: i, alpha: a });
            }
        }
    }

    let n = ds.n_components().unwrap_or(1);
    let prior = ds.prior.as_posterior(n);
    let mut others: Vec<(&str, &DpPosterior)> = ds.examples.iter().map(|e| (e.id.as_str(), &e.posterior)).collect();
    others.push((PRIOR_ID, &prior));

    for q in &ds.examples {
        for &(id_qp, qp) in &others {
            if id_qp == q.id {
                continue;
            }
            check_pair(&q.id, &q.posterior, id_qp, qp, cfg.lambda, &mut violations);
        }
    }

    let sigmas_within_prior = ds.examples.iter().all(|e| {
        e.posterior.stds.iter().all(|s| s.iter().zip(ds.prior.std.iter()).all(|(a, b)| a <= b))
    });
    let alpha_margin = cfg.alpha_margin();
    Certificate {
        alpha_margin,
        sigmas_within_prior,
        guaranteed: alpha_margin > 0.0 && sigmas_within_prior,
        holds: violations.is_empty(),
        violations,
    }
}

fn check_pair(
    id_q: &str,
    q: &DpPosterior,
    id_qp: &str,
    qp: &DpPosterior,
    order: RenyiOrder,
    out: &mut Vec<CertificateViolation>,
) {
    let lambda = order.value();
    let mut arg = |component: Option<usize>, a: f64, b: f64| {
        for argument in [lambda * a - (lambda - 1.0) * b, a, b] {
            if !(argument > LOG_GAMMA_MARGIN) {
                out.push(CertificateViolation::LogGammaArgument {
                    id_q: id_q.to_owned(),
                    id_qp: id_qp.to_owned(),
                    component,
                    argument,
                });
                break;
            }
        }
    };
    arg(None, q.alpha_total(), qp.alpha_total());
    for i in 0..q.n_components().min(qp.n_components()) {
        let k = q.kappas[i];
        arg(Some(i), q.alphas[i] / k, qp.alphas[i] / k);
    }
    for i in 0..q.n_components().min(qp.n_components()) {
        let (sq, sqp) = (&q.stds[i], &qp.stds[i]);
        if sq.len() != sqp.len() {
            continue;
        }
        if let Err(v) = sigma_prime(sq, sqp, order) {
            out.push(CertificateViolation::SigmaRadicand {
                id_q: id_q.to_owned(),
                id_qp: id_qp.to_owned(),
                component: i,
                dim: v.dim,
                radicand: v.radicand,
            });
        }
    }
}
