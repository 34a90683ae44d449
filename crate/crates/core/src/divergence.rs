//! Closed-form upper bound on the Rényi divergence between two
//! Dirichlet-process posteriors, and pairwise audits over a dataset.
//!
//! The bound splits into three groups: a global term on the total
//! pseudo-counts α₀, a local term on each component's pseudo-count, and a
//! Gaussian term on the component means and standard deviations. Parameters
//! for which any group is undefined are reported as [`Infeasibility`] values
//! so that one bad pair never aborts a dataset audit.

use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::{log_gamma, CompensatedSum, RealVec};
use crate::order::RenyiOrder;
use crate::posterior::{validate, DpPosterior, PosteriorDataset, Violation};

/// lnΓ arguments at or below this are treated as infeasible.
pub const LOG_GAMMA_MARGIN: f64 = 1e-12;

/// Identifier used for the prior in `vs_prior` reports.
pub const PRIOR_ID: &str = "prior";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermGroup {
    Global,
    Local,
    Gaussian,
}

/// Why a bound is undefined.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    /// `(1 − λ)σ'² + λσ²` is not positive.
    SigmaRadicand { component: usize, dim: usize, radicand: f64 },
    /// A lnΓ argument is not safely positive.
    LogGammaArgument { group: TermGroup, component: Option<usize>, argument: f64 },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::SigmaRadicand { component, dim, radicand } => {
                write!(f, "sigma' radicand {radicand} <= 0 at component {component}, dim {dim}")
            }
            Infeasibility::LogGammaArgument { group, component, argument } => {
                write!(f, "lnGamma argument {argument} <= {LOG_GAMMA_MARGIN} in {group:?} term")?;
                if let Some(i) = component {
                    write!(f, " (component {i})")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("infeasible: {0}")]
    Infeasible(Infeasibility),
    #[error("posteriors are not comparable: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} examples, found {found}")]
    TooFewExamples { needed: usize, found: usize },
    #[error("invalid dataset: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidDataset(Vec<Violation>),
    #[error("report parse error at line {line}: {message}")]
    ReportParse { line: u64, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The three groups of the bound and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenyiTerms {
    pub global_alpha: f64,
    pub local_alpha: f64,
    pub gaussian: f64,
    pub total: f64,
}

/// Offending dimension of a failed [`sigma_prime`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadicandViolation {
    pub dim: usize,
    pub radicand: f64,
}

/// Elementwise `sqrt((1 − λ)·σ_qp² + λ·σ_q²)`.
///
/// # Panics
/// If the two vectors differ in length.
pub fn sigma_prime(sigma_q: &[f64], sigma_qp: &[f64], order: RenyiOrder) -> Result<RealVec, RadicandViolation> {
    assert_eq!(sigma_q.len(), sigma_qp.len(), "sigma vectors differ in length");
    let lambda = order.value();
    let mut out = Vec::with_capacity(sigma_q.len());
    for (dim, (&sq, &sqp)) in sigma_q.iter().zip(sigma_qp).enumerate() {
        let radicand = (1.0 - lambda) * sqp * sqp + lambda * sq * sq;
        if !(radicand > 0.0) {
            return Err(RadicandViolation { dim, radicand });
        }
        out.push(radicand.sqrt());
    }
    Ok(RealVec::new(out).expect("square roots of positive finite values are finite"))
}

fn gamma_arg(x: f64, group: TermGroup, component: Option<usize>) -> Result<f64, Infeasibility> {
    if x > LOG_GAMMA_MARGIN && x.is_finite() {
        Ok(x)
    } else {
        Err(Infeasibility::LogGammaArgument { group, component, argument: x })
    }
}

/// `(1/(λ−1))·lnΓ(λa − (λ−1)b) + lnΓ(b) − (λ/(λ−1))·lnΓ(a)`; the shape shared
/// by the global and local pseudo-count terms.
fn gamma_triple(a: f64, b: f64, lambda: f64, group: TermGroup, component: Option<usize>) -> Result<f64, Infeasibility> {
    let mixed = gamma_arg(lambda * a - (lambda - 1.0) * b, group, component)?;
    let a = gamma_arg(a, group, component)?;
    let b = gamma_arg(b, group, component)?;
    let lg = |x: f64| log_gamma(x).expect("argument checked positive");
    Ok(lg(mixed) / (lambda - 1.0) + lg(b) - lambda / (lambda - 1.0) * lg(a))
}

fn check_shapes(q: &DpPosterior, qp: &DpPosterior) -> Result<(), DivergenceError> {
    let n = q.n_components();
    let bad = |what: String| Err(DivergenceError::ShapeMismatch(what));
    if n == 0 || qp.n_components() != n {
        return bad(format!("{} vs {} components", n, qp.n_components()));
    }
    for p in [q, qp] {
        if p.means.len() != n || p.stds.len() != n || p.kappas.len() != n {
            return bad("per-component lists differ in length".into());
        }
    }
    let d = q.dim();
    let dims_ok = q.means.iter().chain(&q.stds).chain(&qp.means).chain(&qp.stds).all(|v| v.len() == d);
    if d == 0 || !dims_ok {
        return bad("vector dimensions differ".into());
    }
    if q.kappas != qp.kappas {
        return bad("component multiplicities differ".into());
    }
    Ok(())
}

/// Upper bound on `D_λ(DP_q ‖ DP_qp)`.
pub fn renyi_bound(q: &DpPosterior, qp: &DpPosterior, order: RenyiOrder) -> Result<RenyiTerms, DivergenceError> {
    check_shapes(q, qp)?;
    bound_terms(q, qp, order).map_err(DivergenceError::Infeasible)
}

fn bound_terms(q: &DpPosterior, qp: &DpPosterior, order: RenyiOrder) -> Result<RenyiTerms, Infeasibility> {
    let lambda = order.value();

    let global_alpha = -gamma_triple(q.alpha_total(), qp.alpha_total(), lambda, TermGroup::Global, None)?;

    let mut local_alpha = 0.0;
    for (i, ((&a, &b), &kappa)) in q.alphas.iter().zip(&qp.alphas).zip(&q.kappas).enumerate() {
        local_alpha += kappa * gamma_triple(a / kappa, b / kappa, lambda, TermGroup::Local, Some(i))?;
    }

    let mut gaussian = 0.0;
    for i in 0..q.n_components() {
        let (sq, sqp) = (&q.stds[i], &qp.stds[i]);
        let mixed = sigma_prime(sq, sqp, order).map_err(|v| Infeasibility::SigmaRadicand {
            component: i,
            dim: v.dim,
            radicand: v.radicand,
        })?;
        let mut quad = 0.0;
        let mut log_ratio = 0.0;
        for j in 0..mixed.len() {
            let z = (q.means[i][j] - qp.means[i][j]) / mixed[j];
            quad += z * z;
            log_ratio += mixed[j].ln() - (1.0 - lambda) * sqp[j].ln() - lambda * sq[j].ln();
        }
        gaussian += q.kappas[i] * (0.5 * lambda * quad + log_ratio / (1.0 - lambda));
    }

    Ok(RenyiTerms { global_alpha, local_alpha, gaussian, total: global_alpha + local_alpha + gaussian })
}

/// Which pairs a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairMode {
    /// Every ordered pair of distinct examples.
    #[default]
    VsAllPairs,
    /// Each example against the prior materialised as a posterior.
    VsPrior,
}

impl std::str::FromStr for PairMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vs_all_pairs" => Ok(Self::VsAllPairs),
            "vs_prior" => Ok(Self::VsPrior),
            other => Err(format!("unknown pair mode {other:?} (expected vs_all_pairs or vs_prior)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDivergence {
    pub id_q: String,
    pub id_qp: String,
    /// `+∞` when infeasible.
    pub divergence: f64,
    pub feasible: bool,
    pub reason: Option<Infeasibility>,
}

/// Per-pair bounds plus worst-case and average aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct RenyiReport {
    pub pairs: Vec<PairDivergence>,
    /// Maximum over feasible pairs, or `+∞` if any pair is infeasible.
    pub max: f64,
    /// Mean over feasible pairs (NaN if there are none).
    pub avg: f64,
    pub n_infeasible: usize,
}

impl RenyiReport {
    /// Aggregates pairs that are already in their final order.
    pub fn from_pairs(pairs: Vec<PairDivergence>) -> Self {
        let n_infeasible = pairs.iter().filter(|p| !p.feasible).count();
        let feasible = || pairs.iter().filter(|p| p.feasible).map(|p| p.divergence);
        let n_feasible = pairs.len() - n_infeasible;
        let max = if n_infeasible > 0 {
            f64::INFINITY
        } else {
            feasible().fold(f64::NEG_INFINITY, f64::max)
        };
        let avg = if n_feasible == 0 {
            f64::NAN
        } else {
            feasible().collect::<CompensatedSum>().value() / n_feasible as f64
        };
        let max = if pairs.is_empty() { f64::NAN } else { max };
        Self { pairs, max, avg, n_infeasible }
    }

    pub fn is_fully_feasible(&self) -> bool {
        self.n_infeasible == 0 && !self.pairs.is_empty()
    }

    pub fn feasible_divergences(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().filter(|p| p.feasible).map(|p| p.divergence)
    }

    /// Writes `id_q,id_qp,divergence,feasible` rows followed by the
    /// `max`, `avg` and `n_infeasible` summary rows.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), DivergenceError> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(sink);
        let io = |e: csv::Error| DivergenceError::Io(e.into());
        w.write_record(["id_q", "id_qp", "divergence", "feasible"]).map_err(io)?;
        for p in &self.pairs {
            w.write_record([&p.id_q, &p.id_qp, &fmt_real(p.divergence), &p.feasible.to_string()]).map_err(io)?;
        }
        w.write_record(["max", &fmt_real(self.max)]).map_err(io)?;
        w.write_record(["avg", &fmt_real(self.avg)]).map_err(io)?;
        w.write_record(["n_infeasible", &self.n_infeasible.to_string()]).map_err(io)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    /// Reads a report written by [`RenyiReport::write_csv`]. Aggregates are
    /// recomputed from the pair rows and checked against the summary rows.
    pub fn read_csv<R: Read>(source: R) -> Result<Self, DivergenceError> {
        let mut r = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(source);
        let mut pairs = Vec::new();
        let mut summary_max = None;
        for rec in r.records() {
            let rec = rec.map_err(|e| DivergenceError::ReportParse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse_err = |message: String| DivergenceError::ReportParse { line, message };
            let real = |s: &str| s.trim().parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}")));
            match rec.len() {
                4 => {
                    let feasible = match rec[3].trim() {
                        "true" => true,
                        "false" => false,
                        other => return Err(parse_err(format!("feasible flag {other:?}"))),
                    };
                    pairs.push(PairDivergence {
                        id_q: rec[0].to_owned(),
                        id_qp: rec[1].to_owned(),
                        divergence: real(&rec[2])?,
                        feasible,
                        reason: None,
                    });
                }
                2 => match &rec[0] {
                    "max" => summary_max = Some(real(&rec[1])?),
                    "avg" | "n_infeasible" => {}
                    other => return Err(parse_err(format!("unknown summary row {other:?}"))),
                },
                n => return Err(parse_err(format!("expected 2 or 4 fields, found {n}"))),
            }
        }
        let report = Self::from_pairs(pairs);
        if let Some(m) = summary_max {
            let agree = m == report.max || (m.is_nan() && report.max.is_nan());
            if !agree {
                return Err(DivergenceError::ReportParse {
                    line: 0,
                    message: format!("summary max {m} disagrees with pair rows ({})", report.max),
                });
            }
        }
        Ok(report)
    }
}

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Evaluates the bound over the pairs selected by `mode`.
///
/// Pairs are evaluated in parallel; the pair list is sorted by
/// `(id_q, id_qp)` and aggregates are computed in that order, so the result
/// does not depend on scheduling.
pub fn pairwise_report(ds: &PosteriorDataset, mode: PairMode) -> Result<RenyiReport, DivergenceError> {
    let violations = validate(ds);
    if !violations.is_empty() {
        return Err(DivergenceError::InvalidDataset(violations));
    }
    let needed = match mode {
        PairMode::VsAllPairs => 2,
        PairMode::VsPrior => 1,
    };
    if ds.examples.len() < needed {
        return Err(DivergenceError::TooFewExamples { needed, found: ds.examples.len() });
    }

    let mut sorted: Vec<_> = ds.examples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let order = ds.lambda;

    let pairs: Vec<PairDivergence> = match mode {
        PairMode::VsAllPairs => {
            let n = sorted.len();
            (0..n * n)
                .into_par_iter()
                .filter(|k| k / n != k % n)
                .map(|k| {
                    let (q, qp) = (sorted[k / n], sorted[k % n]);
                    evaluate_pair(&q.id, &q.posterior, &qp.id, &qp.posterior, order)
                })
                .collect::<Result<_, _>>()?
        }
        PairMode::VsPrior => {
            let prior = ds.prior.as_posterior(ds.n_components().unwrap_or(1));
            sorted
                .par_iter()
                .map(|q| evaluate_pair(&q.id, &q.posterior, PRIOR_ID, &with_kappas(&prior, &q.posterior), order))
                .collect::<Result<_, _>>()?
        }
    };
    Ok(RenyiReport::from_pairs(pairs))
}

fn with_kappas(prior: &DpPosterior, like: &DpPosterior) -> DpPosterior {
    let mut p = prior.clone();
    p.kappas.clone_from(&like.kappas);
    p
}

fn evaluate_pair(
    id_q: &str,
    q: &DpPosterior,
    id_qp: &str,
    qp: &DpPosterior,
    order: RenyiOrder,
) -> Result<PairDivergence, DivergenceError> {
    let (divergence, feasible, reason) = match renyi_bound(q, qp, order) {
        Ok(t) => (t.total, true, None),
        Err(DivergenceError::Infeasible(r)) => (f64::INFINITY, false, Some(r)),
        Err(e) => return Err(e),
    };
    Ok(PairDivergence { id_q: id_q.to_owned(), id_qp: id_qp.to_owned(), divergence, feasible, reason })
}
