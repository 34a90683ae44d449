//! Dirichlet-process posterior parameters, priors and the dataset file format.
//!
//! A posterior carries `n + 1` components; each has a mean vector, a standard
//! deviation vector, a pseudo-count and a sample multiplicity κ (1 unless
//! overridden). The total pseudo-count is always recomputed from the
//! components and never stored.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::RealVec;
use crate::order::RenyiOrder;

/// The data-independent reference distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: RealVec,
    pub std: RealVec,
    /// Pseudo-count of the prior, shared equally between components.
    pub alpha0_prior: f64,
}

impl PriorSpec {
    pub fn new(mean: RealVec, std: RealVec, alpha0_prior: f64) -> Result<Self, PosteriorError> {
        let prior = Self { mean, std, alpha0_prior };
        let violations = prior.violations();
        if violations.is_empty() {
            Ok(prior)
        } else {
            Err(PosteriorError::Invalid(violations))
        }
    }

    /// Zero mean, isotropic standard deviation.
    pub fn isotropic(dim: usize, std: f64, alpha0_prior: f64) -> Result<Self, PosteriorError> {
        let std = RealVec::filled(dim, std).map_err(|e| PosteriorError::Numerics(e.to_string()))?;
        Self::new(RealVec::zeros(dim), std, alpha0_prior)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Per-component prior pseudo-count when split over `n_components`.
    pub fn component_alpha(&self, n_components: usize) -> f64 {
        self.alpha0_prior / n_components as f64
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let at = |field, dim, rule| Violation { example: None, component: None, field, dim, rule };
        if self.mean.is_empty() {
            out.push(at(Field::PriorMean, None, Rule::Empty));
        }
        if self.std.len() != self.mean.len() {
            out.push(at(
                Field::PriorStd,
                None,
                Rule::DimensionMismatch { expected: self.mean.len(), found: self.std.len() },
            ));
        }
        for (j, &s) in self.std.iter().enumerate() {
            if s <= 0.0 {
                out.push(at(Field::PriorStd, Some(j), Rule::NotPositive(s)));
            }
        }
        if !(self.alpha0_prior > 0.0 && self.alpha0_prior.is_finite()) {
            out.push(at(Field::PriorAlpha, None, Rule::NotPositive(self.alpha0_prior)));
        }
        out
    }

    /// The prior materialised as a posterior with `n_components` identical
    /// components, each holding an equal share of the prior pseudo-count.
    pub fn as_posterior(&self, n_components: usize) -> DpPosterior {
        assert!(n_components >= 1, "a posterior needs at least one component");
        let alpha = self.component_alpha(n_components);
        DpPosterior {
            means: vec![self.mean.clone(); n_components],
            stds: vec![self.std.clone(); n_components],
            alphas: vec![alpha; n_components],
            kappas: vec![1.0; n_components],
        }
    }
}

/// Variational parameters of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct DpPosterior {
    pub means: Vec<RealVec>,
    pub stds: Vec<RealVec>,
    pub alphas: Vec<f64>,
    pub kappas: Vec<f64>,
}

impl DpPosterior {
    /// Builds a validated posterior with κ = 1 for every component.
    pub fn new(means: Vec<RealVec>, stds: Vec<RealVec>, alphas: Vec<f64>) -> Result<Self, PosteriorError> {
        let kappas = vec![1.0; alphas.len()];
        Self::with_kappas(means, stds, alphas, kappas)
    }

    pub fn with_kappas(
        means: Vec<RealVec>,
        stds: Vec<RealVec>,
        alphas: Vec<f64>,
        kappas: Vec<f64>,
    ) -> Result<Self, PosteriorError> {
        let p = Self { means, stds, alphas, kappas };
        let violations = p.violations(None, None);
        if violations.is_empty() {
            Ok(p)
        } else {
            Err(PosteriorError::Invalid(violations))
        }
    }

    pub fn n_components(&self) -> usize {
        self.alphas.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    /// α₀, the sum of the component pseudo-counts.
    pub fn alpha_total(&self) -> f64 {
        self.alphas.iter().sum()
    }

    /// Checks every structural and positivity rule. `dim` pins the expected
    /// vector length (otherwise the first mean's length is used).
    pub fn violations(&self, id: Option<&str>, dim: Option<usize>) -> Vec<Violation> {
        let mut out = Vec::new();
        let example = id.map(str::to_owned);
        let push = |out: &mut Vec<Violation>, component, field, dim, rule| {
            out.push(Violation { example: example.clone(), component, field, dim, rule })
        };

        let n = self.alphas.len();
        if n == 0 {
            push(&mut out, None, Field::Alphas, None, Rule::Empty);
            return out;
        }
        for (field, len) in [
            (Field::Means, self.means.len()),
            (Field::Stds, self.stds.len()),
            (Field::Kappas, self.kappas.len()),
        ] {
            if len != n {
                push(&mut out, None, field, None, Rule::ComponentCountMismatch { expected: n, found: len });
            }
        }
        let d = dim.unwrap_or_else(|| self.dim());
        if d == 0 {
            push(&mut out, None, Field::Means, None, Rule::Empty);
        }
        for (i, m) in self.means.iter().enumerate() {
            if m.len() != d {
                push(&mut out, Some(i), Field::Means, None, Rule::DimensionMismatch { expected: d, found: m.len() });
            }
        }
        for (i, s) in self.stds.iter().enumerate() {
            if s.len() != d {
                push(&mut out, Some(i), Field::Stds, None, Rule::DimensionMismatch { expected: d, found: s.len() });
            }
            for (j, &v) in s.iter().enumerate() {
                if v <= 0.0 {
                    push(&mut out, Some(i), Field::Stds, Some(j), Rule::NotPositive(v));
                }
            }
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(a > 0.0 && a.is_finite()) {
                push(&mut out, Some(i), Field::Alphas, None, Rule::NotPositive(a));
            }
        }
        for (i, &k) in self.kappas.iter().enumerate() {
            if !(k > 0.0 && k.is_finite()) {
                push(&mut out, Some(i), Field::Kappas, None, Rule::NotPositive(k));
            }
        }
        out
    }
}

/// Shorthand for [`PriorSpec::as_posterior`].
pub fn prior_as_posterior(prior: &PriorSpec, n_plus_1: usize) -> DpPosterior {
    prior.as_posterior(n_plus_1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub posterior: DpPosterior,
}

/// A prior, a Rényi order, and a list of identified posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDataset {
    pub lambda: RenyiOrder,
    pub prior: PriorSpec,
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    PriorMean,
    PriorStd,
    PriorAlpha,
    Id,
    Means,
    Stds,
    Alphas,
    Kappas,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    NotPositive(f64),
    Empty,
    DimensionMismatch { expected: usize, found: usize },
    ComponentCountMismatch { expected: usize, found: usize },
    DuplicateId,
}

/// One broken invariant, located as precisely as possible.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub example: Option<String>,
    pub component: Option<usize>,
    pub field: Field,
    pub dim: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.example {
            Some(id) => write!(f, "example {id:?}")?,
            None => write!(f, "prior")?,
        }
        if let Some(i) = self.component {
            write!(f, " component {i}")?;
        }
        write!(f, " {:?}", self.field)?;
        if let Some(j) = self.dim {
            write!(f, "[{j}]")?;
        }
        match &self.rule {
            Rule::NotPositive(v) => write!(f, ": must be > 0, got {v}"),
            Rule::Empty => write!(f, ": must not be empty"),
            Rule::DimensionMismatch { expected, found } => {
                write!(f, ": expected dimension {expected}, found {found}")
            }
            Rule::ComponentCountMismatch { expected, found } => {
                write!(f, ": expected {expected} components, found {found}")
            }
            Rule::DuplicateId => write!(f, ": duplicate id"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("invalid parameters: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    Numerics(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for DatasetError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            return DatasetError::Io(e.into());
        }
        DatasetError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// Every broken invariant of the dataset; empty iff the dataset is valid.
pub fn validate(ds: &PosteriorDataset) -> Vec<Violation> {
    let mut out = ds.prior.violations();
    let d = ds.prior.dim();
    let n = ds.examples.first().map(|e| e.posterior.n_components());
    let mut seen = HashSet::new();
    for ex in &ds.examples {
        if !seen.insert(ex.id.as_str()) {
            out.push(Violation {
                example: Some(ex.id.clone()),
                component: None,
                field: Field::Id,
                dim: None,
                rule: Rule::DuplicateId,
            });
        }
        if let Some(n) = n {
            let found = ex.posterior.n_components();
            if found != n {
                out.push(Violation {
                    example: Some(ex.id.clone()),
                    component: None,
                    field: Field::Alphas,
                    dim: None,
                    rule: Rule::ComponentCountMismatch { expected: n, found },
                });
            }
        }
        out.extend(ex.posterior.violations(Some(&ex.id), Some(d)));
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRecord {
    lambda: RenyiOrder,
    prior: PriorSpec,
    examples: Vec<ExampleRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleRecord {
    id: String,
    means: Vec<RealVec>,
    stds: Vec<RealVec>,
    alphas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappas: Option<Vec<f64>>,
}

impl PosteriorDataset {
    /// Parses the JSON dataset format. Structural problems are parse errors;
    /// value-level invariants are left to [`validate`].
    pub fn load<R: Read>(source: R) -> Result<Self, DatasetError> {
        let record: DatasetRecord = serde_json::from_reader(source)?;
        Ok(record.into())
    }

    pub fn from_json_str(s: &str) -> Result<Self, DatasetError> {
        Self::load(s.as_bytes())
    }

    /// Writes the dataset as pretty-printed JSON. Reals use the shortest
    /// representation that parses back to the same bits.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), DatasetError> {
        serde_json::to_writer_pretty(&mut sink, &DatasetRecord::from(self))?;
        sink.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn n_components(&self) -> Option<usize> {
        self.examples.first().map(|e| e.posterior.n_components())
    }

    pub fn get(&self, id: &str) -> Option<&DpPosterior> {
        self.examples.iter().find(|e| e.id == id).map(|e| &e.posterior)
    }
}

impl From<DatasetRecord> for PosteriorDataset {
    fn from(r: DatasetRecord) -> Self {
        let examples = r
            .examples
            .into_iter()
            .map(|e| {
                let kappas = e.kappas.unwrap_or_else(|| vec![1.0; e.alphas.len()]);
                Example {
                    id: e.id,
                    posterior: DpPosterior { means: e.means, stds: e.stds, alphas: e.alphas, kappas },
                }
            })
            .collect();
        Self { lambda: r.lambda, prior: r.prior, examples }
    }
}

impl From<&PosteriorDataset> for DatasetRecord {
    fn from(ds: &PosteriorDataset) -> Self {
        let examples = ds
            .examples
            .iter()
            .map(|e| {
                let p = &e.posterior;
                let kappas = if p.kappas.iter().all(|&k| k == 1.0) { None } else { Some(p.kappas.clone()) };
                ExampleRecord {
                    id: e.id.clone(),
                    means: p.means.clone(),
                    stds: p.stds.clone(),
                    alphas: p.alphas.clone(),
                    kappas,
                }
            })
            .collect();
        Self { lambda: ds.lambda, prior: ds.prior.clone(), examples }
    }
}
