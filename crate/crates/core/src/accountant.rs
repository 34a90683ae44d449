//! Turns divergence statistics into `(ε, δ)` privacy budgets.
//!
//! Both modes share the base term `ln(1/δ)/λ`, which is the whole budget when
//! every pairwise divergence is zero:
//!
//! * `worst_case`: `ε = max_pair D + ln(1/δ)/λ`
//! * `bayesian_moment`: `ε = (1/λ)·ln(mean_pair e^{λD}) + ln(1/δ)/λ`
//!
//! The moment form never exceeds the worst case for the same report.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{fmt_real, RenyiReport};
use crate::order::RenyiOrder;

pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMode {
    #[default]
    WorstCase,
    BayesianMoment,
}

impl fmt::Display for AccountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccountingMode::WorstCase => "worst_case",
            AccountingMode::BayesianMoment => "bayesian_moment",
        })
    }
}

impl FromStr for AccountingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "worst_case" => Ok(Self::WorstCase),
            "bayesian_moment" => Ok(Self::BayesianMoment),
            other => Err(format!("unknown mode {other:?} (expected worst_case or bayesian_moment)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AccountantError {
    #[error("report has {0} infeasible pair(s); the budget is unbounded")]
    InfeasiblePairs(usize),
    #[error("report has no pairs")]
    EmptyReport,
    #[error("delta must lie in (0, 1], got {0}")]
    InvalidDelta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccountantConfig {
    pub lambda: RenyiOrder,
    pub delta: f64,
    pub mode: AccountingMode,
}

impl AccountantConfig {
    pub fn new(lambda: RenyiOrder, delta: f64, mode: AccountingMode) -> Result<Self, AccountantError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(AccountantError::InvalidDelta(delta));
        }
        Ok(Self { lambda, delta, mode })
    }

    /// `ln(1/δ)/λ`.
    pub fn base_term(&self) -> f64 {
        -self.delta.ln() / self.lambda.value()
    }
}

impl Default for AccountantConfig {
    fn default() -> Self {
        Self { lambda: RenyiOrder::DEFAULT, delta: DEFAULT_DELTA, mode: AccountingMode::WorstCase }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: RenyiOrder,
    pub mode: AccountingMode,
    /// The divergence statistic the budget was built from.
    pub rd_statistic: f64,
}

/// Converts a fully feasible report into a budget.
pub fn to_budget(report: &RenyiReport, cfg: &AccountantConfig) -> Result<PrivacyBudget, AccountantError> {
    if report.pairs.is_empty() {
        return Err(AccountantError::EmptyReport);
    }
    if report.n_infeasible > 0 {
        return Err(AccountantError::InfeasiblePairs(report.n_infeasible));
    }
    AccountantConfig::new(cfg.lambda, cfg.delta, cfg.mode)?;
    let lambda = cfg.lambda.value();
    let rd_statistic = match cfg.mode {
        AccountingMode::WorstCase => report.max,
        AccountingMode::BayesianMoment => {
            let scaled: Vec<f64> = report.feasible_divergences().map(|d| lambda * d).collect();
            (log_sum_exp(&scaled) - (scaled.len() as f64).ln()) / lambda
        }
    };
    Ok(PrivacyBudget {
        epsilon: rd_statistic + cfg.base_term(),
        delta: cfg.delta,
        lambda: cfg.lambda,
        mode: cfg.mode,
        rd_statistic,
    })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Reported privacy numbers for one audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub rd_max: f64,
    pub rd_avg: f64,
    /// Absent when the report has infeasible pairs.
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub lambda: f64,
    pub mode: AccountingMode,
    pub n_infeasible: usize,
}

pub fn audit_summary(report: &RenyiReport, budget: &PrivacyBudget) -> AuditSummary {
    AuditSummary {
        rd_max: report.max,
        rd_avg: report.avg,
        epsilon: Some(budget.epsilon),
        delta: budget.delta,
        lambda: budget.lambda.value(),
        mode: budget.mode,
        n_infeasible: report.n_infeasible,
    }
}

/// Summary for a report whose budget could not be computed.
pub fn audit_summary_without_budget(report: &RenyiReport, cfg: &AccountantConfig) -> AuditSummary {
    AuditSummary {
        rd_max: report.max,
        rd_avg: report.avg,
        epsilon: None,
        delta: cfg.delta,
        lambda: cfg.lambda.value(),
        mode: cfg.mode,
        n_infeasible: report.n_infeasible,
    }
}

impl AuditSummary {
    pub fn to_text(&self) -> String {
        let eps = self.epsilon.map_or_else(|| "undefined (infeasible pairs)".to_owned(), fmt_real);
        format!(
            "RD max       {}\nRD avg       {}\nepsilon_mu   {}\ndelta_mu     {}\nlambda       {}\nmode         {}\nn_infeasible {}\n",
            fmt_real(self.rd_max),
            fmt_real(self.rd_avg),
            eps,
            fmt_real(self.delta),
            self.lambda,
            self.mode,
            self.n_infeasible,
        )
    }

    /// JSON document; non-finite aggregates are written as `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serialisable") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::PairDivergence;

    fn report(values: &[f64]) -> RenyiReport {
        RenyiReport::from_pairs(
            values
                .iter()
                .enumerate()
                .map(|(i, &d)| PairDivergence {
                    id_q: format!("q{i}"),
                    id_qp: "p".into(),
                    divergence: d,
                    feasible: true,
                    reason: None,
                })
                .collect(),
        )
    }

    #[test]
    fn zero_divergence_floor() {
        let b = to_budget(&report(&[0.0, 0.0]), &AccountantConfig::default()).unwrap();
        assert!((b.epsilon - 10.466_295_877_245_662).abs() < 1e-12);
    }

    #[test]
    fn unit_delta_removes_base_term() {
        for mode in [AccountingMode::WorstCase, AccountingMode::BayesianMoment] {
            let cfg = AccountantConfig::new(RenyiOrder::DEFAULT, 1.0, mode).unwrap();
            let b = to_budget(&report(&[0.7]), &cfg).unwrap();
            assert!((b.epsilon - 0.7).abs() < 1e-15);
            assert_eq!(b.epsilon, b.rd_statistic);
        }
    }

    #[test]
    fn worst_case_adds_max() {
        let b = to_budget(&report(&[0.1, 0.956, 0.3]), &AccountantConfig::default()).unwrap();
        assert!((b.epsilon - 11.422_295_877_245_662).abs() < 1e-9);
        assert!((b.epsilon - 11.422).abs() < 1e-3);
    }

    #[test]
    fn moment_mode_is_below_worst_case() {
        let r = report(&[0.1, 0.956, 0.3, 800.0]);
        let wc = to_budget(&r, &AccountantConfig::default()).unwrap();
        let bm = to_budget(&r, &AccountantConfig { mode: AccountingMode::BayesianMoment, ..Default::default() }).unwrap();
        assert!(bm.epsilon.is_finite(), "log-sum-exp must not overflow");
        assert!(bm.epsilon <= wc.epsilon + 1e-9);
    }

    #[test]
    fn infeasible_and_empty_reports_are_rejected() {
        let mut r = report(&[0.1, 0.2]);
        r.pairs[0].feasible = false;
        r.pairs[0].divergence = f64::INFINITY;
        let r = RenyiReport::from_pairs(r.pairs);
        assert_eq!(to_budget(&r, &AccountantConfig::default()), Err(AccountantError::InfeasiblePairs(1)));
        assert_eq!(to_budget(&report(&[]), &AccountantConfig::default()), Err(AccountantError::EmptyReport));
        assert!(AccountantConfig::new(RenyiOrder::DEFAULT, 0.0, AccountingMode::WorstCase).is_err());
    }

    #[test]
    fn summary_is_deterministic_and_passes_values_through() {
        let r = report(&[0.0, 0.0]);
        let b = to_budget(&r, &AccountantConfig::default()).unwrap();
        let s = audit_summary(&r, &b);
        assert_eq!(s.epsilon, Some(b.epsilon));
        assert_eq!(s.rd_max, 0.0);
        let text = s.to_text();
        assert_eq!(text, audit_summary(&r, &b).to_text());
        assert!(text.contains("epsilon_mu   1.0466295877245662e1"), "{text}");
        let json: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        for key in ["rd_max", "rd_avg", "epsilon", "delta", "lambda", "mode", "n_infeasible"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["mode"], "worst_case");
    }
}
