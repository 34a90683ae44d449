//! Rényi divergence bounds between Dirichlet-process posteriors, the
//! clipping operators that keep them tight and well defined, privacy
//! accounting on top of them, and a small trainable bottleneck model that
//! exercises all of it end to end.
//!
//! Start with [`divergence::renyi_bound`] for a single pair of posteriors,
//! [`divergence::pairwise_report`] for a dataset audit, and
//! [`clipping::clip_posterior`] to bring parameters into the feasible region.
//! The `examples/` directory has one runnable program per capability.

pub mod accountant;
pub mod bottleneck;
pub mod cli;
pub mod clipping;
pub mod divergence;
pub mod numerics;
pub mod order;
pub mod posterior;

pub use accountant::{to_budget, AccountantConfig, AccountingMode, PrivacyBudget};
pub use clipping::{clip_alpha, clip_mean, clip_posterior, clip_sigma, ClipConfig};
pub use divergence::{pairwise_report, renyi_bound, PairMode, RenyiReport, RenyiTerms};
pub use numerics::RealVec;
pub use order::RenyiOrder;
pub use posterior::{DpPosterior, Example, PosteriorDataset, PriorSpec};
