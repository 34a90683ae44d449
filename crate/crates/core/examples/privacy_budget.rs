//! Worst-case and moment budgets for one report across several deltas.
//!
//! `cargo run --example privacy_budget`

use nvdp_clip::accountant::{audit_summary, to_budget, AccountantConfig, AccountingMode};
use nvdp_clip::{pairwise_report, PairMode, PosteriorDataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = PosteriorDataset::from_json_str(include_str!("../data/sample_dataset.json"))?;
    let report = pairwise_report(&ds, PairMode::VsAllPairs)?;
    println!("RD max {:.4}, RD avg {:.4}, {} pairs\n", report.max, report.avg, report.pairs.len());

    println!("{:>8} {:>14} {:>16}", "delta", "worst_case", "bayesian_moment");
    for delta in [1e-8, 1e-5, 1e-2, 1.0] {
        let eps = |mode| to_budget(&report, &AccountantConfig::new(ds.lambda, delta, mode).unwrap()).unwrap().epsilon;
        println!("{delta:>8.0e} {:>14.4} {:>16.4}", eps(AccountingMode::WorstCase), eps(AccountingMode::BayesianMoment));
    }

    let budget = to_budget(&report, &AccountantConfig::default())?;
    println!("\n{}", audit_summary(&report, &budget).to_json());
    Ok(())
}
