//! Pairwise audit of a posterior dataset file, written as CSV to stdout.
//!
//! `cargo run --example pairwise_audit -- [dataset.json] [vs_all_pairs|vs_prior]`

use std::fs::File;
use std::io::BufReader;

use nvdp_clip::{pairwise_report, PairMode, PosteriorDataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample_dataset.json").into());
    let mode: PairMode = args.next().as_deref().unwrap_or("vs_all_pairs").parse()?;

    let ds = PosteriorDataset::load(BufReader::new(File::open(&path)?))?;
    let report = pairwise_report(&ds, mode)?;
    report.write_csv(std::io::stdout().lock())?;
    for p in report.pairs.iter().filter(|p| !p.feasible) {
        eprintln!("infeasible ({}, {}): {}", p.id_q, p.id_qp, p.reason.as_ref().unwrap());
    }
    Ok(())
}
