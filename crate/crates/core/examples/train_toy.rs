//! Train the toy bottleneck model, print its metric trace, and audit it.
//!
//! `cargo run --release --example train_toy -- [config.json]`

use nvdp_clip::accountant::{to_budget, AccountantConfig};
use nvdp_clip::bottleneck::{accuracy, evaluate_privacy, train, write_metrics, TrainConfig};
use nvdp_clip::PairMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => TrainConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => TrainConfig::shipped_default(),
    };
    let trained = train(&cfg)?;
    write_metrics(&trained.trace, std::io::stdout().lock())?;

    let (_, test) = cfg.task.generate();
    let settings = cfg.settings();
    println!("held-out accuracy {:.4}", accuracy(&trained.model, &test, &settings, 0)?);

    let report = evaluate_privacy(&trained.model, &test.head(cfg.privacy_examples), cfg.lambda, PairMode::VsPrior, &settings)?;
    println!("RD vs prior: max {:.4}, avg {:.4}", report.max, report.avg);
    match to_budget(&report, &AccountantConfig { lambda: cfg.lambda, ..Default::default() }) {
        Ok(b) => println!("epsilon {:.4} at delta {:e}", b.epsilon, b.delta),
        Err(e) => println!("no budget: {e}"),
    }
    Ok(())
}
