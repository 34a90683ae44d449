//! Build a dataset in code, validate it, and round-trip it through JSON.
//!
//! `cargo run --example dataset_io`

use nvdp_clip::posterior::validate;
use nvdp_clip::{DpPosterior, Example, PosteriorDataset, PriorSpec, RealVec, RenyiOrder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prior = PriorSpec::isotropic(2, 1.0, 1.0)?;
    let ex = |id: &str, shift: f64| -> Result<Example, Box<dyn std::error::Error>> {
        let posterior = DpPosterior::new(
            vec![RealVec::new(vec![shift, -shift])?],
            vec![RealVec::new(vec![0.8, 0.9])?],
            vec![0.6],
        )?;
        Ok(Example { id: id.into(), posterior })
    };
    let mut ds = PosteriorDataset { lambda: RenyiOrder::DEFAULT, prior, examples: vec![ex("a", 0.1)?, ex("b", 0.4)?] };
    println!("valid: {}", validate(&ds).is_empty());

    let text = ds.to_json_string();
    let back = PosteriorDataset::from_json_str(&text)?;
    println!("round trip identical: {}", back == ds);
    print!("{text}");

    ds.examples.push(ex("a", 0.0)?);
    ds.examples[1].posterior.stds[0] = RealVec::new(vec![0.8])?;
    for v in validate(&ds) {
        println!("violation: {v}");
    }

    match PosteriorDataset::from_json_str("{\"lambda\": 0.5}") {
        Ok(_) => unreachable!(),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
