//! Clipped vs unclipped training on the shipped synthetic task.
//!
//! `cargo run --release --example demo_twin -- [seed ...]`

use nvdp_clip::bottleneck::{twin_experiment, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut seeds: Vec<u64> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        seeds.push(TrainConfig::shipped_default().seed);
    }
    for seed in seeds {
        let cfg = TrainConfig { seed, ..TrainConfig::shipped_default() };
        let twin = twin_experiment(&cfg)?;
        print!("{twin}");
        println!("clipping helps: {}\n", twin.clipping_helps(0.05));
    }
    Ok(())
}
