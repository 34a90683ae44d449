//! Clip one posterior to a named preset and check the result.
//!
//! `cargo run --example clip_posterior -- [preset]`, e.g. `roberta-base/rte`.

use nvdp_clip::clipping::{feasibility_certificate, sigma_floor};
use nvdp_clip::{clip_posterior, ClipConfig, DpPosterior, Example, PosteriorDataset, PriorSpec, RealVec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "bert-base/mrpc".into());
    let Ok(cfg) = ClipConfig::preset(&name) else {
        eprintln!("unknown preset {name:?}; known:");
        for n in ClipConfig::preset_names() {
            eprintln!("  {n}");
        }
        std::process::exit(1);
    };
    let prior = PriorSpec::isotropic(2, 1.0, 1.0)?;
    let raw = DpPosterior::new(
        vec![RealVec::new(vec![3.0, 4.0])?, RealVec::new(vec![0.2, -0.1])?],
        vec![RealVec::new(vec![0.1, 1.4])?, RealVec::new(vec![0.5, 0.05])?],
        vec![5.0, 1e-6],
    )?;
    let clipped = clip_posterior(&raw, &prior, &cfg)?;

    println!("preset {name}: c_mu {}, alpha in [{}, {}], sigma floor {:.6}", cfg.c_mu(), cfg.effective_alpha_floor(), cfg.c_alpha_max(), sigma_floor(1.0, cfg.lambda()));
    for i in 0..raw.n_components() {
        println!("component {i}");
        println!("  mean  {:?} -> {:?}", raw.means[i].as_slice(), clipped.means[i].as_slice());
        println!("  std   {:?} -> {:?}", raw.stds[i].as_slice(), clipped.stds[i].as_slice());
        println!("  alpha {} -> {}", raw.alphas[i], clipped.alphas[i]);
    }

    let ds = PosteriorDataset { lambda: cfg.lambda(), prior, examples: vec![Example { id: "x".into(), posterior: clipped }] };
    let cert = feasibility_certificate(&ds, &cfg);
    println!("certificate holds: {}, guaranteed by config: {}, alpha margin {:.4}", cert.holds, cert.guaranteed, cert.alpha_margin);
    for v in &cert.violations {
        println!("  {v}");
    }
    Ok(())
}
