//! Term-by-term Rényi divergence bound between two posteriors.
//!
//! `cargo run --example renyi_bound -- [lambda]`

use nvdp_clip::{renyi_bound, DpPosterior, RealVec, RenyiOrder};

fn posterior(means: &[[f64; 2]], stds: &[[f64; 2]], alphas: &[f64]) -> DpPosterior {
    DpPosterior::new(
        means.iter().map(|m| RealVec::new(m.to_vec()).unwrap()).collect(),
        stds.iter().map(|s| RealVec::new(s.to_vec()).unwrap()).collect(),
        alphas.to_vec(),
    )
    .unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lambda: f64 = std::env::args().nth(1).map_or(Ok(1.1), |s| s.parse())?;
    let order = RenyiOrder::new(lambda)?;

    let q = posterior(&[[0.5, -0.25], [1.0, 0.75]], &[[0.9, 1.2], [0.7, 1.0]], &[0.8, 0.3]);
    let qp = posterior(&[[0.0, 0.1], [-0.5, 0.0]], &[[1.0, 1.1], [0.8, 0.95]], &[0.5, 0.4]);

    match renyi_bound(&q, &qp, order) {
        Ok(t) => {
            println!("lambda        {lambda}");
            println!("global alpha  {:+.12}", t.global_alpha);
            println!("local alpha   {:+.12}", t.local_alpha);
            println!("gaussian      {:+.12}", t.gaussian);
            println!("total         {:+.12}", t.total);
        }
        Err(e) => println!("bound undefined at lambda {lambda}: {e}"),
    }
    Ok(())
}
