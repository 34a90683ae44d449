//! Compare the model's analytic gradient with central finite differences.
//!
//! `cargo run --example gradient_check`

use ndarray::Array2;
use nvdp_clip::bottleneck::model::PARAM_NAMES;
use nvdp_clip::bottleneck::{Architecture, BottleneckSettings, Noise, ToyModel};
use nvdp_clip::{ClipConfig, PriorSpec, RenyiOrder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arch = Architecture { input_dim: 3, hidden_dim: 5, latent_dim: 2, n_components: 3, classes: 3 };
    let model = ToyModel::init(arch, PriorSpec::isotropic(2, 1.0, 1.0)?, 9, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
    let y: Vec<usize> = (0..4).map(|i| i % 3).collect();
    let noise = Noise::sample(&mut rng, 4, &arch);

    for clip in [None, Some(ClipConfig::new(3.0, 0.0, 1.0, RenyiOrder::DEFAULT)?)] {
        let settings = BottleneckSettings { lambda_g: 0.5, lambda_d: 0.5, clip };
        let (_, grad) = model.loss_and_grad(x.view(), &y, &noise, &settings)?;
        let loss = |m: &ToyModel| m.forward(x.view(), &y, &noise, &settings).unwrap().losses.total;
        println!("clipping {}", if clip.is_some() { "on" } else { "off" });
        let mut probe = model.clone();
        for (t, name) in PARAM_NAMES.iter().enumerate() {
            let mut worst: f64 = 0.0;
            for i in 0..grad.tensors()[t].len() {
                let orig = probe.params.tensors()[t][i];
                probe.params.tensors_mut()[t][i] = orig + 1e-5;
                let up = loss(&probe);
                probe.params.tensors_mut()[t][i] = orig - 1e-5;
                let down = loss(&probe);
                probe.params.tensors_mut()[t][i] = orig;
                let (a, n) = (grad.tensors()[t][i], (up - down) / 2e-5);
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
            }
            println!("  {name:<8} max relative error {worst:.2e}");
        }
    }
    Ok(())
}
