mod common;

use common::{boundary_clearance, clipping_active, max_gradient_error, tiny_arch, tiny_batch};
use nvdp_clip::bottleneck::{BottleneckSettings, ToyModel};
use nvdp_clip::numerics::softplus_inverse;
use nvdp_clip::{ClipConfig, PriorSpec, RenyiOrder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A tiny model whose heads spread over both sides of the clip boundaries.
pub fn spread_model(seed: u64) -> ToyModel {
    let arch = tiny_arch();
    let mut m = ToyModel::init(arch, PriorSpec::isotropic(2, 1.0, 1.0).unwrap(), seed, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    m.params.mu_b.mapv_inplace(|_| rng.gen_range(-1.5..1.5));
    m.params.sigma_w.mapv_inplace(|v| 5.0 * v);
    m.params.sigma_b.mapv_inplace(|_| softplus_inverse(rng.gen_range(0.1..1.2)).unwrap());
    m.params.alpha_w.mapv_inplace(|v| 5.0 * v);
    m.params.alpha_b.mapv_inplace(|_| softplus_inverse(rng.gen_range(0.1..1.5)).unwrap());
    m
}

fn clip() -> ClipConfig {
    ClipConfig::new(1.0, 0.0, 0.7, RenyiOrder::DEFAULT).unwrap()
}

#[test]
fn gradients_match_finite_differences_unclipped() {
    let settings = BottleneckSettings { lambda_g: 0.5, lambda_d: 0.5, clip: None };
    for seed in 0..10 {
        let m = spread_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (x, y, noise) = tiny_batch(&mut rng, &m.arch, 5);
        let (err, at) = max_gradient_error(&m, &x, &y, &noise, &settings);
        assert!(err < 1e-4, "seed {seed}: {err} at {at}");
    }
}

#[test]
fn gradients_match_finite_differences_clipped() {
    let settings = BottleneckSettings { lambda_g: 0.5, lambda_d: 0.5, clip: Some(clip()) };
    let mut checked = 0;
    let mut seed = 0;
    while checked < 10 {
        seed += 1;
        assert!(seed < 500, "could not find batches away from the clip boundaries");
        let m = spread_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (x, y, noise) = tiny_batch(&mut rng, &m.arch, 3);
        if boundary_clearance(&m, &x, &clip()) < 1e-3 || !clipping_active(&m, &x, &clip()) {
            continue;
        }
        let (err, at) = max_gradient_error(&m, &x, &y, &noise, &settings);
        assert!(err < 1e-4, "seed {seed}: {err} at {at}");
        checked += 1;
    }
}

#[test]
fn regulariser_only_gradients() {
    let settings = BottleneckSettings { lambda_g: 2.0, lambda_d: 0.0, clip: None };
    let m = spread_model(77);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (x, y, noise) = tiny_batch(&mut rng, &m.arch, 4);
    let (err, at) = max_gradient_error(&m, &x, &y, &noise, &settings);
    assert!(err < 1e-4, "{err} at {at}");
    let settings = BottleneckSettings { lambda_g: 0.0, lambda_d: 2.0, clip: None };
    let (err, at) = max_gradient_error(&m, &x, &y, &noise, &settings);
    assert!(err < 1e-4, "{err} at {at}");
}
