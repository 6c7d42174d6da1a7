use ccnn_core::ccnn::{CcnnConfig, CcnnModel, WeightMode};
use ccnn_core::training::{gradients, loss};
use ccnn_core::RealMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

/// |a − b| / max(|a|, |b|, floor); the floor keeps parameters with a
/// vanishing derivative from dividing noise by noise.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn batch(rng: &mut ChaCha8Rng, n: usize, l: usize) -> (Vec<RealMap>, Vec<f64>) {
    let maps = (0..n).map(|_| RealMap::from_fn(l, l, |_, _| rng.gen_range(-0.7..0.7))).collect();
    let labels = (0..n).map(|i| (i % 2) as f64).collect();
    (maps, labels)
}

fn check(config: CcnnConfig, gamma: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = CcnnModel::init(config, seed).unwrap();
    // move β and ε away from the tiny init so every path carries signal
    let mut p = model.parameters();
    for i in model.beta_range() {
        p[i] = rng.gen_range(-1.0..1.0);
    }
    let last = p.len() - 1;
    p[last] = 0.3;
    model.set_parameters(&p).unwrap();
    let (maps, labels) = batch(&mut rng, 6, config.lattice);
    let analytic = gradients(&model, &maps, &labels, gamma).unwrap().flatten();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let mut plus = p.clone();
        plus[i] += STEP;
        let mut minus = p.clone();
        minus[i] -= STEP;
        let mut mp = model.clone();
        mp.set_parameters(&plus).unwrap();
        let mut mm = model.clone();
        mm.set_parameters(&minus).unwrap();
        let fd = (loss(&mp, &maps, &labels, gamma).unwrap() - loss(&mm, &maps, &labels, gamma).unwrap()) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic[i], fd));
    }
    worst
}

#[test]
fn third_order_learned_weight_matches_finite_differences() {
    let cfg = CcnnConfig {
        lattice: 5,
        order: 3,
        n_filters: 2,
        filter_size: 3,
        weight_mode: WeightMode::Learned,
        nonneg_beta: false,
    };
    for seed in 0..3 {
        let e = check(cfg, 0.1, seed);
        assert!(e < 1e-4, "seed {seed}: relative error {e}");
    }
}

#[test]
fn second_order_uniform_weight_matches_finite_differences() {
    let cfg = CcnnConfig {
        lattice: 5,
        order: 2,
        n_filters: 2,
        filter_size: 4,
        weight_mode: WeightMode::Uniform,
        nonneg_beta: false,
    };
    for seed in 0..3 {
        let e = check(cfg, 0.0, seed);
        assert!(e < 1e-4, "seed {seed}: relative error {e}");
    }
}

#[test]
fn raw_filter_gradient_flips_with_its_sign() {
    let cfg = CcnnConfig { lattice: 5, n_filters: 2, ..CcnnConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = CcnnModel::init(cfg, 4).unwrap();
    let (maps, labels) = batch(&mut rng, 4, 5);
    let g = gradients(&model, &maps, &labels, 0.0).unwrap().flatten();
    let mut p = model.parameters();
    p[0] = -p[0];
    let mut flipped = model.clone();
    flipped.set_parameters(&p).unwrap();
    let h = gradients(&flipped, &maps, &labels, 0.0).unwrap().flatten();
    assert!((g[0] + h[0]).abs() <= 1e-12 * g[0].abs().max(1e-12));
}

#[test]
fn bias_gradient_sign_convention() {
    // all β = 0: ŷ = σ(−ε) = 0.5 at ε = 0, so ∂L/∂ε = −mean(ŷ − y)
    let cfg = CcnnConfig { lattice: 4, n_filters: 1, ..CcnnConfig::default() };
    let mut model = CcnnModel::init(cfg, 0).unwrap();
    model.head.beta.iter_mut().for_each(|b| *b = 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (maps, _) = batch(&mut rng, 4, 4);
    let g = gradients(&model, &maps, &[1.0; 4], 0.0).unwrap();
    assert!((g.bias - 0.5).abs() < 1e-12);
    let g = gradients(&model, &maps, &[0.0, 1.0, 0.0, 1.0], 0.0).unwrap();
    assert!(g.bias.abs() < 1e-12);
}
