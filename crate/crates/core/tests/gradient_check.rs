mod common;

use common::*;
use forgetbench::forecaster::backward;
use forgetbench::rng::SeededRng;

#[test]
fn tiny_model_matches_central_differences() {
    let cfg = forgetbench::forecaster::ModelConfig {
        context_len: 8,
        horizon: 2,
        patch_len: 4,
        embed_dim: 3,
        hidden_dim: 5,
        n_blocks: 2,
        init_seed: 1,
    };
    let mut rng = SeededRng::new(1234);
    let (p, ctx, tgt) = loop {
        let p = random_params(cfg, &mut rng);
        let ctx = random_vec(&mut rng, 8, 1.5);
        if min_kink_distance(&p, &ctx) >= 1e-4 {
            break (p, ctx, random_vec(&mut rng, 2, 1.5));
        }
    };
    let (_, grads) = backward(&p, &ctx, &tgt).unwrap();
    let numeric = finite_difference_grads(&p, &ctx, &tgt, 1e-5);
    let mut worst = 0.0f64;
    for (a, n) in grads.tensors().iter().zip(&numeric) {
        for (x, y) in a.iter().zip(n) {
            worst = worst.max(rel_err(*x, *y));
        }
    }
    println!("max relative error {worst:e}");
    assert!(worst < 1e-6, "max relative error {worst:e}");
}

