use std::time::Instant;

use crossad::ablation::evaluate_target;
use crossad::loss::{HeadVariant, LossWeights};
use crossad::synth::{generate_benchmark, SynthSpec};
use crossad::train::{train, TrainConfig};

#[test]
fn k2_seeds_and_weights() {
    let spec = SynthSpec::default();
    let (source, target) = generate_benchmark(&spec).unwrap();

    for (tag, seed, beta, gamma, lambda) in [
        ("s1-b2g2l2", 1u64, 2.0f64, 2.0f64, 2.0f64),
        ("s2-b2g2l2", 2, 2.0, 2.0, 2.0),
        ("s0-b1g1l1", 0, 1.0, 1.0, 1.0),
    ] {
        let mut cfg = TrainConfig::small(spec.dims, spec.window_size, seed);
        cfg.stride = 2;
        cfg.k_proximity = 2;
        cfg.learning_rate = 1e-3;
        cfg.model.disc_hidden = 32;
        cfg.model.embed_dim = 32;
        cfg.weights = LossWeights { alpha: 1.0, beta, gamma, lambda, margin: 1.0 };
        let t0 = Instant::now();
        let (state, _) = train(&source.entities[0], &target.entities[0], &cfg).unwrap();
        let src = evaluate_target(&state, &source.entities[0], 1, HeadVariant::Cec).unwrap();
        let trg = evaluate_target(&state, &target.entities[0], 1, HeadVariant::Cec).unwrap();
        println!(
            "{tag}: {:>5.1?}s | src {:.4} | trg auroc {:.4} aupr {:.4}",
            t0.elapsed().as_secs_f64(),
            src.auroc_mean,
            trg.auroc_mean,
            trg.aupr_mean,
        );
    }
}
