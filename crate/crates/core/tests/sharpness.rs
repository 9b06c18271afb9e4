mod common;

use adasharp::models::ModelSpec;
use adasharp::perturb::{Norm, ScalingMode};
use adasharp::rng::stream;
use adasharp::sharpness::{sharpness, Mode, SharpnessConfig};
use common::*;

fn fixtures() -> Vec<(ModelSpec, Vec<f64>, adasharp::data::Dataset)> {
    let mut out = Vec::new();
    for seed in 0..3 {
        let spec = ModelSpec::Mlp {
            widths: vec![4, 10, 3],
            bias: true,
        };
        let data = mixture(3, 4, 2.5, seed, 64);
        let w0 = spec.init(1.0, &mut stream(seed, &[1])).into_values();
        let (w, _) = descend(&spec, &data, w0, 0.05, 200);
        out.push((spec, w, data));
    }
    let (spec, w, data, _, _) = mlp_at_minimum(4);
    out.push((spec, w, data));
    out
}

#[test]
fn larger_apgd_budget_never_finds_less() {
    for (norm, rho) in [(Norm::LInf, 0.01), (Norm::L2, 0.1)] {
        for (i, (spec, w, data)) in fixtures().into_iter().enumerate() {
            let mut cfg = SharpnessConfig::new(Mode::Worst, norm, rho, ScalingMode::Adaptive, 30);
            cfg.n_batches = 2;
            cfg.seed = 9;
            cfg.n_iters = 20;
            let short = sharpness(&spec, &w, &data, &cfg).unwrap();
            cfg.n_iters = 100;
            let long = sharpness(&spec, &w, &data, &cfg).unwrap();
            for (a, b) in short.per_batch.iter().zip(&long.per_batch) {
                assert!(b >= a, "fixture {i} {norm:?}: {a} (20) > {b} (100)");
            }
        }
    }
}

#[test]
fn average_case_is_zero_at_zero_radius() {
    for (spec, w, data) in fixtures() {
        let cfg = SharpnessConfig::new(Mode::Avg, Norm::L2, 0.0, ScalingMode::Adaptive, 30);
        assert_eq!(sharpness(&spec, &w, &data, &cfg).unwrap().mean, 0.0);
    }
}
