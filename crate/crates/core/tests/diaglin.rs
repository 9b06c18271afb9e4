mod common;

use adasharp::diaglin::{
    closed_form_quantities, custom_scaling, make_task, DiagNetParams, SparseTask, TaskConfig,
};
use adasharp::hessian::dense_hessian;
use adasharp::perturb::{Norm, ScalingMode};
use adasharp::rng::stream;
use adasharp::sharpness::{sharpness, Mode, SharpnessConfig};
use common::*;
use proptest::prelude::*;

fn whitened(d: usize, seed: u64) -> SparseTask {
    make_task(
        &TaskConfig {
            n: d,
            d,
            sparsity: 0.0,
            whiten: true,
            ..TaskConfig::default()
        },
        seed,
    )
    .unwrap()
}

#[test]
fn finite_radius_average_matches_l1_norm() {
    let d = 20;
    let task = whitened(d, 4);
    let mut rng = stream(6, &[]);
    let p = DiagNetParams::new(gaussian(d, &mut rng), gaussian(d, &mut rng)).unwrap();
    let at_min = task.interpolating(&p.beta());
    let data = at_min.train_dataset().unwrap();
    let cf = closed_form_quantities(&p, Some(&at_min)).unwrap();

    let rho = 1e-3;
    let mut cfg = SharpnessConfig::new(
        Mode::Avg,
        Norm::L2,
        rho,
        ScalingMode::Custom {
            values: custom_scaling(&p).values().to_vec(),
        },
        d,
    );
    cfg.n_samples = 20_000;
    cfg.seed = 3;
    let got = sharpness(&p.spec(), &p.weights(), &data, &cfg)
        .unwrap()
        .mean;
    // ½ρ²·tr(H̃) with tr(H̃) = 2‖β‖₁
    let want = rho * rho * cf.l1;
    assert!(rel(got, want) <= 0.05, "{got} vs {want}");
}

#[test]
fn rescaled_trace_is_twice_l1_on_dense_hessian() {
    let d = 12;
    let task = whitened(d, 9);
    let mut rng = stream(10, &[]);
    for _ in 0..5 {
        let p = DiagNetParams::new(gaussian(d, &mut rng), gaussian(d, &mut rng)).unwrap();
        let at_min = task.interpolating(&p.beta());
        let h = dense_hessian(&p.spec(), &p.weights(), &at_min.train_dataset().unwrap()).unwrap();
        let c = custom_scaling(&p);
        let ht = rescale(&h.symmetric, c.values());
        let cf = closed_form_quantities(&p, Some(&at_min)).unwrap();
        assert!(rel(trace(&ht), 2.0 * cf.l1) <= 1e-12);
        assert!(rel(eig_max(&ht), cf.lambda_max_rescaled) <= 1e-10);
        assert!(rel(trace(&h.symmetric), cf.trace_h) <= 1e-12);
    }
}

#[test]
fn standard_trace_is_not_reparametrization_invariant() {
    let mut rng = stream(12, &[]);
    let p = DiagNetParams::new(gaussian(8, &mut rng), gaussian(8, &mut rng)).unwrap();
    let a = closed_form_quantities(&p, None).unwrap();
    let b = closed_form_quantities(&p.rescaled(2.0), None).unwrap();
    assert!(rel(a.trace_h, b.trace_h) > 0.1);
    assert!(rel(a.trace_rescaled, b.trace_rescaled) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rescaling_preserves_beta_and_adaptive_quantities(seed in 0u64..10_000, log_alpha in -3.0f64..3.0) {
        let alpha = log_alpha.exp();
        let mut rng = stream(seed, &[]);
        let p = DiagNetParams::new(gaussian(6, &mut rng), gaussian(6, &mut rng)).unwrap();
        let q = p.rescaled(alpha);
        for (a, b) in p.beta().iter().zip(q.beta()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let (a, b) = (closed_form_quantities(&p, None).unwrap(), closed_form_quantities(&q, None).unwrap());
        prop_assert!(rel(a.l1, b.l1) <= 1e-12);
        prop_assert!(rel(a.trace_rescaled, b.trace_rescaled) <= 1e-12);
        prop_assert!(rel(a.lambda_max_rescaled, b.lambda_max_rescaled) <= 1e-12);
        prop_assert!(rel(a.trace_adaptive, b.trace_adaptive) <= 1e-12);
    }

    #[test]
    fn custom_scaling_balances_the_two_layers(seed in 0u64..10_000) {
        let mut rng = stream(seed, &[]);
        let p = DiagNetParams::new(gaussian(5, &mut rng), gaussian(5, &mut rng)).unwrap();
        let c = custom_scaling(&p);
        let w = p.weights();
        for i in 0..5 {
            // c_u·c_v = 1 and |u|/c_u = |v|/c_v = sqrt|β_i|
            prop_assert!((c.values()[i] * c.values()[5 + i] - 1.0).abs() <= 1e-12);
            let s = (w[i] * w[5 + i]).abs().sqrt();
            prop_assert!(rel(w[i].abs() / c.values()[i], s) <= 1e-12);
            prop_assert!(rel(w[5 + i].abs() / c.values()[5 + i], s) <= 1e-12);
        }
    }
}
