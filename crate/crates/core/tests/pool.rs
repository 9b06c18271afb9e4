use adasharp::data::GaussianMixture;
use adasharp::exec::{with_policy, Execution};
use adasharp::models::ModelSpec;
use adasharp::perturb::{Norm, ScalingMode};
use adasharp::pool::{correlate_pool, measure_pool, run_pool, PoolConfig, PoolOutcome, Target};
use adasharp::rng::stream;
use adasharp::sharpness::{Mode, SharpnessConfig};
use rand::seq::SliceRandom;
use tempfile::TempDir;

const RHOS: [f64; 3] = [0.001, 0.002, 0.004];

fn linf(rho: f64) -> SharpnessConfig {
    let mut m = SharpnessConfig::new(Mode::Worst, Norm::LInf, rho, ScalingMode::Adaptive, 64);
    m.n_batches = 2;
    m.seed = 5;
    m
}

fn config() -> PoolConfig {
    PoolConfig {
        data: GaussianMixture {
            n_classes: 3,
            dim: 5,
            separation: 4.0,
            seed: 2,
        },
        n_train: 128,
        n_test: 256,
        ood_sigma: None,
        spec: ModelSpec::Mlp {
            widths: vec![5, 12, 3],
            bias: true,
        },
        lrs: vec![0.02, 0.1],
        sam_rhos: vec![0.0, 0.05],
        replicates: 2,
        epochs: 8,
        batch_size: 16,
        momentum: 0.9,
        warmup_fraction: 0.4,
        max_train_error: 0.2,
        measures: RHOS.iter().map(|&r| linf(r)).collect(),
        subgroup: Some("lr".into()),
        seed: 3,
    }
}

fn pool() -> (TempDir, PoolOutcome) {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pool(&config(), dir.path()).unwrap();
    (dir, out)
}

#[test]
fn measuring_is_independent_of_execution_policy() {
    let (dir, out) = pool();
    let data = config().datasets().unwrap().0;
    let mut fresh = out.records.clone();
    fresh.iter_mut().for_each(|r| r.sharpness.clear());
    let mut seq = fresh.clone();
    let mut par = fresh;
    let n_seq = with_policy(Execution::Sequential, || {
        measure_pool(&mut seq, &config().measures, &data, dir.path())
    });
    let n_par = with_policy(Execution::Parallel, || {
        measure_pool(&mut par, &config().measures, &data, dir.path())
    });
    assert_eq!(n_seq, n_par);
    assert_eq!(seq, par);
    assert_eq!(seq, out.records);
}

#[test]
fn worst_linf_grows_with_radius() {
    let (_dir, out) = pool();
    let name = linf(RHOS[0]).measure_name();
    assert!(out.records.iter().filter(|r| !r.excluded).count() >= 4);
    for r in out.records.iter().filter(|r| !r.excluded) {
        let values: Vec<f64> = RHOS
            .iter()
            .map(|&rho| r.sharpness_value(&name, rho).unwrap())
            .collect();
        assert!(values[0] >= 0.0, "{}: {values:?}", r.id);
        assert!(
            values.windows(2).all(|p| p[1] >= p[0]),
            "{}: {values:?}",
            r.id
        );
    }
}

#[test]
fn correlation_ignores_record_order() {
    let (_dir, out) = pool();
    let name = linf(RHOS[1]).measure_name();
    let report = |records: &[adasharp::pool::PoolRecord]| {
        correlate_pool(records, &name, RHOS[1], Target::TestError, Some("lr")).unwrap()
    };
    let base = report(&out.records);
    assert!(base.tau.is_some());
    let mut rng = stream(1, &[]);
    for _ in 0..5 {
        let mut shuffled = out.records.clone();
        shuffled.shuffle(&mut rng);
        let r = report(&shuffled);
        assert_eq!(r.tau, base.tau);
        assert_eq!(r.n, base.n);
        assert_eq!(r.subgroups, base.subgroups);
    }
}
