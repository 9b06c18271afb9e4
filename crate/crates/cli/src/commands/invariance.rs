use adasharp::data::{Dataset, GaussianMixture};
use adasharp::models::{loss, reparametrize_scale, scale_output, ModelSpec};
use adasharp::perturb::{Norm, ScalingMode};
use adasharp::pool::{train_model, TrainConfig};
use adasharp::rng::derive_seed;
use adasharp::sharpness::{sharpness, Mode, SharpnessConfig};
use serde::{Deserialize, Serialize};

use super::Context;
use crate::failure::{Failure, OrRuntime};
use crate::io;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReparamConfig {
    /// `[input, hidden..., classes]`; the input width must match the data.
    widths: Vec<usize>,
    /// Hidden layer whose incoming weights are multiplied by α.
    layer: usize,
    alphas: Vec<f64>,
    adaptive_rho: f64,
    standard_rho: f64,
    m: usize,
    n_samples: usize,
    n_iters: usize,
    epochs: usize,
    lr: f64,
    avg_tol: f64,
    worst_tol: f64,
    /// Smallest relative change that standard worst-case sharpness must show.
    standard_min_change: f64,
}

impl Default for ReparamConfig {
    fn default() -> Self {
        ReparamConfig {
            widths: vec![10, 16, 16, 3],
            layer: 0,
            alphas: vec![0.1, 10.0],
            adaptive_rho: 0.1,
            standard_rho: 0.1,
            m: 128,
            n_samples: 100,
            n_iters: 20,
            epochs: 20,
            lr: 0.05,
            avg_tol: 1e-6,
            worst_tol: 0.01,
            standard_min_change: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepConfig {
    /// Log-spaced weight scales from `alpha_range[0]` to `alpha_range[1]`.
    alpha_range: [f64; 2],
    n_alphas: usize,
    rho: f64,
    m: usize,
    n_samples: usize,
    epochs: usize,
    lr: f64,
    normalized_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alpha_range: [0.5, 4.0],
            n_alphas: 8,
            rho: 0.05,
            m: 128,
            n_samples: 100,
            epochs: 30,
            lr: 0.1,
            normalized_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InvarianceConfig {
    seed: u64,
    n_classes: usize,
    dim: usize,
    separation: f64,
    n_train: usize,
    reparam: ReparamConfig,
    sweep: SweepConfig,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        InvarianceConfig {
            seed: 0,
            n_classes: 3,
            dim: 10,
            separation: 6.0,
            n_train: 256,
            reparam: ReparamConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CheckRow {
    check: String,
    alpha: f64,
    reference: f64,
    value: f64,
    rel_change: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    alpha: f64,
    train_loss: f64,
    adaptive: f64,
    adaptive_normalized: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn log_grid(range: [f64; 2], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range[0]];
    }
    let (lo, hi) = (range[0].ln(), range[1].ln());
    (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn train(
    spec: ModelSpec,
    data: &Dataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>, Failure> {
    let cfg = TrainConfig {
        spec,
        lr,
        momentum: 0.9,
        warmup_fraction: 0.4,
        epochs,
        batch_size: 32,
        sam_rho: 0.0,
        seed,
        max_train_error: 0.0,
        init_scale: 1.0,
    };
    Ok(train_model(&cfg, data, data, None).runtime()?.weights)
}

fn reparam_suite(cfg: &InvarianceConfig, data: &Dataset) -> Result<Vec<CheckRow>, Failure> {
    let r = &cfg.reparam;
    let spec = ModelSpec::Mlp {
        widths: r.widths.clone(),
        bias: true,
    };
    let w = train(
        spec.clone(),
        data,
        r.epochs,
        r.lr,
        derive_seed(cfg.seed, &[1]),
    )?;
    let measure = |mode: Mode, scaling: ScalingMode, rho: f64| {
        let mut m = SharpnessConfig::new(mode, Norm::L2, rho, scaling, r.m);
        m.n_samples = r.n_samples;
        m.n_iters = r.n_iters;
        m.seed = derive_seed(cfg.seed, &[2]);
        m
    };
    let checks = [
        (
            "adaptive_avg",
            measure(Mode::Avg, ScalingMode::Adaptive, r.adaptive_rho),
            r.avg_tol,
            false,
        ),
        (
            "adaptive_worst",
            measure(Mode::Worst, ScalingMode::Adaptive, r.adaptive_rho),
            r.worst_tol,
            false,
        ),
        (
            "standard_worst",
            measure(Mode::Worst, ScalingMode::Standard, r.standard_rho),
            r.standard_min_change,
            true,
        ),
    ];
    let mut rows = Vec::new();
    for (name, m, tol, must_change) in checks {
        let reference = sharpness(&spec, &w, data, &m).runtime()?.mean;
        for &alpha in &r.alphas {
            let wa = reparametrize_scale(&spec, &w, r.layer, alpha).config()?;
            let value = sharpness(&spec, &wa, data, &m).runtime()?.mean;
            let change = rel(reference, value);
            let passed = if must_change {
                change >= tol
            } else {
                change <= tol
            };
            rows.push(CheckRow {
                check: name.into(),
                alpha,
                reference,
                value,
                rel_change: change,
                passed,
            });
        }
    }
    Ok(rows)
}

fn scale_sweep(
    cfg: &InvarianceConfig,
    data: &Dataset,
) -> Result<(Vec<SweepRow>, Vec<CheckRow>), Failure> {
    let s = &cfg.sweep;
    let spec = ModelSpec::Linear {
        input_dim: cfg.dim,
        classes: cfg.n_classes,
        bias: true,
    };
    let w = train(
        spec.clone(),
        data,
        s.epochs,
        s.lr,
        derive_seed(cfg.seed, &[3]),
    )?;
    let err = adasharp::models::error_rate(&spec, &w, data).runtime()?;
    if err > 0.0 {
        return Err(Failure::Runtime(format!(
            "sweep model has training error {err}; the sweep needs a separable task"
        )));
    }
    let measure = |normalize: bool| {
        let mut m = SharpnessConfig::new(Mode::Avg, Norm::L2, s.rho, ScalingMode::Adaptive, s.m);
        m.n_samples = s.n_samples;
        m.normalize = normalize;
        m.seed = derive_seed(cfg.seed, &[4]);
        m
    };
    let batch = data.slice(0, s.m.min(data.len())).runtime()?;
    let mut rows = Vec::new();
    for alpha in log_grid(s.alpha_range, s.n_alphas) {
        let wa = scale_output(&spec, &w, alpha).config()?;
        rows.push(SweepRow {
            alpha,
            train_loss: loss(&spec, &wa, &batch, false).runtime()?,
            adaptive: sharpness(&spec, &wa, data, &measure(false)).runtime()?.mean,
            adaptive_normalized: sharpness(&spec, &wa, data, &measure(true)).runtime()?.mean,
        });
    }
    let mut checks = Vec::new();
    for pair in rows.windows(2) {
        checks.push(CheckRow {
            check: "unnormalized_decreasing".into(),
            alpha: pair[1].alpha,
            reference: pair[0].adaptive,
            value: pair[1].adaptive,
            rel_change: rel(pair[0].adaptive, pair[1].adaptive),
            passed: pair[1].adaptive < pair[0].adaptive,
        });
    }
    let reference = rows[0].adaptive_normalized;
    for r in &rows[1..] {
        let change = rel(reference, r.adaptive_normalized);
        checks.push(CheckRow {
            check: "normalized_constant".into(),
            alpha: r.alpha,
            reference,
            value: r.adaptive_normalized,
            rel_change: change,
            passed: change <= s.normalized_tol,
        });
    }
    Ok((rows, checks))
}

fn validate(cfg: &InvarianceConfig) -> Result<(), Failure> {
    let bad = |m: &str| Err(Failure::Config(m.into()));
    let r = &cfg.reparam;
    if r.widths.len() < 3 || r.widths[0] != cfg.dim || *r.widths.last().unwrap() != cfg.n_classes {
        return bad(
            "reparam.widths must be [dim, hidden..., n_classes] with at least one hidden layer",
        );
    }
    if r.layer + 2 >= r.widths.len() {
        return bad("reparam.layer must index a hidden layer");
    }
    if r.alphas.iter().any(|a| a.is_nan() || *a <= 0.0) {
        return bad("reparam.alphas must be positive");
    }
    let s = &cfg.sweep;
    if s.n_alphas == 0 || !(s.alpha_range[0] > 0.0 && s.alpha_range[1] >= s.alpha_range[0]) {
        return bad("sweep needs n_alphas >= 1 and a positive alpha_range");
    }
    if cfg.n_train < r.m.max(s.m) {
        return bad("n_train is smaller than the sharpness batch");
    }
    Ok(())
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let mut cfg: InvarianceConfig = io::read_config(ctx.config.as_deref(), false)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    validate(&cfg)?;
    let mixture = GaussianMixture {
        n_classes: cfg.n_classes,
        dim: cfg.dim,
        separation: cfg.separation,
        seed: derive_seed(cfg.seed, &[0]),
    };
    let data = mixture.sample(cfg.n_train, 0).config()?;

    let mut checks = reparam_suite(&cfg, &data)?;
    let (sweep, sweep_checks) = scale_sweep(&cfg, &data)?;
    checks.extend(sweep_checks);

    io::create_dir(&ctx.out)?;
    io::write_csv(&ctx.out.join("invariance.csv"), &checks)?;
    io::write_csv(&ctx.out.join("scale_sweep.csv"), &sweep)?;

    for c in &checks {
        println!(
            "{:<24} alpha={:<10.4} rel_change={:.3e} {}",
            c.check,
            c.alpha,
            c.rel_change,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} at alpha {}", c.check, c.alpha))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(failed.join(", ")))
    }
}
