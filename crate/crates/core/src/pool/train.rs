use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{error_rate, BatchLoss, ModelSpec};
use crate::rng::stream;

fn default_momentum() -> f64 {
    0.9
}

fn default_warmup() -> f64 {
    0.4
}

fn default_filter() -> f64 {
    0.01
}

fn default_init_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub spec: ModelSpec,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Fraction of iterations with linearly increasing learning rate.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// SAM radius; 0 is plain SGD.
    #[serde(default)]
    pub sam_rho: f64,
    #[serde(default)]
    pub seed: u64,
    /// Models above this training error are excluded from the pool.
    #[serde(default = "default_filter")]
    pub max_train_error: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad(format!(
                "warmup fraction {} not in [0, 1]",
                self.warmup_fraction
            ));
        }
        if !(self.sam_rho >= 0.0) {
            return bad(format!("sam_rho must be nonnegative, got {}", self.sam_rho));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !self.spec.is_classifier() {
            return bad("pool training expects a classifier".into());
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `lr` over the first `warmup·total` iterations,
/// then linear decay to 0 at iteration `total − 1`.
pub fn lr_schedule(lr: f64, warmup: f64, iteration: usize, total: usize) -> f64 {
    let w = (warmup * total as f64).floor() as usize;
    if iteration < w {
        return lr * iteration as f64 / w as f64;
    }
    let last = total.saturating_sub(1);
    if last <= w {
        return lr;
    }
    lr * last.saturating_sub(iteration) as f64 / (last - w) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub weights: Vec<f64>,
    pub final_loss: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub ood_error: Option<f64>,
    /// Train error above the filter threshold.
    pub excluded: bool,
}

/// Minibatch SGD with momentum and the warmup/decay schedule, optionally
/// with SAM: the gradient is taken at `w + ρ ∇L/‖∇L‖₂` and applied at `w`.
/// Epoch `e` shuffles with stream `(seed, 1, e)`; weights come from `(seed, 0)`.
pub fn train_model(
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    ood: Option<&Dataset>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let spec = &cfg.spec;
    let mut w = spec
        .init(cfg.init_scale, &mut stream(cfg.seed, &[0]))
        .into_values();
    let mut buf = vec![0.0; w.len()];
    let n = train.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut it = 0;
    let mut last_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(cfg.seed, &[1, epoch as u64]));
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.select(chunk)?;
            let loss = BatchLoss::new(spec, &batch, false)?;
            let (l, mut g) = loss.value_and_grad(&w)?;
            if !l.is_finite() {
                return Err(Error::Divergence { step: it, loss: l });
            }
            if cfg.sam_rho > 0.0 {
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    let shifted: Vec<f64> = w
                        .iter()
                        .zip(&g)
                        .map(|(w, g)| w + cfg.sam_rho * g / norm)
                        .collect();
                    g = loss.value_and_grad(&shifted)?.1;
                }
            }
            let eta = lr_schedule(cfg.lr, cfg.warmup_fraction, it, total);
            for ((wi, bi), gi) in w.iter_mut().zip(buf.iter_mut()).zip(&g) {
                *bi = cfg.momentum * *bi + gi;
                *wi -= eta * *bi;
            }
            last_loss = l;
            it += 1;
        }
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence {
            step: it,
            loss: last_loss,
        });
    }
    let train_error = error_rate(spec, &w, train)?;
    Ok(TrainedModel {
        final_loss: BatchLoss::new(spec, train, false)?.value(&w)?,
        train_error,
        test_error: error_rate(spec, &w, test)?,
        ood_error: ood.map(|d| error_rate(spec, &w, d)).transpose()?,
        excluded: train_error > cfg.max_train_error,
        weights: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GaussianMixture;

    #[test]
    fn schedule_endpoints() {
        let total = 100;
        assert_eq!(lr_schedule(0.1, 0.4, 0, total), 0.0);
        assert_eq!(lr_schedule(0.1, 0.4, 40, total), 0.1);
        assert_eq!(lr_schedule(0.1, 0.4, 99, total), 0.0);
        assert!((lr_schedule(0.1, 0.4, 20, total) - 0.05).abs() < 1e-15);
        assert_eq!(lr_schedule(0.1, 0.0, 0, total), 0.1);
    }

    fn setup(sam_rho: f64) -> (TrainConfig, Dataset, Dataset) {
        let gm = GaussianMixture {
            n_classes: 2,
            dim: 5,
            separation: 8.0,
            seed: 3,
        };
        let cfg = TrainConfig {
            spec: ModelSpec::Mlp {
                widths: vec![5, 8, 2],
                bias: true,
            },
            lr: 0.05,
            momentum: 0.9,
            warmup_fraction: 0.4,
            epochs: 5,
            batch_size: 16,
            sam_rho,
            seed: 7,
            max_train_error: 0.01,
            init_scale: 1.0,
        };
        (cfg, gm.sample(128, 0).unwrap(), gm.sample(128, 1).unwrap())
    }

    #[test]
    fn separable_task_is_learned() {
        let (cfg, train, test) = setup(0.0);
        let m = train_model(&cfg, &train, &test, None).unwrap();
        assert!(m.train_error <= 0.01, "{}", m.train_error);
        assert!(!m.excluded);
    }

    #[test]
    fn zero_sam_radius_is_plain_sgd() {
        let (cfg, train, test) = setup(0.0);
        let a = train_model(&cfg, &train, &test, None).unwrap();
        let b = train_model(&cfg, &train, &test, None).unwrap();
        assert_eq!(a.weights, b.weights);
        let (sam, _, _) = setup(0.05);
        let c = train_model(&sam, &train, &test, None).unwrap();
        assert_ne!(a.weights, c.weights);
    }
}
