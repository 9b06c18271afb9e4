//! Sharpness estimators.
//!
//! For a batch `S` with loss `L_S` and scaling `c`:
//!
//! * average-case: `E_δ[L_S(w + δ)] − L_S(w)` with `δ = ρ z ⊙ c`,
//!   `z` standard Gaussian (or uniform on `[−1, 1]`);
//! * worst-case: `max_{‖δ ⊙ c⁻¹‖_p ≤ ρ} L_S(w + δ) − L_S(w)`, maximized
//!   with [`apgd_maximize`].
//!
//! The data is split into `n_batches` disjoint batches of `m` points; the
//! report carries the per-batch values and their mean.

mod apgd;
mod local;

pub use apgd::{apgd_maximize, checkpoints, ApgdResult, Objective};
pub use local::{
    classify_local_worst, local_avg_sharpness, local_worst_sharpness, LocalAvg, LocalOptions,
    LocalWorst, Regime, GRADIENT_TOL,
};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::models::{BatchLoss, ModelSpec};
use crate::perturb::{
    make_scaling, sample_noise, BallSpec, NoiseFamily, Norm, ScalingMode, ScalingVector,
};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Avg,
    Worst,
}

fn default_n_batches() -> usize {
    1
}

fn default_n_samples() -> usize {
    100
}

fn default_n_iters() -> usize {
    20
}

fn default_noise() -> NoiseFamily {
    NoiseFamily::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessConfig {
    pub mode: Mode,
    pub norm: Norm,
    pub rho: f64,
    #[serde(default)]
    pub scaling: ScalingMode,
    /// Added to every entry of `c`; 0 freezes zero weights.
    #[serde(default)]
    pub epsilon: f64,
    /// Batch size.
    pub m: usize,
    #[serde(default = "default_n_batches")]
    pub n_batches: usize,
    /// Noise draws per batch (average-case).
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// APGD iterations (worst-case).
    #[serde(default = "default_n_iters")]
    pub n_iters: usize,
    #[serde(default = "default_noise")]
    pub noise: NoiseFamily,
    /// Cross-entropy on normalized logits.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the generated measure name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl SharpnessConfig {
    pub fn new(mode: Mode, norm: Norm, rho: f64, scaling: ScalingMode, m: usize) -> Self {
        SharpnessConfig {
            mode,
            norm,
            rho,
            scaling,
            epsilon: 0.0,
            m,
            n_batches: default_n_batches(),
            n_samples: default_n_samples(),
            n_iters: default_n_iters(),
            noise: default_noise(),
            normalize: false,
            seed: 0,
            name: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.m == 0 || self.n_batches == 0 {
            return bad("m and n_batches must be at least 1");
        }
        if self.n_samples == 0 || self.n_iters == 0 {
            return bad("n_samples and n_iters must be at least 1");
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return bad("rho must be finite and nonnegative");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be nonnegative");
        }
        Ok(())
    }

    /// e.g. `adaptive_worst_linf_m128` or `standard_avg_l2_gaussian_norm_m64`.
    pub fn measure_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let scaling = match self.scaling {
            ScalingMode::Standard => "standard",
            ScalingMode::Adaptive => "adaptive",
            ScalingMode::Custom { .. } => "custom",
        };
        let mut s = match self.mode {
            Mode::Avg => format!("{scaling}_avg_{}_{}", self.norm.name(), self.noise.name()),
            Mode::Worst => format!("{scaling}_worst_{}", self.norm.name()),
        };
        if self.normalize {
            s.push_str("_norm");
        }
        s.push_str(&format!("_m{}", self.m));
        s
    }

    pub fn ball(&self, w: &[f64]) -> Result<BallSpec> {
        let c = make_scaling(w, &self.scaling)?;
        let c = if self.epsilon > 0.0 {
            c.with_epsilon(self.epsilon)?
        } else {
            c
        };
        BallSpec::new(self.norm, self.rho, c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub measure: String,
    pub per_batch: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over batches (0 for a single batch).
    pub std: f64,
    pub config: SharpnessConfig,
    pub wall_time_s: f64,
}

/// One line of a long-format sharpness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessRow {
    pub model_id: String,
    pub measure_name: String,
    pub rho: f64,
    pub value: f64,
}

impl SharpnessReport {
    fn new(per_batch: Vec<f64>, config: &SharpnessConfig, started: Instant) -> Self {
        let k = per_batch.len() as f64;
        let mean = per_batch.iter().sum::<f64>() / k;
        let std = if per_batch.len() > 1 {
            (per_batch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        SharpnessReport {
            measure: config.measure_name(),
            per_batch,
            mean,
            std,
            config: config.clone(),
            wall_time_s: started.elapsed().as_secs_f64(),
        }
    }

    pub fn row(&self, model_id: &str) -> SharpnessRow {
        SharpnessRow {
            model_id: model_id.to_string(),
            measure_name: self.measure.clone(),
            rho: self.config.rho,
            value: self.mean,
        }
    }
}

/// `δ ↦ L_S(w + δ) − L_S(w)` for one batch.
#[derive(Debug, Clone)]
pub struct PerturbedLoss {
    loss: BatchLoss,
    w: Vec<f64>,
    base: f64,
}

impl PerturbedLoss {
    pub fn new(loss: BatchLoss, w: &[f64]) -> Result<Self> {
        let base = loss.value(w)?;
        Ok(PerturbedLoss {
            loss,
            w: w.to_vec(),
            base,
        })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    fn shifted(&self, delta: &[f64]) -> Vec<f64> {
        self.w.iter().zip(delta).map(|(a, b)| a + b).collect()
    }

    pub fn value(&self, delta: &[f64]) -> Result<f64> {
        Ok(self.loss.value(&self.shifted(delta))? - self.base)
    }
}

impl Objective for PerturbedLoss {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn value_and_grad(&self, delta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (l, g) = self.loss.value_and_grad(&self.shifted(delta))?;
        Ok((l - self.base, g))
    }
}

fn batch_objectives(
    spec: &ModelSpec,
    w: &[f64],
    data: &Dataset,
    cfg: &SharpnessConfig,
) -> Result<Vec<PerturbedLoss>> {
    cfg.validate()?;
    data.batches(cfg.m, cfg.n_batches)?
        .iter()
        .map(|b| PerturbedLoss::new(BatchLoss::new(spec, b, cfg.normalize)?, w))
        .collect()
}

/// Monte-Carlo average-case sharpness. Draw `s` of batch `b` uses stream
/// `(seed, b, s)`.
pub fn avg_sharpness(
    spec: &ModelSpec,
    w: &[f64],
    data: &Dataset,
    cfg: &SharpnessConfig,
) -> Result<SharpnessReport> {
    let started = Instant::now();
    let objectives = batch_objectives(spec, w, data, cfg)?;
    let ball = cfg.ball(w)?;
    let ns = cfg.n_samples;
    let values = exec::try_map_indexed(cfg.n_batches * ns, |k| {
        let (b, s) = (k / ns, k % ns);
        let delta = sample_noise(
            &ball,
            cfg.noise,
            &mut stream(cfg.seed, &[b as u64, s as u64]),
        );
        objectives[b].value(&delta)
    })?;
    let per_batch = values
        .chunks(ns)
        .map(|c| c.iter().sum::<f64>() / ns as f64)
        .collect();
    Ok(SharpnessReport::new(per_batch, cfg, started))
}

/// Worst-case sharpness via APGD. Batch `b` uses stream `(seed, b)`.
pub fn worst_sharpness(
    spec: &ModelSpec,
    w: &[f64],
    data: &Dataset,
    cfg: &SharpnessConfig,
) -> Result<SharpnessReport> {
    let started = Instant::now();
    let per_batch = worst_per_batch(spec, w, data, cfg)?
        .into_iter()
        .map(|r| r.f_max)
        .collect();
    Ok(SharpnessReport::new(per_batch, cfg, started))
}

/// Full APGD results for each batch.
pub fn worst_per_batch(
    spec: &ModelSpec,
    w: &[f64],
    data: &Dataset,
    cfg: &SharpnessConfig,
) -> Result<Vec<ApgdResult>> {
    let objectives = batch_objectives(spec, w, data, cfg)?;
    let ball = cfg.ball(w)?;
    exec::try_map_indexed(cfg.n_batches, |b| {
        apgd_maximize(
            &objectives[b],
            &ball,
            cfg.n_iters,
            &mut stream(cfg.seed, &[b as u64]),
        )
    })
}

/// Dispatches on `cfg.mode`.
pub fn sharpness(
    spec: &ModelSpec,
    w: &[f64],
    data: &Dataset,
    cfg: &SharpnessConfig,
) -> Result<SharpnessReport> {
    match cfg.mode {
        Mode::Avg => avg_sharpness(spec, w, data, cfg),
        Mode::Worst => worst_sharpness(spec, w, data, cfg),
    }
}

/// Scaling used for the Hessian-based limits under `cfg`.
pub fn scaling_for(w: &[f64], cfg: &SharpnessConfig) -> Result<ScalingVector> {
    Ok(cfg.ball(w)?.scaling)
}
