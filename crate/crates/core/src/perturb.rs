//! Perturbation geometry: the scaled ball `‖δ ⊙ c⁻¹‖_p ≤ ρ`.
//!
//! Coordinates with `c_i = 0` are frozen: every projection and sampler
//! returns `δ_i = 0` there.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "linf")]
    LInf,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::LInf => "linf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
}

impl NoiseFamily {
    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Uniform => "uniform",
        }
    }
}

/// How the scaling vector `c` is derived from the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalingMode {
    /// `c = 1`
    Standard,
    /// `c = |w|`
    #[default]
    Adaptive,
    Custom {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Standard,
    Adaptive,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingVector {
    c: Vec<f64>,
    provenance: Provenance,
}

impl ScalingVector {
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scaling entry {i} is {} (must be finite and nonnegative)",
                values[i]
            )));
        }
        Ok(ScalingVector {
            c: values,
            provenance: Provenance::Custom,
        })
    }

    pub fn ones(n: usize) -> Self {
        ScalingVector {
            c: vec![1.0; n],
            provenance: Provenance::Standard,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `c + eps` on every coordinate (unfreezes zero coordinates).
    pub fn with_epsilon(mut self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be nonnegative, got {eps}"
            )));
        }
        self.c.iter_mut().for_each(|c| *c += eps);
        Ok(self)
    }
}

pub fn make_scaling(w: &[f64], mode: &ScalingMode) -> Result<ScalingVector> {
    match mode {
        ScalingMode::Standard => Ok(ScalingVector::ones(w.len())),
        ScalingMode::Adaptive => Ok(ScalingVector {
            c: w.iter().map(|x| x.abs()).collect(),
            provenance: Provenance::Adaptive,
        }),
        ScalingMode::Custom { values } => {
            if values.len() != w.len() {
                return Err(Error::LengthMismatch {
                    expected: w.len(),
                    got: values.len(),
                });
            }
            ScalingVector::custom(values.clone())
        }
    }
}

/// Relative slack allowed on the ℓ2 constraint before a projection rescales.
const L2_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub norm: Norm,
    pub rho: f64,
    pub scaling: ScalingVector,
}

impl BallSpec {
    pub fn new(norm: Norm, rho: f64, scaling: ScalingVector) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "radius must be finite and nonnegative, got {rho}"
            )));
        }
        Ok(BallSpec { norm, rho, scaling })
    }

    pub fn dim(&self) -> usize {
        self.scaling.len()
    }

    fn check(&self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: delta.len(),
            });
        }
        Ok(())
    }

    /// `‖δ ⊙ c⁻¹‖_p` over coordinates with `c_i > 0`.
    pub fn scaled_norm(&self, delta: &[f64]) -> Result<f64> {
        self.check(delta)?;
        let ratios = delta
            .iter()
            .zip(self.scaling.values())
            .filter(|(_, &c)| c > 0.0)
            .map(|(d, c)| d / c);
        Ok(match self.norm {
            Norm::L2 => ratios.map(|r| r * r).sum::<f64>().sqrt(),
            Norm::LInf => ratios.fold(0.0, |m, r| m.max(r.abs())),
        })
    }

    pub fn project(&self, delta: &[f64]) -> Result<Vec<f64>> {
        self.check(delta)?;
        let c = self.scaling.values();
        let mut out: Vec<f64> = delta
            .iter()
            .zip(c)
            .map(|(&d, &ci)| if ci > 0.0 { d } else { 0.0 })
            .collect();
        match self.norm {
            Norm::LInf => {
                for (d, &ci) in out.iter_mut().zip(c) {
                    let b = self.rho * ci;
                    *d = d.clamp(-b, b);
                }
            }
            Norm::L2 => {
                let n = self.scaled_norm(&out)?;
                if n > self.rho * (1.0 + L2_SLACK) {
                    let f = self.rho / n;
                    out.iter_mut().for_each(|d| *d *= f);
                }
            }
        }
        Ok(out)
    }

    /// Whether `δ` satisfies the constraint (with `tol` relative slack)
    /// and vanishes on frozen coordinates.
    pub fn contains(&self, delta: &[f64], tol: f64) -> Result<bool> {
        let frozen_ok = delta
            .iter()
            .zip(self.scaling.values())
            .all(|(&d, &c)| c > 0.0 || d == 0.0);
        Ok(frozen_ok && self.scaled_norm(delta)? <= self.rho * (1.0 + tol))
    }
}

/// Standard draws `z` (N(0,1) or U(−1,1)) of length `n`.
pub fn sample_standard(n: usize, family: NoiseFamily, rng: &mut impl Rng) -> Vec<f64> {
    match family {
        NoiseFamily::Gaussian => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        NoiseFamily::Uniform => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
    }
}

/// `δ = (ρ z) ⊙ c` with `z` from [`sample_standard`]: Gaussian gives
/// `δ_i ~ N(0, ρ²c_i²)`, uniform gives `δ_i ~ U(−ρc_i, ρc_i)`.
pub fn sample_noise(ball: &BallSpec, family: NoiseFamily, rng: &mut impl Rng) -> Vec<f64> {
    let z = sample_standard(ball.dim(), family, rng);
    z.iter()
        .zip(ball.scaling.values())
        .map(|(z, c)| ball.rho * z * c)
        .collect()
}
