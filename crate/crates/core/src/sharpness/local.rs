//! Small-radius limits of sharpness from gradient and Hessian quantities.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hessian::{
    self, HessianOperator, LinearOperator, PowerIteration, RescaledOperator, DENSE_LIMIT,
};
use crate::models::{BatchLoss, ModelSpec};
use crate::perturb::{Norm, ScalingVector};

/// Options for the Hessian-based estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    pub normalize: bool,
    /// Probes used when the model is too large for a dense trace.
    pub hutchinson_probes: usize,
    pub power: PowerIteration,
    pub seed: u64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            normalize: false,
            hutchinson_probes: 100,
            power: PowerIteration::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalAvg {
    /// `½ tr(H ⊙ ccᵀ)`
    pub value: f64,
    /// Zero when the trace is exact.
    pub stderr: f64,
}

/// `½ tr(∇²L ⊙ ccᵀ)`: average-case sharpness with Gaussian noise is
/// `ρ²` times this to second order. Exact up to [`DENSE_LIMIT`]
/// parameters, Hutchinson beyond.
pub fn local_avg_sharpness(
    spec: &ModelSpec,
    w: &[f64],
    batch: &Dataset,
    c: &ScalingVector,
    opts: &LocalOptions,
) -> Result<LocalAvg> {
    let op = RescaledOperator::new(HessianOperator::new(spec, w, batch, opts.normalize)?, c)?;
    if op.dim() <= DENSE_LIMIT {
        let diag = crate::exec::try_map_indexed(op.dim(), |i| {
            if c.values()[i] == 0.0 {
                return Ok(0.0);
            }
            let mut e = vec![0.0; op.dim()];
            e[i] = 1.0;
            Ok::<_, Error>(op.apply(&e)?[i])
        })?;
        return Ok(LocalAvg {
            value: 0.5 * diag.iter().sum::<f64>(),
            stderr: 0.0,
        });
    }
    let (t, se) = hessian::hutchinson_trace(&op, opts.hutchinson_probes, opts.seed)?;
    Ok(LocalAvg {
        value: 0.5 * t,
        stderr: 0.5 * se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Sharpness `≈ ρ·value`.
    GradientDominant,
    /// Sharpness `≈ ρ²·value`.
    Curvature,
    /// Local maximum: sharpness is 0 for small `ρ`.
    NegativeDefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalWorst {
    pub regime: Regime,
    pub value: f64,
}

impl LocalWorst {
    /// Leading-order worst-case sharpness at radius `rho`.
    pub fn predict(&self, rho: f64) -> f64 {
        match self.regime {
            Regime::GradientDominant => rho * self.value,
            Regime::Curvature => rho * rho * self.value,
            Regime::NegativeDefinite => 0.0,
        }
    }
}

/// `‖∇L ⊙ c‖₂ ≤ GRADIENT_TOL·(1 + |L|)` counts as a critical point.
pub const GRADIENT_TOL: f64 = 1e-6;

/// Operator restricted to the coordinates with nonzero scaling.
struct Restricted<'a, O> {
    base: &'a O,
    idx: Vec<usize>,
    n: usize,
}

impl<O: LinearOperator> LinearOperator for Restricted<'_, O> {
    fn dim(&self) -> usize {
        self.idx.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut full = vec![0.0; self.n];
        for (&i, &x) in self.idx.iter().zip(v) {
            full[i] = x;
        }
        let out = self.base.apply(&full)?;
        Ok(self.idx.iter().map(|&i| out[i]).collect())
    }
}

/// Leading term of worst-case sharpness as `ρ → 0`.
///
/// With `‖∇L ⊙ c‖` above the gradient threshold the value is
/// `‖∇L ⊙ c‖_q` (`q` dual to `p`). Otherwise the sign of
/// `λmax(∇²L ⊙ ccᵀ)` on the unfrozen coordinates decides: negative gives
/// 0, otherwise `½λmax` for `p = 2`; `p = ∞` is not evaluated there.
pub fn local_worst_sharpness(
    spec: &ModelSpec,
    w: &[f64],
    batch: &Dataset,
    c: &ScalingVector,
    norm: Norm,
    opts: &LocalOptions,
) -> Result<LocalWorst> {
    let loss = BatchLoss::new(spec, batch, opts.normalize)?;
    let (l, g) = loss.value_and_grad(w)?;
    let op = HessianOperator::from_loss(loss, w)?;
    classify_local_worst(l, &g, &op, c, norm, &opts.power)
}

/// Regime classification from the loss value `l`, its gradient `g` and a
/// Hessian operator `h`; see [`local_worst_sharpness`].
pub fn classify_local_worst(
    l: f64,
    g: &[f64],
    h: &impl LinearOperator,
    c: &ScalingVector,
    norm: Norm,
    power: &PowerIteration,
) -> Result<LocalWorst> {
    if c.len() != g.len() || h.dim() != g.len() {
        return Err(Error::LengthMismatch {
            expected: g.len(),
            got: if c.len() != g.len() { c.len() } else { h.dim() },
        });
    }
    let gc: Vec<f64> = g.iter().zip(c.values()).map(|(a, b)| a * b).collect();
    let l2 = gc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if l2 > GRADIENT_TOL * (1.0 + l.abs()) {
        let value = match norm {
            Norm::L2 => l2,
            Norm::LInf => gc.iter().map(|x| x.abs()).sum(),
        };
        return Ok(LocalWorst {
            regime: Regime::GradientDominant,
            value,
        });
    }
    let op = RescaledOperator::new(h, c)?;
    let idx: Vec<usize> = (0..c.len()).filter(|&i| c.values()[i] > 0.0).collect();
    if idx.is_empty() {
        return Ok(LocalWorst {
            regime: Regime::NegativeDefinite,
            value: 0.0,
        });
    }
    let restricted = Restricted {
        base: &op,
        idx,
        n: c.len(),
    };
    let lambda = hessian::lambda_max(&restricted, power)?;
    if lambda < 0.0 {
        return Ok(LocalWorst {
            regime: Regime::NegativeDefinite,
            value: 0.0,
        });
    }
    match norm {
        Norm::L2 => Ok(LocalWorst {
            regime: Regime::Curvature,
            value: 0.5 * lambda,
        }),
        Norm::LInf => Err(Error::UnsupportedRegime),
    }
}
