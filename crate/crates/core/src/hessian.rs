//! Hessian linear algebra: dense assembly for small models, the rescaled
//! operator `v ↦ c ⊙ H(c ⊙ v)`, shifted power iteration for the largest
//! eigenvalue and Hutchinson trace estimation.

use crate::autodiff::{Array, HvpMethod};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::models::{BatchLoss, ModelSpec};
use crate::perturb::ScalingVector;
use crate::rng::stream;

/// Largest parameter count for which dense Hessians are assembled.
pub const DENSE_LIMIT: usize = 2000;

/// Symmetric linear map on `ℝⁿ`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl<O: LinearOperator + ?Sized> LinearOperator for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(v)
    }
}

#[derive(Debug, Clone)]
pub struct DenseOperator(pub Array<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.rows()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.0.apply(v)
    }
}

/// Hessian of one batch loss at fixed weights.
#[derive(Debug, Clone)]
pub struct HessianOperator {
    loss: BatchLoss,
    w: Vec<f64>,
    method: HvpMethod,
}

impl HessianOperator {
    pub fn new(spec: &ModelSpec, w: &[f64], batch: &Dataset, normalize: bool) -> Result<Self> {
        let loss = BatchLoss::new(spec, batch, normalize)?;
        Self::from_loss(loss, w)
    }

    pub fn from_loss(loss: BatchLoss, w: &[f64]) -> Result<Self> {
        if w.len() != loss.n_params() {
            return Err(Error::LengthMismatch {
                expected: loss.n_params(),
                got: w.len(),
            });
        }
        Ok(HessianOperator {
            loss,
            w: w.to_vec(),
            method: HvpMethod::Nested,
        })
    }

    pub fn with_method(mut self, method: HvpMethod) -> Self {
        self.method = method;
        self
    }

    pub fn loss(&self) -> &BatchLoss {
        &self.loss
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }
}

impl LinearOperator for HessianOperator {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.loss.hvp(&self.w, v, self.method)
    }
}

/// `v ↦ c ⊙ A(c ⊙ v)`, the operator of the matrix `A ⊙ ccᵀ`.
#[derive(Debug, Clone)]
pub struct RescaledOperator<O = HessianOperator> {
    base: O,
    c: Vec<f64>,
}

impl<O: LinearOperator> RescaledOperator<O> {
    pub fn new(base: O, c: &ScalingVector) -> Result<Self> {
        if c.len() != base.dim() {
            return Err(Error::LengthMismatch {
                expected: base.dim(),
                got: c.len(),
            });
        }
        Ok(RescaledOperator {
            base,
            c: c.values().to_vec(),
        })
    }

    pub fn base(&self) -> &O {
        &self.base
    }

    pub fn scaling(&self) -> &[f64] {
        &self.c
    }
}

impl<O: LinearOperator> LinearOperator for RescaledOperator<O> {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.c.len() {
            return Err(Error::LengthMismatch {
                expected: self.c.len(),
                got: v.len(),
            });
        }
        let cv: Vec<f64> = v.iter().zip(&self.c).map(|(a, b)| a * b).collect();
        let h = self.base.apply(&cv)?;
        Ok(h.iter().zip(&self.c).map(|(a, b)| a * b).collect())
    }
}

/// Dense matrix of an operator, assembled column by column.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    /// `(M + Mᵀ)/2`
    pub symmetric: Array<f64>,
    /// `max |M − Mᵀ|` before symmetrization.
    pub asymmetry: f64,
}

pub fn dense_matrix(op: &impl LinearOperator) -> Result<DenseMatrix> {
    let n = op.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            params: n,
            limit: DENSE_LIMIT,
        });
    }
    let cols = exec::try_map_indexed(n, |j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        op.apply(&e)
    })?;
    let raw = Array::from_fn(n, n, |i, j| cols[j][i]);
    let mut asymmetry = 0.0f64;
    let symmetric = Array::from_fn(n, n, |i, j| {
        let (a, b) = (raw.get(i, j), raw.get(j, i));
        asymmetry = asymmetry.max((a - b).abs());
        0.5 * (a + b)
    });
    Ok(DenseMatrix {
        symmetric,
        asymmetry,
    })
}

pub fn dense_hessian(spec: &ModelSpec, w: &[f64], batch: &Dataset) -> Result<DenseMatrix> {
    let n = spec.n_params();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            params: n,
            limit: DENSE_LIMIT,
        });
    }
    dense_matrix(&HessianOperator::new(spec, w, batch, false)?)
}

/// Stopping rule for [`lambda_max`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// Stop when the Rayleigh quotient changes by at most `tol·max(1, |r|)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Seed of the random start vector.
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            tol: 1e-8,
            max_iters: 1000,
            seed: 0,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Iterates `v ← (A + shift·I)v / ‖·‖` until the Rayleigh quotient of
/// `A + shift·I` settles; returns that quotient.
/// `Err(last quotient)` when `max_iters` is exhausted.
fn power(
    op: &impl LinearOperator,
    shift: f64,
    start: Vec<f64>,
    cfg: &PowerIteration,
) -> Result<std::result::Result<f64, f64>> {
    let mut v = start;
    let mut prev = f64::NAN;
    for it in 0..cfg.max_iters {
        let mut av = op.apply(&v)?;
        av.iter_mut().zip(&v).for_each(|(a, x)| *a += shift * x);
        let r = dot(&v, &av);
        if !r.is_finite() {
            return Err(Error::NonFinite {
                value: r,
                iteration: it,
            });
        }
        let n = norm(&av);
        if n == 0.0 {
            return Ok(Ok(0.0));
        }
        if (r - prev).abs() <= cfg.tol * r.abs().max(1.0) {
            return Ok(Ok(r));
        }
        prev = r;
        v = av.into_iter().map(|x| x / n).collect();
    }
    Ok(Err(prev))
}

/// Algebraically largest eigenvalue by shifted power iteration: a first
/// pass estimates the spectral radius `σ`, the second runs on `A + σI`.
pub fn lambda_max(op: &impl LinearOperator, cfg: &PowerIteration) -> Result<f64> {
    use rand::Rng;
    let n = op.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("operator has dimension 0".into()));
    }
    let mut rng = stream(cfg.seed, &[]);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = norm(&start);
    start.iter_mut().for_each(|x| *x /= s);

    // Spectral radius: |Rayleigh quotient| of A² on the dominant direction.
    let sigma = {
        let mut v = start.clone();
        let mut prev = f64::NAN;
        let mut sigma = None;
        for _ in 0..cfg.max_iters {
            let av = op.apply(&v)?;
            let nv = norm(&av);
            if nv == 0.0 {
                sigma = Some(0.0);
                break;
            }
            if (nv - prev).abs() <= cfg.tol * nv.max(1.0) {
                sigma = Some(nv);
                break;
            }
            prev = nv;
            v = av.into_iter().map(|x| x / nv).collect();
        }
        sigma.unwrap_or(prev)
    };
    match power(op, sigma, start, cfg)? {
        Ok(r) => Ok(r - sigma),
        Err(r) => Err(Error::NoConvergence {
            iterations: cfg.max_iters,
            rayleigh: r - sigma,
        }),
    }
}

/// Hutchinson estimate of `tr(A)` from Rademacher probes, with its
/// standard error. Probe `i` draws from stream `(seed, i)`.
pub fn hutchinson_trace(
    op: &impl LinearOperator,
    n_probes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    use rand::Rng;
    if n_probes < 2 {
        return Err(Error::InvalidArgument(format!(
            "Hutchinson needs at least 2 probes, got {n_probes}"
        )));
    }
    let n = op.dim();
    let samples = exec::try_map_indexed(n_probes, |i| {
        let mut rng = stream(seed, &[i as u64]);
        let z: Vec<f64> = (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Ok::<_, Error>(dot(&z, &op.apply(&z)?))
    })?;
    let k = n_probes as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Targets;

    fn diag(values: &[f64]) -> DenseOperator {
        DenseOperator(Array::diag(values))
    }

    fn tight() -> PowerIteration {
        PowerIteration {
            tol: 1e-14,
            max_iters: 100_000,
            seed: 1,
        }
    }

    #[test]
    fn lambda_max_examples() {
        let cfg = PowerIteration::default();
        assert!((lambda_max(&diag(&[1.0, 2.0, 3.0]), &cfg).unwrap() - 3.0).abs() < 1e-6);
        assert!((lambda_max(&diag(&[-5.0, 2.0]), &cfg).unwrap() - 2.0).abs() < 1e-6);
        assert!((lambda_max(&diag(&[-5.0, -2.0]), &tight()).unwrap() + 2.0).abs() < 1e-6);
        assert_eq!(lambda_max(&diag(&[0.0, 0.0]), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn rescaled_operator_matches_elementwise_product() {
        let a = Array::new(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        let c = ScalingVector::custom(vec![0.5, 2.0]).unwrap();
        let op = RescaledOperator::new(DenseOperator(a), &c).unwrap();
        let m = dense_matrix(&op).unwrap().symmetric;
        assert_eq!(m.data(), &[0.5, 1.0, 1.0, 12.0]);
    }

    #[test]
    fn hutchinson_examples() {
        let (t, se) = hutchinson_trace(&DenseOperator(Array::identity(100)), 4, 0).unwrap();
        assert_eq!((t, se), (100.0, 0.0));
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let (t, se) = hutchinson_trace(&diag(&d), 500, 3).unwrap();
        assert!((t - 55.0).abs() <= 3.0 * se.max(1e-12));
        assert!(hutchinson_trace(&diag(&d), 1, 3).is_err());
    }

    #[test]
    fn one_coordinate_diaglin_hessian() {
        let spec = ModelSpec::DiagLin { dim: 1 };
        let ds = Dataset::new(Array::identity(1), Targets::Values(vec![0.0])).unwrap();
        let h = dense_hessian(&spec, &[1.0, 0.0], &ds).unwrap();
        // L = ½u²v², H = [[v², 2uv], [2uv, u²]]
        assert_eq!(h.symmetric.data(), &[0.0, 0.0, 0.0, 1.0]);
        let h = dense_hessian(&spec, &[1.0, 2.0], &ds).unwrap();
        assert_eq!(h.symmetric.data(), &[4.0, 4.0, 4.0, 1.0]);
        assert_eq!(h.asymmetry, 0.0);
    }

    #[test]
    fn too_large_is_rejected() {
        let spec = ModelSpec::Linear {
            input_dim: 1001,
            classes: 2,
            bias: false,
        };
        let ds = Dataset::new(
            Array::zeros(2, 1001),
            Targets::Classes {
                labels: vec![0, 1],
                n_classes: 2,
            },
        )
        .unwrap();
        assert!(matches!(
            dense_hessian(&spec, &vec![0.0; 2002], &ds),
            Err(Error::TooLarge { .. })
        ));
    }
}
