//! Auto-PGD over the scaled ball.
//!
//! The solver works in normalized coordinates `γ = δ ⊙ c⁻¹`, where the
//! feasible set is a plain `ℓp` ball of radius `ρ` on the unfrozen
//! coordinates. Steps are `sign(∇_γ f)` for `ℓ∞` and `∇_γ f / ‖∇_γ f‖₂` for
//! `ℓ2`, with `∇_γ f = ∇_δ f ⊙ c`. Since `γ` and `∇_γ f` do not change when
//! the weights are multiplicatively reparametrized and `c` follows, the
//! trajectory does not either.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::perturb::{BallSpec, Norm, ScalingVector};

/// Scalar function of the perturbation `δ` with its gradient.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value_and_grad(&self, delta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

const MOMENTUM: f64 = 0.75;
const IMPROVE_FRACTION: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct ApgdResult {
    /// Best perturbation found, in weight coordinates.
    pub delta: Vec<f64>,
    pub f_max: f64,
    /// `f_max` after initialization and after every iteration.
    pub history: Vec<f64>,
}

/// Iterations after which the step-size conditions are checked:
/// `ceil(p_j·n)` for `p₀ = 0, p₁ = 0.22, p_{j+1} = p_j + max(p_j − p_{j−1} − 0.03, 0.06)`.
pub fn checkpoints(n_iters: usize) -> Vec<usize> {
    let n = n_iters as f64;
    let (mut prev, mut p) = (0.0f64, 0.22f64);
    let mut out = Vec::new();
    while p <= 1.0 {
        let w = (p * n - 1e-9).ceil().max(1.0) as usize;
        if out.last() != Some(&w) {
            out.push(w);
        }
        let next = p + (p - prev - 0.03).max(0.06);
        prev = p;
        p = next;
    }
    out
}

fn step(norm: Norm, g: &[f64], active: &[bool]) -> Vec<f64> {
    match norm {
        Norm::LInf => g
            .iter()
            .zip(active)
            .map(|(&x, &a)| if a && x != 0.0 { x.signum() } else { 0.0 })
            .collect(),
        Norm::L2 => {
            let n = g
                .iter()
                .zip(active)
                .filter(|(_, &a)| a)
                .map(|(x, _)| x * x)
                .sum::<f64>()
                .sqrt();
            if n == 0.0 {
                return vec![0.0; g.len()];
            }
            g.iter()
                .zip(active)
                .map(|(&x, &a)| if a { x / n } else { 0.0 })
                .collect()
        }
    }
}

/// Maximizes `objective` over `ball` with `n_iters` APGD steps.
///
/// The start point is uniform in the box for `ℓ∞` and a projected Gaussian
/// for `ℓ2`; `δ = 0` is also evaluated, so `f_max ≥ f(0)`.
pub fn apgd_maximize(
    objective: &impl Objective,
    ball: &BallSpec,
    n_iters: usize,
    rng: &mut impl Rng,
) -> Result<ApgdResult> {
    let n = ball.dim();
    if objective.dim() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: objective.dim(),
        });
    }
    if n_iters == 0 {
        return Err(Error::InvalidArgument(
            "APGD needs at least one iteration".into(),
        ));
    }
    let c = ball.scaling.values();
    let active: Vec<bool> = c.iter().map(|&x| x > 0.0).collect();
    let unit = BallSpec::new(
        ball.norm,
        ball.rho,
        ScalingVector::custom(active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect())?,
    )?;
    let rho = ball.rho;

    let eval = |gamma: &[f64], iteration: usize| -> Result<(f64, Vec<f64>)> {
        let delta: Vec<f64> = gamma.iter().zip(c).map(|(g, c)| g * c).collect();
        let (f, g) = objective.value_and_grad(&delta)?;
        if !f.is_finite() {
            return Err(Error::NonFinite {
                value: f,
                iteration,
            });
        }
        Ok((f, g.iter().zip(c).map(|(g, c)| g * c).collect()))
    };

    let start: Vec<f64> = match ball.norm {
        Norm::LInf => (0..n)
            .map(|_| {
                if rho > 0.0 {
                    rng.random_range(-rho..=rho)
                } else {
                    0.0
                }
            })
            .collect(),
        Norm::L2 => (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                rho * z
            })
            .collect(),
    };
    let mut x = unit.project(&start)?;
    let (mut f, mut g) = eval(&x, 0)?;
    let mut x_prev = x.clone();
    let (mut x_max, mut f_max, mut g_max) = (x.clone(), f, g.clone());
    let zero = vec![0.0; n];
    let (f0, g0) = eval(&zero, 0)?;
    if f0 > f_max {
        (x_max, f_max, g_max) = (zero, f0, g0);
    }

    let marks = checkpoints(n_iters);
    let mut eta = 2.0 * rho;
    let mut values = vec![f];
    let mut history = vec![f_max];
    let mut last_mark = 0;
    let mut f_max_at_mark = f_max;
    let mut reduced_at_mark = false;

    for k in 0..n_iters {
        let a = if k == 0 { 1.0 } else { MOMENTUM };
        let s = step(ball.norm, &g, &active);
        let z_raw: Vec<f64> = x.iter().zip(&s).map(|(x, s)| x + eta * s).collect();
        let z = unit.project(&z_raw)?;
        let mixed: Vec<f64> = (0..n)
            .map(|i| x[i] + a * (z[i] - x[i]) + (1.0 - a) * (x[i] - x_prev[i]))
            .collect();
        let x_new = unit.project(&mixed)?;
        let (f_new, g_new) = eval(&x_new, k + 1)?;
        x_prev = std::mem::replace(&mut x, x_new);
        (f, g) = (f_new, g_new);
        values.push(f);
        if f > f_max {
            (x_max, f_max, g_max) = (x.clone(), f, g.clone());
        }

        let it = k + 1;
        if marks.contains(&it) {
            let span = it - last_mark;
            let improved = (last_mark..it)
                .filter(|&i| values[i + 1] > values[i])
                .count();
            let oscillating = (improved as f64) < IMPROVE_FRACTION * span as f64;
            let stalled = !reduced_at_mark && f_max == f_max_at_mark;
            reduced_at_mark = oscillating || stalled;
            if reduced_at_mark {
                eta /= 2.0;
                x = x_max.clone();
                g = g_max.clone();
            }
            last_mark = it;
            f_max_at_mark = f_max;
        }
        history.push(f_max);
    }

    let delta = x_max.iter().zip(c).map(|(g, c)| g * c).collect();
    Ok(ApgdResult {
        delta,
        f_max,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    struct Linear(Vec<f64>);

    impl Objective for Linear {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn value_and_grad(&self, d: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((
                d.iter().zip(&self.0).map(|(a, b)| a * b).sum(),
                self.0.clone(),
            ))
        }
    }

    /// `-Σ δ_i²`
    struct Cap(usize);

    impl Objective for Cap {
        fn dim(&self) -> usize {
            self.0
        }
        fn value_and_grad(&self, d: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((
                -d.iter().map(|x| x * x).sum::<f64>(),
                d.iter().map(|x| -2.0 * x).collect(),
            ))
        }
    }

    fn ball(norm: Norm, rho: f64, c: Vec<f64>) -> BallSpec {
        BallSpec::new(norm, rho, ScalingVector::custom(c).unwrap()).unwrap()
    }

    #[test]
    fn checkpoint_schedule() {
        assert_eq!(checkpoints(20), vec![5, 9, 12, 14, 16, 18, 19, 20]);
        assert_eq!(checkpoints(100), vec![22, 41, 57, 70, 80, 87, 93, 99]);
        assert_eq!(checkpoints(1), vec![1]);
    }

    #[test]
    fn linear_objective_hits_holder_bound() {
        let g = vec![1.0, -2.0, 0.5, 3.0];
        let c = vec![0.5, 1.0, 2.0, 0.0];
        for norm in [Norm::LInf, Norm::L2] {
            let b = ball(norm, 0.1, c.clone());
            let r = apgd_maximize(&Linear(g.clone()), &b, 20, &mut stream(1, &[])).unwrap();
            let gc: Vec<f64> = g.iter().zip(&c).map(|(a, b)| a * b).collect();
            let bound = match norm {
                Norm::LInf => 0.1 * gc.iter().map(|x| x.abs()).sum::<f64>(),
                Norm::L2 => 0.1 * gc.iter().map(|x| x * x).sum::<f64>().sqrt(),
            };
            assert!(
                (r.f_max / bound - 1.0).abs() <= 1e-6,
                "{norm:?}: {} vs {bound}",
                r.f_max
            );
            assert_eq!(r.delta[3], 0.0);
            assert_eq!(b.project(&r.delta).unwrap(), r.delta);
        }
    }

    #[test]
    fn interior_maximum_returns_zero() {
        for norm in [Norm::LInf, Norm::L2] {
            let b = ball(norm, 0.3, vec![1.0]);
            let r = apgd_maximize(&Cap(1), &b, 20, &mut stream(2, &[])).unwrap();
            assert_eq!(r.f_max, 0.0);
            assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn zero_radius() {
        let b = ball(Norm::L2, 0.0, vec![1.0, 1.0]);
        let r = apgd_maximize(&Linear(vec![1.0, 1.0]), &b, 5, &mut stream(3, &[])).unwrap();
        assert_eq!(r.f_max, 0.0);
        assert_eq!(r.delta, vec![0.0, 0.0]);
    }
}
