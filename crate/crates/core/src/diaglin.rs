//! Diagonal linear networks `β = u ⊙ v` on sparse regression.
//!
//! Loss is `L(u, v) = ½‖X(u ⊙ v) − y‖²`. At a global minimum of whitened
//! data (`XᵀX = I`) the Hessian is the block matrix
//! `[[diag(v²), diag(uv)], [diag(uv), diag(u²)]]`.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::exec;
use crate::hessian::{dense_hessian, lambda_max, DenseOperator, PowerIteration};
use crate::models::ModelSpec;
use crate::perturb::ScalingVector;
use crate::pool::kendall_tau;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub n: usize,
    pub d: usize,
    /// Fraction of zero coordinates in `β*`.
    pub sparsity: f64,
    pub noise_std: f64,
    /// Orthonormalize the columns of `X` (needs `n ≥ d`).
    pub whiten: bool,
    /// Scale Gaussian columns to unit norm (otherwise entries are `N(0, 1/n)`).
    pub unit_columns: bool,
    pub n_test: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n: 100,
            d: 200,
            sparsity: 0.9,
            noise_std: 0.0,
            whiten: false,
            unit_columns: true,
            n_test: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseTask {
    pub x_train: Array<f64>,
    pub y_train: Vec<f64>,
    /// Rows drawn like the training rows; targets are noise-free.
    pub x_test: Array<f64>,
    pub y_test: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub sparsity: f64,
    pub whitened: bool,
}

/// Orthonormalizes the columns of `x` in place (modified Gram-Schmidt,
/// two passes).
fn orthonormalize_columns(x: &mut Array<f64>) -> Result<()> {
    let (n, d) = (x.rows(), x.cols());
    for _pass in 0..2 {
        for j in 0..d {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| x.get(i, j) * x.get(i, k)).sum();
                for i in 0..n {
                    x.set(i, j, x.get(i, j) - dot * x.get(i, k));
                }
            }
            let norm = (0..n).map(|i| x.get(i, j).powi(2)).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(Error::InvalidArgument(
                    "design matrix is rank deficient".into(),
                ));
            }
            for i in 0..n {
                x.set(i, j, x.get(i, j) / norm);
            }
        }
    }
    Ok(())
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array<f64> {
    Array::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn unit_columns(x: &mut Array<f64>) {
    for j in 0..x.cols() {
        let norm = (0..x.rows())
            .map(|i| x.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            for i in 0..x.rows() {
                x.set(i, j, x.get(i, j) / norm);
            }
        }
    }
}

fn mat_vec(x: &Array<f64>, b: &[f64]) -> Vec<f64> {
    (0..x.rows())
        .map(|i| x.row(i).iter().zip(b).map(|(a, b)| a * b).sum())
        .collect()
}

/// `Xᵀr`
fn mat_t_vec(x: &Array<f64>, r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.cols()];
    for (i, &ri) in r.iter().enumerate() {
        for (o, &xij) in out.iter_mut().zip(x.row(i)) {
            *o += xij * ri;
        }
    }
    out
}

/// Draws a task from streams `(seed, 0..4)`.
pub fn make_task(cfg: &TaskConfig, seed: u64) -> Result<SparseTask> {
    if !(0.0..1.0).contains(&cfg.sparsity) {
        return Err(Error::InvalidArgument(format!(
            "sparsity must be in [0, 1), got {}",
            cfg.sparsity
        )));
    }
    if cfg.n == 0 || cfg.d == 0 || cfg.n_test == 0 {
        return Err(Error::InvalidArgument(
            "n, d and n_test must be positive".into(),
        ));
    }
    if cfg.whiten && cfg.n < cfg.d {
        return Err(Error::InvalidArgument(format!(
            "whitening needs n ≥ d, got n = {} and d = {}",
            cfg.n, cfg.d
        )));
    }
    let scale = 1.0 / (cfg.n as f64).sqrt();
    let mut x = gaussian(cfg.n, cfg.d, scale, &mut stream(seed, &[0]));
    if cfg.whiten {
        orthonormalize_columns(&mut x)?;
    } else if cfg.unit_columns {
        unit_columns(&mut x);
    }

    let mut rng = stream(seed, &[1]);
    let k = ((1.0 - cfg.sparsity) * cfg.d as f64).round() as usize;
    let mut beta_star = vec![0.0; cfg.d];
    for i in sample(&mut rng, cfg.d, k) {
        let mag = rng.random_range(0.5..1.5);
        beta_star[i] = if rng.random::<bool>() { mag } else { -mag };
    }

    let mut rng = stream(seed, &[2]);
    let y_train = mat_vec(&x, &beta_star)
        .into_iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + cfg.noise_std * z
        })
        .collect();
    let x_test = gaussian(cfg.n_test, cfg.d, scale, &mut stream(seed, &[3]));
    let y_test = mat_vec(&x_test, &beta_star);
    Ok(SparseTask {
        x_train: x,
        y_train,
        x_test,
        y_test,
        beta_star,
        sparsity: cfg.sparsity,
        whitened: cfg.whiten,
    })
}

impl SparseTask {
    pub fn d(&self) -> usize {
        self.x_train.cols()
    }

    pub fn train_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.x_train.clone(), Targets::Values(self.y_train.clone()))
    }

    /// Same inputs with training targets `Xβ`, so `β` is a global minimum.
    pub fn interpolating(&self, beta: &[f64]) -> SparseTask {
        SparseTask {
            y_train: mat_vec(&self.x_train, beta),
            ..self.clone()
        }
    }

    pub fn train_loss(&self, beta: &[f64]) -> f64 {
        let r = mat_vec(&self.x_train, beta);
        0.5 * r
            .iter()
            .zip(&self.y_train)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
    }

    /// `½ mean((x·β − y)²)` over the test rows.
    pub fn test_loss(&self, beta: &[f64]) -> f64 {
        let p = mat_vec(&self.x_test, beta);
        let n = p.len() as f64;
        0.5 * p
            .iter()
            .zip(&self.y_test)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n
    }

    /// `max |XᵀX − I|`
    pub fn whitening_error(&self) -> f64 {
        let g = self
            .x_train
            .t_matmul(&self.x_train)
            .expect("square Gram matrix");
        g.max_abs_diff(&Array::identity(self.d()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagNetParams {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl DiagNetParams {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::LengthMismatch {
                expected: u.len(),
                got: v.len(),
            });
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite diagonal network weight".into(),
            ));
        }
        Ok(DiagNetParams { u, v })
    }

    /// Splits `[u; v]`.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        if !w.len().is_multiple_of(2) {
            return Err(Error::Shape(format!("odd weight count {}", w.len())));
        }
        let (u, v) = w.split_at(w.len() / 2);
        DiagNetParams::new(u.to_vec(), v.to_vec())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.u.iter().chain(&self.v).copied().collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(a, b)| a * b).collect()
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::DiagLin { dim: self.dim() }
    }

    /// `(αu, v/α)`
    pub fn rescaled(&self, alpha: f64) -> DiagNetParams {
        DiagNetParams {
            u: self.u.iter().map(|x| alpha * x).collect(),
            v: self.v.iter().map(|x| x / alpha).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: DiagNetParams,
    pub loss: f64,
    pub steps: usize,
}

/// Loss above which training counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Full-batch gradient descent on `½‖X(u ⊙ v) − y‖²` until the loss is at
/// most `target_loss` or `max_steps` updates have been made.
pub fn train_diag(
    task: &SparseTask,
    init: &DiagNetParams,
    lr: f64,
    max_steps: usize,
    target_loss: f64,
) -> Result<TrainOutcome> {
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if init.dim() != task.d() {
        return Err(Error::LengthMismatch {
            expected: task.d(),
            got: init.dim(),
        });
    }
    let x = &task.x_train;
    let (mut u, mut v) = (init.u.clone(), init.v.clone());
    let mut beta: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
    let mut step = 0;
    loop {
        let r: Vec<f64> = mat_vec(x, &beta)
            .iter()
            .zip(&task.y_train)
            .map(|(p, y)| p - y)
            .collect();
        let loss = 0.5 * r.iter().map(|e| e * e).sum::<f64>();
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Divergence { step, loss });
        }
        if loss <= target_loss || step >= max_steps {
            return Ok(TrainOutcome {
                params: DiagNetParams { u, v },
                loss,
                steps: step,
            });
        }
        let g = mat_t_vec(x, &r);
        for i in 0..u.len() {
            let (ui, vi) = (u[i], v[i]);
            u[i] = ui - lr * g[i] * vi;
            v[i] = vi - lr * g[i] * ui;
            beta[i] = u[i] * v[i];
        }
        step += 1;
    }
}

/// Scaling `c = [√(|u|/|v|); √(|v|/|u|)]`, under which
/// `½ tr(H ⊙ ccᵀ) = ‖β‖₁` at a whitened global minimum. Coordinates with
/// `u_i v_i = 0` get `c = 0` on both blocks.
pub fn custom_scaling(params: &DiagNetParams) -> ScalingVector {
    let d = params.dim();
    let mut c = vec![0.0; 2 * d];
    for i in 0..d {
        let (a, b) = (params.u[i].abs(), params.v[i].abs());
        if a > 0.0 && b > 0.0 {
            c[i] = (a / b).sqrt();
            c[d + i] = (b / a).sqrt();
        }
    }
    ScalingVector::custom(c).expect("nonnegative by construction")
}

/// Closed-form sharpness quantities of the whitened-minimum Hessian `H`.
/// `H̃ = H ⊙ ccᵀ` uses [`custom_scaling`]; the `adaptive` fields use `c = |w|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub l1: f64,
    pub l2_sq: f64,
    pub linf: f64,
    pub trace_h: f64,
    pub lambda_max_h: f64,
    pub trace_rescaled: f64,
    pub lambda_max_rescaled: f64,
    pub trace_adaptive: f64,
    pub lambda_max_adaptive: f64,
}

/// Largest residual norm accepted as a global minimum.
pub const MINIMUM_RESIDUAL: f64 = 1e-4;

/// With `at_min = Some(task)` the task must be whitened and `params` must
/// interpolate it.
pub fn closed_form_quantities(
    params: &DiagNetParams,
    at_min: Option<&SparseTask>,
) -> Result<ClosedForm> {
    let beta = params.beta();
    if let Some(task) = at_min {
        if !task.whitened {
            return Err(Error::NotAtMinimum("task is not whitened".into()));
        }
        let res = (2.0 * task.train_loss(&beta)).sqrt();
        if res > MINIMUM_RESIDUAL {
            return Err(Error::NotAtMinimum(format!("residual norm {res:e}")));
        }
    }
    let abs: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
    let linf = abs.iter().fold(0.0f64, |m, &b| m.max(b));
    let block: Vec<f64> = params
        .u
        .iter()
        .zip(&params.v)
        .map(|(u, v)| u * u + v * v)
        .collect();
    Ok(ClosedForm {
        l1: abs.iter().sum(),
        l2_sq: abs.iter().map(|b| b * b).sum(),
        linf,
        trace_h: block.iter().sum(),
        lambda_max_h: block.iter().fold(0.0f64, |m, &b| m.max(b)),
        trace_rescaled: 2.0 * abs.iter().sum::<f64>(),
        lambda_max_rescaled: 2.0 * linf,
        trace_adaptive: 2.0 * abs.iter().map(|b| b * b).sum::<f64>(),
        lambda_max_adaptive: 2.0 * linf * linf,
    })
}

/// Distribution of the initial weights, given a scale `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `u, v ~ a·N(0, 1)`
    Gaussian,
    /// `u ~ a·N(0, 1)`, `v ~ b·N(0, 1)` with `b` drawn independently from
    /// the same scale range.
    Independent,
    /// `u = a`, `v = 0`
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub n_models: usize,
    pub task: TaskConfig,
    /// Learning rates are log-uniform in this range.
    pub lr_range: [f64; 2],
    /// Initialization scales are log-uniform in this range.
    pub init_range: [f64; 2],
    pub init: InitScheme,
    pub target_loss: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(Error::InvalidArgument("n_models must be positive".into()));
        }
        for r in [self.lr_range, self.init_range] {
            if !(r[0] > 0.0 && r[1] >= r[0]) {
                return Err(Error::InvalidArgument(format!("invalid range {r:?}")));
            }
        }
        if !(self.target_loss > 0.0) || self.max_steps == 0 {
            return Err(Error::InvalidArgument(
                "target_loss and max_steps must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_models: 200,
            task: TaskConfig {
                noise_std: 0.1,
                ..TaskConfig::default()
            },
            lr_range: [0.01, 0.3],
            init_range: [1e-3, 1.0],
            init: InitScheme::Independent,
            target_loss: 1e-5,
            max_steps: 200_000,
            seed: 0,
        }
    }
}

/// One trained network. Measures are `NaN` for excluded models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub model: usize,
    /// Key of the stream that drew `lr`, `init_scale` and the initialization.
    pub seed: u64,
    pub lr: f64,
    pub init_scale: f64,
    pub steps: usize,
    pub train_loss: f64,
    pub passed: bool,
    pub test_loss: f64,
    pub l1_norm: f64,
    pub half_trace_rescaled: f64,
    pub half_trace: f64,
    pub half_lambda_max_rescaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub n_models: usize,
    pub n_passed: usize,
    pub n_excluded: usize,
    /// Kendall τ against test loss; `None` with fewer than 2 passing models.
    pub tau_l1_test: Option<f64>,
    pub tau_half_trace_rescaled_test: Option<f64>,
    pub tau_half_trace_test: Option<f64>,
    pub tau_half_lambda_max_rescaled_test: Option<f64>,
    pub tau_l1_half_trace_rescaled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub summary: StudySummary,
}

fn log_uniform(range: [f64; 2], rng: &mut impl Rng) -> f64 {
    let (lo, hi) = (range[0].ln(), range[1].ln());
    if hi <= lo {
        return range[0];
    }
    rng.random_range(lo..hi).exp()
}

fn init_params(
    scheme: InitScheme,
    scale: f64,
    range: [f64; 2],
    d: usize,
    rng: &mut impl Rng,
) -> DiagNetParams {
    let normal = |s: f64, rng: &mut _| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            })
            .collect()
    };
    match scheme {
        InitScheme::Gaussian => {
            let u = normal(scale, rng);
            let v = normal(scale, rng);
            DiagNetParams { u, v }
        }
        InitScheme::Independent => {
            let b = log_uniform(range, rng);
            let u = normal(scale, rng);
            let v = normal(b, rng);
            DiagNetParams { u, v }
        }
        InitScheme::Constant => DiagNetParams {
            u: vec![scale; d],
            v: vec![0.0; d],
        },
    }
}

/// `½tr(H̃)`, `½tr(H)` and `½λmax(H̃)` from the autodiff dense Hessian.
pub fn numerical_measures(task: &SparseTask, params: &DiagNetParams) -> Result<(f64, f64, f64)> {
    let h = dense_hessian(&params.spec(), &params.weights(), &task.train_dataset()?)?.symmetric;
    let c = custom_scaling(params);
    let c = c.values();
    let n = c.len();
    let rescaled = Array::from_fn(n, n, |i, j| c[i] * c[j] * h.get(i, j));
    let lam = lambda_max(
        &DenseOperator(rescaled.clone()),
        &PowerIteration {
            tol: 1e-12,
            max_iters: 20_000,
            seed: 0,
        },
    )?;
    Ok((0.5 * rescaled.trace(), 0.5 * h.trace(), 0.5 * lam))
}

fn run_model(cfg: &StudyConfig, task: &SparseTask, model: usize) -> StudyRow {
    let seed = derive_seed(cfg.seed, &[1, model as u64]);
    let mut rng = stream(seed, &[]);
    let lr = log_uniform(cfg.lr_range, &mut rng);
    let init_scale = log_uniform(cfg.init_range, &mut rng);
    let init = init_params(cfg.init, init_scale, cfg.init_range, task.d(), &mut rng);
    let mut row = StudyRow {
        model,
        seed,
        lr,
        init_scale,
        steps: 0,
        train_loss: f64::NAN,
        passed: false,
        test_loss: f64::NAN,
        l1_norm: f64::NAN,
        half_trace_rescaled: f64::NAN,
        half_trace: f64::NAN,
        half_lambda_max_rescaled: f64::NAN,
    };
    let out = match train_diag(task, &init, lr, cfg.max_steps, cfg.target_loss) {
        Ok(out) => out,
        Err(Error::Divergence { step, loss }) => {
            row.steps = step;
            row.train_loss = loss;
            return row;
        }
        Err(_) => return row,
    };
    row.steps = out.steps;
    row.train_loss = out.loss;
    if out.loss > cfg.target_loss {
        return row;
    }
    let beta = out.params.beta();
    match numerical_measures(task, &out.params) {
        Ok((tr_rescaled, tr, lam)) => {
            row.passed = true;
            row.test_loss = task.test_loss(&beta);
            row.l1_norm = beta.iter().map(|b| b.abs()).sum();
            row.half_trace_rescaled = tr_rescaled;
            row.half_trace = tr;
            row.half_lambda_max_rescaled = lam;
        }
        Err(e) => log::warn!("model {model}: {e}"),
    }
    row
}

fn tau_of(
    rows: &[&StudyRow],
    a: impl Fn(&StudyRow) -> f64,
    b: impl Fn(&StudyRow) -> f64,
) -> Option<f64> {
    let ta: Vec<f64> = rows.iter().map(|r| a(r)).collect();
    let tb: Vec<f64> = rows.iter().map(|r| b(r)).collect();
    kendall_tau(&ta, &tb).ok()
}

pub fn summarize(rows: &[StudyRow]) -> StudySummary {
    let ok: Vec<&StudyRow> = rows.iter().filter(|r| r.passed).collect();
    let test = |r: &StudyRow| r.test_loss;
    StudySummary {
        n_models: rows.len(),
        n_passed: ok.len(),
        n_excluded: rows.len() - ok.len(),
        tau_l1_test: tau_of(&ok, |r| r.l1_norm, test),
        tau_half_trace_rescaled_test: tau_of(&ok, |r| r.half_trace_rescaled, test),
        tau_half_trace_test: tau_of(&ok, |r| r.half_trace, test),
        tau_half_lambda_max_rescaled_test: tau_of(&ok, |r| r.half_lambda_max_rescaled, test),
        tau_l1_half_trace_rescaled: tau_of(&ok, |r| r.l1_norm, |r| r.half_trace_rescaled),
    }
}

/// Trains `n_models` networks on one task (stream `(seed, 0)`), model `k`
/// drawing its learning rate, scale and initialization from the stream keyed
/// by `derive_seed(seed, [1, k])`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let task = make_task(&cfg.task, derive_seed(cfg.seed, &[0]))?;
    let rows = exec::map_indexed(cfg.n_models, |k| run_model(cfg, &task, k));
    let summary = summarize(&rows);
    Ok(StudyResult { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn whitened(d: usize, seed: u64) -> SparseTask {
        let cfg = TaskConfig {
            n: d,
            d,
            sparsity: 0.0,
            whiten: true,
            ..TaskConfig::default()
        };
        make_task(&cfg, seed).unwrap()
    }

    #[test]
    fn task_shapes() {
        let t = make_task(&TaskConfig::default(), 1).unwrap();
        assert_eq!(t.beta_star.iter().filter(|b| **b != 0.0).count(), 20);
        assert!(t
            .beta_star
            .iter()
            .all(|b| *b == 0.0 || (0.5..1.5).contains(&b.abs())));
        let cfg = TaskConfig {
            sparsity: 0.5,
            ..TaskConfig::default()
        };
        assert!(make_task(
            &TaskConfig {
                whiten: true,
                ..cfg.clone()
            },
            1
        )
        .is_err());
        assert!(make_task(
            &TaskConfig {
                sparsity: 1.0,
                ..cfg
            },
            1
        )
        .is_err());
    }

    #[test]
    fn whitening_postcondition() {
        assert!(whitened(50, 2).whitening_error() <= 1e-10);
    }

    #[test]
    fn zero_truth_zero_noise_gives_zero_targets() {
        let t = make_task(
            &TaskConfig {
                d: 10,
                n: 5,
                sparsity: 0.99,
                ..TaskConfig::default()
            },
            3,
        )
        .unwrap();
        assert!(t.beta_star.iter().all(|b| *b == 0.0));
        assert!(t.y_train.iter().all(|y| *y == 0.0));
    }

    #[test]
    fn training_fixpoints() {
        let task = SparseTask {
            x_train: Array::identity(1),
            y_train: vec![1.0],
            x_test: Array::identity(1),
            y_test: vec![1.0],
            beta_star: vec![1.0],
            sparsity: 0.0,
            whitened: true,
        };
        let init = DiagNetParams::new(vec![1.0], vec![1.0]).unwrap();
        let out = train_diag(&task, &init, 0.1, 100, 0.0).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.params, init);
        assert!(matches!(
            train_diag(
                &task,
                &DiagNetParams::new(vec![30.0], vec![30.0]).unwrap(),
                10.0,
                100,
                0.0
            ),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn training_reaches_target() {
        let cfg = TaskConfig {
            n: 30,
            d: 60,
            ..TaskConfig::default()
        };
        let task = make_task(&cfg, 4).unwrap();
        let mut rng = stream(5, &[]);
        let init = init_params(InitScheme::Gaussian, 0.1, [0.1, 0.1], 60, &mut rng);
        let out = train_diag(&task, &init, 0.1, 100_000, 1e-5).unwrap();
        assert!(out.loss <= 1e-5);
    }

    #[test]
    fn closed_form_example() {
        let p = DiagNetParams::new(vec![1.0, 2.0], vec![3.0, -1.0]).unwrap();
        let cf = closed_form_quantities(&p, None).unwrap();
        assert_eq!(
            (cf.trace_h, cf.lambda_max_h, cf.l1, cf.linf),
            (15.0, 10.0, 5.0, 3.0)
        );
        assert_eq!((cf.trace_rescaled, cf.lambda_max_rescaled), (10.0, 6.0));
        let z = DiagNetParams::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let cf = closed_form_quantities(&z, None).unwrap();
        assert_eq!(
            cf.trace_h + cf.lambda_max_h + cf.l1 + cf.trace_rescaled,
            0.0
        );
    }

    #[test]
    fn custom_scaling_examples() {
        let p = DiagNetParams::new(vec![1.0, 2.0, 0.0], vec![1.0, -2.0, 5.0]).unwrap();
        let c = custom_scaling(&p);
        assert_eq!(c.values(), &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn closed_form_matches_dense_hessian() {
        let task = whitened(2, 6);
        let p = DiagNetParams::new(vec![1.0, 2.0], vec![3.0, -1.0]).unwrap();
        let task = task.interpolating(&p.beta());
        let cf = closed_form_quantities(&p, Some(&task)).unwrap();
        let (tr_r, tr, lam_r) = numerical_measures(&task, &p).unwrap();
        assert!((2.0 * tr - cf.trace_h).abs() < 1e-9);
        assert!((2.0 * tr_r - 10.0).abs() < 1e-9);
        assert!((2.0 * lam_r - cf.lambda_max_rescaled).abs() < 1e-9);
        let off = task.interpolating(&[0.0, 0.0]);
        assert!(matches!(
            closed_form_quantities(&p, Some(&off)),
            Err(Error::NotAtMinimum(_))
        ));
    }

    #[test]
    fn reparametrization_changes_only_standard_quantities() {
        let p = DiagNetParams::new(vec![0.5, -1.5, 2.0], vec![1.0, 0.3, -0.7]).unwrap();
        let q = p.rescaled(2.0);
        let (a, b) = (
            closed_form_quantities(&p, None).unwrap(),
            closed_form_quantities(&q, None).unwrap(),
        );
        assert!((a.l1 - b.l1).abs() < 1e-12);
        assert!((a.trace_rescaled - b.trace_rescaled).abs() < 1e-12);
        assert!((a.lambda_max_rescaled - b.lambda_max_rescaled).abs() < 1e-12);
        // tr(H) = Σ u² + v² becomes Σ 4u² + v²/4
        let expect: f64 = p.u.iter().map(|u| 4.0 * u * u).sum::<f64>()
            + p.v.iter().map(|v| v * v / 4.0).sum::<f64>();
        assert!((b.trace_h - expect).abs() < 1e-12);
        assert!((b.trace_h - a.trace_h).abs() > 1.0);
    }

    #[test]
    fn single_model_pool_has_undefined_tau() {
        let cfg = StudyConfig {
            n_models: 1,
            task: TaskConfig {
                n: 10,
                d: 20,
                ..TaskConfig::default()
            },
            ..StudyConfig::default()
        };
        let r = run_study(&cfg).unwrap();
        assert_eq!(r.summary.n_models, 1);
        assert_eq!(r.summary.tau_l1_test, None);
    }
}
