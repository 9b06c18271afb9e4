//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use adasharp::autodiff::Array;
use adasharp::data::{Dataset, GaussianMixture, Targets};
use adasharp::hessian::dense_hessian;
use adasharp::models::{BatchLoss, ModelSpec};
use adasharp::rng::stream;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Kendall τ over all ordered pairs.
pub fn brute_tau(t: &[f64], s: &[f64]) -> f64 {
    let m = t.len();
    let mut sum = 0i64;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let a = (t[i] - t[j]).partial_cmp(&0.0).unwrap() as i64;
                let b = (s[i] - s[j]).partial_cmp(&0.0).unwrap() as i64;
                sum += a * b;
            }
        }
    }
    sum as f64 / (m * (m - 1)) as f64
}

pub fn to_nalgebra(a: &Array<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j))
}

/// Eigenvalues of the symmetric part, ascending.
pub fn eigenvalues(a: &Array<f64>) -> Vec<f64> {
    let m = to_nalgebra(a);
    let s = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

pub fn eig_max(a: &Array<f64>) -> f64 {
    *eigenvalues(a).last().unwrap()
}

/// `diag(c) A diag(c)`
pub fn rescale(a: &Array<f64>, c: &[f64]) -> Array<f64> {
    Array::from_fn(a.rows(), a.cols(), |i, j| c[i] * a.get(i, j) * c[j])
}

pub fn trace(a: &Array<f64>) -> f64 {
    (0..a.rows()).map(|i| a.get(i, i)).sum()
}

pub fn gaussian(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array<f64> {
    Array::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn mat_vec(x: &Array<f64>, w: &[f64]) -> Vec<f64> {
    (0..x.rows())
        .map(|i| (0..x.cols()).map(|j| x.get(i, j) * w[j]).sum())
        .collect()
}

pub fn regression(x: Array<f64>, y: Vec<f64>) -> Dataset {
    Dataset::new(x, Targets::Values(y)).unwrap()
}

pub fn mixture(n_classes: usize, dim: usize, separation: f64, seed: u64, n: usize) -> Dataset {
    GaussianMixture {
        n_classes,
        dim,
        separation,
        seed,
    }
    .sample(n, 0)
    .unwrap()
}

/// Full-batch heavy-ball descent, for fixtures that must sit close to a
/// stationary point. Returns the weights and the final gradient norm.
pub fn descend(
    spec: &ModelSpec,
    data: &Dataset,
    w0: Vec<f64>,
    lr: f64,
    iters: usize,
) -> (Vec<f64>, f64) {
    let loss = BatchLoss::new(spec, data, false).unwrap();
    let mut w = w0;
    let mut buf = vec![0.0; w.len()];
    let mut gnorm = f64::INFINITY;
    for _ in 0..iters {
        let (_, g) = loss.value_and_grad(&w).unwrap();
        gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..w.len() {
            buf[i] = 0.9 * buf[i] + g[i];
            w[i] -= lr * buf[i];
        }
    }
    (w, gnorm)
}

/// A ReLU MLP `[3, 5, 3]` at an exact stationary point on overlapping
/// classes: every hidden unit is active on every point, and the product of
/// the two layers reproduces the (Newton-solved) multinomial logistic
/// regression optimum. Returns the gradient norm and the smallest hidden
/// pre-activation as well.
pub fn mlp_at_minimum(seed: u64) -> (ModelSpec, Vec<f64>, Dataset, f64, f64) {
    let (dim, hidden, k) = (3, 5, 3);
    let data = mixture(k, dim, 1.5, seed, 60);
    let lin = ModelSpec::Linear {
        input_dim: dim,
        classes: k,
        bias: true,
    };
    let loss = BatchLoss::new(&lin, &data, false).unwrap();
    let n = lin.n_params();
    let mut a = vec![0.0; n];
    for _ in 0..50 {
        let (_, g) = loss.value_and_grad(&a).unwrap();
        let h = to_nalgebra(&dense_hessian(&lin, &a, &data).unwrap().symmetric);
        // softmax is shift invariant, so the Hessian is singular
        let step = h
            .svd(true, true)
            .solve(&DVector::from_column_slice(&g), 1e-10)
            .unwrap();
        a.iter_mut().zip(step.iter()).for_each(|(x, s)| *x -= s);
    }
    let am = DMatrix::from_fn(dim, k, |i, j| a[i * k + j]);
    let a0 = DVector::from_fn(k, |j, _| a[dim * k + j]);
    let mut rng = stream(seed, &[9]);
    let w1: DMatrix<f64> = DMatrix::from_fn(dim, hidden, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.7 * z
    });
    let b1 = DVector::from_element(hidden, 8.0);
    let w2 = w1.transpose() * (&w1 * w1.transpose()).try_inverse().unwrap() * am;
    let b2 = a0 - w2.transpose() * &b1;
    let spec = ModelSpec::Mlp {
        widths: vec![dim, hidden, k],
        bias: true,
    };
    // nalgebra is column-major; the model wants row-major blocks
    let mut w: Vec<f64> = w1.transpose().iter().copied().collect();
    w.extend(b1.iter());
    w.extend(w2.transpose().iter());
    w.extend(b2.iter());
    let (_, g) = BatchLoss::new(&spec, &data, false)
        .unwrap()
        .value_and_grad(&w)
        .unwrap();
    let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let x = to_nalgebra(data.x());
    let pre = x * &w1;
    let min_pre = (0..pre.nrows())
        .flat_map(|i| (0..hidden).map(move |j| (i, j)))
        .map(|(i, j)| pre[(i, j)] + b1[j])
        .fold(f64::INFINITY, f64::min);
    (spec, w, data, gnorm, min_pre)
}
