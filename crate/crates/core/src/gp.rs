//! Scalar-input Gaussian-process regression with a squared-exponential
//! kernel and empirical-Bayes hyperparameter fitting.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{latin_hypercube, NelderMead};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub signal_variance: f64,
    /// Length scale in seconds.
    pub length_scale: f64,
    pub noise_variance: f64,
}

impl Hyperparams {
    pub fn new(signal_variance: f64, length_scale: f64, noise_variance: f64) -> Self {
        Self { signal_variance, length_scale, noise_variance }
    }

    pub fn is_valid(&self) -> bool {
        [self.signal_variance, self.length_scale, self.noise_variance]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
    }

    pub fn to_log(&self) -> [f64; 3] {
        [self.signal_variance.ln(), self.length_scale.ln(), self.noise_variance.ln()]
    }

    pub fn from_log(theta: &[f64]) -> Self {
        Self::new(theta[0].exp(), theta[1].exp(), theta[2].exp())
    }

    pub fn prior_variance(&self) -> f64 {
        self.signal_variance + self.noise_variance
    }
}

/// Squared-exponential covariance `s2 * exp(-(t1 - t2)^2 / (2 l^2))`.
pub fn kernel(t1: f64, t2: f64, h: &Hyperparams) -> f64 {
    let d = t1 - t2;
    h.signal_variance * (-0.5 * d * d / (h.length_scale * h.length_scale)).exp()
}

/// Lower Cholesky factor stored densely in row-major order.
#[derive(Debug, Clone)]
struct LowerFactor {
    n: usize,
    l: Vec<f64>,
}

impl LowerFactor {
    /// Factorize the symmetric matrix whose lower triangle is given in
    /// row-major order. Returns `None` unless it is positive definite.
    fn new(n: usize, mut a: Vec<f64>) -> Option<Self> {
        for j in 0..n {
            let row_j = &a[j * n..j * n + j];
            let d = a[j * n + j] - dot(row_j, row_j);
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            a[j * n + j] = d.sqrt();
            for i in j + 1..n {
                let (upper, lower) = a.split_at_mut(i * n);
                let row_j = &upper[j * n..j * n + n];
                let row_i = &mut lower[..n];
                row_i[j] = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / row_j[j];
            }
        }
        Some(Self { n, l: a })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Solve `L z = b`.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = vec![0.0; n];
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            z[i] = (b[i] - dot(row, &z[..i])) / self.at(i, i);
        }
        z
    }

    /// Solve `L^T x = z`.
    fn backward(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.at(i, i);
            let xi = x[i];
            for k in 0..i {
                x[k] -= self.at(i, k) * xi;
            }
        }
        x
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { self.at(i, j) } else { 0.0 })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        for (lane, s) in acc.iter_mut().enumerate() {
            *s += a[4 * c + lane] * b[4 * c + lane];
        }
    }
    let tail: f64 = (4 * chunks..n).map(|i| a[i] * b[i]).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cholesky factor of `K + (noise + jitter) I`, escalating the jitter from
/// 1e-10 to 1e-4 times the signal variance on failure.
fn factorize(sq_dist: &[f64], n: usize, h: &Hyperparams) -> Option<(LowerFactor, f64)> {
    let inv_two_l2 = 0.5 / (h.length_scale * h.length_scale);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let arg = sq_dist[i * n + j] * inv_two_l2;
            v[i * n + j] = if arg > 745.0 { 0.0 } else { h.signal_variance * (-arg).exp() };
        }
        v[i * n + i] = h.signal_variance + h.noise_variance;
    }
    if let Some(f) = LowerFactor::new(n, v.clone()) {
        return Some((f, 0.0));
    }
    let mut jitter = 1e-10 * h.signal_variance;
    let max_jitter = 1e-4 * h.signal_variance;
    while jitter <= max_jitter * (1.0 + 1e-12) {
        let mut vj = v.clone();
        for i in 0..n {
            vj[i * n + i] += jitter;
        }
        if let Some(f) = LowerFactor::new(n, vj) {
            return Some((f, jitter));
        }
        jitter *= 10.0;
    }
    None
}

fn squared_distances(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = times[i] - times[j];
            out[i * n + j] = d * d;
        }
    }
    out
}

/// Marginal log likelihood evaluator over a fixed dataset.
pub struct MarginalLikelihood {
    sq_dist: Vec<f64>,
    values: Vec<f64>,
}

impl MarginalLikelihood {
    pub fn new(times: &[f64], values: &[f64]) -> Self {
        Self { sq_dist: squared_distances(times), values: values.to_vec() }
    }

    /// `-1/2 y^T V^-1 y - 1/2 log|V| - n/2 log(2 pi)`, or `None` if `V`
    /// cannot be factorized.
    pub fn eval(&self, h: &Hyperparams) -> Option<f64> {
        if !h.is_valid() {
            return None;
        }
        let n = self.values.len();
        if n == 0 {
            return Some(0.0);
        }
        let (factor, _) = factorize(&self.sq_dist, n, h)?;
        let z = factor.forward(&self.values);
        let mll = -0.5 * dot(&z, &z) - 0.5 * factor.log_det() - 0.5 * n as f64 * LN_2PI;
        mll.is_finite().then_some(mll)
    }

    pub fn eval_log(&self, theta: &[f64]) -> Option<f64> {
        self.eval(&Hyperparams::from_log(theta))
    }
}

/// A conditioned GP with cached factorization and weights `V^-1 y`.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyperparams: Hyperparams,
    train_times: Vec<f64>,
    train_values: Vec<f64>,
    factor: Option<LowerFactor>,
    weights: Vec<f64>,
    jitter: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GpRecord {
    hyperparams: Hyperparams,
    train_times: Vec<f64>,
    train_values: Vec<f64>,
}

impl Serialize for GpModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GpRecord {
            hyperparams: self.hyperparams,
            train_times: self.train_times.clone(),
            train_values: self.train_values.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GpModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GpRecord::deserialize(d)?;
        GpModel::condition(r.hyperparams, r.train_times, r.train_values).map_err(serde::de::Error::custom)
    }
}

fn validate_times(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::InsufficientData("times and values differ in length".into()));
    }
    if times.iter().chain(values).any(|x| !x.is_finite()) {
        return Err(Error::InsufficientData("non-finite training data".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InsufficientData("training times must be strictly increasing".into()));
    }
    Ok(())
}

impl GpModel {
    /// The unconditioned prior.
    pub fn prior(hyperparams: Hyperparams) -> Self {
        Self {
            hyperparams,
            train_times: Vec::new(),
            train_values: Vec::new(),
            factor: None,
            weights: Vec::new(),
            jitter: 0.0,
        }
    }

    /// Condition the GP on `(times, values)` with fixed hyperparameters.
    pub fn condition(hyperparams: Hyperparams, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if !hyperparams.is_valid() {
            return Err(Error::InvalidConfig(format!("invalid hyperparameters {hyperparams:?}")));
        }
        validate_times(&times, &values)?;
        if times.is_empty() {
            return Ok(Self::prior(hyperparams));
        }
        let (factor, jitter) = factorize(&squared_distances(&times), times.len(), &hyperparams).ok_or_else(|| {
            Error::IllConditioned(format!(
                "factorization failed for {} points with {hyperparams:?}",
                times.len()
            ))
        })?;
        let weights = factor.backward(&factor.forward(&values));
        Ok(Self { hyperparams, train_times: times, train_values: values, factor: Some(factor), weights, jitter })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn train_times(&self) -> &[f64] {
        &self.train_times
    }

    pub fn train_values(&self) -> &[f64] {
        &self.train_values
    }

    /// `V^-1 y` for the training data.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Diagonal jitter that was needed on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower_factor(&self) -> Option<DMatrix<f64>> {
        self.factor.as_ref().map(LowerFactor::to_matrix)
    }

    /// Posterior predictive mean and variance at `t`, including observation noise.
    pub fn predict(&self, t: f64) -> (f64, f64) {
        let h = &self.hyperparams;
        let prior = h.prior_variance();
        let Some(factor) = &self.factor else {
            return (0.0, prior);
        };
        let k: Vec<f64> = self.train_times.iter().map(|&ti| kernel(t, ti, h)).collect();
        let mean = dot(&k, &self.weights);
        let v = factor.forward(&k);
        let var = (prior - dot(&v, &v)).clamp(h.noise_variance, prior);
        (mean, var)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        MarginalLikelihood::new(&self.train_times, &self.train_values)
            .eval(&self.hyperparams)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub starts: usize,
    /// Start points are drawn log-uniformly within `init * [1/spread, spread]`.
    pub start_spread: f64,
    /// The search is confined to `init * [1/bound, bound]` per parameter.
    pub search_bound: f64,
    pub optimizer: NelderMead,
    pub newton_steps: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            start_spread: 1e3,
            search_bound: 1e6,
            optimizer: NelderMead::default(),
            newton_steps: 20,
            seed: 0x5EED_6A55,
        }
    }
}

/// Fit hyperparameters by maximizing the marginal log likelihood, then
/// condition on the data.
pub fn fit(times: &[f64], values: &[f64], init: Hyperparams) -> Result<GpModel> {
    fit_with(times, values, init, &FitOptions::default())
}

pub fn fit_with(times: &[f64], values: &[f64], init: Hyperparams, opts: &FitOptions) -> Result<GpModel> {
    if times.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 points, got {}", times.len())));
    }
    validate_times(times, values)?;
    if !init.is_valid() {
        return Err(Error::InvalidConfig(format!("invalid initial hyperparameters {init:?}")));
    }
    let mll = MarginalLikelihood::new(times, values);
    let center = init.to_log();
    let bound = opts.search_bound.ln();
    let objective = |theta: &[f64]| -> f64 {
        if theta.iter().zip(&center).any(|(t, c)| (t - c).abs() > bound) {
            return f64::INFINITY;
        }
        mll.eval_log(theta).map_or(f64::INFINITY, |v| -v)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let spread = opts.start_spread.ln();
    let mut best: (Vec<f64>, f64) = (center.to_vec(), objective(&center));
    for u in latin_hypercube(opts.starts, 3, &mut rng) {
        let start: Vec<f64> = center.iter().zip(&u).map(|(c, ui)| c + spread * (2.0 * ui - 1.0)).collect();
        let m = opts.optimizer.minimize(objective, &start);
        if m.value < best.1 {
            best = (m.x, m.value);
        }
    }
    let theta = newton_polish(&objective, best.0, best.1, opts.newton_steps);
    let h = Hyperparams::from_log(&theta);
    GpModel::condition(h, times.to_vec(), values.to_vec())
}

/// Finite-difference Newton refinement of a minimum, accepting only
/// improving steps.
fn newton_polish<F: Fn(&[f64]) -> f64>(f: &F, mut x: Vec<f64>, mut fx: f64, steps: usize) -> Vec<f64> {
    const H: f64 = 1e-4;
    let n = x.len();
    for _ in 0..steps {
        if !fx.is_finite() {
            break;
        }
        let at = |dx: &[(usize, f64)]| {
            let mut y = x.clone();
            for &(i, d) in dx {
                y[i] += d;
            }
            f(&y)
        };
        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let fp = at(&[(i, H)]);
            let fm = at(&[(i, -H)]);
            grad[i] = (fp - fm) / (2.0 * H);
            hess[(i, i)] = (fp - 2.0 * fx + fm) / (H * H);
            for j in 0..i {
                let fpp = at(&[(i, H), (j, H)]);
                let fpm = at(&[(i, H), (j, -H)]);
                let fmp = at(&[(i, -H), (j, H)]);
                let fmm = at(&[(i, -H), (j, -H)]);
                let hij = (fpp - fpm - fmp + fmm) / (4.0 * H * H);
                hess[(i, j)] = hij;
                hess[(j, i)] = hij;
            }
        }
        if grad.iter().any(|g| !g.is_finite()) || hess.iter().any(|h| !h.is_finite()) {
            break;
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-9 {
            break;
        }
        let g = DVector::from_column_slice(&grad);
        let dir = match Cholesky::new(hess) {
            Some(c) => -c.solve(&g),
            None => -g,
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let y: Vec<f64> = x.iter().zip(dir.iter()).map(|(xi, di)| xi + t * di).collect();
            let fy = f(&y);
            if fy < fx {
                x = y;
                fx = fy;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    x
}
