//! Empirical calibration of a scalar variance proxy from samples.
//!
//! The proxy satisfies `σ² = sup_λ 2 ln E exp(λᵀ(s − µ)) / ‖λ‖²`; the
//! expectation is replaced by the sample mean and the supremum by a search
//! over unit directions crossed with a grid of magnitudes. Magnitudes are
//! expressed in units of the inverse sample standard deviation (largest
//! covariance eigenvalue), so the same grid works at any data scale.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::max_eigenvalue;
use crate::scalar::{from_usize, lit, Real};
use crate::subgaussian::ScalarProxy;

#[derive(Debug, Clone)]
pub struct CalibrationOptions<T: Real> {
    /// Random unit directions searched in addition to the ± coordinate axes.
    pub directions: usize,
    /// Magnitudes of `λ`, in units of 1 / (sample standard deviation).
    pub scale_grid: Vec<T>,
    /// Golden-section refinement of the magnitude along the best direction.
    pub refine: bool,
    pub seed: u64,
}

impl<T: Real> Default for CalibrationOptions<T> {
    fn default() -> Self {
        Self {
            directions: 64,
            scale_grid: log_spaced(lit(1e-2), lit(10.0), 40),
            refine: true,
            seed: 0x5eed,
        }
    }
}

/// `count` points log-uniformly spaced over `[lo, hi]`.
pub fn log_spaced<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * from_usize::<T>(i) / from_usize::<T>(count - 1)).exp())
        .collect()
}

#[derive(Debug, Clone)]
pub struct CalibrationResult<T: Real> {
    pub sigma: ScalarProxy<T>,
    /// Unit direction attaining the maximum.
    pub direction: DVector<T>,
    /// `‖λ‖` attaining the maximum, in data units.
    pub lambda_norm: T,
    /// Sample mean `µ̂`.
    pub mean: DVector<T>,
    /// Number of (direction, magnitude) pairs evaluated on the grid.
    pub evaluations: usize,
}

/// Calibrates `σ` with the default search (64 directions, 40 magnitudes).
pub fn calibrate_scalar_proxy<T: Real>(samples: &[DVector<T>]) -> Result<ScalarProxy<T>> {
    calibrate_with(samples, &CalibrationOptions::default()).map(|r| r.sigma)
}

pub fn calibrate_with<T: Real>(
    samples: &[DVector<T>],
    opts: &CalibrationOptions<T>,
) -> Result<CalibrationResult<T>> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples[0].len();
    if n == 0 {
        return Err(Error::DegenerateSamples("zero-dimensional samples".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "sample dimension",
            expected: n,
            got: bad.len(),
        });
    }
    if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("calibration sample"));
    }
    if opts.scale_grid.is_empty() || opts.scale_grid.iter().any(|s| *s <= T::zero()) {
        return Err(Error::InvalidArgument("scale grid must be nonempty and positive".into()));
    }

    let count = from_usize::<T>(samples.len());
    let mean = samples
        .iter()
        .fold(DVector::zeros(n), |acc, s| acc + s)
        / count;
    let centered: Vec<DVector<T>> = samples.iter().map(|s| s - &mean).collect();
    let mut cov = DMatrix::zeros(n, n);
    for c in &centered {
        cov += c * c.transpose();
    }
    cov /= count;
    let sd = max_eigenvalue(&cov).max(T::zero()).sqrt();
    if sd == T::zero() {
        let mut direction = DVector::zeros(n);
        direction[0] = T::one();
        return Ok(CalibrationResult {
            sigma: ScalarProxy::zero(),
            direction,
            lambda_norm: T::zero(),
            mean,
            evaluations: 0,
        });
    }

    let dirs = search_directions::<T>(n, opts.directions, opts.seed);
    let per_dir: Vec<(T, usize)> = dirs
        .par_iter()
        .map(|u| {
            let proj: Vec<T> = centered.iter().map(|c| u.dot(c)).collect();
            opts.scale_grid
                .iter()
                .enumerate()
                .map(|(k, s)| (ratio(&proj, *s / sd), k))
                .fold((T::min_value().unwrap_or(lit(f64::MIN)), 0), |best, cur| {
                    if cur.0 > best.0 {
                        cur
                    } else {
                        best
                    }
                })
        })
        .collect();

    // Deterministic argmax: first index wins ties.
    let (mut best_dir, mut best) = (0usize, per_dir[0]);
    for (i, cand) in per_dir.iter().enumerate().skip(1) {
        if cand.0 > best.0 {
            best = *cand;
            best_dir = i;
        }
    }
    let (mut value, grid_idx) = best;
    let mut lambda = opts.scale_grid[grid_idx] / sd;

    if opts.refine && opts.scale_grid.len() > 1 {
        let proj: Vec<T> = centered.iter().map(|c| dirs[best_dir].dot(c)).collect();
        let lo = opts.scale_grid[grid_idx.saturating_sub(1)] / sd;
        let hi = opts.scale_grid[(grid_idx + 1).min(opts.scale_grid.len() - 1)] / sd;
        let (arg, v) = golden_max(|l| ratio(&proj, l), lo.ln(), hi.ln(), 60);
        if v > value {
            value = v;
            lambda = arg;
        }
    }

    Ok(CalibrationResult {
        sigma: ScalarProxy::new(value.max(T::zero()).sqrt())?,
        direction: dirs[best_dir].clone(),
        lambda_norm: lambda,
        mean,
        evaluations: dirs.len() * opts.scale_grid.len(),
    })
}

/// `2 ln mean(exp(λ p_i)) / λ²`, with the log-mean-exp evaluated stably.
fn ratio<T: Real>(proj: &[T], lambda: T) -> T {
    let m = proj
        .iter()
        .map(|p| lambda * *p)
        .fold(T::min_value().unwrap_or(lit(f64::MIN)), |a, b| a.max(b));
    let sum = proj
        .iter()
        .fold(T::zero(), |acc, p| acc + (lambda * *p - m).exp());
    let lme = m + (sum / from_usize::<T>(proj.len())).ln();
    lit::<T>(2.0) * lme / (lambda * lambda)
}

/// Maximises `f(exp(t))` over `t ∈ [a, b]`; returns `(exp(t*), f)`.
fn golden_max<T: Real, F: Fn(T) -> T>(f: F, mut a: T, mut b: T, iters: usize) -> (T, T) {
    let phi = (lit::<T>(5.0).sqrt() - T::one()) / lit(2.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d.exp());
        }
    }
    if fc > fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    }
}

/// ± coordinate axes followed by `m` random unit directions and their negations.
fn search_directions<T: Real>(n: usize, m: usize, seed: u64) -> Vec<DVector<T>> {
    let mut out = Vec::with_capacity(2 * n + 2 * m);
    for i in 0..n {
        for sign in [T::one(), -T::one()] {
            let mut e = DVector::zeros(n);
            e[i] = sign;
            out.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < 2 * n + 2 * m {
        let g: DVector<T> = DVector::from_fn(n, |_, _| {
            let x: f64 = StandardNormal.sample(&mut rng);
            lit(x)
        });
        let norm = g.norm();
        if norm > lit(1e-12) {
            let u = g / norm;
            out.push(-u.clone());
            out.push(u);
        }
    }
    out
}
