use std::f64::consts::{LN_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::optim::{self, Objective, OptimizerConfig, StepSchedule, Trajectory};
use crate::param::ParamVector;
use crate::rng::{self, streams};

/// `log cosh(u)` without overflow for large `|u|`.
pub fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// `(tanh(u), log cosh(u))` from a single exponential.
#[inline]
fn tanh_log_cosh(u: f64) -> (f64, f64) {
    let a = u.abs();
    // m = e^{-2a} - 1
    let m = (-2.0 * a).exp_m1();
    let t = -m / (2.0 + m);
    (t.copysign(u), a + (2.0 + m).ln() - LN_2)
}

#[inline]
fn fast_tanh(u: f64) -> f64 {
    let m = (-2.0 * u.abs()).exp_m1();
    (-m / (2.0 + m)).copysign(u)
}

/// Symmetric mixture `1/2 N(-theta*, sigma^2 I) + 1/2 N(theta*, sigma^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub d: usize,
    pub theta_star: ParamVector,
    pub sigma: f64,
    pub n: usize,
}

impl GmmSpec {
    pub fn new(theta_star: ParamVector, sigma: f64, n: usize) -> Result<Self> {
        let spec = Self {
            d: theta_star.dim(),
            theta_star,
            sigma,
            n,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(contract("GMM sample size must be >= 1"));
        }
        self.theta_star.check_dim(self.d)?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(contract(format!("GMM scale sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmDataset {
    /// Row-major `n x d` observations.
    pub x: Vec<f64>,
    pub spec: GmmSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i8>>,
}

/// Rows are drawn as `(sign, z_1..z_d)` from one stream, so datasets with
/// the same seed and growing `n` are prefixes of each other.
pub fn generate_gmm(spec: &GmmSpec, seed: u64) -> Result<GmmDataset> {
    spec.validate()?;
    let mut rng = rng::seeded(seed, streams::DATA);
    let mut x = Vec::with_capacity(spec.n * spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let s: i8 = if rng.random::<bool>() { 1 } else { -1 };
        labels.push(s);
        for &t in spec.theta_star.iter() {
            x.push(f64::from(s) * t + spec.sigma * rng::standard_normal(&mut rng));
        }
    }
    Ok(GmmDataset {
        x,
        spec: spec.clone(),
        seed,
        labels: Some(labels),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

impl GmmDataset {
    pub fn n(&self) -> usize {
        self.x.len() / self.spec.d
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.spec.d..(i + 1) * self.spec.d]
    }

    pub fn subset(&self, indices: &[usize]) -> GmmDataset {
        let mut x = Vec::with_capacity(indices.len() * self.d());
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        GmmDataset {
            x,
            spec: self.spec.with_n(indices.len()),
            seed: self.seed,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// `(1/n) sum tanh(x_i^T theta / sigma^2) x_i`, plus the NLL if asked.
    fn weighted_mean(&self, theta: &ParamVector, want_nll: bool) -> Result<(f64, Vec<f64>)> {
        theta.check_dim(self.d())?;
        let s2 = self.spec.sigma * self.spec.sigma;
        let mut acc = vec![0.0; self.d()];
        // theta-free and theta-dependent parts are summed apart so that
        // differences of the NLL keep their low-order bits.
        let mut sq = 0.0;
        let mut lc_sum = 0.0;
        for row in self.x.chunks_exact(self.d()) {
            let u = dot(row, theta) / s2;
            let w = if want_nll {
                let (w, lc) = tanh_log_cosh(u);
                sq += dot(row, row);
                lc_sum += lc;
                w
            } else {
                fast_tanh(u)
            };
            acc.iter_mut().zip(row).for_each(|(a, xi)| *a += w * xi);
        }
        let n = self.n() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        let d = self.d() as f64;
        let constant = sq / (2.0 * s2 * n) + 0.5 * d * (2.0 * PI * s2).ln();
        let nll = constant + (theta.norm_squared() / (2.0 * s2) - lc_sum / n);
        Ok((nll, acc))
    }

    fn nll_and_gradient(&self, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        let (nll, m) = self.weighted_mean(theta, true)?;
        Ok((nll, gradient_from_mean(theta, &m, self.spec.sigma)))
    }
}

fn gradient_from_mean(theta: &ParamVector, m: &[f64], sigma: f64) -> ParamVector {
    let inv = 1.0 / (sigma * sigma);
    ParamVector::from(theta.iter().zip(m).map(|(t, mi)| inv * (t - mi)).collect::<Vec<_>>())
}

/// Average negative log-likelihood of the symmetric two-component mixture.
pub fn gmm_nll(theta: &ParamVector, data: &GmmDataset) -> Result<f64> {
    Ok(data.weighted_mean(theta, true)?.0)
}

/// `(1/sigma^2) [theta - (1/n) sum tanh(x_i^T theta / sigma^2) x_i]`.
pub fn gmm_gradient(theta: &ParamVector, data: &GmmDataset) -> Result<ParamVector> {
    let (_, m) = data.weighted_mean(theta, false)?;
    Ok(gradient_from_mean(theta, &m, data.spec.sigma))
}

/// EM update `(1/n) sum tanh(x_i^T theta / sigma^2) x_i`.
pub fn em_step(theta: &ParamVector, data: &GmmDataset) -> Result<ParamVector> {
    Ok(ParamVector::from(data.weighted_mean(theta, false)?.1))
}

impl Objective for GmmDataset {
    fn dim(&self) -> usize {
        self.d()
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        gmm_nll(theta, self)
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        gmm_gradient(theta, self)
    }

    fn value_and_gradient(&self, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        self.nll_and_gradient(theta)
    }
}

/// EM iterations logged like an optimizer run.
///
/// An EM update equals a gradient step of size `sigma^2` on the NLL, so the
/// records carry that as their effective step and share the optimizer's
/// stopping rules.
pub fn run_em(
    data: &GmmDataset,
    theta0: &ParamVector,
    max_iters: usize,
    divergence_threshold: Option<f64>,
    optimum: Option<&ParamVector>,
) -> Result<Trajectory> {
    let mut config = OptimizerConfig::new(StepSchedule::fixed(data.spec.sigma.powi(2))?, max_iters);
    config.divergence_threshold = divergence_threshold;
    optim::drive(data, theta0, &config, optimum, |_, theta, _, _| em_step(theta, data))
}

const QUAD_HALF_WIDTH: f64 = 12.0;
const QUAD_NODES: usize = 4801;

/// `E[g(Z)]` for `Z ~ N(0, 1)` by the trapezoid rule on `[-12, 12]`.
pub fn gaussian_expectation(g: impl Fn(f64) -> f64) -> f64 {
    let h = 2.0 * QUAD_HALF_WIDTH / (QUAD_NODES - 1) as f64;
    let norm = 1.0 / (2.0 * PI).sqrt();
    let total: f64 = (0..QUAD_NODES)
        .map(|i| {
            let z = -QUAD_HALF_WIDTH + i as f64 * h;
            let w = if i == 0 || i == QUAD_NODES - 1 { 0.5 } else { 1.0 };
            w * g(z) * (-0.5 * z * z).exp()
        })
        .sum();
    total * h * norm
}

/// Population NLL of the over-specified mixture (`theta* = 0`), by quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPopulationOverSpecified {
    sigma: f64,
    optimum: ParamVector,
}

impl GmmPopulationOverSpecified {
    pub fn new(d: usize, sigma: f64) -> Result<Self> {
        if d == 0 || !(sigma > 0.0) {
            return Err(contract("population GMM needs d >= 1 and sigma > 0"));
        }
        Ok(Self {
            sigma,
            optimum: ParamVector::zeros(d),
        })
    }
}

impl Objective for GmmPopulationOverSpecified {
    fn dim(&self) -> usize {
        self.optimum.dim()
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        theta.check_dim(self.dim())?;
        let s2 = self.sigma * self.sigma;
        let d = self.dim() as f64;
        // x^T theta / sigma^2 ~ N(0, |theta|^2 / sigma^2)
        let scale = theta.norm() / self.sigma;
        let elc = gaussian_expectation(|z| log_cosh(scale * z));
        Ok((d * s2 + theta.norm_squared()) / (2.0 * s2) - elc + 0.5 * d * (2.0 * PI * s2).ln())
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        theta.check_dim(self.dim())?;
        // Stein: E[tanh(x^T theta / s2) x] = E[sech^2(.)] theta.
        let scale = theta.norm() / self.sigma;
        let sech2 = gaussian_expectation(|z| {
            let t = (scale * z).tanh();
            1.0 - t * t
        });
        Ok(theta.scaled((1.0 - sech2) / (self.sigma * self.sigma)))
    }

    fn optimum(&self) -> Option<&ParamVector> {
        Some(&self.optimum)
    }

    fn optimal_value(&self) -> Option<f64> {
        self.value(&self.optimum).ok()
    }
}

/// Population gradient of the mixture NLL estimated from a frozen sample.
#[derive(Debug, Clone)]
pub struct MonteCarloGmmGradient {
    sample: GmmDataset,
}

impl MonteCarloGmmGradient {
    pub fn new(spec: &GmmSpec, n: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            sample: generate_gmm(&spec.with_n(n), seed)?,
        })
    }

    pub fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        gmm_gradient(theta, &self.sample)
    }

    pub fn n(&self) -> usize {
        self.sample.n()
    }
}
