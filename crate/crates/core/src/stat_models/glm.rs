use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::optim::{HomogeneityProfile, Objective};
use crate::param::ParamVector;
use crate::rng::{self, streams};

/// `(2p - 1)!!`, the `2p`-th moment of a standard normal.
pub fn double_factorial_odd(p: u32) -> f64 {
    (1..=p).map(|k| (2 * k - 1) as f64).product()
}

/// Model `Y = (X^T theta*)^p + eps`, `X ~ N(0, I_d)`, `eps ~ N(0, sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmSpec {
    pub d: usize,
    pub p: u32,
    pub theta_star: ParamVector,
    pub sigma: f64,
    pub n: usize,
}

impl GlmSpec {
    pub fn new(p: u32, theta_star: ParamVector, sigma: f64, n: usize) -> Result<Self> {
        let spec = Self {
            d: theta_star.dim(),
            p,
            theta_star,
            sigma,
            n,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(contract("GLM link power p must be >= 1"));
        }
        if self.n == 0 {
            return Err(contract("GLM sample size must be >= 1"));
        }
        self.theta_star.check_dim(self.d)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(contract(format!("GLM noise sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    /// Closed-form growth constant `p (2p-1) (2p-1)!!` of the population loss.
    pub fn default_c1(&self) -> f64 {
        let p = self.p as f64;
        p * (2.0 * p - 1.0) * double_factorial_odd(self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmDataset {
    /// Row-major `n x d` design.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub spec: GlmSpec,
    pub seed: u64,
}

/// Rows are drawn as `(x_1..x_d, eps)` from one stream, so datasets with the
/// same seed and growing `n` are prefixes of each other.
pub fn generate_glm(spec: &GlmSpec, seed: u64) -> Result<GlmDataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = rng::seeded(seed, streams::DATA);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        x.extend((0..d).map(|_| rng::standard_normal(&mut rng)));
        let eps = rng::standard_normal(&mut rng);
        let z = dot(&x[start..], &spec.theta_star);
        y.push(z.powi(spec.p as i32) + spec.sigma * eps);
    }
    Ok(GlmDataset {
        x,
        y,
        spec: spec.clone(),
        seed,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `z^k` by repeated multiplication; `powi` is an out-of-line call here.
#[inline]
fn int_pow(z: f64, k: i32) -> f64 {
    (0..k).fold(1.0, |acc, _| acc * z)
}

impl GlmDataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.spec.d..(i + 1) * self.spec.d]
    }

    /// Dataset restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> GlmDataset {
        let mut x = Vec::with_capacity(indices.len() * self.d());
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        GlmDataset {
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            spec: self.spec.with_n(indices.len()),
            seed: self.seed,
        }
    }

    fn loss_and_gradient(&self, theta: &ParamVector, want_grad: bool) -> Result<(f64, ParamVector)> {
        theta.check_dim(self.d())?;
        let p = self.spec.p as i32;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.d()];
        for (row, &y) in self.x.chunks_exact(self.d()).zip(&self.y) {
            let z = dot(row, theta);
            let zp1 = int_pow(z, p - 1);
            let resid = y - zp1 * z;
            loss += resid * resid;
            if want_grad {
                let w = resid * zp1;
                grad.iter_mut().zip(row).for_each(|(g, xi)| *g += w * xi);
            }
        }
        let n = self.n() as f64;
        let scale = -2.0 * p as f64 / n;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((loss / n, ParamVector::from(grad)))
    }
}

/// `(1/n) sum (Y_i - (X_i^T theta)^p)^2`.
pub fn glm_loss(theta: &ParamVector, data: &GlmDataset) -> Result<f64> {
    Ok(data.loss_and_gradient(theta, false)?.0)
}

/// `-(2p/n) sum (Y_i - z_i^p) z_i^(p-1) X_i` with `z_i = X_i^T theta`.
pub fn glm_gradient(theta: &ParamVector, data: &GlmDataset) -> Result<ParamVector> {
    Ok(data.loss_and_gradient(theta, true)?.1)
}

impl Objective for GlmDataset {
    fn dim(&self) -> usize {
        self.d()
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        glm_loss(theta, self)
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        glm_gradient(theta, self)
    }

    fn value_and_gradient(&self, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        self.loss_and_gradient(theta, true)
    }
}

/// Expected sample loss at `theta` when `theta* = 0`:
/// `sigma^2 + (2p-1)!! |theta|^(2p)`.
pub fn glm_population_loss_low_snr(theta: &ParamVector, p: u32, sigma: f64) -> Result<f64> {
    if p == 0 {
        return Err(contract("GLM link power p must be >= 1"));
    }
    Ok(sigma * sigma + double_factorial_odd(p) * theta.norm_squared().powi(p as i32))
}

pub fn glm_population_gradient_low_snr(theta: &ParamVector, p: u32) -> Result<ParamVector> {
    if p == 0 {
        return Err(contract("GLM link power p must be >= 1"));
    }
    let scale = 2.0 * p as f64 * double_factorial_odd(p) * theta.norm_squared().powi(p as i32 - 1);
    Ok(theta.scaled(scale))
}

/// Population loss of the low-SNR GLM as an objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmPopulationLowSnr {
    p: u32,
    sigma: f64,
    optimum: ParamVector,
}

impl GlmPopulationLowSnr {
    pub fn new(p: u32, d: usize, sigma: f64) -> Result<Self> {
        if p == 0 || d == 0 {
            return Err(contract("population GLM needs p >= 1 and d >= 1"));
        }
        Ok(Self {
            p,
            sigma,
            optimum: ParamVector::zeros(d),
        })
    }
}

impl Objective for GlmPopulationLowSnr {
    fn dim(&self) -> usize {
        self.optimum.dim()
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        theta.check_dim(self.dim())?;
        glm_population_loss_low_snr(theta, self.p, self.sigma)
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        theta.check_dim(self.dim())?;
        glm_population_gradient_low_snr(theta, self.p)
    }

    fn optimum(&self) -> Option<&ParamVector> {
        Some(&self.optimum)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.sigma * self.sigma)
    }

    fn profile(&self) -> Option<HomogeneityProfile> {
        // Hessian 2p(2p-1)!! r^(2p-2) [I + (2p-2) u u^T]; PL exponent (2p-1)/(2p).
        let p = self.p as f64;
        let k = double_factorial_odd(self.p);
        Some(HomogeneityProfile {
            alpha: 2.0 * p - 2.0,
            rho: 1.0,
            c1: 2.0 * p * (2.0 * p - 1.0) * k,
            c2: 2.0 * p * k / k.powf((2.0 * p - 1.0) / (2.0 * p)),
        })
    }
}
