use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::analysis::fit_loglog;
use crate::error::{contract, Result};
use crate::optim::{noise_level, Objective};
use crate::param::ParamVector;
use crate::rng::{self, streams};
use crate::stat_models::{glm_population_gradient_low_snr, GmmPopulationOverSpecified, MonteCarloGmmGradient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Strictly increasing probe radii around `theta*`.
    pub radii: Vec<f64>,
    pub m_dirs: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub delta: f64,
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii.len() < 3 {
            return Err(contract("stability probe needs at least three radii"));
        }
        if self.radii[0] <= 0.0 || self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(contract("stability radii must be positive and strictly increasing"));
        }
        if self.m_dirs == 0 || self.replicates == 0 {
            return Err(contract("stability probe needs m_dirs >= 1 and replicates >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    pub gamma: f64,
    pub c3_hat: f64,
    pub radii: Vec<f64>,
    /// Replicate mean of the sup deviation over the ball of each radius.
    pub sup_deviation: Vec<f64>,
    pub epsilon: f64,
    pub fit_r_squared: f64,
}

pub type GradientFn<'a> = dyn Fn(&ParamVector) -> Result<ParamVector> + Sync + 'a;

/// Closed-form or frozen-sample population gradient for the singular regimes
/// (`theta* = 0`). Mixtures use a Monte Carlo sample of `mc_n` points.
pub fn population_gradient(
    spec: &ModelSpec,
    mc_n: usize,
    seed: u64,
) -> Result<Box<GradientFn<'static>>> {
    if spec.theta_star().norm() != 0.0 {
        return Err(contract("population gradients are only available for theta* = 0"));
    }
    match spec {
        ModelSpec::Glm(s) => {
            let p = s.p;
            Ok(Box::new(move |t: &ParamVector| glm_population_gradient_low_snr(t, p)))
        }
        ModelSpec::Gmm(s) => {
            let mc = MonteCarloGmmGradient::new(s, mc_n, seed)?;
            Ok(Box::new(move |t: &ParamVector| mc.gradient(t)))
        }
    }
}

/// Quadrature population gradient for the over-specified mixture.
pub fn gmm_quadrature_gradient(d: usize, sigma: f64) -> Result<Box<GradientFn<'static>>> {
    let pop = GmmPopulationOverSpecified::new(d, sigma)?;
    Ok(Box::new(move |t: &ParamVector| pop.gradient(t)))
}

/// Estimates the exponent `gamma` in
/// `sup_{B(theta*, r)} |grad L_n - grad L| <~ c3 r^gamma eps(n, delta)`.
///
/// Probe points are shared across replicates; the sup over the ball is the
/// running max over spheres of radius up to `r`.
pub fn probe_stability(
    spec: &ModelSpec,
    population_grad: &GradientFn<'_>,
    config: &StabilityConfig,
) -> Result<StabilityProfile> {
    config.validate()?;
    let center = spec.theta_star().clone();
    let mut prng = rng::seeded(config.base_seed, streams::PROBE);
    let probes: Vec<Vec<(ParamVector, ParamVector)>> = config
        .radii
        .iter()
        .map(|&r| {
            (0..config.m_dirs)
                .map(|_| {
                    let theta = rng::on_sphere(&mut prng, &center, r);
                    let g = population_grad(&theta)?;
                    Ok((theta, g))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let k = config.radii.len();
    let mut mean_sup = vec![0.0; k];
    for rep in 0..config.replicates {
        let seed = config.base_seed + rep as u64;
        let data = spec.generate(seed)?;
        let sample_grad = |t: &ParamVector| match &data {
            super::Dataset::Glm(g) => g.gradient(t),
            super::Dataset::Gmm(g) => g.gradient(t),
        };
        let mut running = 0.0f64;
        for (i, shell) in probes.iter().enumerate() {
            for (theta, pop) in shell {
                running = running.max(sample_grad(theta)?.distance(pop));
            }
            mean_sup[i] += running / config.replicates as f64;
        }
    }

    let fit = fit_loglog(&config.radii, &mean_sup)?;
    let epsilon = noise_level(spec.n(), spec.d(), config.delta)?;
    let c3_hat = config
        .radii
        .iter()
        .zip(&mean_sup)
        .map(|(r, s)| s / (r.powf(fit.slope) * epsilon))
        .fold(0.0, f64::max);
    Ok(StabilityProfile {
        gamma: fit.slope,
        c3_hat,
        radii: config.radii.clone(),
        sup_deviation: mean_sup,
        epsilon,
        fit_r_squared: fit.r_squared,
    })
}
