//! Step schedules, the EGD/GD iteration and trajectory logging.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::param::ParamVector;

/// Below this update size the iteration no longer moves at working precision.
pub const DEFAULT_VANISH_TOL: f64 = 1e-14;

/// Header of the trajectory CSV format.
pub const TRAJECTORY_CSV_HEADER: &str =
    "t,objective,grad_norm,effective_step,dist_to_optimum,theta_norm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Fixed { eta: f64 },
    /// Step `eta / beta^t` at iteration `t`.
    Exponential { eta: f64, beta: f64 },
}

impl StepSchedule {
    pub fn fixed(eta: f64) -> Result<Self> {
        let s = Self::Fixed { eta };
        s.validate()?;
        Ok(s)
    }

    pub fn exponential(eta: f64, beta: f64) -> Result<Self> {
        let s = Self::Exponential { eta, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.eta();
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(contract(format!("step size eta must be positive, got {eta}")));
        }
        if let Self::Exponential { beta, .. } = *self {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(contract(format!("beta must lie in (0, 1], got {beta}")));
            }
        }
        Ok(())
    }

    pub fn eta(&self) -> f64 {
        match *self {
            Self::Fixed { eta } | Self::Exponential { eta, .. } => eta,
        }
    }

    /// Per-iteration growth divisor; 1 for fixed steps.
    pub fn beta(&self) -> f64 {
        match *self {
            Self::Fixed { .. } => 1.0,
            Self::Exponential { beta, .. } => beta,
        }
    }

    /// Effective steps for t = 0, 1, 2, ...
    ///
    /// Each step is the previous one divided by `beta`, so consecutive ratios
    /// are `1/beta` up to a single rounding and `beta = 1` reproduces the
    /// fixed schedule bit for bit.
    pub fn steps(&self) -> Steps {
        Steps {
            next: self.eta(),
            beta: self.beta(),
        }
    }

    pub fn step_at(&self, t: usize) -> f64 {
        self.steps().nth(t).expect("unbounded iterator")
    }
}

#[derive(Debug, Clone)]
pub struct Steps {
    next: f64,
    beta: f64,
}

impl Iterator for Steps {
    type Item = f64;
    fn next(&mut self) -> Option<f64> {
        let cur = self.next;
        self.next = cur / self.beta;
        Some(cur)
    }
}

fn check_update_inputs(theta: &ParamVector, grad: &ParamVector) -> Result<()> {
    grad.check_dim(theta.dim())?;
    if !theta.is_finite() {
        return Err(Error::NonFinite("theta"));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(())
}

/// One exponential step-size update: `theta - (eta / beta^t) * grad`.
pub fn egd_step(
    theta: &ParamVector,
    grad: &ParamVector,
    eta: f64,
    beta: f64,
    t: usize,
) -> Result<ParamVector> {
    check_update_inputs(theta, grad)?;
    let schedule = StepSchedule::exponential(eta, beta)?;
    Ok(theta.axpy(-schedule.step_at(t), grad))
}

/// One fixed-step update: `theta - eta * grad`.
pub fn gd_step(theta: &ParamVector, grad: &ParamVector, eta: f64) -> Result<ParamVector> {
    check_update_inputs(theta, grad)?;
    StepSchedule::fixed(eta)?;
    Ok(theta.axpy(-eta, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub schedule: StepSchedule,
    pub max_iters: usize,
    /// Iterate-norm cap. `None` means `10 * max(1, |theta0|)`.
    #[serde(default)]
    pub divergence_threshold: Option<f64>,
    /// CSV downsampling stride; analysis always sees every iterate.
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "default_vanish_tol")]
    pub vanish_tol: f64,
}

fn one() -> usize {
    1
}

fn default_vanish_tol() -> f64 {
    DEFAULT_VANISH_TOL
}

impl OptimizerConfig {
    pub fn new(schedule: StepSchedule, max_iters: usize) -> Self {
        Self {
            schedule,
            max_iters,
            divergence_threshold: None,
            record_every: 1,
            vanish_tol: DEFAULT_VANISH_TOL,
        }
    }

    pub fn with_divergence_threshold(mut self, threshold: f64) -> Self {
        self.divergence_threshold = Some(threshold);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.max_iters == 0 {
            return Err(contract("max_iters must be >= 1"));
        }
        if let Some(th) = self.divergence_threshold {
            if !(th > 0.0) {
                return Err(contract(format!("divergence_threshold must be positive, got {th}")));
            }
        }
        if self.record_every == 0 {
            return Err(contract("record_every must be >= 1"));
        }
        if !(self.vanish_tol >= 0.0) {
            return Err(contract("vanish_tol must be non-negative"));
        }
        Ok(())
    }

    pub fn resolved_threshold(&self, theta0: &ParamVector) -> f64 {
        self.divergence_threshold
            .unwrap_or_else(|| 10.0 * theta0.norm().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub t: usize,
    pub theta: ParamVector,
    pub objective: f64,
    pub grad_norm: f64,
    pub effective_step: f64,
    pub dist_to_optimum: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    Diverged,
    GradientVanished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<IterateRecord>,
    pub terminated_by: Termination,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &IterateRecord {
        self.records.last().expect("trajectory has at least one record")
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Distances to the optimum, if the run was given one.
    pub fn errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.dist_to_optimum).collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// CSV rendering; rows every `record_every` iterations plus the final one.
    pub fn to_csv(&self, record_every: usize) -> String {
        let every = record_every.max(1);
        let mut out = String::with_capacity(64 * self.records.len() / every + 64);
        out.push_str(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        let last = self.records.len().saturating_sub(1);
        for (i, r) in self.records.iter().enumerate() {
            if r.t % every != 0 && i != last {
                continue;
            }
            let dist = r.dist_to_optimum.map(fmt_f64).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t,
                fmt_f64(r.objective),
                fmt_f64(r.grad_norm),
                fmt_f64(r.effective_step),
                dist,
                fmt_f64(r.theta.norm())
            )
            .expect("write to String");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, record_every: usize) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv(record_every).as_bytes())?;
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip an f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Constants of the local homogeneity (growth + generalized PL) condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityProfile {
    pub alpha: f64,
    pub rho: f64,
    pub c1: f64,
    pub c2: f64,
}

impl HomogeneityProfile {
    pub fn new(alpha: f64, rho: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(rho > 0.0) || !(c1 > 0.0) || !(c2 > 0.0) {
            return Err(contract(format!(
                "invalid homogeneity profile alpha={alpha} rho={rho} c1={c1} c2={c2}"
            )));
        }
        Ok(Self { alpha, rho, c1, c2 })
    }
}

/// A differentiable loss the optimizer can drive.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &ParamVector) -> Result<f64>;

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector>;

    fn value_and_gradient(&self, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        Ok((self.value(theta)?, self.gradient(theta)?))
    }

    fn optimum(&self) -> Option<&ParamVector> {
        None
    }

    fn optimal_value(&self) -> Option<f64> {
        None
    }

    fn profile(&self) -> Option<HomogeneityProfile> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, theta: &ParamVector) -> Result<f64> {
        (**self).value(theta)
    }
    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        (**self).gradient(theta)
    }
    fn value_and_gradient(&self, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        (**self).value_and_gradient(theta)
    }
    fn optimum(&self) -> Option<&ParamVector> {
        (**self).optimum()
    }
    fn optimal_value(&self) -> Option<f64> {
        (**self).optimal_value()
    }
    fn profile(&self) -> Option<HomogeneityProfile> {
        (**self).profile()
    }
}

/// Runs `theta <- theta - step_t * grad f(theta)` under `config`.
///
/// Record `t` holds the iterate before update `t`. The run stops after
/// `max_iters` updates, when the update `step_t * |grad|` drops below
/// `vanish_tol`, or when the iterate leaves the divergence ball (that
/// iterate is recorded last).
pub fn run_optimizer<O: Objective + ?Sized>(
    objective: &O,
    theta0: &ParamVector,
    config: &OptimizerConfig,
    optimum: Option<&ParamVector>,
) -> Result<Trajectory> {
    drive(objective, theta0, config, optimum, |_, theta, grad, step| {
        Ok(theta.axpy(-step, grad))
    })
}

/// Shared iteration loop; `update(t, theta, grad, step)` produces the next iterate.
pub(crate) fn drive<O, F>(
    objective: &O,
    theta0: &ParamVector,
    config: &OptimizerConfig,
    optimum: Option<&ParamVector>,
    mut update: F,
) -> Result<Trajectory>
where
    O: Objective + ?Sized,
    F: FnMut(usize, &ParamVector, &ParamVector, f64) -> Result<ParamVector>,
{
    config.validate()?;
    theta0.check_dim(objective.dim())?;
    if !theta0.is_finite() {
        return Err(Error::NonFinite("theta0"));
    }
    if let Some(opt) = optimum {
        opt.check_dim(objective.dim())?;
    }
    let threshold = config.resolved_threshold(theta0);
    let eval = |t: usize, theta: &ParamVector| {
        objective.value_and_gradient(theta).map_err(|e| Error::Evaluation {
            iteration: t,
            source: Box::new(e),
        })
    };

    let mut records = Vec::with_capacity(config.max_iters.min(1 << 16) + 1);
    let mut theta = theta0.clone();
    let mut steps = config.schedule.steps();
    let mut t = 0usize;
    loop {
        let step = steps.next().expect("unbounded iterator");
        let (value, grad) = eval(t, &theta)?;
        let grad_norm = grad.norm();
        records.push(IterateRecord {
            t,
            dist_to_optimum: optimum.map(|o| theta.distance(o)),
            theta: theta.clone(),
            objective: value,
            grad_norm,
            effective_step: step,
        });
        if t == config.max_iters {
            return Ok(finish(records, Termination::MaxIters));
        }
        if grad_norm == 0.0 || step * grad_norm < config.vanish_tol {
            return Ok(finish(records, Termination::GradientVanished));
        }
        let next = update(t, &theta, &grad, step)?;
        t += 1;
        if !next.is_finite() || next.norm() > threshold {
            let (objective, grad_norm) = match objective.value_and_gradient(&next) {
                Ok((v, g)) => (nan_to_inf(v), nan_to_inf(g.norm())),
                Err(_) => (f64::INFINITY, f64::INFINITY),
            };
            records.push(IterateRecord {
                t,
                dist_to_optimum: optimum.map(|o| nan_to_inf(next.distance(o))),
                theta: next,
                objective,
                grad_norm,
                effective_step: steps.next().expect("unbounded iterator"),
            });
            return Ok(finish(records, Termination::Diverged));
        }
        theta = next;
    }
}

fn nan_to_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

fn finish(records: Vec<IterateRecord>, terminated_by: Termination) -> Trajectory {
    Trajectory {
        records,
        terminated_by,
        seed: None,
    }
}

/// Statistical deviation scale `sqrt((d + ln(1/delta)) / n)`.
pub fn noise_level(n: usize, d: usize, delta: f64) -> Result<f64> {
    if n == 0 || d == 0 {
        return Err(contract("noise_level needs n >= 1 and d >= 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(contract(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(((d as f64 + (1.0 / delta).ln()) / n as f64).sqrt())
}

/// Sample-size dependent scale `beta = sqrt(1 - (1 - eta c1)^2 / (2 ln(1/eps)))`.
pub fn sample_size_dependent_beta(eta: f64, c1: f64, epsilon: f64) -> Result<f64> {
    let ec = eta * c1;
    if !(ec > 0.0 && ec < 1.0) {
        return Err(contract(format!("eta * c1 must lie in (0, 1), got {ec}")));
    }
    if !(epsilon > 0.0) {
        return Err(contract(format!("epsilon must be positive, got {epsilon}")));
    }
    let log_inv = (1.0 / epsilon).ln();
    let beta_sq = 1.0 - (1.0 - ec).powi(2) / (2.0 * log_inv);
    if !(log_inv > 0.0) || !(beta_sq > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon = {epsilon} is too large: beta^2 = 1 - (1 - eta c1)^2 / (2 ln(1/epsilon)) \
             must be positive, which needs ln(1/epsilon) > (1 - eta c1)^2 / 2"
        )));
    }
    Ok(beta_sq.sqrt())
}

/// Number of iterations `ln(2/(c1 eta)) / ln(1/beta)` during which EGD keeps
/// descending on a smooth PL objective. Zero once `eta c1 >= 2`; infinite
/// for `beta = 1`.
pub fn divergence_horizon(eta: f64, c1: f64, beta: f64) -> Result<f64> {
    if !(eta > 0.0 && c1 > 0.0) {
        return Err(contract("eta and c1 must be positive"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(contract(format!("beta must lie in (0, 1], got {beta}")));
    }
    let ec = eta * c1;
    if ec >= 2.0 {
        return Ok(0.0);
    }
    if beta == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok((2.0 / ec).ln() / (1.0 / beta).ln())
}

/// Both sides of the step-size window for linear EGD convergence
/// (`alpha > 0`), evaluated with `C = f(theta0) - f*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFeasibility {
    pub lower: f64,
    pub scaled_eta: f64,
    pub upper: f64,
    /// `(1 - beta^((alpha+2)/alpha)) / beta` against its admissible cap.
    pub beta_lhs: f64,
    pub beta_cap: f64,
}

impl StepFeasibility {
    pub fn satisfied(&self) -> bool {
        self.lower <= self.scaled_eta && self.scaled_eta <= self.upper && self.beta_lhs <= self.beta_cap
    }
}

/// Diagnostic only: logs a warning when the window is violated, never fails
/// on it (the constants are conservative).
pub fn step_feasibility(
    profile: &HomogeneityProfile,
    eta: f64,
    beta: f64,
    initial_gap: f64,
) -> Result<StepFeasibility> {
    let a = profile.alpha;
    if !(a > 0.0) {
        return Err(contract("step feasibility window needs alpha > 0"));
    }
    let (c1, c2) = (profile.c1, profile.c2);
    let contraction = 1.0 - beta.powf((a + 2.0) / a);
    let report = StepFeasibility {
        lower: 2.0 * contraction / (c2 * beta),
        scaled_eta: eta * initial_gap.powf(a / (a + 2.0)),
        upper: c2.powf(a) / (c1 * (a + 2.0).powf(a)),
        beta_lhs: contraction / beta,
        beta_cap: c2.powf(a + 1.0) / (2.0 * c1 * (a + 2.0).powf(a)),
    };
    if !report.satisfied() {
        log::warn!("step-size window violated (diagnostic only): {report:?}");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct HalfSquare;
    impl Objective for HalfSquare {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, t: &ParamVector) -> Result<f64> {
            Ok(0.5 * t[0] * t[0])
        }
        fn gradient(&self, t: &ParamVector) -> Result<ParamVector> {
            Ok(ParamVector::from([t[0]]))
        }
    }

    struct Failing;
    impl Objective for Failing {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, t: &ParamVector) -> Result<f64> {
            if t[0] < 0.5 {
                Err(Error::Domain("left the support".into()))
            } else {
                Ok(t[0])
            }
        }
        fn gradient(&self, _: &ParamVector) -> Result<ParamVector> {
            Ok(ParamVector::from([1.0]))
        }
    }

    #[test]
    fn egd_step_examples() {
        let theta = ParamVector::from([1.0]);
        let grad = ParamVector::from([1.0]);
        let next = egd_step(&theta, &grad, 0.01, 0.9, 0).unwrap();
        assert!((next[0] - 0.99).abs() < 1e-15);
        let next = egd_step(&theta, &grad, 0.01, 0.9, 10).unwrap();
        let expected = 1.0 - 0.01 / 0.9f64.powi(10);
        assert!((next[0] - expected).abs() < 1e-14);
        assert!((next[0] - 0.971320).abs() < 5e-7);
        let zero = ParamVector::zeros(2);
        assert_eq!(egd_step(&zero, &zero, 0.3, 0.5, 7).unwrap(), zero);
    }

    #[test]
    fn gd_step_examples() {
        let next = gd_step(&ParamVector::from([1.0]), &ParamVector::from([1.0]), 0.1).unwrap();
        assert!((next[0] - 0.9).abs() < 1e-15);
        let next = gd_step(&ParamVector::from([2.0]), &ParamVector::from([2.0]), 0.05).unwrap();
        assert!((next[0] - 1.9).abs() < 1e-15);
        let star = ParamVector::from([0.3, -1.2]);
        assert_eq!(gd_step(&star, &ParamVector::zeros(2), 0.5).unwrap(), star);
    }

    #[test]
    fn step_errors() {
        let a = ParamVector::from([1.0, 2.0]);
        let b = ParamVector::from([1.0]);
        assert!(matches!(gd_step(&a, &b, 0.1), Err(Error::DimensionMismatch { .. })));
        let nan = ParamVector::from([f64::NAN]);
        assert!(matches!(gd_step(&nan, &b, 0.1), Err(Error::NonFinite(_))));
        assert!(matches!(egd_step(&b, &b, 0.1, 1.5, 0), Err(Error::Contract(_))));
        assert!(matches!(egd_step(&b, &b, -0.1, 0.5, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn effective_step_ratio_is_one_over_beta() {
        let s = StepSchedule::exponential(0.01, 0.9).unwrap();
        let steps: Vec<f64> = s.steps().take(500).collect();
        for w in steps.windows(2) {
            let ratio = w[1] / w[0];
            assert!((ratio - 1.0 / 0.9).abs() <= 2.0 * f64::EPSILON * (1.0 / 0.9));
        }
        assert_eq!(s.step_at(3), steps[3]);
    }

    #[test]
    fn fixed_run_decreases_objective() {
        let cfg = OptimizerConfig::new(StepSchedule::fixed(0.05).unwrap(), 10);
        let traj = run_optimizer(&HalfSquare, &ParamVector::from([1.0]), &cfg, None).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.terminated_by, Termination::MaxIters);
        for w in traj.records.windows(2) {
            assert!(w[1].objective < w[0].objective);
        }
        assert!(traj.errors().is_none());
    }

    #[test]
    fn exponential_run_on_quadratic_diverges_after_horizon() {
        let cfg = OptimizerConfig::new(StepSchedule::exponential(0.05, 0.9).unwrap(), 100)
            .with_divergence_threshold(10.0);
        let opt = ParamVector::zeros(1);
        let traj = run_optimizer(&HalfSquare, &ParamVector::from([1.0]), &cfg, Some(&opt)).unwrap();
        assert_eq!(traj.terminated_by, Termination::Diverged);
        assert!(traj.last().t < 100);
        assert!(traj.last().theta.norm() > 10.0);
        let objs = traj.objectives();
        let argmin = objs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((30..=40).contains(&argmin), "argmin {argmin}");
    }

    #[test]
    fn evaluation_error_carries_iteration() {
        let cfg = OptimizerConfig::new(StepSchedule::fixed(0.2).unwrap(), 10);
        let err = run_optimizer(&Failing, &ParamVector::from([1.0]), &cfg, None).unwrap_err();
        match err {
            Error::Evaluation { iteration, .. } => assert_eq!(iteration, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_vanishes_at_stationary_start() {
        let cfg = OptimizerConfig::new(StepSchedule::fixed(0.1).unwrap(), 10);
        let traj = run_optimizer(&HalfSquare, &ParamVector::zeros(1), &cfg, None).unwrap();
        assert_eq!(traj.terminated_by, Termination::GradientVanished);
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn noise_level_examples() {
        let e = noise_level(100, 4, (-1.0f64).exp()).unwrap();
        assert!((e - 0.05f64.sqrt()).abs() < 1e-12);
        assert!((e - 0.2236).abs() < 1e-4);
        let almost_one = noise_level(1, 1, 1.0 - 1e-12).unwrap();
        assert!((almost_one - 1.0).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for n in [1, 10, 100, 1000, 10_000] {
            let e = noise_level(n, 3, 0.05).unwrap();
            assert!(e < prev);
            prev = e;
        }
        assert!(noise_level(10, 1, 1.0).is_err());
        assert!(noise_level(10, 1, 0.0).is_err());
    }

    #[test]
    fn sample_size_beta_examples() {
        let b = sample_size_dependent_beta(0.5, 1.0, (-8.0f64).exp()).unwrap();
        assert!((b - 0.984375f64.sqrt()).abs() < 1e-12);
        assert!((b - 0.99216).abs() < 1e-5);
        let near = sample_size_dependent_beta(0.999_999, 1.0, 0.1).unwrap();
        assert!((near - 1.0).abs() < 1e-10);
        let b1 = sample_size_dependent_beta(0.5, 1.0, 0.01).unwrap();
        let b2 = sample_size_dependent_beta(0.5, 1.0, 0.001).unwrap();
        assert!(b2 > b1 && b2 < 1.0);
        assert!(matches!(
            sample_size_dependent_beta(0.1, 1.0, 0.9),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn divergence_horizon_examples() {
        let h = divergence_horizon(0.05, 1.0, 0.9).unwrap();
        assert!((h - 40f64.ln() / (1.0f64 / 0.9).ln()).abs() < 1e-12);
        assert!((h - 35.01).abs() < 0.01);
        assert_eq!(divergence_horizon(2.0, 1.0, 0.9).unwrap(), 0.0);
        assert_eq!(divergence_horizon(0.1, 1.0, 1.0).unwrap(), f64::INFINITY);
        assert!(divergence_horizon(0.1, 1.0, 1.0 - 1e-9).unwrap() > 1e8);
    }

    #[test]
    fn feasibility_reports_without_failing() {
        let prof = HomogeneityProfile::new(2.0, 1.0, 3.0, 4f64.powf(0.75)).unwrap();
        let rep = step_feasibility(&prof, 0.01, 0.9, 0.25).unwrap();
        assert!(rep.lower > 0.0 && rep.upper > 0.0);
        let huge = step_feasibility(&prof, 100.0, 0.9, 0.25).unwrap();
        assert!(!huge.satisfied());
    }

    #[test]
    fn csv_has_header_and_seventeen_digits() {
        let cfg = OptimizerConfig::new(StepSchedule::fixed(0.5).unwrap(), 4);
        let traj = run_optimizer(&HalfSquare, &ParamVector::from([1.0]), &cfg, None).unwrap();
        let csv = traj.to_csv(2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_CSV_HEADER);
        // t = 0, 2, 4
        assert_eq!(lines.len(), 4);
        let cols: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cols[0], "0");
        assert_eq!(cols[1], "5.0000000000000000e-1");
        assert_eq!(cols[4], "");
    }
}
