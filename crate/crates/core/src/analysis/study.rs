use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{descent_window_end, fit_loglog, RateFit};
use crate::error::{contract, Result};
use crate::optim::{
    self, fmt_f64, noise_level, run_optimizer, sample_size_dependent_beta, OptimizerConfig,
    StepSchedule, Termination, Trajectory,
};
use crate::param::ParamVector;
use crate::rng::{self, streams};
use crate::stat_models::{Dataset, ModelSpec, SampleModel};

pub const RATE_STUDY_CSV_HEADER: &str =
    "n,min_error_mean,min_error_stderr,iters_to_min_mean,iters_to_min_stderr,algorithm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BetaRule {
    Fixed { beta: f64 },
    /// Sample-size dependent scale from `noise_level(n, d, delta)`.
    Auto { c1: f64, delta: f64 },
}

impl BetaRule {
    pub fn resolve(&self, eta: f64, n: usize, d: usize) -> Result<f64> {
        match *self {
            Self::Fixed { beta } => Ok(beta),
            Self::Auto { c1, delta } => {
                sample_size_dependent_beta(eta, c1, noise_level(n, d, delta)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Algorithm {
    Egd { eta: f64, beta: BetaRule },
    Gd { eta: f64 },
    Em,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method {
    #[serde(flatten)]
    pub algorithm: Algorithm,
    pub max_iters: usize,
}

impl Method {
    pub fn egd(eta: f64, beta: BetaRule, max_iters: usize) -> Self {
        Self {
            algorithm: Algorithm::Egd { eta, beta },
            max_iters,
        }
    }

    pub fn gd(eta: f64, max_iters: usize) -> Self {
        Self {
            algorithm: Algorithm::Gd { eta },
            max_iters,
        }
    }

    pub fn em(max_iters: usize) -> Self {
        Self {
            algorithm: Algorithm::Em,
            max_iters,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.algorithm {
            Algorithm::Egd { beta: BetaRule::Fixed { .. }, .. } => "egd",
            Algorithm::Egd { beta: BetaRule::Auto { .. }, .. } => "egd_auto",
            Algorithm::Gd { .. } => "gd",
            Algorithm::Em => "em",
        }
    }

    /// Fixed-step methods descend monotonically; their iteration count is the
    /// first time the error comes within `tolerance` of its minimum.
    pub fn is_monotone(&self) -> bool {
        !matches!(self.algorithm, Algorithm::Egd { .. })
    }
}

/// Runs `method` on `data` from `theta0`, logging distances to `theta*`.
pub fn run_method<M: SampleModel>(
    data: &M,
    method: &Method,
    theta0: &ParamVector,
    divergence_threshold: Option<f64>,
) -> Result<Trajectory> {
    let optimum = Some(data.theta_star());
    let with_threshold = |schedule| {
        let mut cfg = OptimizerConfig::new(schedule, method.max_iters);
        cfg.divergence_threshold = divergence_threshold;
        cfg
    };
    match method.algorithm {
        Algorithm::Egd { eta, beta } => {
            let beta = beta.resolve(eta, data.n(), data.dim())?;
            let cfg = with_threshold(StepSchedule::exponential(eta, beta)?);
            run_optimizer(data, theta0, &cfg, optimum)
        }
        Algorithm::Gd { eta } => {
            let cfg = with_threshold(StepSchedule::fixed(eta)?);
            run_optimizer(data, theta0, &cfg, optimum)
        }
        Algorithm::Em => {
            let step = data
                .em_step_size()
                .ok_or_else(|| contract("EM is only defined for the mixture model"))?;
            let cfg = with_threshold(StepSchedule::fixed(step)?);
            optim::drive(data, theta0, &cfg, optimum, |_, theta, _, _| {
                data.em_update(theta).expect("EM availability checked above")
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    /// `min_{t >= 1}` distance to `theta*` within the descent window.
    pub min_error: f64,
    pub iters_to_min: usize,
    pub final_error: f64,
    /// Records before the objective first increases.
    pub window_end: usize,
    pub terminated_by: Termination,
    pub n_records: usize,
}

/// Extracts the error statistics of a run. `tolerance` applies to monotone
/// methods only (see [`Method::is_monotone`]).
pub fn summarize(traj: &Trajectory, monotone: bool, tolerance: f64) -> Result<TrajectorySummary> {
    let errors = traj
        .errors()
        .ok_or_else(|| contract("summary needs dist_to_optimum on every record"))?;
    let end = descent_window_end(&traj.objectives()).max(2).min(errors.len());
    let (first, last) = if errors.len() > 1 { (1, end) } else { (0, 1) };
    let window = &errors[first..last];
    let (offset, min_error) = window
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty window");
    let idx = if monotone {
        window
            .iter()
            .position(|&e| e <= tolerance * min_error)
            .expect("minimum lies in window")
    } else {
        offset
    };
    Ok(TrajectorySummary {
        min_error,
        iters_to_min: traj.records[first + idx].t,
        final_error: *errors.last().expect("non-empty"),
        window_end: end,
        terminated_by: traj.terminated_by,
        n_records: traj.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `exp(mean(ln x))`.
    GeometricMean,
    /// `exp(median(ln x))`, robust to the occasional near-exact hit.
    GeometricMedian,
}

impl Aggregation {
    /// Centre and delta-method standard error of positive values.
    pub fn aggregate(&self, values: &[f64]) -> (f64, f64) {
        let k = values.len();
        if k == 0 {
            return (f64::NAN, f64::NAN);
        }
        let mut logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let mean = logs.iter().sum::<f64>() / k as f64;
        let sd = if k > 1 {
            (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
        } else {
            0.0
        };
        match self {
            Self::GeometricMean => {
                let c = mean.exp();
                (c, c * sd / (k as f64).sqrt())
            }
            Self::GeometricMedian => {
                logs.sort_by(f64::total_cmp);
                let med = if k % 2 == 1 {
                    logs[k / 2]
                } else {
                    0.5 * (logs[k / 2 - 1] + logs[k / 2])
                };
                let c = med.exp();
                // asymptotic efficiency of the median under normality
                (c, c * (std::f64::consts::PI / 2.0).sqrt() * sd / (k as f64).sqrt())
            }
        }
    }
}

/// How `|theta*|` depends on the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalScaling {
    /// Use the spec's `theta*` at every `n`.
    #[default]
    Fixed,
    /// `theta* = (d/n)^exponent e_1`.
    DOverN { exponent: f64 },
}

impl SignalScaling {
    pub fn apply(&self, spec: &ModelSpec, n: usize) -> ModelSpec {
        let spec = spec.with_n(n);
        match *self {
            Self::Fixed => spec,
            Self::DOverN { exponent } => {
                let d = spec.d();
                let star = ParamVector::axis(d, 0, (d as f64 / n as f64).powf(exponent));
                spec.with_theta_star(star)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudyConfig {
    pub spec: ModelSpec,
    #[serde(default)]
    pub signal: SignalScaling,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    /// `theta0` is uniform on the sphere of this radius around `theta*`.
    pub init_radius: f64,
    pub aggregation: Aggregation,
    pub baseline_tolerance: f64,
    #[serde(default)]
    pub divergence_threshold: Option<f64>,
    /// CSV stride for keeping per-cell trajectories; `None` keeps none.
    #[serde(default)]
    pub keep_trajectories: Option<usize>,
}

impl RateStudyConfig {
    pub fn new(spec: ModelSpec, n_grid: Vec<usize>, replicates: usize, methods: Vec<Method>) -> Self {
        Self {
            spec,
            signal: SignalScaling::Fixed,
            n_grid,
            replicates,
            methods,
            base_seed: 0,
            init_radius: 0.5,
            aggregation: Aggregation::GeometricMedian,
            baseline_tolerance: 1.5,
            divergence_threshold: None,
            keep_trajectories: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 5 {
            return Err(contract(format!("rate study needs >= 5 replicates, got {}", self.replicates)));
        }
        if self.n_grid.len() < 4 {
            return Err(contract(format!("rate study needs >= 4 sample sizes, got {}", self.n_grid.len())));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(contract("n_grid must be positive and strictly increasing"));
        }
        if self.methods.is_empty() {
            return Err(contract("rate study needs at least one method"));
        }
        if !(self.init_radius >= 0.0) || !(self.baseline_tolerance >= 1.0) {
            return Err(contract("init_radius must be >= 0 and baseline_tolerance >= 1"));
        }
        Ok(())
    }
}

/// One `(n, replicate, method)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub algorithm: String,
    pub summary: Option<TrajectorySummary>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trajectory_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerN {
    pub n: usize,
    pub min_error_mean: f64,
    pub min_error_stderr: f64,
    pub iters_to_min_mean: f64,
    pub iters_to_min_stderr: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStudy {
    pub algorithm: String,
    pub method: Method,
    pub per_n: Vec<PerN>,
    pub loglog_error_slope: Option<RateFit>,
    pub loglog_iters_slope: Option<RateFit>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudyResult {
    pub n_grid: Vec<usize>,
    pub aggregation: Aggregation,
    pub methods: Vec<MethodStudy>,
    pub cells: Vec<CellResult>,
}

impl RateStudyResult {
    pub fn method(&self, label: &str) -> Option<&MethodStudy> {
        self.methods.iter().find(|m| m.algorithm == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RATE_STUDY_CSV_HEADER);
        out.push('\n');
        for m in &self.methods {
            for row in &m.per_n {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.n,
                    fmt_f64(row.min_error_mean),
                    fmt_f64(row.min_error_stderr),
                    fmt_f64(row.iters_to_min_mean),
                    fmt_f64(row.iters_to_min_stderr),
                    m.algorithm
                ));
            }
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Cells for `label` at sample size `n`, ordered by replicate.
    pub fn cells_for(&self, label: &str, n: usize) -> Vec<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.algorithm == label && c.n == n)
            .collect()
    }
}

fn initial_point(theta_star: &ParamVector, radius: f64, seed: u64) -> ParamVector {
    rng::on_sphere(&mut rng::seeded(seed, streams::INIT), theta_star, radius)
}

fn run_on_dataset(
    data: &Dataset,
    method: &Method,
    theta0: &ParamVector,
    threshold: Option<f64>,
) -> Result<Trajectory> {
    match data {
        Dataset::Glm(d) => run_method(d, method, theta0, threshold),
        Dataset::Gmm(d) => run_method(d, method, theta0, threshold),
    }
}

/// Monte Carlo study of minimum error and iterations-to-minimum against `n`.
///
/// Replicate `r` uses seed `base_seed + r` at every `n`; cells run in
/// parallel and are reduced in grid order, so the result does not depend on
/// scheduling.
pub fn rate_study(config: &RateStudyConfig) -> Result<RateStudyResult> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let cells: Vec<Vec<CellResult>> = jobs
        .par_iter()
        .map(|&(n, replicate)| run_cell(config, n, replicate))
        .collect();
    let cells: Vec<CellResult> = cells.into_iter().flatten().collect();

    let methods = config
        .methods
        .iter()
        .map(|method| {
            let label = method.label();
            let per_n: Vec<PerN> = config
                .n_grid
                .iter()
                .map(|&n| {
                    let ok: Vec<&TrajectorySummary> = cells
                        .iter()
                        .filter(|c| c.algorithm == label && c.n == n)
                        .filter_map(|c| c.summary.as_ref())
                        .collect();
                    let errs: Vec<f64> = ok.iter().map(|s| s.min_error).collect();
                    let iters: Vec<f64> = ok.iter().map(|s| s.iters_to_min.max(1) as f64).collect();
                    let (e, e_se) = config.aggregation.aggregate(&errs);
                    let (i, i_se) = config.aggregation.aggregate(&iters);
                    PerN {
                        n,
                        min_error_mean: e,
                        min_error_stderr: e_se,
                        iters_to_min_mean: i,
                        iters_to_min_stderr: i_se,
                        successes: ok.len(),
                        failures: config.replicates - ok.len(),
                    }
                })
                .collect();
            let usable: Vec<&PerN> = per_n.iter().filter(|p| p.successes > 0).collect();
            let ns: Vec<f64> = usable.iter().map(|p| p.n as f64).collect();
            let fit = |ys: Vec<f64>| fit_loglog(&ns, &ys).ok();
            let loglog_error_slope = fit(usable.iter().map(|p| p.min_error_mean).collect());
            let loglog_iters_slope = fit(usable.iter().map(|p| p.iters_to_min_mean).collect());
            let failures = per_n.iter().map(|p| p.failures).sum();
            if failures > 0 {
                log::warn!("{label}: {failures} replicate runs failed and were excluded");
            }
            MethodStudy {
                algorithm: label.to_string(),
                method: *method,
                per_n,
                loglog_error_slope,
                loglog_iters_slope,
                failures,
            }
        })
        .collect();

    Ok(RateStudyResult {
        n_grid: config.n_grid.clone(),
        aggregation: config.aggregation,
        methods,
        cells,
    })
}

fn run_cell(config: &RateStudyConfig, n: usize, replicate: usize) -> Vec<CellResult> {
    let seed = config.base_seed + replicate as u64;
    let spec = config.signal.apply(&config.spec, n);
    let theta0 = initial_point(spec.theta_star(), config.init_radius, seed);
    let data = spec.generate(seed);
    config
        .methods
        .iter()
        .map(|method| {
            let outcome = data.as_ref().map_err(|e| e.to_string()).and_then(|data| {
                let traj = run_on_dataset(data, method, &theta0, config.divergence_threshold)
                    .map_err(|e| e.to_string())?
                    .with_seed(seed);
                let summary = summarize(&traj, method.is_monotone(), config.baseline_tolerance)
                    .map_err(|e| e.to_string())?;
                let csv = config.keep_trajectories.map(|every| traj.to_csv(every));
                Ok((summary, csv))
            });
            let (summary, error, trajectory_csv) = match outcome {
                Ok((s, csv)) => (Some(s), None, csv),
                Err(e) => {
                    log::warn!("{} n={n} replicate={replicate} seed={seed}: {e}", method.label());
                    (None, Some(e), None)
                }
            };
            CellResult {
                n,
                replicate,
                seed,
                algorithm: method.label().to_string(),
                summary,
                error,
                trajectory_csv,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub selected_t: usize,
    pub selected_theta: ParamVector,
    /// Held-out loss at every record; `+inf` where it is not finite.
    pub val_curve: Vec<f64>,
    pub trajectory: Trajectory,
    pub window_end: usize,
}

/// Trains on a random `split` fraction and picks the iterate with the lowest
/// held-out loss among `t >= 1` inside the training descent window.
pub fn cross_validated_stop<M: SampleModel>(
    data: &M,
    split: f64,
    method: &Method,
    theta0: &ParamVector,
    seed: u64,
    divergence_threshold: Option<f64>,
) -> Result<CvResult> {
    if data.n() < 10 {
        return Err(contract(format!("cross validation needs n >= 10, got {}", data.n())));
    }
    let (train, val) = data.split(split, seed)?;
    let trajectory = run_method(&train, method, theta0, divergence_threshold)?;
    let val_curve: Vec<f64> = trajectory
        .records
        .iter()
        .map(|r| match val.value(&r.theta) {
            Ok(v) if v.is_finite() && r.theta.is_finite() => v,
            _ => f64::INFINITY,
        })
        .collect();
    let window_end = descent_window_end(&trajectory.objectives());
    let first = if window_end > 1 { 1 } else { 0 };
    let best = (first..window_end.max(1))
        .min_by(|&a, &b| val_curve[a].total_cmp(&val_curve[b]))
        .expect("non-empty window");
    Ok(CvResult {
        selected_t: trajectory.records[best].t,
        selected_theta: trajectory.records[best].theta.clone(),
        val_curve,
        window_end,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub seed: u64,
    pub selected_t: usize,
    pub selected_error: f64,
    pub oracle_t: usize,
    pub oracle_min_error: f64,
    pub window_end: usize,
}

impl CvOutcome {
    pub fn ratio(&self) -> f64 {
        self.selected_error / self.oracle_min_error
    }
}

/// [`cross_validated_stop`] over `replicates` seeded datasets at one `n`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validation_study(
    spec: &ModelSpec,
    replicates: usize,
    method: &Method,
    base_seed: u64,
    init_radius: f64,
    split: f64,
    divergence_threshold: Option<f64>,
) -> Result<Vec<CvOutcome>> {
    (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = base_seed + rep as u64;
            let theta0 = initial_point(spec.theta_star(), init_radius, seed);
            let cv = match spec.generate(seed)? {
                Dataset::Glm(d) => cross_validated_stop(&d, split, method, &theta0, seed, divergence_threshold)?,
                Dataset::Gmm(d) => cross_validated_stop(&d, split, method, &theta0, seed, divergence_threshold)?,
            };
            let summary = summarize(&cv.trajectory, false, 1.0)?;
            Ok(CvOutcome {
                seed,
                selected_t: cv.selected_t,
                selected_error: cv.selected_theta.distance(spec.theta_star()),
                oracle_t: summary.iters_to_min,
                oracle_min_error: summary.min_error,
                window_end: cv.window_end,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stat_models::{generate_glm, generate_gmm, GlmSpec, GmmSpec};

    fn glm_low(n: usize) -> ModelSpec {
        ModelSpec::Glm(GlmSpec::new(2, ParamVector::zeros(4), 1.0, n).unwrap())
    }

    #[test]
    fn aggregation_centres() {
        let v = [1.0, 10.0, 100.0, 1e-9];
        let (gm, _) = Aggregation::GeometricMean.aggregate(&v);
        assert!((gm - (1e-6f64).powf(0.25)).abs() < 1e-12);
        let (med, se) = Aggregation::GeometricMedian.aggregate(&v);
        assert!((med - 10f64.sqrt()).abs() < 1e-12);
        assert!(se > 0.0);
    }

    #[test]
    fn summary_rules() {
        let spec = GlmSpec::new(2, ParamVector::zeros(2), 1.0, 500).unwrap();
        let data = generate_glm(&spec, 2).unwrap();
        let theta0 = ParamVector::from([0.4, 0.3]);
        let traj = run_method(&data, &Method::gd(0.01, 300), &theta0, None).unwrap();
        let s = summarize(&traj, true, 1.5).unwrap();
        let errs = traj.errors().unwrap();
        let min = errs[1..].iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(s.min_error, min);
        assert!(errs[s.iters_to_min] <= 1.5 * min);
        assert!(errs[s.iters_to_min - 1] > 1.5 * min || s.iters_to_min == 1);
    }

    #[test]
    fn em_needs_mixture() {
        let data = generate_glm(&GlmSpec::new(1, ParamVector::zeros(1), 1.0, 20).unwrap(), 0).unwrap();
        assert!(run_method(&data, &Method::em(10), &ParamVector::from([0.1]), None).is_err());
        let gmm = generate_gmm(&GmmSpec::new(ParamVector::zeros(1), 1.0, 20).unwrap(), 0).unwrap();
        let traj = run_method(&gmm, &Method::em(10), &ParamVector::from([0.1]), None).unwrap();
        assert_eq!(traj.records[1].theta, crate::stat_models::em_step(&ParamVector::from([0.1]), &gmm).unwrap());
    }

    #[test]
    fn noiseless_linear_cv_recovers_truth() {
        let star = ParamVector::from([0.5, -0.25, 1.0]);
        let data = generate_glm(&GlmSpec::new(1, star.clone(), 0.0, 200).unwrap(), 4).unwrap();
        let cv = cross_validated_stop(&data, 0.9, &Method::gd(0.1, 2000), &ParamVector::zeros(3), 4, None)
            .unwrap();
        assert!(cv.selected_theta.distance(&star) < 1e-6);
        assert_eq!(cv.val_curve.len(), cv.trajectory.len());
    }

    #[test]
    fn cv_never_selects_post_divergence() {
        let data = generate_glm(&GlmSpec::new(2, ParamVector::zeros(4), 1.0, 400).unwrap(), 3).unwrap();
        let method = Method::egd(0.001, BetaRule::Fixed { beta: 0.9 }, 500);
        let cv = cross_validated_stop(&data, 0.9, &method, &ParamVector::from([0.5, 0.0, 0.0, 0.0]), 3, None)
            .unwrap();
        assert_eq!(cv.trajectory.terminated_by, Termination::Diverged);
        assert!(cv.selected_t < cv.window_end);
        assert_eq!(cv.val_curve.len(), cv.trajectory.len());
        assert!(cv.val_curve.last().unwrap().is_infinite() || cv.selected_t + 1 < cv.trajectory.len());
    }

    #[test]
    fn rate_study_is_deterministic_and_parallel_safe() {
        let mut cfg = RateStudyConfig::new(
            glm_low(64),
            vec![64, 128, 256, 512],
            5,
            vec![Method::egd(0.001, BetaRule::Fixed { beta: 0.9 }, 400), Method::gd(0.01, 300)],
        );
        cfg.base_seed = 42;
        let a = rate_study(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| rate_study(&cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.cells.len(), 4 * 5 * 2);
        assert!(a.method("egd").unwrap().loglog_error_slope.is_some());
        let csv = a.to_csv();
        assert!(csv.starts_with(RATE_STUDY_CSV_HEADER));
        assert_eq!(csv.lines().count(), 1 + 8);
    }

    #[test]
    fn rate_study_validates() {
        let cfg = RateStudyConfig::new(glm_low(64), vec![64, 128, 256], 5, vec![Method::gd(0.01, 10)]);
        assert!(rate_study(&cfg).is_err());
        let cfg = RateStudyConfig::new(glm_low(64), vec![64, 128, 256, 512], 3, vec![Method::gd(0.01, 10)]);
        assert!(rate_study(&cfg).is_err());
    }

    #[test]
    fn failures_are_counted() {
        let cfg = RateStudyConfig::new(glm_low(64), vec![64, 128, 256, 512], 5, vec![Method::em(10)]);
        let res = rate_study(&cfg).unwrap();
        let m = res.method("em").unwrap();
        assert_eq!(m.failures, 20);
        assert!(res.cells.iter().all(|c| c.error.is_some()));
    }
}
