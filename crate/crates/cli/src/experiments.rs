use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use egd_core::analysis::{
    classify_convergence, cross_validation_study, geometric_window_fit, loglog_window_fit, rate_study,
    BetaRule, Method, RateStudyConfig, SignalScaling,
};
use egd_core::objectives::{
    diagonal_objective, power_norm_objective, probe_homogeneity, quadratic_objective, DiagonalSpec,
};
use egd_core::optim::{divergence_horizon, fmt_f64, noise_level, sample_size_dependent_beta};
use egd_core::stat_models::{GlmSpec, GmmPopulationOverSpecified, GmmSpec, ModelSpec};
use egd_core::{run_optimizer, Objective, OptimizerConfig, ParamVector, StepSchedule, Trajectory};

use crate::config::{AlgorithmName, BetaSetting, ConfigError, Experiment, ExperimentConfig};
use crate::verify;

/// Files produced by an experiment, keyed by path relative to the output dir.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub files: BTreeMap<String, String>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, content: impl Into<String>) {
        self.files.insert(name.into(), content.into());
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn write_all(&self, dir: &Path) -> Result<()> {
        for (name, content) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Artifacts,
    /// Replicate runs or checks that failed; non-empty means exit status 1.
    pub failures: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    seeds: Vec<u64>,
    resolved: Value,
    artifacts: Vec<String>,
}

/// `c1` for the sample-size dependent beta: the user value, the GLM closed
/// form `p (2p-1) (2p-1)!!`, or for mixtures a probe estimate on the
/// over-specified population loss.
pub fn resolve_c1(cfg: &ExperimentConfig) -> Result<f64, ConfigError> {
    if let Some(c1) = cfg.c1 {
        return Ok(c1);
    }
    if cfg.experiment.is_glm() {
        let spec = GlmSpec::new(cfg.p, ParamVector::zeros(cfg.d), cfg.sigma, 1)
            .map_err(|e| ConfigError::new("p", e.to_string()))?;
        return Ok(spec.default_c1());
    }
    if cfg.experiment.is_gmm() {
        let pop = GmmPopulationOverSpecified::new(cfg.d, cfg.sigma)
            .map_err(|e| ConfigError::new("sigma", e.to_string()))?;
        let probe = probe_homogeneity(&pop, 2.0, cfg.init_radius, 200, cfg.base_seed)
            .map_err(|e| ConfigError::new("c1", e.to_string()))?;
        return Ok(probe.c1_hat);
    }
    Err(ConfigError::new("c1", "\"auto\" beta needs c1 for this experiment"))
}

/// Sample-size dependent beta with `eps = noise_level(n, d, delta)`.
pub fn resolve_auto_beta(cfg: &ExperimentConfig, n: usize, d: usize) -> Result<f64, ConfigError> {
    let c1 = resolve_c1(cfg)?;
    let eps = noise_level(n, d, cfg.delta).map_err(|e| ConfigError::new("delta", e.to_string()))?;
    sample_size_dependent_beta(cfg.eta, c1, eps)
        .map_err(|e| ConfigError::new("beta", format!("auto beta infeasible at n = {n}: {e}")))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let (mut artifacts, failures, resolved, seeds) = match cfg.experiment {
        Experiment::AnalyticRates => analytic_rates(cfg)?,
        Experiment::EffectsEtaBeta => effects_eta_beta(cfg)?,
        Experiment::TwoPhase => two_phase(cfg)?,
        Experiment::Diagonal => diagonal(cfg)?,
        Experiment::Verify => {
            let report = verify::run_suite(cfg)?;
            let failures = report.failures();
            let mut a = Artifacts::default();
            a.add_json("verify.json", &report)?;
            (a, failures, Value::Null, vec![cfg.base_seed])
        }
        _ => statistical(cfg)?,
    };
    let manifest = Manifest {
        tool: "egd",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seeds,
        resolved,
        artifacts: artifacts.files.keys().cloned().collect(),
    };
    artifacts.add_json("manifest.json", &manifest)?;
    Ok(Outcome { artifacts, failures })
}

type Parts = (Artifacts, Vec<String>, Value, Vec<u64>);

fn egd_schedule(cfg: &ExperimentConfig) -> Result<StepSchedule> {
    let BetaSetting::Value(beta) = cfg.beta else {
        unreachable!("validated: auto beta only in rate studies");
    };
    Ok(StepSchedule::exponential(cfg.eta, beta)?)
}

fn fixed_beta(cfg: &ExperimentConfig) -> f64 {
    match cfg.beta {
        BetaSetting::Value(b) => b,
        BetaSetting::Auto => unreachable!("validated: auto beta only in rate studies"),
    }
}

fn run_analytic<O: Objective>(
    obj: &O,
    theta0: &ParamVector,
    schedule: StepSchedule,
    max_iters: usize,
) -> Result<Trajectory> {
    let config = OptimizerConfig::new(schedule, max_iters);
    Ok(run_optimizer(obj, theta0, &config, obj.optimum())?)
}

fn analytic_rates(cfg: &ExperimentConfig) -> Result<Parts> {
    let mut a = Artifacts::default();
    let mut summary = serde_json::Map::new();
    let beta = fixed_beta(cfg);
    for p in [2u32, 4] {
        let f = power_norm_objective(p, cfg.d)?;
        let theta0 = ParamVector::axis(cfg.d, 0, 1.0);
        let alpha = f64::from(2 * p - 2);
        let mut entry = serde_json::Map::new();
        if cfg.algorithms.contains(&AlgorithmName::Egd) {
            let egd = run_analytic(&f, &theta0, egd_schedule(cfg)?, cfg.max_iters)?;
            let fit = geometric_window_fit(&egd)?;
            entry.insert(
                "egd".into(),
                json!({
                    "classification": classify_convergence(&egd)?,
                    "geometric_fit": fit,
                    "ratio": fit.ratio(),
                    "predicted_ratio": beta.powf(1.0 / alpha),
                    "terminated_by": egd.terminated_by,
                    "iterations": egd.last().t,
                }),
            );
            a.add(format!("trajectory_egd_p{p}.csv"), egd.to_csv(cfg.record_every));
        }
        if cfg.algorithms.contains(&AlgorithmName::Gd) {
            let gd = run_analytic(&f, &theta0, StepSchedule::fixed(cfg.eta)?, cfg.max_iters)?;
            let t_hi = gd.last().t;
            let fit = loglog_window_fit(&gd, 100, t_hi)?;
            entry.insert(
                "gd".into(),
                json!({
                    "classification": classify_convergence(&gd)?,
                    "loglog_fit": fit,
                    "predicted_slope": -1.0 / alpha,
                    "terminated_by": gd.terminated_by,
                    "iterations": t_hi,
                }),
            );
            a.add(format!("trajectory_gd_p{p}.csv"), gd.to_csv(cfg.record_every));
        }
        summary.insert(format!("p{p}"), Value::Object(entry));
    }
    a.add_json("summary.json", &summary)?;
    Ok((a, vec![], Value::Null, vec![]))
}

/// First `t` at which the error has halved from its start.
pub fn plateau_length(traj: &Trajectory) -> Option<usize> {
    let e0 = traj.records[0].dist_to_optimum?;
    traj.records
        .iter()
        .find(|r| r.dist_to_optimum.is_some_and(|e| e <= 0.5 * e0))
        .map(|r| r.t)
}

pub const EFFECT_BETAS: [f64; 3] = [0.8, 0.9, 0.95];

fn effect_etas(eta: f64) -> [f64; 3] {
    [eta, eta / 10.0, eta / 100.0]
}

fn effects_eta_beta(cfg: &ExperimentConfig) -> Result<Parts> {
    let mut a = Artifacts::default();
    let f = power_norm_objective(2, 1)?;
    let theta0 = ParamVector::from([1.0]);
    let mut betas = vec![];
    for beta in EFFECT_BETAS {
        let traj = run_analytic(&f, &theta0, StepSchedule::exponential(cfg.eta, beta)?, cfg.max_iters)?;
        let fit = geometric_window_fit(&traj)?;
        betas.push(json!({
            "beta": beta,
            "eta": cfg.eta,
            "ratio": fit.ratio(),
            "predicted_ratio": beta.sqrt(),
            "geometric_fit": fit,
        }));
        a.add(format!("trajectory_beta{beta}.csv"), traj.to_csv(cfg.record_every));
    }
    let beta = fixed_beta(cfg);
    let mut etas = vec![];
    for eta in effect_etas(cfg.eta) {
        let traj = run_analytic(&f, &theta0, StepSchedule::exponential(eta, beta)?, cfg.max_iters)?;
        etas.push(json!({
            "beta": beta,
            "eta": eta,
            "plateau_length": plateau_length(&traj),
            "ratio": geometric_window_fit(&traj)?.ratio(),
        }));
        a.add(format!("trajectory_eta{eta:e}.csv"), traj.to_csv(cfg.record_every));
    }
    a.add_json("summary.json", &json!({ "beta_sweep": betas, "eta_sweep": etas }))?;
    Ok((a, vec![], Value::Null, vec![]))
}

fn two_phase(cfg: &ExperimentConfig) -> Result<Parts> {
    let mut a = Artifacts::default();
    let f = quadratic_objective(cfg.d)?;
    let theta0 = ParamVector::axis(cfg.d, 0, 1.0);
    let beta = fixed_beta(cfg);
    let traj = run_analytic(&f, &theta0, egd_schedule(cfg)?, cfg.max_iters)?;
    let errors = traj.errors().expect("optimum given");
    let argmin = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_finite())
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| traj.records[i].t);
    let first_exceed = traj
        .records
        .iter()
        .find(|r| r.t > 0 && r.theta.norm() > theta0.norm())
        .map(|r| r.t);
    let classification = if traj.len() >= 30 {
        Some(classify_convergence(&traj)?)
    } else {
        None
    };
    a.add("trajectory_egd.csv", traj.to_csv(cfg.record_every));
    a.add_json(
        "summary.json",
        &json!({
            "horizon": divergence_horizon(cfg.eta, 1.0, beta)?,
            "error_argmin_t": argmin,
            "first_t_norm_exceeds_initial": first_exceed,
            "terminated_by": traj.terminated_by,
            "classification": classification,
        }),
    )?;
    Ok((a, vec![], Value::Null, vec![]))
}

/// Per-coordinate geometric fit of `|theta_i|` between `t = 5` and the last
/// record where it is still a normal float.
pub fn coordinate_ratio(traj: &Trajectory, i: usize) -> Result<f64> {
    let pts: Vec<(usize, f64)> = traj
        .records
        .iter()
        .filter(|r| r.t >= 5)
        .map(|r| (r.t, r.theta[i].abs()))
        .take_while(|(_, v)| v.is_normal())
        .collect();
    let (ts, vs): (Vec<usize>, Vec<f64>) = pts.into_iter().unzip();
    Ok(egd_core::analysis::fit_geometric(&ts, &vs)?.ratio())
}

fn diagonal(cfg: &ExperimentConfig) -> Result<Parts> {
    let mut a = Artifacts::default();
    let spec = DiagonalSpec::new(cfg.alphas.clone())?;
    let f = diagonal_objective(spec);
    let theta0 = ParamVector::from(vec![1.0; cfg.d]);
    let beta = fixed_beta(cfg);
    let schedule = egd_schedule(cfg)?;
    let mut config = OptimizerConfig::new(schedule, cfg.max_iters);
    config.vanish_tol = 0.0;
    let joint = run_optimizer(&f, &theta0, &config, f.optimum())?;
    let mut coords = vec![];
    for (i, &alpha) in cfg.alphas.iter().enumerate() {
        let single = diagonal_objective(DiagonalSpec::new(vec![alpha])?);
        let solo = run_optimizer(&single, &ParamVector::from([1.0]), &config, single.optimum())?;
        let common = joint.len().min(solo.len());
        let bitwise = (0..common).all(|k| joint.records[k].theta[i].to_bits() == solo.records[k].theta[0].to_bits());
        coords.push(json!({
            "alpha": alpha,
            "ratio": coordinate_ratio(&joint, i)?,
            "predicted_ratio": beta.powf(1.0 / (2.0 * alpha - 2.0)),
            "bitwise_equal_to_1d_run": bitwise,
            "compared_records": common,
        }));
    }
    a.add("trajectory_egd.csv", joint.to_csv(cfg.record_every));
    a.add_json("summary.json", &json!({ "coordinates": coords }))?;
    Ok((a, vec![], Value::Null, vec![]))
}

/// The model spec at sample size `n` before any signal scaling.
pub fn base_spec(cfg: &ExperimentConfig) -> Result<(ModelSpec, SignalScaling)> {
    let star = ParamVector::axis(cfg.d, 0, cfg.theta_star_norm.unwrap_or(0.0));
    let n0 = cfg.n_grid.first().copied().unwrap_or(1);
    let spec = if cfg.experiment.is_gmm() {
        ModelSpec::Gmm(GmmSpec::new(star, cfg.sigma, n0)?)
    } else {
        ModelSpec::Glm(GlmSpec::new(cfg.p, star, cfg.sigma, n0)?)
    };
    let signal = match cfg.theta_star_norm {
        Some(_) => SignalScaling::Fixed,
        None => SignalScaling::DOverN { exponent: 1.0 / 6.0 },
    };
    Ok((spec, signal))
}

pub fn methods(cfg: &ExperimentConfig) -> Result<Vec<Method>, ConfigError> {
    cfg.algorithms
        .iter()
        .map(|alg| {
            Ok(match alg {
                AlgorithmName::Egd => {
                    let rule = match cfg.beta {
                        BetaSetting::Value(beta) => BetaRule::Fixed { beta },
                        BetaSetting::Auto => BetaRule::Auto {
                            c1: resolve_c1(cfg)?,
                            delta: cfg.delta,
                        },
                    };
                    Method::egd(cfg.eta, rule, cfg.max_iters)
                }
                AlgorithmName::Gd => Method::gd(cfg.eta, cfg.baseline_max_iters),
                AlgorithmName::Em => Method::em(cfg.baseline_max_iters),
            })
        })
        .collect()
}

pub fn rate_study_config(cfg: &ExperimentConfig) -> Result<RateStudyConfig> {
    let (spec, signal) = base_spec(cfg)?;
    let mut rs = RateStudyConfig::new(spec, cfg.n_grid.clone(), cfg.replicates, methods(cfg)?);
    rs.signal = signal;
    rs.base_seed = cfg.base_seed;
    rs.init_radius = cfg.init_radius;
    rs.aggregation = cfg.aggregation;
    rs.keep_trajectories = cfg.write_trajectories.then_some(cfg.record_every);
    Ok(rs)
}

fn statistical(cfg: &ExperimentConfig) -> Result<Parts> {
    let mut a = Artifacts::default();
    let rs = rate_study_config(cfg)?;
    let mut resolved = serde_json::Map::new();
    if cfg.beta == BetaSetting::Auto && cfg.algorithms.contains(&AlgorithmName::Egd) {
        resolved.insert("c1".into(), json!(resolve_c1(cfg)?));
        let betas: Vec<Value> = cfg
            .n_grid
            .iter()
            .map(|&n| Ok(json!({ "n": n, "beta": resolve_auto_beta(cfg, n, cfg.d)? })))
            .collect::<Result<_, ConfigError>>()?;
        resolved.insert("beta".into(), Value::Array(betas));
    }
    let result = rate_study(&rs)?;
    a.add("rate_study.csv", result.to_csv());
    a.add("rate_study.json", result.summary_json()? + "\n");
    let failures: Vec<String> = result
        .cells
        .iter()
        .filter_map(|c| {
            c.error
                .as_ref()
                .map(|e| format!("{} n={} replicate={} seed={}: {e}", c.algorithm, c.n, c.replicate, c.seed))
        })
        .collect();
    for c in &result.cells {
        if let Some(csv) = &c.trajectory_csv {
            a.add(
                format!("trajectories/{}_n{}_r{}.csv", c.algorithm, c.n, c.replicate),
                csv.clone(),
            );
        }
    }
    if cfg.cross_validation {
        if let Some(egd) = rs.methods.iter().find(|m| m.label().starts_with("egd")) {
            let mut csv = String::from(
                "n,replicate,seed,selected_t,selected_error,oracle_t,oracle_min_error,ratio\n",
            );
            for &n in &cfg.n_grid {
                let spec = rs.signal.apply(&rs.spec, n);
                let outcomes =
                    cross_validation_study(&spec, cfg.replicates, egd, cfg.base_seed, cfg.init_radius, 0.9, None)?;
                for (r, o) in outcomes.iter().enumerate() {
                    csv.push_str(&format!(
                        "{n},{r},{},{},{},{},{},{}\n",
                        o.seed,
                        o.selected_t,
                        fmt_f64(o.selected_error),
                        o.oracle_t,
                        fmt_f64(o.oracle_min_error),
                        fmt_f64(o.ratio())
                    ));
                }
            }
            a.add("cv.csv", csv);
        }
    }
    let seeds = (0..cfg.replicates as u64).map(|r| cfg.base_seed + r).collect();
    Ok((a, failures, Value::Object(resolved), seeds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn auto_cfg(eta: f64, c1: f64) -> ExperimentConfig {
        ExperimentConfig {
            beta: BetaSetting::Auto,
            eta,
            c1: Some(c1),
            ..ExperimentConfig::defaults(Experiment::GlmLowSnr)
        }
    }

    #[test]
    fn auto_beta_matches_closed_form() {
        let cfg = auto_cfg(0.05, 10.0);
        let eps = ((4.0 + (1.0f64 / 0.05).ln()) / 4096.0).sqrt();
        let expected = (1.0 - 0.25 / (2.0 * (1.0 / eps).ln())).sqrt();
        let beta = resolve_auto_beta(&cfg, 4096, 4).unwrap();
        assert!((beta - expected).abs() < 1e-14);
    }

    #[test]
    fn auto_beta_increases_with_n() {
        let cfg = auto_cfg(0.05, 10.0);
        let betas: Vec<f64> = (10..=20).map(|k| resolve_auto_beta(&cfg, 1 << k, 4).unwrap()).collect();
        assert!(betas.windows(2).all(|w| w[0] < w[1]));
        assert!(betas.last().unwrap() > &0.97);
    }

    #[test]
    fn infeasible_auto_beta_is_a_config_error() {
        // eps >= 1/e at tiny n makes beta^2 <= 0
        let err = resolve_auto_beta(&auto_cfg(0.001, 18.0), 8, 4).unwrap_err();
        assert_eq!(err.field, "beta");
        let err = resolve_auto_beta(&auto_cfg(0.1, 18.0), 4096, 4).unwrap_err();
        assert_eq!(err.field, "beta");
    }

    #[test]
    fn default_c1_follows_the_model() {
        let glm = ExperimentConfig::defaults(Experiment::GlmHighSnr);
        assert_eq!(resolve_c1(&glm).unwrap(), 18.0);
        let gmm = ExperimentConfig {
            beta: BetaSetting::Auto,
            ..ExperimentConfig::defaults(Experiment::GmmOverSpecified)
        };
        let c1 = resolve_c1(&gmm).unwrap();
        assert!(c1 > 1.0 && c1 < 10.0, "{c1}");
    }

    #[test]
    fn plateau_is_first_halving() {
        let f = power_norm_objective(2, 1).unwrap();
        let traj = run_analytic(&f, &ParamVector::from([1.0]), StepSchedule::fixed(0.1).unwrap(), 50).unwrap();
        let t = plateau_length(&traj).unwrap();
        let e = traj.errors().unwrap();
        assert!(e[t] <= 0.5 && e[t - 1] > 0.5);
    }

    #[test]
    fn middle_snr_scales_signal_with_n() {
        let (spec, signal) = base_spec(&ExperimentConfig::defaults(Experiment::GlmMiddleSnr)).unwrap();
        let s = signal.apply(&spec, 4096);
        assert!((s.theta_star().norm() - (4.0f64 / 4096.0).powf(1.0 / 6.0)).abs() < 1e-15);
        let (spec, signal) = base_spec(&ExperimentConfig::defaults(Experiment::GlmHighSnr)).unwrap();
        assert_eq!(signal.apply(&spec, 4096).theta_star().norm(), 3.0);
    }
}
