use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use egd_core::analysis::Aggregation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    AnalyticRates,
    EffectsEtaBeta,
    TwoPhase,
    GlmHighSnr,
    GlmLowSnr,
    GlmMiddleSnr,
    GmmOverSpecified,
    GmmHighSnr,
    Diagonal,
    Verify,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Self::AnalyticRates,
        Self::EffectsEtaBeta,
        Self::TwoPhase,
        Self::GlmHighSnr,
        Self::GlmLowSnr,
        Self::GlmMiddleSnr,
        Self::GmmOverSpecified,
        Self::GmmHighSnr,
        Self::Diagonal,
        Self::Verify,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::AnalyticRates => "analytic_rates",
            Self::EffectsEtaBeta => "effects_eta_beta",
            Self::TwoPhase => "two_phase",
            Self::GlmHighSnr => "glm_high_snr",
            Self::GlmLowSnr => "glm_low_snr",
            Self::GlmMiddleSnr => "glm_middle_snr",
            Self::GmmOverSpecified => "gmm_over_specified",
            Self::GmmHighSnr => "gmm_high_snr",
            Self::Diagonal => "diagonal",
            Self::Verify => "verify",
        }
    }

    /// Id accepted by `egd figure <id>`.
    pub fn figure_id(&self) -> &'static str {
        match self {
            Self::AnalyticRates => "1",
            Self::EffectsEtaBeta => "2",
            Self::GlmHighSnr => "3",
            Self::GlmLowSnr => "4",
            Self::GmmOverSpecified => "5",
            Self::GmmHighSnr => "6",
            Self::GlmMiddleSnr => "7",
            Self::TwoPhase => "two-phase",
            Self::Diagonal => "diagonal",
            Self::Verify => "verify",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Self::AnalyticRates => "EGD vs GD on |theta|^(2p)/(2p), p in {2, 4}: linear vs sub-linear rates",
            Self::EffectsEtaBeta => "EGD on theta^4/4 for several beta and eta: rate and burn-in plateau",
            Self::TwoPhase => "EGD on theta^2/2: descent up to the step-size horizon, then divergence",
            Self::GlmHighSnr => "GLM, |theta*|/sigma = 3: n^(-1/2) error rate for EGD (auto beta) and GD",
            Self::GlmLowSnr => "GLM, theta* = 0: n^(-1/(2p)) rate, GD needs polynomially many steps",
            Self::GlmMiddleSnr => "GLM, |theta*| = (d/n)^(1/6): exploratory middle-SNR rates",
            Self::GmmOverSpecified => "two-component mixture, theta* = 0: n^(-1/4) rate, EGD vs EM",
            Self::GmmHighSnr => "two-component mixture, |theta*|/sigma = 3: EM vs EGD",
            Self::Diagonal => "EGD on sum_i theta_i^(2 alpha_i): coordinatewise rates",
            Self::Verify => "gradient checks, homogeneity and stability probes, EM identity",
        }
    }

    pub fn from_figure_id(id: &str) -> Option<Self> {
        let id = id.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|e| e.figure_id() == id || e.name().replace('_', "-") == id)
    }

    pub fn is_rate_study(&self) -> bool {
        matches!(
            self,
            Self::GlmHighSnr | Self::GlmLowSnr | Self::GlmMiddleSnr | Self::GmmOverSpecified | Self::GmmHighSnr
        )
    }

    pub fn is_gmm(&self) -> bool {
        matches!(self, Self::GmmOverSpecified | Self::GmmHighSnr)
    }

    pub fn is_glm(&self) -> bool {
        matches!(self, Self::GlmHighSnr | Self::GlmLowSnr | Self::GlmMiddleSnr)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Help text mapping experiments to figure ids.
pub fn experiment_table() -> String {
    let mut out = String::from("Experiments (figure id: name, content):\n");
    for e in Experiment::ALL {
        out.push_str(&format!("  {:<10} {:<20} {}\n", e.figure_id(), e.name(), e.description()));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Egd,
    Gd,
    Em,
}

/// `beta` is a number in `(0, 1]` or the string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSetting {
    Value(f64),
    Auto,
}

impl Serialize for BetaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Value(b) => s.serialize_f64(*b),
            Self::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for BetaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => n
                .as_f64()
                .map(Self::Value)
                .ok_or_else(|| serde::de::Error::custom("beta must be a finite number")),
            Value::String(s) if s == "auto" => Ok(Self::Auto),
            other => Err(serde::de::Error::custom(format!(
                "beta must be a number or \"auto\", got {other}"
            ))),
        }
    }
}

impl std::str::FromStr for BetaSetting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        s.parse::<f64>()
            .map(Self::Value)
            .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub algorithms: Vec<AlgorithmName>,
    /// Base step size shared by EGD and GD.
    pub eta: f64,
    pub beta: BetaSetting,
    /// Growth constant for the sample-size dependent beta.
    pub c1: Option<f64>,
    pub delta: f64,
    pub d: usize,
    pub p: u32,
    /// Per-coordinate exponents of the diagonal experiment.
    pub alphas: Vec<f64>,
    pub sigma: f64,
    /// `None` means `(d/n)^(1/6)` (middle SNR).
    pub theta_star_norm: Option<f64>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub max_iters: usize,
    /// Iteration budget for GD and EM in rate studies.
    pub baseline_max_iters: usize,
    pub base_seed: u64,
    pub init_radius: f64,
    pub record_every: usize,
    pub write_trajectories: bool,
    pub cross_validation: bool,
    pub aggregation: Aggregation,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        use AlgorithmName::*;
        let statistical = Self {
            experiment,
            algorithms: vec![Egd, Gd],
            eta: 0.001,
            beta: BetaSetting::Value(0.9),
            c1: None,
            delta: 0.05,
            d: 4,
            p: 2,
            alphas: vec![],
            sigma: 1.0,
            theta_star_norm: Some(0.0),
            n_grid: (10..=16).map(|k| 1usize << k).collect(),
            replicates: 20,
            max_iters: 5_000,
            baseline_max_iters: 20_000,
            base_seed: 20_240_601,
            init_radius: 0.5,
            record_every: 1,
            write_trajectories: false,
            cross_validation: true,
            aggregation: Aggregation::GeometricMedian,
            output_dir: None,
        };
        let analytic = Self {
            eta: 0.01,
            d: 1,
            n_grid: vec![],
            replicates: 1,
            max_iters: 100_000,
            baseline_max_iters: 0,
            cross_validation: false,
            theta_star_norm: None,
            ..statistical.clone()
        };
        match experiment {
            Experiment::AnalyticRates => analytic,
            Experiment::EffectsEtaBeta => Self {
                algorithms: vec![Egd],
                max_iters: 5_000,
                ..analytic
            },
            Experiment::TwoPhase => Self {
                algorithms: vec![Egd],
                eta: 0.05,
                p: 1,
                max_iters: 100,
                ..analytic
            },
            Experiment::Diagonal => Self {
                algorithms: vec![Egd],
                d: 3,
                alphas: vec![1.5, 2.0, 3.0],
                max_iters: 5_000,
                ..analytic
            },
            Experiment::Verify => Self {
                algorithms: vec![],
                replicates: 5,
                n_grid: vec![],
                cross_validation: false,
                ..statistical
            },
            Experiment::GlmLowSnr => statistical,
            Experiment::GlmHighSnr => Self {
                beta: BetaSetting::Auto,
                theta_star_norm: Some(3.0),
                ..statistical
            },
            Experiment::GlmMiddleSnr => Self {
                theta_star_norm: None,
                cross_validation: false,
                ..statistical
            },
            Experiment::GmmOverSpecified => Self {
                algorithms: vec![Egd, Em],
                ..statistical
            },
            Experiment::GmmHighSnr => Self {
                algorithms: vec![Egd, Em],
                theta_star_norm: Some(3.0),
                cross_validation: false,
                ..statistical
            },
        }
    }

    /// Builds a config from JSON: either a config object or a run manifest
    /// (whose `config` field is used). Missing fields take the defaults of
    /// the named experiment.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::new("<file>", e.to_string()))?;
        if let Some(inner) = value.get("config").cloned() {
            value = inner;
        }
        let experiment: Experiment = value
            .get("experiment")
            .cloned()
            .ok_or_else(|| ConfigError::new("experiment", "missing"))
            .and_then(|v| {
                serde_json::from_value(v).map_err(|e| ConfigError::new("experiment", e.to_string()))
            })?;
        let mut merged = serde_json::to_value(Self::defaults(experiment)).expect("serializable");
        let (Value::Object(base), Value::Object(over)) = (&mut merged, value) else {
            return Err(ConfigError::new("<file>", "config must be a JSON object"));
        };
        for (k, v) in over {
            base.insert(k, v);
        }
        serde_json::from_value(merged).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<file>".into());
            ConfigError::new(field, msg)
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |f: &str, m: String| Err(ConfigError::new(f, m));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return err("eta", format!("must be positive, got {}", self.eta));
        }
        if let BetaSetting::Value(b) = self.beta {
            if !(b > 0.0 && b <= 1.0) {
                return err("beta", format!("must lie in (0, 1], got {b}"));
            }
        }
        if self.algorithms.contains(&AlgorithmName::Em) && !self.experiment.is_gmm() {
            return err(
                "algorithms",
                format!("em is only available for mixture experiments, not {}", self.experiment),
            );
        }
        if self.beta == BetaSetting::Auto
            && !(self.experiment.is_rate_study() || self.experiment == Experiment::Verify)
        {
            return err("beta", format!("\"auto\" needs a sample size; {} has none", self.experiment));
        }
        if let Some(c1) = self.c1 {
            if !(c1 > 0.0) {
                return err("c1", format!("must be positive, got {c1}"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return err("delta", format!("must lie in (0, 1), got {}", self.delta));
        }
        if self.d == 0 {
            return err("d", "must be >= 1".into());
        }
        if self.p == 0 {
            return err("p", "must be >= 1".into());
        }
        if !(self.sigma > 0.0) {
            return err("sigma", format!("must be positive, got {}", self.sigma));
        }
        if let Some(s) = self.theta_star_norm {
            if !(s >= 0.0) {
                return err("theta_star_norm", format!("must be >= 0, got {s}"));
            }
        }
        if self.max_iters == 0 {
            return err("max_iters", "must be >= 1".into());
        }
        if self.record_every == 0 {
            return err("record_every", "must be >= 1".into());
        }
        if !(self.init_radius > 0.0) {
            return err("init_radius", format!("must be positive, got {}", self.init_radius));
        }
        if self.experiment.is_rate_study() {
            if self.algorithms.is_empty() {
                return err("algorithms", "at least one algorithm is required".into());
            }
            if self.n_grid.len() < 4 {
                return err("n_grid", format!("needs >= 4 sample sizes, got {}", self.n_grid.len()));
            }
            if self.n_grid[0] < 10 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
                return err("n_grid", "must be strictly increasing with n >= 10".into());
            }
            if self.replicates < 5 {
                return err("replicates", format!("must be >= 5, got {}", self.replicates));
            }
            if self.baseline_max_iters == 0 && self.algorithms.iter().any(|a| *a != AlgorithmName::Egd) {
                return err("baseline_max_iters", "must be >= 1".into());
            }
        }
        if self.experiment == Experiment::Diagonal {
            if self.alphas.len() != self.d {
                return err("alphas", format!("needs d = {} exponents, got {}", self.d, self.alphas.len()));
            }
            if let Some(a) = self.alphas.iter().find(|a| !(**a > 1.0)) {
                return err("alphas", format!("exponents must exceed 1, got {a}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_experiment_has_a_distinct_figure_id() {
        let mut ids: Vec<&str> = Experiment::ALL.iter().map(|e| e.figure_id()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), Experiment::ALL.len());
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_figure_id(e.figure_id()), Some(e));
            assert_eq!(Experiment::from_figure_id(e.name()), Some(e));
            assert!(experiment_table().contains(e.name()));
        }
    }

    #[test]
    fn defaults_validate() {
        for e in Experiment::ALL {
            ExperimentConfig::defaults(e).validate().unwrap();
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "glm_low_snr", "eta": 0.002, "beta": "auto"}"#)
            .unwrap();
        assert_eq!(cfg.eta, 0.002);
        assert_eq!(cfg.beta, BetaSetting::Auto);
        assert_eq!(cfg.n_grid.len(), 7);
        let manifest = format!(r#"{{"version": "x", "config": {}}}"#, serde_json::to_string(&cfg).unwrap());
        assert_eq!(ExperimentConfig::from_json(&manifest).unwrap(), cfg);
    }

    #[test]
    fn field_level_errors() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "glm_low_snr", "algorithms": ["egd", "em"]}"#)
            .unwrap()
            .validate()
            .unwrap_err();
        assert_eq!(e.field, "algorithms");
        let e = ExperimentConfig::from_json(r#"{"experiment": "glm_low_snr", "bogus": 1}"#).unwrap_err();
        assert_eq!(e.field, "bogus");
        let e = ExperimentConfig::from_json(r#"{"experiment": "two_phase", "beta": "auto"}"#)
            .unwrap()
            .validate()
            .unwrap_err();
        assert_eq!(e.field, "beta");
        let e = ExperimentConfig::from_json(r#"{"experiment": "gmm_high_snr", "beta": 1.5}"#)
            .unwrap()
            .validate()
            .unwrap_err();
        assert_eq!(e.field, "beta");
        assert!(ExperimentConfig::from_json(r#"{"eta": 1}"#).is_err());
    }
}
