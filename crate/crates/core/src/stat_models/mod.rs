//! Synthetic GLM and mixture testbeds, their losses and the stability probe.

mod glm;
mod gmm;
mod stability;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use glm::{
    double_factorial_odd, generate_glm, glm_gradient, glm_loss, glm_population_gradient_low_snr,
    glm_population_loss_low_snr, GlmDataset, GlmPopulationLowSnr, GlmSpec,
};
pub use gmm::{
    em_step, gaussian_expectation, generate_gmm, gmm_gradient, gmm_nll, log_cosh, run_em,
    GmmDataset, GmmPopulationOverSpecified, GmmSpec, MonteCarloGmmGradient,
};
pub use stability::{
    gmm_quadrature_gradient, population_gradient, probe_stability, GradientFn, StabilityConfig,
    StabilityProfile,
};

use crate::error::{contract, Result};
use crate::optim::{fmt_f64, Objective};
use crate::param::ParamVector;
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Glm(GlmSpec),
    Gmm(GmmSpec),
}

impl ModelSpec {
    pub fn d(&self) -> usize {
        match self {
            Self::Glm(s) => s.d,
            Self::Gmm(s) => s.d,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Glm(s) => s.n,
            Self::Gmm(s) => s.n,
        }
    }

    pub fn theta_star(&self) -> &ParamVector {
        match self {
            Self::Glm(s) => &s.theta_star,
            Self::Gmm(s) => &s.theta_star,
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        match self {
            Self::Glm(s) => Self::Glm(s.with_n(n)),
            Self::Gmm(s) => Self::Gmm(s.with_n(n)),
        }
    }

    pub fn with_theta_star(&self, theta_star: ParamVector) -> Self {
        match self {
            Self::Glm(s) => Self::Glm(GlmSpec {
                d: theta_star.dim(),
                theta_star,
                ..s.clone()
            }),
            Self::Gmm(s) => Self::Gmm(GmmSpec {
                d: theta_star.dim(),
                theta_star,
                ..s.clone()
            }),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        Ok(match self {
            Self::Glm(s) => Dataset::Glm(generate_glm(s, seed)?),
            Self::Gmm(s) => Dataset::Gmm(generate_gmm(s, seed)?),
        })
    }
}

/// A finite sample with a differentiable empirical loss.
pub trait SampleModel: Objective + Sized {
    fn n(&self) -> usize;
    fn theta_star(&self) -> &ParamVector;
    fn subset(&self, indices: &[usize]) -> Self;

    /// Closed-form EM update, where the model has one.
    fn em_update(&self, _theta: &ParamVector) -> Option<Result<ParamVector>> {
        None
    }

    /// Gradient step size that reproduces one EM update.
    fn em_step_size(&self) -> Option<f64> {
        None
    }

    /// Random `(train, validation)` split with `round(frac * n)` training rows.
    fn split(&self, frac: f64, seed: u64) -> Result<(Self, Self)> {
        if !(frac > 0.0 && frac < 1.0) {
            return Err(contract(format!("split fraction must lie in (0, 1), got {frac}")));
        }
        let n = self.n();
        let n_train = (frac * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(contract(format!("split of n = {n} at {frac} leaves an empty fold")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::seeded(seed, streams::SPLIT));
        let (train, val) = idx.split_at(n_train);
        Ok((self.subset(train), self.subset(val)))
    }
}

impl SampleModel for GlmDataset {
    fn n(&self) -> usize {
        GlmDataset::n(self)
    }
    fn theta_star(&self) -> &ParamVector {
        &self.spec.theta_star
    }
    fn subset(&self, indices: &[usize]) -> Self {
        GlmDataset::subset(self, indices)
    }
}

impl SampleModel for GmmDataset {
    fn n(&self) -> usize {
        GmmDataset::n(self)
    }
    fn theta_star(&self) -> &ParamVector {
        &self.spec.theta_star
    }
    fn subset(&self, indices: &[usize]) -> Self {
        GmmDataset::subset(self, indices)
    }
    fn em_update(&self, theta: &ParamVector) -> Option<Result<ParamVector>> {
        Some(em_step(theta, self))
    }
    fn em_step_size(&self) -> Option<f64> {
        Some(self.spec.sigma * self.spec.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Dataset {
    Glm(GlmDataset),
    Gmm(GmmDataset),
}

#[derive(Serialize)]
struct DatasetMeta<'a> {
    #[serde(flatten)]
    spec: &'a ModelSpec,
    seed: u64,
}

impl Dataset {
    pub fn spec(&self) -> ModelSpec {
        match self {
            Self::Glm(d) => ModelSpec::Glm(d.spec.clone()),
            Self::Gmm(d) => ModelSpec::Gmm(d.spec.clone()),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Glm(d) => d.seed,
            Self::Gmm(d) => d.seed,
        }
    }

    /// Row-major CSV with header `x_0,...,x_{d-1}[,y]`.
    pub fn to_csv(&self) -> String {
        let (x, y, d) = match self {
            Self::Glm(g) => (&g.x, Some(&g.y), g.d()),
            Self::Gmm(g) => (&g.x, None, g.d()),
        };
        let mut header: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
        if y.is_some() {
            header.push("y".into());
        }
        let mut out = header.join(",");
        out.push('\n');
        for (i, row) in x.chunks_exact(d).enumerate() {
            let mut cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            if let Some(y) = y {
                cells.push(fmt_f64(y[i]));
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON sidecar with the generating spec and seed.
    pub fn metadata_json(&self) -> Result<String> {
        let spec = self.spec();
        Ok(serde_json::to_string_pretty(&DatasetMeta {
            spec: &spec,
            seed: self.seed(),
        })?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::File::create(dir.join(format!("{stem}.csv")))?.write_all(self.to_csv().as_bytes())?;
        std::fs::File::create(dir.join(format!("{stem}.json")))?
            .write_all(self.metadata_json()?.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_sized() {
        let spec = GlmSpec::new(2, ParamVector::zeros(2), 1.0, 100).unwrap();
        let data = generate_glm(&spec, 1).unwrap();
        let (tr, va) = data.split(0.9, 4).unwrap();
        assert_eq!((tr.n(), va.n()), (90, 10));
        let mut ys: Vec<f64> = tr.y.iter().chain(&va.y).copied().collect();
        let mut orig = data.y.clone();
        ys.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(ys, orig);
        assert_eq!(data.split(0.9, 4).unwrap().0, tr);
    }

    #[test]
    fn degenerate_split_is_rejected() {
        let spec = GmmSpec::new(ParamVector::zeros(1), 1.0, 3).unwrap();
        let data = generate_gmm(&spec, 1).unwrap();
        assert!(data.split(0.9, 0).is_err());
        assert!(data.split(1.0, 0).is_err());
    }

    #[test]
    fn csv_and_sidecar() {
        let spec = ModelSpec::Glm(GlmSpec::new(1, ParamVector::from([1.0, 0.0]), 0.0, 3).unwrap());
        let ds = spec.generate(2).unwrap();
        let csv = ds.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x_0,x_1,y"));
        assert_eq!(lines.count(), 3);
        let meta: serde_json::Value = serde_json::from_str(&ds.metadata_json().unwrap()).unwrap();
        assert_eq!(meta["family"], "glm");
        assert_eq!(meta["seed"], 2);

        let gmm = ModelSpec::Gmm(GmmSpec::new(ParamVector::zeros(3), 1.0, 2).unwrap()).generate(0).unwrap();
        assert!(gmm.to_csv().starts_with("x_0,x_1,x_2\n"));
    }

    #[test]
    fn write_creates_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let ds = ModelSpec::Gmm(GmmSpec::new(ParamVector::zeros(2), 1.0, 5).unwrap()).generate(3).unwrap();
        ds.write(dir.path(), "sample").unwrap();
        assert!(dir.path().join("sample.csv").exists());
        assert!(dir.path().join("sample.json").exists());
    }
}
