//! Rate fits, convergence classification, gradient checks and Monte Carlo
//! rate studies.

mod study;

use serde::{Deserialize, Serialize};

pub use study::{
    cross_validated_stop, cross_validation_study, rate_study, run_method, summarize, Aggregation,
    Algorithm, BetaRule, CellResult, CvOutcome, CvResult, Method, MethodStudy, PerN, RateStudyConfig,
    RateStudyResult, SignalScaling, TrajectorySummary, RATE_STUDY_CSV_HEADER,
};

use crate::error::{contract, Result};
use crate::optim::{Termination, Trajectory};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Smallest and largest abscissa used, before any transform.
    pub window: (f64, f64),
    pub n_points: usize,
}

impl RateFit {
    /// Per-iteration contraction `exp(slope)` of a geometric fit.
    pub fn ratio(&self) -> f64 {
        self.slope.exp()
    }
}

/// Ordinary least squares of `ys` on `xs`.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(contract(format!("fit needs equal lengths, got {} and {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(contract(format!("fit needs at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(contract("fit inputs must be finite"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(contract("fit needs at least two distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * n * (my * my).max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        window: (lo, hi),
        n_points: xs.len(),
    })
}

fn logs(values: &[f64], what: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(contract(format!("{what} must be positive and finite, got {v}")))
            }
        })
        .collect()
}

/// Least squares of `ln y` on `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    let fit = fit_linear(&logs(xs, "x")?, &logs(ys, "y")?)?;
    Ok(RateFit {
        window: (
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        ..fit
    })
}

/// Least squares of `ln error` on `t`; `exp(slope)` is the per-step ratio.
pub fn fit_geometric(ts: &[usize], errors: &[f64]) -> Result<RateFit> {
    let xs: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
    fit_linear(&xs, &logs(errors, "error")?)
}

/// Index one past the last record of the initial descent: the first `k >= 1`
/// whose objective rises above its predecessor or is non-finite.
pub fn descent_window_end(objectives: &[f64]) -> usize {
    (1..objectives.len())
        .find(|&k| {
            let (prev, cur) = (objectives[k - 1], objectives[k]);
            !cur.is_finite() || cur - prev > 1e-12 * prev.abs()
        })
        .unwrap_or(objectives.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Linear,
    Sublinear,
    TwoPhase,
    Diverged,
    Inconclusive,
}

const MIN_RECORDS: usize = 30;
const BURN_IN: usize = 5;
const REBOUND: f64 = 10.0;

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Geometric fit of the distance to the optimum over `t` from 5 to the
/// trajectory's error minimum.
pub fn geometric_window_fit(traj: &Trajectory) -> Result<RateFit> {
    let errors = traj
        .errors()
        .ok_or_else(|| contract("fit needs dist_to_optimum on every record"))?;
    let best = argmin(&errors);
    if best < BURN_IN + 2 {
        return Err(contract(format!("error minimum at record {best} leaves no fit window")));
    }
    let ts: Vec<usize> = traj.records[BURN_IN..=best].iter().map(|r| r.t).collect();
    fit_geometric(&ts, &errors[BURN_IN..=best])
}

/// Log-log fit of the distance to the optimum against `t` over `[t_lo, t_hi]`.
pub fn loglog_window_fit(traj: &Trajectory, t_lo: usize, t_hi: usize) -> Result<RateFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = traj
        .records
        .iter()
        .filter(|r| r.t >= t_lo.max(1) && r.t <= t_hi)
        .map(|r| {
            r.dist_to_optimum
                .map(|e| (r.t as f64, e))
                .ok_or_else(|| contract("fit needs dist_to_optimum on every record"))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    fit_loglog(&xs, &ys)
}

/// Labels a trajectory by the shape of its distance-to-optimum sequence.
pub fn classify_convergence(traj: &Trajectory) -> Result<Convergence> {
    let errors = traj
        .errors()
        .ok_or_else(|| contract("classification needs dist_to_optimum on every record"))?;
    if errors.len() < MIN_RECORDS {
        return Err(contract(format!(
            "classification needs at least {MIN_RECORDS} records, got {}",
            errors.len()
        )));
    }
    let ts: Vec<usize> = traj.records.iter().map(|r| r.t).collect();
    let best = argmin(&errors);
    let min = errors[best];
    let rebound = errors[best..]
        .iter()
        .any(|&e| !e.is_finite() || e >= REBOUND * min);
    if best > 0 && best + 1 < errors.len() && rebound {
        return Ok(Convergence::TwoPhase);
    }
    if traj.terminated_by == Termination::Diverged {
        return Ok(Convergence::Diverged);
    }
    if best <= BURN_IN + 2 || min <= 0.0 {
        return Ok(Convergence::Inconclusive);
    }
    let window = BURN_IN..=best;
    let geo = fit_geometric(&ts[window.clone()], &errors[window.clone()])?;
    if geo.r_squared >= 0.99 && geo.ratio() < 0.999 {
        return Ok(Convergence::Linear);
    }
    let xs: Vec<f64> = ts[window.clone()].iter().map(|&t| t.max(1) as f64).collect();
    let ll = fit_loglog(&xs, &errors[window])?;
    if ll.r_squared >= 0.99 && geo.r_squared < 0.95 {
        return Ok(Convergence::Sublinear);
    }
    Ok(Convergence::Inconclusive)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_point: Option<ParamVector>,
}

/// Central-difference check of `grad` against `value` with step
/// `h_rel * max(1, |theta|)` per coordinate.
pub fn finite_difference_check<V, G>(
    value: V,
    grad: G,
    points: &[ParamVector],
    h_rel: f64,
) -> Result<FdReport>
where
    V: Fn(&ParamVector) -> Result<f64>,
    G: Fn(&ParamVector) -> Result<ParamVector>,
{
    if !(h_rel > 0.0) {
        return Err(contract("h_rel must be positive"));
    }
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_point: None,
    };
    for theta in points {
        let analytic = grad(theta)?;
        analytic.check_dim(theta.dim())?;
        let h = h_rel * theta.norm().max(1.0);
        let mut diff_sq = 0.0;
        for j in 0..theta.dim() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (value(&plus)? - value(&minus)?) / (2.0 * h);
            diff_sq += (fd - analytic[j]).powi(2);
        }
        let rel = diff_sq.sqrt() / analytic.norm().max(1e-12);
        if report.worst_point.is_none() || rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_point = Some(theta.clone());
        }
    }
    Ok(report)
}
