//! Analytic test objectives and the homogeneity probe.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::optim::{HomogeneityProfile, Objective};
use crate::param::ParamVector;
use crate::rng::{self, streams};

/// `|theta|^(2p) / (2p)`, convex but flat at the origin for `p > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNorm {
    p: u32,
    optimum: ParamVector,
}

impl PowerNorm {
    pub fn p(&self) -> u32 {
        self.p
    }
}

pub fn power_norm_objective(p: u32, d: usize) -> Result<PowerNorm> {
    if p == 0 || d == 0 {
        return Err(contract("power_norm_objective needs p >= 1 and d >= 1"));
    }
    Ok(PowerNorm {
        p,
        optimum: ParamVector::zeros(d),
    })
}

/// `|theta|^2 / 2`, the `p = 1` power norm.
pub fn quadratic_objective(d: usize) -> Result<PowerNorm> {
    power_norm_objective(1, d)
}

impl Objective for PowerNorm {
    fn dim(&self) -> usize {
        self.optimum.dim()
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        theta.check_dim(self.dim())?;
        Ok(theta.norm_squared().powi(self.p as i32) / (2 * self.p) as f64)
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        theta.check_dim(self.dim())?;
        Ok(theta.scaled(theta.norm_squared().powi(self.p as i32 - 1)))
    }

    fn optimum(&self) -> Option<&ParamVector> {
        Some(&self.optimum)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(0.0)
    }

    fn profile(&self) -> Option<HomogeneityProfile> {
        // lambda_max = (2p-1)|theta|^(2p-2); |grad| = (2p)^((2p-1)/(2p)) f^((2p-1)/(2p)).
        let two_p = 2.0 * self.p as f64;
        Some(HomogeneityProfile {
            alpha: two_p - 2.0,
            rho: 1.0,
            c1: two_p - 1.0,
            c2: two_p.powf((two_p - 1.0) / two_p),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalSpec {
    alphas: Vec<f64>,
}

impl DiagonalSpec {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(contract("diagonal spec needs at least one exponent"));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 1.0 && a.is_finite())) {
            return Err(contract(format!("diagonal exponents must exceed 1, got {a}")));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CoordPower {
    /// Even integer exponent `2 alpha`.
    Even(i32),
    /// Fractional or odd exponent, applied to `|theta_i|`.
    Abs(f64),
}

impl CoordPower {
    fn new(alpha: f64) -> Self {
        let k = 2.0 * alpha;
        if k.fract() == 0.0 && (k as i64) % 2 == 0 {
            Self::Even(k as i32)
        } else {
            Self::Abs(k)
        }
    }

    fn value(self, x: f64) -> f64 {
        match self {
            Self::Even(k) => x.powi(k),
            Self::Abs(k) => x.abs().powf(k),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Even(k) => k as f64 * x.powi(k - 1),
            Self::Abs(k) => k * x.signum() * x.abs().powf(k - 1.0),
        }
    }
}

/// `sum_i theta_i^(2 alpha_i)`: each coordinate has its own flatness.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonal {
    spec: DiagonalSpec,
    powers: Vec<CoordPower>,
    optimum: ParamVector,
}

impl Diagonal {
    pub fn spec(&self) -> &DiagonalSpec {
        &self.spec
    }
}

pub fn diagonal_objective(spec: DiagonalSpec) -> Diagonal {
    let powers = spec.alphas.iter().map(|&a| CoordPower::new(a)).collect();
    Diagonal {
        optimum: ParamVector::zeros(spec.alphas.len()),
        powers,
        spec,
    }
}

impl Objective for Diagonal {
    fn dim(&self) -> usize {
        self.powers.len()
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        theta.check_dim(self.dim())?;
        Ok(self.powers.iter().zip(theta.iter()).map(|(p, &x)| p.value(x)).sum())
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        theta.check_dim(self.dim())?;
        Ok(ParamVector::from(
            self.powers
                .iter()
                .zip(theta.iter())
                .map(|(p, &x)| p.derivative(x))
                .collect::<Vec<_>>(),
        ))
    }

    fn optimum(&self) -> Option<&ParamVector> {
        Some(&self.optimum)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `(theta_1^2 + theta_2^4)^2`, whose Hessian eigenvalues scale differently.
#[derive(Debug, Clone, PartialEq)]
pub struct NonDiagonal {
    optimum: ParamVector,
}

pub fn nondiagonal_example() -> NonDiagonal {
    NonDiagonal {
        optimum: ParamVector::zeros(2),
    }
}

impl NonDiagonal {
    pub fn hessian(&self, theta: &ParamVector) -> Result<Matrix2<f64>> {
        theta.check_dim(2)?;
        let (a, b) = (theta[0], theta[1]);
        let off = 16.0 * a * b.powi(3);
        Ok(Matrix2::new(
            12.0 * a * a + 4.0 * b.powi(4),
            off,
            off,
            24.0 * a * a * b * b + 56.0 * b.powi(6),
        ))
    }

    /// `lambda_max / lambda_min` of the analytic Hessian.
    pub fn eigenvalue_ratio(&self, theta: &ParamVector) -> Result<f64> {
        let eig = self.hessian(theta)?.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        Ok(hi / lo)
    }
}

impl Objective for NonDiagonal {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, theta: &ParamVector) -> Result<f64> {
        theta.check_dim(2)?;
        let inner = theta[0] * theta[0] + theta[1].powi(4);
        Ok(inner * inner)
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        theta.check_dim(2)?;
        let (a, b) = (theta[0], theta[1]);
        let inner = a * a + b.powi(4);
        Ok(ParamVector::from([4.0 * inner * a, 8.0 * inner * b.powi(3)]))
    }

    fn optimum(&self) -> Option<&ParamVector> {
        Some(&self.optimum)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Largest eigenvalue of the central-difference Hessian of `obj` at `theta`.
pub fn fd_hessian_max_eigenvalue<O: Objective + ?Sized>(obj: &O, theta: &ParamVector) -> Result<f64> {
    let d = theta.dim();
    let h = 1e-5 * theta.norm().max(1.0);
    let mut hess = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[j] += h;
        minus[j] -= h;
        let gp = obj.gradient(&plus)?;
        let gm = obj.gradient(&minus)?;
        for i in 0..d {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym).eigenvalues.max())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityProbe {
    pub c1_hat: f64,
    pub c2_hat: f64,
    /// Samples whose ratios could not be formed, including the excluded core.
    pub violations: usize,
    /// Samples within `1e-8` of the optimum.
    pub excluded_core: usize,
}

impl HomogeneityProbe {
    pub fn violations_outside_core(&self) -> usize {
        self.violations - self.excluded_core
    }
}

const CORE_RADIUS: f64 = 1e-8;

/// Estimates the growth constant `c1` and the gradient-domination constant
/// `c2` for exponent `alpha` from `n_samples` uniform draws in `B(theta*, rho)`.
pub fn probe_homogeneity<O: Objective + ?Sized>(
    obj: &O,
    alpha: f64,
    rho: f64,
    n_samples: usize,
    seed: u64,
) -> Result<HomogeneityProbe> {
    let optimum = obj
        .optimum()
        .ok_or_else(|| contract("probe_homogeneity needs an objective with a known optimum"))?;
    if !(rho > 0.0) || !(alpha >= 0.0) {
        return Err(contract("probe_homogeneity needs rho > 0 and alpha >= 0"));
    }
    let f_star = match obj.optimal_value() {
        Some(v) => v,
        None => obj.value(optimum)?,
    };
    let mut rng = rng::seeded(seed, streams::PROBE);
    let pl_exponent = (alpha + 1.0) / (alpha + 2.0);
    let mut probe = HomogeneityProbe {
        c1_hat: 0.0,
        c2_hat: f64::INFINITY,
        violations: 0,
        excluded_core: 0,
    };
    for _ in 0..n_samples {
        let theta = rng::in_ball(&mut rng, optimum, rho);
        let r = theta.distance(optimum);
        if r < CORE_RADIUS {
            probe.violations += 1;
            probe.excluded_core += 1;
            continue;
        }
        let growth = fd_hessian_max_eigenvalue(obj, &theta)? / r.powf(alpha);
        let (value, grad) = obj.value_and_gradient(&theta)?;
        let pl = grad.norm() / (value - f_star).powf(pl_exponent);
        if !growth.is_finite() || !pl.is_finite() {
            probe.violations += 1;
            continue;
        }
        probe.c1_hat = probe.c1_hat.max(growth);
        probe.c2_hat = probe.c2_hat.min(pl);
    }
    Ok(probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from(v)
    }

    #[test]
    fn power_norm_examples() {
        let f = power_norm_objective(2, 1).unwrap();
        assert_eq!(f.value(&pv(&[1.0])).unwrap(), 0.25);
        assert_eq!(f.gradient(&pv(&[1.0])).unwrap(), pv(&[1.0]));
        let q = power_norm_objective(1, 2).unwrap();
        assert_eq!(q.value(&pv(&[3.0, 4.0])).unwrap(), 12.5);
        assert_eq!(q.gradient(&pv(&[3.0, 4.0])).unwrap(), pv(&[3.0, 4.0]));
        for p in 1..5 {
            let f = power_norm_objective(p, 3).unwrap();
            let z = ParamVector::zeros(3);
            assert_eq!(f.value(&z).unwrap(), 0.0);
            assert_eq!(f.gradient(&z).unwrap(), z);
            assert_eq!(f.profile().unwrap().alpha, 2.0 * p as f64 - 2.0);
        }
        assert!(power_norm_objective(0, 1).is_err());
    }

    #[test]
    fn quadratic_examples() {
        let q = quadratic_objective(1).unwrap();
        assert_eq!(q.value_and_gradient(&pv(&[1.0])).unwrap(), (0.5, pv(&[1.0])));
        let q2 = quadratic_objective(2).unwrap();
        assert_eq!(q2.value(&pv(&[-2.0, 1.0])).unwrap(), 2.5);
        assert_eq!(q2.gradient(&pv(&[-2.0, 1.0])).unwrap(), pv(&[-2.0, 1.0]));
        let prof = q2.profile().unwrap();
        assert_eq!((prof.alpha, prof.c1), (0.0, 1.0));
    }

    #[test]
    fn diagonal_examples() {
        let f = diagonal_objective(DiagonalSpec::new(vec![2.0, 3.0]).unwrap());
        assert_eq!(f.value(&pv(&[1.0, 1.0])).unwrap(), 2.0);
        assert_eq!(f.gradient(&pv(&[1.0, 1.0])).unwrap(), pv(&[4.0, 6.0]));
        let z = ParamVector::zeros(2);
        assert_eq!(f.value(&z).unwrap(), 0.0);
        assert_eq!(f.gradient(&z).unwrap(), z);
        let g = diagonal_objective(DiagonalSpec::new(vec![2.0]).unwrap());
        assert_eq!(g.value(&pv(&[-1.0])).unwrap(), 1.0);
        assert_eq!(g.gradient(&pv(&[-1.0])).unwrap(), pv(&[-4.0]));
        assert!(DiagonalSpec::new(vec![1.0]).is_err());
        assert!(DiagonalSpec::new(vec![]).is_err());
    }

    #[test]
    fn diagonal_fractional_exponent_is_even_in_theta() {
        let f = diagonal_objective(DiagonalSpec::new(vec![1.25, 1.5]).unwrap());
        let a = pv(&[0.7, -0.3]);
        let b = a.neg();
        assert_eq!(f.value(&a).unwrap(), f.value(&b).unwrap());
        assert_eq!(f.gradient(&a).unwrap(), f.gradient(&b).unwrap().neg());
        // 2 * 1.25 * 0.7^1.5
        assert_relative_eq!(f.gradient(&a).unwrap()[0], 2.5 * 0.7f64.powf(1.5), max_relative = 1e-15);
    }

    #[test]
    fn nondiagonal_examples() {
        let f = nondiagonal_example();
        let e1 = pv(&[1.0, 0.0]);
        assert_eq!(f.value(&e1).unwrap(), 1.0);
        assert_eq!(f.gradient(&e1).unwrap(), pv(&[4.0, 0.0]));
        assert_eq!(f.hessian(&e1).unwrap(), Matrix2::new(12.0, 0.0, 0.0, 0.0));
        let e2 = pv(&[0.0, 1.0]);
        assert_eq!(f.value(&e2).unwrap(), 1.0);
        assert_eq!(f.gradient(&e2).unwrap(), pv(&[0.0, 8.0]));
        assert_eq!(f.hessian(&e2).unwrap(), Matrix2::new(4.0, 0.0, 0.0, 56.0));
        let z = ParamVector::zeros(2);
        assert_eq!(f.value(&z).unwrap(), 0.0);
        assert_eq!(f.gradient(&z).unwrap(), z);
    }

    #[test]
    fn nondiagonal_hessian_matches_finite_differences() {
        let f = nondiagonal_example();
        for theta in [pv(&[0.3, -0.8]), pv(&[1.1, 0.4]), pv(&[-0.2, 0.9])] {
            let h = 1e-6;
            let analytic = f.hessian(&theta).unwrap();
            for j in 0..2 {
                let mut p = theta.clone();
                let mut m = theta.clone();
                p[j] += h;
                m[j] -= h;
                let (gp, gm) = (f.gradient(&p).unwrap(), f.gradient(&m).unwrap());
                for i in 0..2 {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    assert!((fd - analytic[(i, j)]).abs() < 1e-5 * analytic.norm());
                }
            }
        }
    }

    #[test]
    fn nondiagonal_eigenvalue_ratio_blows_up() {
        let f = nondiagonal_example();
        let r = f.eigenvalue_ratio(&pv(&[1e-2, 1e-2])).unwrap();
        assert!(r > 1e3, "ratio {r}");
        let r_far = f.eigenvalue_ratio(&pv(&[1e-1, 1e-1])).unwrap();
        assert!(r > r_far);
    }

    #[test]
    fn probe_power_norm_and_quadratic() {
        let f = power_norm_objective(2, 1).unwrap();
        let probe = probe_homogeneity(&f, 2.0, 0.5, 200, 7).unwrap();
        assert!((probe.c1_hat - 3.0).abs() < 1e-3, "{probe:?}");
        assert!(probe.c2_hat > 0.0);
        assert_relative_eq!(probe.c2_hat, 4f64.powf(0.75), max_relative = 1e-9);

        let q = quadratic_objective(1).unwrap();
        let probe = probe_homogeneity(&q, 0.0, 0.5, 200, 7).unwrap();
        assert!((probe.c1_hat - 1.0).abs() < 1e-6);
        assert!((probe.c2_hat - 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(probe.violations, 0);
    }

    #[test]
    fn probe_excludes_optimum_core() {
        let q = quadratic_objective(1).unwrap();
        let probe = probe_homogeneity(&q, 0.0, 1e-9, 10, 1).unwrap();
        assert_eq!(probe.excluded_core, 10);
        assert_eq!(probe.violations, 10);
        assert_eq!(probe.violations_outside_core(), 0);
    }

    #[test]
    fn probe_needs_optimum() {
        struct NoOpt;
        impl Objective for NoOpt {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, t: &ParamVector) -> Result<f64> {
                Ok(t[0])
            }
            fn gradient(&self, _: &ParamVector) -> Result<ParamVector> {
                Ok(ParamVector::from([1.0]))
            }
        }
        assert!(probe_homogeneity(&NoOpt, 0.0, 1.0, 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn power_norm_homogeneity(
            p in 1u32..5,
            s in 0.05f64..20.0,
            v in prop::collection::vec(-2.0f64..2.0, 1..5),
        ) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let f = power_norm_objective(p, v.len()).unwrap();
            let theta = ParamVector::from(v);
            let scaled = theta.scaled(s);
            let k = 2 * p as i32;
            let lhs = f.value(&scaled).unwrap();
            let rhs = s.powi(k) * f.value(&theta).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
            let gl = f.gradient(&scaled).unwrap();
            let gr = f.gradient(&theta).unwrap().scaled(s.powi(k - 1));
            for (a, b) in gl.iter().zip(gr.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * gr.norm());
            }
        }
    }
}
