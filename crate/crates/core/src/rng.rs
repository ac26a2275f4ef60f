//! Seeded random streams shared by data generation and probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::param::ParamVector;

/// Independent stream ids carved out of one seed.
pub mod streams {
    pub const DATA: u64 = 0;
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const PROBE: u64 = 3;
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ParamVector {
    loop {
        let v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return ParamVector::from(v.into_iter().map(|x| x / norm).collect::<Vec<_>>());
        }
    }
}

/// Uniform point on the sphere of `radius` around `center`.
pub fn on_sphere<R: Rng + ?Sized>(rng: &mut R, center: &ParamVector, radius: f64) -> ParamVector {
    let u = unit_vector(rng, center.dim());
    center.axpy(radius, &u)
}

/// Uniform point in the closed ball of `radius` around `center`.
pub fn in_ball<R: Rng + ?Sized>(rng: &mut R, center: &ParamVector, radius: f64) -> ParamVector {
    let u = unit_vector(rng, center.dim());
    let r = radius * rng.random::<f64>().powf(1.0 / center.dim() as f64);
    center.axpy(r, &u)
}
