//! Deterministic quasi-random initial conditions.
//!
//! Points come from the additive recurrence `x_k = frac(s + k·a)` with the
//! generalized golden-ratio increments `a_j = φ_d^{-(j+1)}`, where `φ_d` is
//! the positive root of `x^{d+1} = x + 1`. The shift `s` is drawn from a
//! seeded ChaCha stream, so a seed fixes the whole sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::lattice::LatticeVector;

fn golden_root(dim: usize) -> f64 {
    let mut x = 2.0f64;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (dim as f64 + 1.0));
    }
    x
}

fn rd_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let phi = golden_root(dim);
    let steps: Vec<f64> = (0..dim).map(|j| phi.powi(-(j as i32 + 1)).fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count)
        .map(|k| {
            steps
                .iter()
                .zip(&offsets)
                .map(|(a, s)| (s + k as f64 * a).fract())
                .collect()
        })
        .collect()
}

fn directions(radius: usize, count: usize, seed: u64, extra: usize) -> Vec<(LatticeVector, Vec<f64>)> {
    let dim = 2 * radius + 1;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    rd_points(dim + extra, count, seed)
        .into_iter()
        .map(|p| {
            let coords: Vec<f64> = p[..dim]
                .iter()
                .map(|&x| normal.inverse_cdf(x.clamp(1e-12, 1.0 - 1e-12)))
                .collect();
            let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
            let dir = LatticeVector::from_raw(radius, coords.into_iter().map(|c| c / norm).collect());
            (dir, p[dim..].to_vec())
        })
        .collect()
}

/// `count` points on the sphere `‖u‖ = r` in the window of the given radius.
pub fn sphere_points(window: usize, count: usize, r: f64, seed: u64) -> Vec<LatticeVector> {
    directions(window, count, seed, 0)
        .into_iter()
        .map(|(d, _)| d.scale(r))
        .collect()
}

/// `count` points in the ball `‖u‖ ≤ r`, uniform in volume.
pub fn ball_points(window: usize, count: usize, r: f64, seed: u64) -> Vec<LatticeVector> {
    let dim = (2 * window + 1) as f64;
    directions(window, count, seed, 1)
        .into_iter()
        .map(|(d, radial)| d.scale(r * radial[0].powf(1.0 / dim)))
        .collect()
}
