use rand::Rng;

use super::Real;

/// Zero-mean uniform weights with variance `1 / fan_in`.
pub fn fan_in_uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    (0..n)
        .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
        .collect()
}
