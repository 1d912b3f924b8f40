//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `B B^T + shift I` with `B` uniform on `[-1, 1]`.
pub fn random_spd(n: usize, shift: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * shift
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_symmetric() {
        let m = random_spd(5, 0.1, 1);
        assert_eq!(m, m.transpose());
    }
}
