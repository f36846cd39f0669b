//! Randomized Walsh–Hadamard rotation `R = (1/√d')·H·diag(s)`.
//!
//! Inputs of dimension `d` are zero-padded to `d'`, the next power of two.
//! `R` is orthonormal, so `R⁻¹ = diag(s)·H/√d'`.

use rand::Rng;

use crate::rng::SimRng;

/// Smallest power of two `≥ d` (and `≥ 1`).
pub fn padded_dim(d: usize) -> usize {
    d.max(1).next_power_of_two()
}

/// In-place unnormalized fast Walsh–Hadamard transform (Sylvester order).
///
/// # Panics
///
/// If the length is not a power of two.
pub fn fwht(data: &mut [f64]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "length {n} is not a power of two");
    let mut half = 1;
    while half < n {
        for block in data.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationOperator {
    dim: usize,
    signs: Vec<f64>,
}

impl RotationOperator {
    /// Signs drawn uniformly from `{−1, +1}` using `rng`.
    pub fn random(dim: usize, rng: &mut SimRng) -> Self {
        let padded = padded_dim(dim);
        let signs = (0..padded)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Self { dim, signs }
    }

    /// # Panics
    ///
    /// If `signs.len()` is not the padded dimension or an entry is not ±1.
    pub fn with_signs(dim: usize, signs: Vec<f64>) -> Self {
        assert_eq!(signs.len(), padded_dim(dim));
        assert!(signs.iter().all(|&s| s == 1.0 || s == -1.0));
        Self { dim, signs }
    }

    pub fn identity_signs(dim: usize) -> Self {
        Self::with_signs(dim, vec![1.0; padded_dim(dim)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn padded_dim(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// `R·pad(x)`, a vector of length `d'`.
    pub fn rotate(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let n = self.padded_dim();
        let mut out = vec![0.0; n];
        for ((o, xi), s) in out.iter_mut().zip(x).zip(&self.signs) {
            *o = xi * s;
        }
        fwht(&mut out);
        let scale = 1.0 / (n as f64).sqrt();
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// `R⁻¹·y` restricted to the first `d` coordinates.
    pub fn inverse_rotate(&self, y: &[f64]) -> Vec<f64> {
        let mut full = self.inverse_rotate_padded(y);
        full.truncate(self.dim);
        full
    }

    /// `R⁻¹·y` with the pad coordinates kept.
    pub fn inverse_rotate_padded(&self, y: &[f64]) -> Vec<f64> {
        let n = self.padded_dim();
        assert_eq!(y.len(), n);
        let mut out = y.to_vec();
        fwht(&mut out);
        let scale = 1.0 / (n as f64).sqrt();
        for (o, s) in out.iter_mut().zip(&self.signs) {
            *o *= scale * s;
        }
        out
    }
}

pub fn rotate(x: &[f64], op: &RotationOperator) -> Vec<f64> {
    op.rotate(x)
}

pub fn inverse_rotate(y: &[f64], op: &RotationOperator) -> Vec<f64> {
    op.inverse_rotate(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;

    /// Dense Sylvester Hadamard entry: (−1)^{popcount(i & j)}.
    fn hadamard_entry(i: usize, j: usize) -> f64 {
        if (i & j).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    #[test]
    fn fwht_matches_dense_matrix() {
        let n = 16;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut fast = x.clone();
        fwht(&mut fast);
        for (i, f) in fast.iter().enumerate() {
            let dense: f64 = (0..n).map(|j| hadamard_entry(i, j) * x[j]).sum();
            assert!((f - dense).abs() < 1e-12);
        }
    }

    #[test]
    fn two_dim_hand_example() {
        let op = RotationOperator::identity_signs(2);
        let y = op.rotate(&[1.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((y[0] - h).abs() < 1e-15 && (y[1] - h).abs() < 1e-15);
    }

    #[test]
    fn padding_dimension() {
        assert_eq!(padded_dim(1), 1);
        assert_eq!(padded_dim(5), 8);
        assert_eq!(padded_dim(64), 64);
        let mut rng = stream_rng(1, Stream::Shared);
        let op = RotationOperator::random(5, &mut rng);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = op.rotate(&x);
        assert_eq!(y.len(), 8);
        let back = op.inverse_rotate(&y);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_spreading_is_exact() {
        // For a unit vector e_j, (R e_j)(i)² = 1/d' for every i and every
        // sign pattern, so its expectation is exactly 1/d'.
        let mut rng = stream_rng(2, Stream::Shared);
        let d = 8;
        for _ in 0..20 {
            let op = RotationOperator::random(d, &mut rng);
            for j in 0..d {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                for yi in op.rotate(&e) {
                    assert!((yi * yi - 1.0 / d as f64).abs() < 1e-15);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn orthonormal_and_invertible(
            seed in any::<u64>(),
            x in prop::collection::vec(-1e3f64..1e3, 1..70),
        ) {
            let mut rng = stream_rng(seed, Stream::Shared);
            let op = RotationOperator::random(x.len(), &mut rng);
            let y = op.rotate(&x);
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((nx - ny).abs() <= 1e-9 * (1.0 + nx));
            let back = op.inverse_rotate(&y);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + nx));
            }
        }
    }
}
