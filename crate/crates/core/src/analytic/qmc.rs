//! Randomly shifted Kronecker (R_d) lattice for low-discrepancy sampling of
//! the unit cube, folded by the baker's transform so that non-periodic
//! integrands keep the lattice convergence rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator `α_j = φ_d^{-j} mod 1` where `φ_d` is the positive root of
/// `x^{d+1} = x + 1`.
fn generators(dim: usize) -> Vec<f64> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    (1..=dim).map(|j| phi.powi(-(j as i32)).fract()).collect()
}

pub(crate) struct ShiftedKronecker {
    alpha: Vec<f64>,
    shift: Vec<f64>,
}

impl ShiftedKronecker {
    /// Point set number `replicate` of dimension `dim`; replicates share the
    /// lattice and differ in their random shift.
    pub(crate) fn new(dim: usize, seed: u64, replicate: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((dim as u64) << 32) | replicate);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        ShiftedKronecker {
            alpha: generators(dim),
            shift,
        }
    }

    /// Writes the `n`-th point into `out`.
    pub(crate) fn point(&self, n: u64, out: &mut [f64]) {
        let nf = n as f64;
        for ((o, a), s) in out.iter_mut().zip(&self.alpha).zip(&self.shift) {
            let x = (s + nf * a).fract();
            *o = 1.0 - (2.0 * x - 1.0).abs();
        }
    }
}
