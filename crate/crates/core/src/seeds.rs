//! Per-case seeds derived from one campaign seed, so that serial and
//! parallel runs draw identical streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

/// `n` seeds drawn from a ChaCha8 stream keyed by `seed`. The first `k`
/// values do not depend on `n`.
pub fn derive_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// A generator for case `i` of a campaign keyed by `seed`.
pub fn case_rng(case_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(case_seed)
}

/// A uniform point of the probability simplex on `k` atoms (Dirichlet(1)).
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}
