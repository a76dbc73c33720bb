//! Deterministic random-stream derivation.
//!
//! Every stochastic routine in the crate derives its generator from a master
//! seed plus a (domain, index) pair through ChaCha streams, so parallel work
//! items draw from independent streams and results never depend on thread
//! scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const DOMAIN_NOISE_POWER: u64 = 1;
pub(crate) const DOMAIN_NORM_STATS: u64 = 2;
pub(crate) const DOMAIN_SIM_USERS: u64 = 3;
pub(crate) const DOMAIN_SIM_DATA: u64 = 4;
pub(crate) const DOMAIN_SIM_NOISE: u64 = 5;

/// Generator for stream `index` of `domain` under `master` seed.
///
/// The index must stay below 2^48; domains are small constants.
pub(crate) fn substream(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((domain << 48) | index);
    rng
}

/// One draw from the circular complex Gaussian with total variance `var`
/// (real and imaginary parts i.i.d. normal with variance `var / 2`),
/// generated by the Box-Muller transform.
pub(crate) fn complex_gaussian(rng: &mut ChaCha8Rng, var: f64) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    let r = (var / 2.0).sqrt() * (-2.0 * u1.ln()).sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    (r * phi.cos(), r * phi.sin())
}
