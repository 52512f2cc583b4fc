//! Samplers and exact mass functions for the noise distributions used by the
//! mechanisms: Geometric, Exponential, Bernoulli, Laplace and Gaussian.
//!
//! Every sampler is an inverse-CDF transform of uniform draws, so a sample is
//! a deterministic function of the parameters and the generator state. The
//! `*_from_uniform` variants expose the transforms directly.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// Probabilities below this are flushed to zero.
pub const PMF_FLOOR: f64 = 1e-300;

/// Failure probability `p` of the geometric distribution `Geo(p)` on
/// `{0, 1, 2, ...}` with mass `(1 - p) p^k`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GeometricParam(f64);

impl GeometricParam {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid(
                "p",
                format!("failure probability must lie in [0, 1), got {p}"),
            ));
        }
        Ok(Self(p))
    }

    /// `Geo(e^{-eps})`, the noise used with privacy parameter `eps`.
    pub fn from_epsilon(eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(invalid("eps", format!("must be positive, got {eps}")));
        }
        Self::new((-eps).exp())
    }

    pub fn p(self) -> f64 {
        self.0
    }

    /// Mean `p / (1 - p)`.
    pub fn mean(self) -> f64 {
        self.0 / (1.0 - self.0)
    }
}

/// `Geo(p)(k) = (1 - p) p^k`, and zero for negative `k`.
pub fn geo_pmf(p: GeometricParam, k: i64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let p = p.0;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let v = (1.0 - p) * (k as f64 * p.ln()).exp();
    if v < PMF_FLOOR {
        0.0
    } else {
        v
    }
}

/// `Geo(p)(< x) = 1 - p^x` for `x >= 1`, zero otherwise.
pub fn geo_cdf_below(p: GeometricParam, x: i64) -> f64 {
    if x <= 0 {
        return 0.0;
    }
    let p = p.0;
    if p == 0.0 {
        return 1.0;
    }
    // 1 - p^x without cancellation for p close to 1
    -((x as f64) * p.ln()).exp_m1()
}

/// Inverse-CDF geometric transform of `u` in `(0, 1]`: `floor(ln u / ln p)`.
pub fn geometric_from_uniform(p: GeometricParam, u: f64) -> u64 {
    if p.0 == 0.0 || u >= 1.0 {
        return 0;
    }
    let k = (u.ln() / p.0.ln()).floor();
    if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        k as u64
    }
}

pub fn sample_geometric<R: Rng + ?Sized>(p: GeometricParam, rng: &mut R) -> u64 {
    geometric_from_uniform(p, open_low_unit(rng))
}

/// Inverse-CDF exponential transform of `u` in `[0, 1)`: `-ln(1 - u) / lambda`.
pub fn exponential_from_uniform(lambda: f64, u: f64) -> f64 {
    -(-u).ln_1p() / lambda
}

pub fn sample_exponential<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    assert!(
        lambda > 0.0 && lambda.is_finite(),
        "exponential rate must be positive"
    );
    exponential_from_uniform(lambda, rng.gen::<f64>())
}

pub fn sample_bernoulli<R: Rng + ?Sized>(q: f64, rng: &mut R) -> bool {
    debug_assert!((0.0..=1.0).contains(&q));
    rng.gen::<f64>() < q
}

/// Inverse-CDF Laplace transform of `u` in `(0, 1)`. Replacing `u` by `1 - u`
/// negates the sample.
pub fn laplace_from_uniform(scale: f64, u: f64) -> f64 {
    let v = u - 0.5;
    -scale * v.signum() * (-2.0 * v.abs()).ln_1p()
}

pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    assert!(
        scale > 0.0 && scale.is_finite(),
        "laplace scale must be positive"
    );
    laplace_from_uniform(scale, open_unit(rng))
}

/// Box-Muller (sine branch) transform of `u1` in `(0, 1]` and `u2` in `[0, 1)`.
pub fn gaussian_from_uniforms(sigma: f64, u1: f64, u2: f64) -> f64 {
    sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).sin()
}

pub fn sample_gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    assert!(
        sigma > 0.0 && sigma.is_finite(),
        "gaussian sigma must be positive"
    );
    let u1 = open_low_unit(rng);
    let u2 = rng.gen::<f64>();
    gaussian_from_uniforms(sigma, u1, u2)
}

/// Uniform on `(0, 1]`.
fn open_low_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Uniform on `(0, 1)`.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            return u;
        }
    }
}

/// Seedable ChaCha stream. Independent streams for `(seed, experiment, trial)`
/// triples are derived by hashing, so any single trial can be replayed.
#[derive(Debug, Clone)]
pub struct StreamRng(ChaCha8Rng);

impl StreamRng {
    pub fn seeded(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn for_trial(seed: u64, experiment: u64, trial: u64) -> Self {
        let h = splitmix(splitmix(splitmix(seed) ^ experiment) ^ trial);
        Self::seeded(h)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}
