//! Deterministic, splittable random streams.
//!
//! Every random quantity in a run is drawn from a stream identified by a
//! [`StreamKey`]: the master seed plus four integer tags (drop, link, module,
//! purpose). The tags are folded into a 256-bit ChaCha8 seed with SplitMix64,
//! so a stream depends only on its key and never on the order in which other
//! streams were created or consumed.
//!
//! Transforms:
//! - `uniform`: the top 53 bits of a `u64`, offset by half an ulp, giving
//!   values strictly inside (0, 1).
//! - `standard_normal`: inverse CDF, `-sqrt(2) * erfc_inv(2u)`.
//! - `lognormal10(mu, sigma)`: `10^(mu + sigma * z)`. All "lg" quantities in
//!   this crate are base-10 logarithms.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

use crate::error::{invalid, Result};

/// Module tags used in [`StreamKey::module`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum ModuleTag {
    Layout = 1,
    Drop = 2,
    LinkState = 3,
    Lsp = 4,
    Toa = 5,
    Clusters = 6,
    Rays = 7,
    Polarization = 8,
    PolVariability = 9,
    Antenna = 10,
    Grip = 11,
    Imbalance = 12,
    NearField = 13,
    Sns = 14,
    Penetration = 15,
    Harness = 16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StreamKey {
    pub master_seed: u64,
    pub drop: u64,
    pub link: u64,
    pub module: u64,
    pub purpose: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            ..Default::default()
        }
    }

    pub fn drop(mut self, drop: u64) -> Self {
        self.drop = drop;
        self
    }

    pub fn link(mut self, link: u64) -> Self {
        self.link = link;
        self
    }

    pub fn module(mut self, module: ModuleTag) -> Self {
        self.module = module as u64;
        self
    }

    pub fn purpose(mut self, purpose: u64) -> Self {
        self.purpose = purpose;
        self
    }

    pub fn stream(&self) -> Stream {
        derive_stream(self)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_stream(key: &StreamKey) -> Stream {
    let mut state = key.master_seed;
    // Absorb each tag through a full mixing round so that keys differing in a
    // single tag land far apart.
    for tag in [key.drop, key.link, key.module, key.purpose] {
        let mixed = splitmix64(&mut state);
        state = mixed ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    Stream {
        inner: ChaCha8Rng::from_seed(seed),
    }
}

/// A single-owner random stream.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 52 bits so that the largest value, 1 - 2^-53, stays below one.
        let bits = self.inner.next_u64() >> 12;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u = self.uniform();
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
    }

    pub fn normal(&mut self, mu: f64, sigma: f64) -> f64 {
        mu + sigma * self.standard_normal()
    }

    /// `10^(mu + sigma z)` with `z` standard normal.
    pub fn lognormal10(&mut self, mu: f64, sigma: f64) -> Result<f64> {
        if !(sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
        }
        Ok(10f64.powf(mu + sigma * self.standard_normal()))
    }

    /// Uniform phase on (-pi, pi].
    pub fn phase(&mut self) -> f64 {
        std::f64::consts::PI * (2.0 * self.uniform() - 1.0)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: u32, hi: u32) -> u32 {
        self.inner.random_range(lo..=hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn sign(&mut self) -> f64 {
        if self.uniform() < 0.5 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Access to the underlying generator for `rand` adaptors (shuffles).
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }

    /// Samples an index from a discrete probability vector.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Uniform};

    #[test]
    fn same_key_same_stream() {
        let k = StreamKey::new(42).drop(3).link(7).module(ModuleTag::Lsp).purpose(1);
        let mut a = k.stream();
        let mut b = k.stream();
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn one_tag_apart_is_uncorrelated() {
        let base = StreamKey::new(1).drop(0).link(0).module(ModuleTag::Clusters);
        let variants = [
            base.purpose(1),
            base.link(1),
            base.drop(1),
            base.module(ModuleTag::Rays),
            StreamKey { master_seed: 2, ..base },
        ];
        let mut s0 = base.stream();
        let a: Vec<f64> = (0..10_000).map(|_| s0.uniform()).collect();
        for k in variants {
            let mut s = k.stream();
            let b: Vec<f64> = (0..10_000).map(|_| s.uniform()).collect();
            assert!(pearson(&a, &b).abs() < 0.05);
        }
    }

    #[test]
    fn normal_moments() {
        let mut s = StreamKey::new(9).stream();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(m.abs() < 0.005, "mean {m}");
        assert!((v - 1.0).abs() < 0.01, "var {v}");
    }

    #[test]
    fn lognormal_degenerate_and_rejects_negative_sigma() {
        let mut s = StreamKey::new(1).stream();
        assert_eq!(s.lognormal10(-7.5, 0.0).unwrap(), 10f64.powf(-7.5));
        assert!(s.lognormal10(0.0, -1.0).is_err());
    }

    #[test]
    fn uniform_open_interval_and_ks() {
        let mut s = StreamKey::new(5).stream();
        let mut xs: Vec<f64> = (0..100_000).map(|_| s.uniform()).collect();
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
        let d = crate::harness::stats::ks_statistic(&mut xs, |x| {
            Uniform::new(0.0, 1.0).unwrap().cdf(x)
        });
        let p = crate::harness::stats::ks_p_value(d, 100_000);
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn extreme_uniforms_stay_open() {
        // All-zero and all-one mantissas map strictly inside (0, 1).
        let scale = 1.0 / (1u64 << 52) as f64;
        let lo = 0.5 * scale;
        let hi = (((1u64 << 52) - 1) as f64 + 0.5) * scale;
        assert!(lo > 0.0 && hi < 1.0);
    }
}
