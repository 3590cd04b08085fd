//! Seeded random streams and primitive samplers.
//!
//! Every primitive sequence (interarrival times of class k, service times of
//! class k, routing decisions of class k) gets its own ChaCha stream derived
//! from the run seed, so the sequences are mutually independent and a change
//! in how often one of them is consumed never perturbs the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Gamma, Uniform};

use crate::network::Distribution;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Arrival,
    Service,
    Routing,
    Aux,
}

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replication `index` of an experiment seeded with `seed`.
pub fn replication_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(1)))
}

/// Independent substream for one primitive sequence.
pub fn stream(seed: u64, kind: StreamKind, class: usize) -> Stream {
    let kind_tag = match kind {
        StreamKind::Arrival => 0u64,
        StreamKind::Service => 1,
        StreamKind::Routing => 2,
        StreamKind::Aux => 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 2) | kind_tag);
    rng
}

/// A distribution prepared for repeated sampling.
#[derive(Debug, Clone)]
pub enum Sampler {
    Exponential(Exp<f64>),
    Gamma(Gamma<f64>),
    Deterministic(f64),
    Uniform(Uniform<f64>),
}

impl Sampler {
    pub fn new(dist: &Distribution) -> Self {
        match *dist {
            Distribution::Exponential { rate } => Sampler::Exponential(Exp::new(rate).expect("validated rate")),
            Distribution::Gamma { shape, scale } => Sampler::Gamma(Gamma::new(shape, scale).expect("validated gamma")),
            Distribution::Deterministic { value } => Sampler::Deterministic(value),
            Distribution::Uniform { low, high } => Sampler::Uniform(Uniform::new(low, high).expect("validated bounds")),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Exponential(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::Deterministic(v) => *v,
            Sampler::Uniform(d) => d.sample(rng),
        }
    }
}

/// One draw from `dist`.
pub fn draw_primitive<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> f64 {
    Sampler::new(dist).sample(rng)
}

/// Routing decision after a service completion: `Some(l)` with probability
/// `row[l]`, `None` (leave the network) with the remaining mass.
pub fn draw_route<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(l);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_is_a_point_mass() {
        let mut rng = stream(1, StreamKind::Aux, 0);
        let d = Distribution::Deterministic { value: 2.0 };
        for _ in 0..100 {
            assert_eq!(draw_primitive(&d, &mut rng), 2.0);
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let mut rng = stream(42, StreamKind::Service, 0);
        let s = Sampler::new(&Distribution::Exponential { rate: 1.0 });
        let n = 1_000_000;
        let mean = (0..n).map(|_| s.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn certain_route() {
        let mut rng = stream(3, StreamKind::Routing, 0);
        for _ in 0..1000 {
            assert_eq!(draw_route(&[0.0, 1.0], &mut rng), Some(1));
            assert_eq!(draw_route(&[0.0, 0.0], &mut rng), None);
        }
    }

    #[test]
    fn route_frequencies() {
        let mut rng = stream(9, StreamKind::Routing, 2);
        let n = 200_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            match draw_route(&[0.3, 0.5], &mut rng) {
                Some(l) => counts[l] += 1,
                None => counts[2] += 1,
            }
        }
        for (c, p) in counts.iter().zip([0.3, 0.5, 0.2]) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.005);
        }
    }

    #[test]
    fn streams_differ_by_kind_and_class() {
        let mut a = stream(5, StreamKind::Arrival, 0);
        let mut b = stream(5, StreamKind::Service, 0);
        let mut c = stream(5, StreamKind::Arrival, 1);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert!(x != y && x != z && y != z);
        let mut again = stream(5, StreamKind::Arrival, 0);
        assert_eq!(again.random::<u64>(), x);
    }
}
