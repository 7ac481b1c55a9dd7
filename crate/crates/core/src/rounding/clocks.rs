//! Exponential clocks drawn from a counter-based generator.
//!
//! The uniform for entity `index` of a given kind is word `2 * index` of the
//! ChaCha8 stream `kind` keyed by the seed, so any clock can be reproduced in
//! isolation and distinct seeds give independent trials.

use std::cmp::Ordering;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RoundingError;
use crate::preprocess::PreprocessedSolution;

const FACILITY_STREAM: u64 = 1;
const CLIENT_STREAM: u64 = 2;

/// Uniform in the open interval (0, 1) at `(seed, stream, index)`.
pub fn counter_uniform(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    to_open_unit(rng.next_u64())
}

fn to_open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Inverse CDF of `Exp(rate)`.
#[inline]
pub fn exponential_from_uniform(u: f64, rate: f64) -> f64 {
    -u.ln() / rate
}

fn draw_stream(seed: u64, stream: u64, count: usize) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(0);
    (0..count).map(move |_| to_open_unit(rng.next_u64()))
}

/// One clock per facility copy (`Q`, rate `o`) and per client (`R`, rate 1),
/// shared by all time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clocks {
    pub facility: Vec<f64>,
    pub client: Vec<f64>,
    pub seed: u64,
}

impl Clocks {
    pub fn sample(rates: &[f64], num_clients: usize, seed: u64) -> Result<Self, RoundingError> {
        if let Some((copy, &rate)) = rates.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
            return Err(RoundingError::NonPositiveRate { copy, rate });
        }
        let facility = draw_stream(seed, FACILITY_STREAM, rates.len())
            .zip(rates)
            .map(|(u, &rate)| exponential_from_uniform(u, rate))
            .collect();
        let client = draw_stream(seed, CLIENT_STREAM, num_clients)
            .map(|u| exponential_from_uniform(u, 1.0))
            .collect();
        Ok(Self {
            facility,
            client,
            seed,
        })
    }

    /// Total order on facility clocks; exact ties fall back to the index.
    #[inline]
    pub fn cmp_facility(&self, a: usize, b: usize) -> Ordering {
        self.facility[a]
            .total_cmp(&self.facility[b])
            .then(a.cmp(&b))
    }

    #[inline]
    pub fn cmp_client(&self, a: usize, b: usize) -> Ordering {
        self.client[a].total_cmp(&self.client[b]).then(a.cmp(&b))
    }
}

pub fn sample_clocks(prep: &PreprocessedSolution, seed: u64) -> Result<Clocks, RoundingError> {
    Clocks::sample(&prep.o, prep.num_clients, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf_values() {
        let u = (-1.0f64).exp();
        assert!((exponential_from_uniform(u, 1.0) - 1.0).abs() < 1e-15);
        assert!((exponential_from_uniform(u, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stream_matches_counter_addressing() {
        let seq: Vec<f64> = draw_stream(99, CLIENT_STREAM, 5).collect();
        for (k, v) in seq.iter().enumerate() {
            assert_eq!(*v, counter_uniform(99, CLIENT_STREAM, k as u64));
        }
    }

    #[test]
    fn uniforms_are_in_open_interval() {
        assert!(to_open_unit(0) > 0.0);
        assert!(to_open_unit(u64::MAX) < 1.0);
    }

    #[test]
    fn same_seed_same_clocks() {
        let a = Clocks::sample(&[0.5, 0.25, 1.0], 4, 17).unwrap();
        let b = Clocks::sample(&[0.5, 0.25, 1.0], 4, 17).unwrap();
        assert_eq!(a, b);
        let c = Clocks::sample(&[0.5, 0.25, 1.0], 4, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_nonpositive_rate() {
        assert!(matches!(
            Clocks::sample(&[0.5, 0.0], 1, 1),
            Err(RoundingError::NonPositiveRate { copy: 1, .. })
        ));
    }

    #[test]
    fn competing_clock_probability() {
        // Pr[Q1 < Q2] for rates (1, 3) is 1/4.
        let n = 100_000u64;
        let wins = (0..n)
            .filter(|&s| {
                let c = Clocks::sample(&[1.0, 3.0], 0, s).unwrap();
                c.facility[0] < c.facility[1]
            })
            .count() as f64;
        let p = 0.25;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (wins / n as f64 - p).abs() <= 3.0 * sigma,
            "{}",
            wins / n as f64
        );
    }

    #[test]
    fn rate_scaling_of_mean() {
        let n = 50_000u64;
        let mean: f64 = (0..n)
            .map(|s| Clocks::sample(&[4.0], 0, s).unwrap().facility[0])
            .sum::<f64>()
            / n as f64;
        // Exp(4) has mean 0.25 and standard deviation 0.25.
        assert!((mean - 0.25).abs() <= 4.0 * 0.25 / (n as f64).sqrt());
    }
}
