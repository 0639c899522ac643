//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

pub struct TestRng(SplitMix64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn signal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.range(-1.0, 1.0)).collect()
    }
}

/// `(1/n) sum_j g(j) exp(+i 2 pi j k / n)` by direct summation with the
/// phase index reduced modulo `n` in integer arithmetic.
pub fn dft_average(g: &[f64], k: usize) -> (f64, f64) {
    let n = g.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (j, v) in g.iter().enumerate() {
        let theta = 2.0 * PI * ((j * k) % n) as f64 / n as f64;
        re += v * theta.cos();
        im += v * theta.sin();
    }
    (re / n as f64, im / n as f64)
}

/// Residual sum of squares after keeping only DFT bins `k` and `n - k` for
/// each `k` in `kept`, computed by explicit forward and inverse transforms.
pub fn truncated_dft_rss(g: &[f64], kept: &[usize]) -> f64 {
    let n = g.len();
    let mut bins: Vec<usize> = kept.iter().flat_map(|&k| [k % n, (n - k) % n]).collect();
    bins.sort_unstable();
    bins.dedup();
    let coeffs: Vec<(usize, f64, f64)> = bins
        .iter()
        .map(|&k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in g.iter().enumerate() {
                let theta = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                re += v * theta.cos();
                im += v * theta.sin();
            }
            (k, re, im)
        })
        .collect();
    g.iter()
        .enumerate()
        .map(|(j, v)| {
            let h: f64 = coeffs
                .iter()
                .map(|&(k, re, im)| {
                    let theta = 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                    re * theta.cos() - im * theta.sin()
                })
                .sum::<f64>()
                / n as f64;
            (v - h).powi(2)
        })
        .sum()
}

/// Coincidence from per-frequency `(re, im)` pairs, written out longhand.
pub fn coincidence_oracle(x: &[(f64, f64)], y: &[(f64, f64)]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += a.0 * b.0 + a.1 * b.1;
        den += (a.0 * a.0 + a.1 * a.1).sqrt() * (b.0 * b.0 + b.1 * b.1).sqrt();
    }
    num / den
}

/// `(1/n) sum_j g(j) exp(+i 2 pi j / period)` with `j` in samples.
pub fn average_at_period(g: &[f64], period_samples: f64) -> (f64, f64) {
    let n = g.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (j, v) in g.iter().enumerate() {
        let theta = 2.0 * PI * j as f64 / period_samples;
        re += v * theta.cos();
        im += v * theta.sin();
    }
    (re / n, im / n)
}
