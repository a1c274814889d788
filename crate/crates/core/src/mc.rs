//! Monte Carlo accumulation with deterministic parallel reduction.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// z-value of a two-sided 95% interval.
pub const Z95: f64 = 1.96;

/// Running mean and second central moment of a scalar sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub n: u64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
    /// Label of the random stream that produced the samples.
    pub seed: String,
}

impl McEstimate {
    pub fn empty(seed: impl Into<String>) -> Self {
        McEstimate {
            mean: 0.0,
            n: 0,
            m2: 0.0,
            seed: seed.into(),
        }
    }

    /// A deterministic value carried as an estimate with zero spread.
    pub fn exact(value: f64) -> Self {
        McEstimate {
            mean: value,
            n: 1,
            m2: 0.0,
            seed: "exact".into(),
        }
    }

    pub fn from_samples(seed: impl Into<String>, xs: impl IntoIterator<Item = f64>) -> Self {
        let mut e = Self::empty(seed);
        for x in xs {
            e.push(x);
        }
        e
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination of two disjoint samples.
    pub fn merge(&mut self, other: &McEstimate) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            let seed = std::mem::take(&mut self.seed);
            *self = other.clone();
            if !seed.is_empty() {
                self.seed = seed;
            }
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let nf = n as f64;
        self.mean += d * other.n as f64 / nf;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / nf;
        self.n = n;
    }

    /// Unbiased sample variance (zero for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn half_width(&self) -> f64 {
        Z95 * self.stderr()
    }
}

/// Sample-count and wall-clock limits; whichever is hit first ends the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McBudget {
    pub n_samples: u64,
    pub max_wall_seconds: f64,
}

impl McBudget {
    pub fn samples(n_samples: u64) -> Self {
        McBudget {
            n_samples,
            max_wall_seconds: f64::INFINITY,
        }
    }
}

/// Which budget limit ended a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Samples,
    WallClock,
}

#[derive(Debug, Clone)]
pub struct McRun {
    pub estimates: Vec<McEstimate>,
    pub stop: StopReason,
}

const CHUNK: u64 = 1024;
const WAVE: u64 = 64;

/// Runs `sample(i, out)` for `i = 0..budget.n_samples`, each call filling one
/// value per output slot.
///
/// Samples are grouped into fixed-size chunks reduced in index order, so the
/// result does not depend on the number of worker threads. When the wall
/// clock limit is reached the run stops at a wave boundary and reports it.
pub fn run_mc<F>(budget: &McBudget, seed: &str, slots: usize, sample: F) -> McRun
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let start = Instant::now();
    let n_chunks = budget.n_samples.div_ceil(CHUNK);
    let mut totals: Vec<McEstimate> = (0..slots).map(|_| McEstimate::empty(seed)).collect();
    let mut stop = StopReason::Samples;
    let mut wave_start = 0;
    while wave_start < n_chunks {
        if wave_start > 0 && start.elapsed().as_secs_f64() > budget.max_wall_seconds {
            stop = StopReason::WallClock;
            break;
        }
        let wave_end = (wave_start + WAVE).min(n_chunks);
        let partials: Vec<Vec<McEstimate>> = (wave_start..wave_end)
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(budget.n_samples);
                let mut acc: Vec<McEstimate> =
                    (0..slots).map(|_| McEstimate::empty(seed)).collect();
                let mut buf = vec![0.0; slots];
                for i in lo..hi {
                    sample(i, &mut buf);
                    for (a, &x) in acc.iter_mut().zip(&buf) {
                        a.push(x);
                    }
                }
                acc
            })
            .collect();
        for part in &partials {
            for (t, p) in totals.iter_mut().zip(part) {
                t.merge(p);
            }
        }
        wave_start = wave_end;
    }
    McRun {
        estimates: totals,
        stop,
    }
}

/// Scalar convenience wrapper around [`run_mc`].
pub fn run_mc_scalar<F>(budget: &McBudget, seed: &str, sample: F) -> McEstimate
where
    F: Fn(u64) -> f64 + Sync,
{
    run_mc(budget, seed, 1, |i, out| out[0] = sample(i))
        .estimates
        .pop()
        .expect("one slot")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let e = McEstimate::from_samples("t", xs);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((e.mean - mean).abs() < 1e-14);
        assert!((e.variance() - var).abs() < 1e-12);
        assert!((e.half_width() - 1.96 * (var / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn merge_equals_concatenation() {
        let a = McEstimate::from_samples("t", [1.0, 2.0, 3.0]);
        let b = McEstimate::from_samples("t", [10.0, -4.0]);
        let mut ab = a.clone();
        ab.merge(&b);
        let all = McEstimate::from_samples("t", [1.0, 2.0, 3.0, 10.0, -4.0]);
        assert_eq!(ab.n, 5);
        assert!((ab.mean - all.mean).abs() < 1e-13);
        assert!((ab.m2 - all.m2).abs() < 1e-11);
    }

    #[test]
    fn run_is_thread_count_independent() {
        let budget = McBudget::samples(5000);
        let f = |i: u64| ((i * 2654435761) % 1000) as f64 / 1000.0;
        let a = run_mc_scalar(&budget, "s", f);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| run_mc_scalar(&budget, "s", f));
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.m2.to_bits(), b.m2.to_bits());
    }
}
