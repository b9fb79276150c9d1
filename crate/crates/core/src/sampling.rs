//! Training inputs in `[0, 1]`: equidistant, or growing inward from both ends.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("growing sampling needs an even sample count, got {0}")]
    OddSampleCount(usize),
    #[error("iteration {k} outside 1..={n_iters}")]
    BadIteration { k: usize, n_iters: usize },
    #[error("n_iters must be at least 1")]
    NoIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Uniform,
    /// At iteration `k`, half the samples cover `[0, f/2]` and half cover
    /// `[1 - f/2, 1]`, where `f = k / n_iters`.
    Growing {
        randomized: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub n_samples: usize,
    pub n_iters: usize,
    /// Seed for randomized growing draws.
    pub seed: u64,
}

impl SamplerConfig {
    pub fn uniform(n_samples: usize) -> Self {
        SamplerConfig {
            kind: SamplerKind::Uniform,
            n_samples,
            n_iters: 1,
            seed: 0,
        }
    }

    pub fn growing(n_samples: usize, n_iters: usize) -> Self {
        SamplerConfig {
            kind: SamplerKind::Growing { randomized: false },
            n_samples,
            n_iters,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.n_samples < 2 {
            return Err(SamplingError::TooFewSamples(self.n_samples));
        }
        if self.n_iters < 1 {
            return Err(SamplingError::NoIterations);
        }
        if matches!(self.kind, SamplerKind::Growing { .. }) && !self.n_samples.is_multiple_of(2) {
            return Err(SamplingError::OddSampleCount(self.n_samples));
        }
        Ok(())
    }

    pub fn is_growing(&self) -> bool {
        matches!(self.kind, SamplerKind::Growing { .. })
    }

    /// Fraction of `[0, 1]` covered at iteration `k`.
    pub fn coverage(&self, k: usize) -> f64 {
        match self.kind {
            SamplerKind::Uniform => 1.0,
            SamplerKind::Growing { .. } => k as f64 / self.n_iters as f64,
        }
    }

    /// Sorted sample locations for iteration `k` (1-based).
    pub fn sample(&self, k: usize) -> Result<Vec<f64>, SamplingError> {
        self.validate()?;
        match self.kind {
            SamplerKind::Uniform => Ok(equidistant(self.n_samples)),
            SamplerKind::Growing { randomized } => {
                if k < 1 || k > self.n_iters {
                    return Err(SamplingError::BadIteration {
                        k,
                        n_iters: self.n_iters,
                    });
                }
                let half = self.n_samples / 2;
                let reach = 0.5 * self.coverage(k);
                let mut ts: Vec<f64> = if randomized {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        self.seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                    );
                    let mut lo = vec![0.0];
                    let mut hi = vec![1.0];
                    for _ in 1..half {
                        lo.push(rng.gen_range(0.0..=reach));
                        hi.push(1.0 - rng.gen_range(0.0..=reach));
                    }
                    lo.into_iter().chain(hi).collect()
                } else {
                    let step = |i: usize| {
                        if half == 1 {
                            0.0
                        } else {
                            reach * (i as f64 / (half - 1) as f64)
                        }
                    };
                    let lo = (0..half).map(step);
                    let hi = (0..half).map(|i| 1.0 - step(half - 1 - i));
                    lo.chain(hi).collect()
                };
                ts.sort_by(f64::total_cmp);
                Ok(ts)
            }
        }
    }
}

/// `n` points `i / (n - 1)`, both ends included.
pub fn equidistant(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}
