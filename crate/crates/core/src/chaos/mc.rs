use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::engine::{norm_power, Layout, Walker};
use super::{check_p, MomentMode, MomentResult};
use crate::error::{Error, Result};
use crate::tensor::TensorRef;

/// Samples drawn from one ChaCha stream.
const BLOCK: u64 = 1024;

pub const MIN_SAMPLES: u64 = 100;

/// Running mean and centered second moment (Welford), mergeable in a fixed
/// order.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = if delta == 0.0 {
            self.mean
        } else {
            self.mean + delta * other.n as f64 / n as f64
        };
        Self {
            n,
            mean,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64,
        }
    }
}

/// Monte Carlo estimate of `(E‖S‖^p)^{1/p}`.
///
/// Block `b` of 1024 samples draws from ChaCha8 seeded with `seed` on
/// stream `b`, so the estimate depends only on `(seed, samples)`.
pub fn moment_p_mc<'a>(
    t: impl Into<TensorRef<'a>>,
    p: f64,
    samples: u64,
    seed: u64,
) -> Result<MomentResult> {
    check_p(p)?;
    if samples < MIN_SAMPLES {
        return Err(Error::Parameter(format!(
            "Monte Carlo needs at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let lay = match t.into() {
        TensorRef::Scalar(a) => Layout::new(a.dims(), 1, a.entries()),
        TensorRef::Vector(y) => Layout::new(y.dims(), y.ambient_dim(), y.components()),
    };
    let stats = if lay.is_zero() {
        Welford {
            n: samples,
            ..Default::default()
        }
    } else {
        let blocks = samples.div_ceil(BLOCK);
        let parts: Vec<Welford> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b);
                let count = BLOCK.min(samples - b * BLOCK);
                let mut w = Walker::new(&lay, false);
                let mut stats = Welford::default();
                let mut word = 0u64;
                for _ in 0..count {
                    w.reset_with(|bit| {
                        if bit % 64 == 0 {
                            word = rng.next_u64();
                        }
                        (word >> (bit % 64)) & 1 == 1
                    });
                    stats.push(norm_power(w.value(), p));
                }
                stats
            })
            .collect();
        parts.into_iter().fold(Welford::default(), Welford::merge)
    };
    let variance = if stats.n > 1 {
        (stats.m2 / (stats.n - 1) as f64).max(0.0)
    } else {
        0.0
    };
    Ok(MomentResult {
        p,
        value: stats.mean.max(0.0).powf(1.0 / p),
        exact_power: None,
        mode: MomentMode::MonteCarlo,
        pattern_bits: None,
        patterns_walked: None,
        sample_count: Some(samples),
        stderr: Some((variance / stats.n as f64).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::moment_p_exact;
    use crate::tensor::{CoefficientTensor, VectorTensor};

    fn r2() -> CoefficientTensor {
        CoefficientTensor::from_integers(vec![2, 2], vec![1, 1, 1, -1]).unwrap()
    }

    #[test]
    fn r2_estimate_brackets_exact_value() {
        // |S| = 2 on every pattern of R2, so every estimate is exact.
        let m = moment_p_mc(&r2(), 1.0, 5000, 11).unwrap();
        assert!((m.value - 2.0).abs() <= 4.0 * m.stderr.unwrap() + 1e-12);
    }

    #[test]
    fn deterministic_given_seed_and_samples() {
        let a =
            CoefficientTensor::new(vec![3, 3], (0..9).map(|i| i as f64 - 3.7).collect()).unwrap();
        let x = moment_p_mc(&a, 1.0, 3000, 5).unwrap();
        let y = moment_p_mc(&a, 1.0, 3000, 5).unwrap();
        assert_eq!(x, y);
        let z = moment_p_mc(&a, 1.0, 3000, 6).unwrap();
        assert_ne!(x.value, z.value);
    }

    #[test]
    fn single_entry_has_zero_stderr() {
        let a = CoefficientTensor::new(vec![1, 1], vec![-2.5]).unwrap();
        let m = moment_p_mc(&a, 1.0, 500, 3).unwrap();
        assert_eq!(m.value, 2.5);
        assert_eq!(m.stderr, Some(0.0));
    }

    #[test]
    fn rejects_too_few_samples() {
        assert!(moment_p_mc(&r2(), 1.0, 99, 0).is_err());
        assert!(moment_p_mc(&r2(), 0.0, 1000, 0).is_err());
    }

    #[test]
    fn estimate_tracks_exact_over_seeds() {
        let a = CoefficientTensor::from_integers(vec![3, 2], vec![2, -1, 0, 3, 1, 1]).unwrap();
        let exact = moment_p_exact(&a, 1.0).unwrap().value;
        let inside = (0..100)
            .filter(|&seed| {
                let m = moment_p_mc(&a, 1.0, 2000, seed).unwrap();
                (m.value - exact).abs() <= 4.0 * m.stderr.unwrap()
            })
            .count();
        assert!(inside >= 99, "{inside}/100 seeds within 4 stderr");
    }

    #[test]
    fn vector_data_is_supported() {
        let y = VectorTensor::from_vectors(vec![2], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = moment_p_mc(&y, 1.0, 1000, 1).unwrap();
        assert!((m.value - 2f64.sqrt()).abs() < 1e-12);
    }
}
