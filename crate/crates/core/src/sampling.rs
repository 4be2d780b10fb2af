//! Seeded, stream-separated random number generation.
//!
//! One master seed drives five named ChaCha streams: sphere directions,
//! oracle noise, block indices, the output index, and a reserved evaluation
//! stream so that measurement never perturbs the optimization trajectory.
//! Streams are realized as distinct ChaCha stream ids over the same key, so
//! draws on one stream cannot perturb another.
//!
//! Batch draws additionally use counter-derived states: sample `j` of
//! iteration `k` comes from a generator addressed by `(kind, k, j)`. Results
//! are therefore independent of evaluation order or worker scheduling, and
//! any sample can be re-derived after the fact from the master seed alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("block count must be at least 1")]
    ZeroBlocks,
    #[error("output range {{ceil(lambda*K)..K}} is empty (K={horizon}, lambda={lambda})")]
    EmptyOutputRange { horizon: usize, lambda: f64 },
}

const KIND_DIRECTION: u64 = 0;
const KIND_NOISE: u64 = 1;
const KIND_BLOCK: u64 = 2;
const KIND_OUTPUT: u64 = 3;
const KIND_EVALUATION: u64 = 4;

/// Counter-derived stream ids carry a flag bit so they can never collide
/// with the five stateful streams.
const COUNTER_FLAG: u64 = 1 << 63;
const MAX_COUNTER: u64 = (1 << 30) - 1;

fn counter_stream_id(kind: u64, k: u64, j: u64) -> u64 {
    assert!(k <= MAX_COUNTER && j <= MAX_COUNTER, "counter index out of range");
    COUNTER_FLAG | (kind << 60) | (k << 30) | j
}

/// The named random streams of a run.
pub struct RngStreams {
    master_seed: u64,
    template: ChaCha12Rng,
    direction: ChaCha12Rng,
    noise: ChaCha12Rng,
    block: ChaCha12Rng,
    output: ChaCha12Rng,
    evaluation: ChaCha12Rng,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        let template = ChaCha12Rng::seed_from_u64(master_seed);
        let named = |kind: u64| {
            let mut rng = template.clone();
            rng.set_stream(kind);
            rng
        };
        Self {
            master_seed,
            direction: named(KIND_DIRECTION),
            noise: named(KIND_NOISE),
            block: named(KIND_BLOCK),
            output: named(KIND_OUTPUT),
            evaluation: named(KIND_EVALUATION),
            template,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn direction(&mut self) -> &mut ChaCha12Rng {
        &mut self.direction
    }

    pub fn noise(&mut self) -> &mut ChaCha12Rng {
        &mut self.noise
    }

    pub fn block(&mut self) -> &mut ChaCha12Rng {
        &mut self.block
    }

    pub fn output(&mut self) -> &mut ChaCha12Rng {
        &mut self.output
    }

    pub fn evaluation(&mut self) -> &mut ChaCha12Rng {
        &mut self.evaluation
    }

    fn derived(&self, kind: u64, k: u64, j: u64) -> ChaCha12Rng {
        let mut rng = self.template.clone();
        rng.set_stream(counter_stream_id(kind, k, j));
        rng
    }

    /// Direction generator for sample `j` of iteration `k`.
    pub fn direction_rng_at(&self, k: usize, j: usize) -> ChaCha12Rng {
        self.derived(KIND_DIRECTION, k as u64, j as u64)
    }

    /// Noise-seed generator for sample `j` of iteration `k`.
    pub fn noise_rng_at(&self, k: usize, j: usize) -> ChaCha12Rng {
        self.derived(KIND_NOISE, k as u64, j as u64)
    }

    /// Evaluation generator tagged by a measurement site (e.g. an iteration
    /// index); independent of all optimization streams.
    pub fn evaluation_rng_at(&self, tag: usize) -> ChaCha12Rng {
        self.derived(KIND_EVALUATION, tag as u64, 0)
    }
}

/// Uniform point on the sphere of the given radius, by normalizing a
/// standard Gaussian vector.
pub fn sample_sphere(
    rng: &mut ChaCha12Rng,
    dim: usize,
    radius: f64,
) -> Result<Vec<f64>, SamplingError> {
    if dim == 0 {
        return Err(SamplingError::ZeroDimension);
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(SamplingError::BadRadius(radius));
    }
    let mut v = vec![0.0; dim];
    loop {
        for g in v.iter_mut() {
            *g = rng.sample(StandardNormal);
        }
        let norm = v.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            let scale = radius / norm;
            for g in v.iter_mut() {
                *g *= scale;
            }
            return Ok(v);
        }
    }
}

/// Uniform point in the ball of the given radius: a sphere direction scaled
/// by `radius * U^(1/dim)`.
pub fn sample_ball(
    rng: &mut ChaCha12Rng,
    dim: usize,
    radius: f64,
) -> Result<Vec<f64>, SamplingError> {
    let mut v = sample_sphere(rng, dim, 1.0)?;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(SamplingError::BadRadius(radius));
    }
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    for g in v.iter_mut() {
        *g *= r;
    }
    Ok(v)
}

/// Uniform block index in `0..blocks`.
pub fn sample_block(rng: &mut ChaCha12Rng, blocks: usize) -> Result<usize, SamplingError> {
    if blocks == 0 {
        return Err(SamplingError::ZeroBlocks);
    }
    Ok(rng.random_range(0..blocks))
}

/// First index of the output window, `ceil(lambda * horizon)`.
pub fn output_window_start(horizon: usize, lambda: f64) -> usize {
    (lambda * horizon as f64).ceil() as usize
}

/// Uniform output index in the inclusive range
/// `{ceil(lambda*horizon), ..., horizon}`.
pub fn sample_output_index(
    rng: &mut ChaCha12Rng,
    horizon: usize,
    lambda: f64,
) -> Result<usize, SamplingError> {
    if horizon == 0 || !lambda.is_finite() || lambda <= 0.0 || lambda >= 1.0 {
        return Err(SamplingError::EmptyOutputRange { horizon, lambda });
    }
    let lo = output_window_start(horizon, lambda);
    if lo > horizon {
        return Err(SamplingError::EmptyOutputRange { horizon, lambda });
    }
    Ok(rng.random_range(lo..=horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::norm2;
    use rand::RngCore;

    #[test]
    fn sphere_sample_has_exact_radius() {
        let mut streams = RngStreams::new(7);
        for _ in 0..100 {
            let v = sample_sphere(streams.direction(), 5, 0.1).unwrap();
            assert!((norm2(&v) - 0.1).abs() <= 1e-12 * 0.1);
        }
    }

    #[test]
    fn sphere_sample_rejects_bad_arguments() {
        let mut streams = RngStreams::new(7);
        assert_eq!(sample_sphere(streams.direction(), 0, 1.0), Err(SamplingError::ZeroDimension));
        assert!(matches!(
            sample_sphere(streams.direction(), 3, 0.0),
            Err(SamplingError::BadRadius(_))
        ));
        assert!(matches!(
            sample_sphere(streams.direction(), 3, -1.0),
            Err(SamplingError::BadRadius(_))
        ));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn sphere_moments_match_uniform_law() {
        // Per-coordinate mean 0 and covariance I/n for the uniform sphere;
        // 1e5 draws in n=3, thresholds at roughly six standard errors.
        let mut streams = RngStreams::new(123);
        let n = 3;
        let draws = 100_000;
        let mut mean = vec![0.0; n];
        let mut cov = vec![vec![0.0; n]; n];
        for _ in 0..draws {
            let v = sample_sphere(streams.direction(), n, 1.0).unwrap();
            for i in 0..n {
                mean[i] += v[i];
                for j in 0..n {
                    cov[i][j] += v[i] * v[j];
                }
            }
        }
        for i in 0..n {
            mean[i] /= draws as f64;
            assert!(mean[i].abs() < 0.02, "mean[{i}]={}", mean[i]);
            for j in 0..n {
                cov[i][j] /= draws as f64;
                let expect = if i == j { 1.0 / n as f64 } else { 0.0 };
                assert!((cov[i][j] - expect).abs() < 0.02, "cov[{i}][{j}]={}", cov[i][j]);
            }
        }
    }

    #[test]
    fn sphere_is_symmetric_under_negation() {
        // Mean of v and mean of -v draws agree statistically: both are near
        // zero well within the CLT envelope.
        let mut streams = RngStreams::new(5);
        let draws = 50_000;
        let mut pos = [0.0; 3];
        let mut neg = [0.0; 3];
        for _ in 0..draws {
            let v = sample_sphere(streams.direction(), 3, 1.0).unwrap();
            for i in 0..3 {
                pos[i] += v[i];
                neg[i] -= v[i];
            }
        }
        let se = (1.0 / 3.0f64 / draws as f64).sqrt();
        for i in 0..3 {
            assert!((pos[i] / draws as f64 - neg[i] / draws as f64).abs() < 8.0 * se);
        }
    }

    #[test]
    fn ball_sample_stays_inside_and_fills_radially() {
        let mut streams = RngStreams::new(9);
        let draws = 100_000;
        let mut sq = 0.0;
        for _ in 0..draws {
            let u = sample_ball(streams.evaluation(), 3, 1.0).unwrap();
            let r = norm2(&u);
            assert!(r <= 1.0 + 1e-12);
            sq += r * r;
        }
        // E r^2 = n/(n+2) = 0.6 in n=3.
        assert!((sq / draws as f64 - 0.6).abs() < 0.01);
    }

    #[test]
    fn block_sampling_is_uniform() {
        let mut streams = RngStreams::new(77);
        assert_eq!(sample_block(streams.block(), 1).unwrap(), 0);
        assert_eq!(sample_block(streams.block(), 0), Err(SamplingError::ZeroBlocks));
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[sample_block(streams.block(), 4).unwrap()] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let f = c as f64 / draws as f64;
            assert!((0.24..=0.26).contains(&f), "block {i} frequency {f}");
        }
    }

    #[test]
    fn output_index_range_and_uniformity() {
        let mut streams = RngStreams::new(3);
        for _ in 0..200 {
            let r = sample_output_index(streams.output(), 10, 0.5).unwrap();
            assert!((5..=10).contains(&r));
        }
        assert_eq!(sample_output_index(streams.output(), 1, 0.5).unwrap(), 1);
        assert!(sample_output_index(streams.output(), 0, 0.5).is_err());
        assert!(sample_output_index(streams.output(), 10, 1.0).is_err());

        let draws = 100_000;
        let mut counts = vec![0usize; 101];
        for _ in 0..draws {
            counts[sample_output_index(streams.output(), 100, 0.5).unwrap()] += 1;
        }
        let expect = 1.0 / 51.0;
        for (k, &c) in counts.iter().enumerate().skip(50) {
            let f = c as f64 / draws as f64;
            assert!((f - expect).abs() < 0.004, "R={k} frequency {f}");
        }
        assert!(counts[..50].iter().all(|&c| c == 0));
    }

    #[test]
    fn identical_seed_reproduces_every_stream() {
        let mut a = RngStreams::new(42);
        let mut b = RngStreams::new(42);
        for _ in 0..32 {
            assert_eq!(a.direction().next_u64(), b.direction().next_u64());
            assert_eq!(a.noise().next_u64(), b.noise().next_u64());
            assert_eq!(a.block().next_u64(), b.block().next_u64());
            assert_eq!(a.output().next_u64(), b.output().next_u64());
            assert_eq!(a.evaluation().next_u64(), b.evaluation().next_u64());
        }
        let va = sample_sphere(&mut a.direction_rng_at(3, 9), 4, 1.0).unwrap();
        let vb = sample_sphere(&mut b.direction_rng_at(3, 9), 4, 1.0).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn streams_do_not_perturb_each_other() {
        let mut plain = RngStreams::new(1234);
        let clean: Vec<u64> = (0..64).map(|_| plain.direction().next_u64()).collect();

        let mut interleaved = RngStreams::new(1234);
        let mut got = Vec::new();
        for i in 0..64 {
            // Draw heavily on the other streams between direction draws.
            for _ in 0..(i % 5) {
                interleaved.block().next_u64();
                interleaved.noise().next_u64();
                interleaved.output().next_u64();
                interleaved.evaluation().next_u64();
            }
            got.push(interleaved.direction().next_u64());
        }
        assert_eq!(clean, got);
    }

    #[test]
    fn counter_derived_draws_are_order_independent() {
        let streams = RngStreams::new(50);
        let forward: Vec<u64> =
            (0..10).map(|j| streams.noise_rng_at(2, j).next_u64()).collect();
        let mut backward: Vec<u64> =
            (0..10).rev().map(|j| streams.noise_rng_at(2, j).next_u64()).collect();
        backward.reverse();
        assert_eq!(forward, backward);
        // Distinct addresses give distinct values.
        assert_ne!(
            streams.noise_rng_at(2, 0).next_u64(),
            streams.noise_rng_at(3, 0).next_u64()
        );
        assert_ne!(
            streams.noise_rng_at(2, 0).next_u64(),
            streams.direction_rng_at(2, 0).next_u64()
        );
    }
}
