//! Monte Carlo check of the similar-versus-random attention gap.
//!
//! With `q, k` having independent components of standard deviation `σ_j` and
//! `k* = q + ε` for zero-mean `ε` independent of `q`,
//!
//! ```text
//! E[qᵀ R_m k*] − E[qᵀ R_m k] = Σ_i (σ_{2i}² + σ_{2i+1}²) cos(m θ_i)
//! ```
//!
//! which is `2σ² B_m` when all `σ_j` are equal. [`estimate_gap`] samples the
//! paired statistic `qᵀR_m(q+ε) − qᵀR_m k` and compares its mean against that
//! closed form.
//!
//! Sampling is split into fixed blocks of [`BLOCK_SIZE`] trials. Block `b`
//! draws from the ChaCha stream `b` of the root seed, and block summaries are
//! merged in block order, so reports are bit-identical for any thread count.

use rand::distr::{Distribution as _, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::decay::{b_value, weighted_b_value};
use crate::error::{Error, Result};
use crate::rope::Rotation;
use crate::schedule::ThetaSchedule;

/// Trials per independently seeded block.
pub const BLOCK_SIZE: u64 = 4096;

/// Shape of the per-component noise. Both are scaled to unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentDistribution {
    #[default]
    Gaussian,
    Uniform,
}

impl std::str::FromStr for ComponentDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::InvalidSpec {
                spec: s.into(),
                reason: "expected gaussian or uniform".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_samples: u64,
    pub sigma: f64,
    pub mu: f64,
    pub eps_scale: f64,
    pub seed: u64,
    pub distribution: ComponentDistribution,
}

impl McConfig {
    /// Gaussian components with `eps_scale = 0.1 σ`.
    pub fn new(n_samples: u64, sigma: f64, seed: u64) -> Self {
        Self {
            n_samples,
            sigma,
            mu: 0.0,
            eps_scale: 0.1 * sigma,
            seed,
            distribution: ComponentDistribution::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::InvalidParameter {
                name: "n_samples",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                reason: "must be positive and finite",
            });
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: self.mu,
                reason: "must be finite",
            });
        }
        if !(self.eps_scale.is_finite() && self.eps_scale >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "eps_scale",
                value: self.eps_scale,
                reason: "must be non-negative and finite",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McReport {
    pub gap_hat: f64,
    pub stderr: f64,
    pub theory: f64,
    pub z: f64,
}

/// Running mean and sum of squared deviations, merged in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Unit-variance, zero-mean draws of the configured shape.
struct Sampler {
    distribution: ComponentDistribution,
    uniform: Uniform<f64>,
}

impl Sampler {
    fn new(distribution: ComponentDistribution) -> Self {
        let half_width = 3f64.sqrt();
        Self {
            distribution,
            uniform: Uniform::new_inclusive(-half_width, half_width).expect("valid bounds"),
        }
    }

    #[inline]
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.distribution {
            ComponentDistribution::Gaussian => rng.sample(StandardNormal),
            ComponentDistribution::Uniform => self.uniform.sample(rng),
        }
    }

    fn fill<R: Rng>(&self, rng: &mut R, out: &mut [f64], mu: f64, sigmas: &[f64]) {
        for (x, s) in out.iter_mut().zip(sigmas) {
            *x = mu + s * self.draw(rng);
        }
    }

    fn fill_scaled<R: Rng>(&self, rng: &mut R, out: &mut [f64], scale: f64) {
        for x in out.iter_mut() {
            *x = scale * self.draw(rng);
        }
    }
}

/// Run `trial` over `n` trials split into seeded blocks; merge in block order.
fn run_blocks<F>(n: u64, seed: u64, trial: F) -> Moments
where
    F: Fn(&mut ChaCha8Rng, &mut Moments, u64) + Sync,
{
    let blocks = n.div_ceil(BLOCK_SIZE);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let mut acc = Moments::default();
            let count = BLOCK_SIZE.min(n - b * BLOCK_SIZE);
            trial(&mut rng, &mut acc, count);
            acc
        })
        .collect();
    parts.into_iter().fold(Moments::default(), Moments::merge)
}

fn z_score(gap: f64, theory: f64, stderr: f64) -> f64 {
    let diff = gap - theory;
    if stderr > 0.0 {
        diff / stderr
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn sample_gap(sched: &ThetaSchedule, m: u64, sigmas: &[f64], cfg: &McConfig) -> Moments {
    let d = sched.d();
    let rotation = Rotation::new(sched, m);
    let sampler = Sampler::new(cfg.distribution);
    run_blocks(cfg.n_samples, cfg.seed, |rng, acc, count| {
        let mut q = vec![0.0; d];
        let mut k = vec![0.0; d];
        let mut k_star = vec![0.0; d];
        for _ in 0..count {
            sampler.fill(rng, &mut q, cfg.mu, sigmas);
            sampler.fill(rng, &mut k, cfg.mu, sigmas);
            sampler.fill_scaled(rng, &mut k_star, cfg.eps_scale);
            for (ks, qv) in k_star.iter_mut().zip(&q) {
                *ks += qv;
            }
            let x = rotation.score_slices(&q, &k_star) - rotation.score_slices(&q, &k);
            acc.push(x);
        }
    })
}

/// Estimate the similar-minus-random gap with i.i.d. components of standard
/// deviation `cfg.sigma`; theory is `2σ² B_m`.
pub fn estimate_gap(sched: &ThetaSchedule, m: u64, cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let sigmas = vec![cfg.sigma; sched.d()];
    let moments = sample_gap(sched, m, &sigmas, cfg);
    let theory = 2.0 * cfg.sigma * cfg.sigma * b_value(sched, m);
    let stderr = moments.stderr();
    Ok(McReport {
        gap_hat: moments.mean,
        stderr,
        theory,
        z: z_score(moments.mean, theory, stderr),
    })
}

/// As [`estimate_gap`] with per-component standard deviations `sigmas`
/// (length `d`). `cfg.sigma` is ignored; theory is [`weighted_b_value`].
pub fn estimate_gap_hetero(
    sched: &ThetaSchedule,
    m: u64,
    sigmas: &[f64],
    cfg: &McConfig,
) -> Result<McReport> {
    cfg.validate()?;
    let theory = weighted_b_value(sched, sigmas, m)?;
    let moments = sample_gap(sched, m, sigmas, cfg);
    let stderr = moments.stderr();
    Ok(McReport {
        gap_hat: moments.mean,
        stderr,
        theory,
        z: z_score(moments.mean, theory, stderr),
    })
}

/// What sits in the candidate slot of [`argmax_win_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Candidate {
    /// `k* = q + ε`.
    #[default]
    Similar,
    /// A fresh random key, exchangeable with the distractors.
    Independent,
}

/// Fraction of trials in which the candidate key scores strictly higher
/// than each of `context_size` random keys, all at distance `m` from `q`.
pub fn argmax_win_rate(
    sched: &ThetaSchedule,
    m: u64,
    context_size: usize,
    cfg: &McConfig,
    candidate: Candidate,
) -> Result<f64> {
    cfg.validate()?;
    if context_size < 1 {
        return Err(Error::InvalidParameter {
            name: "context_size",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let d = sched.d();
    let sigmas = vec![cfg.sigma; d];
    let rotation = Rotation::new(sched, m);
    let sampler = Sampler::new(cfg.distribution);
    let wins = run_blocks(cfg.n_samples, cfg.seed, |rng, acc, count| {
        let mut q = vec![0.0; d];
        let mut key = vec![0.0; d];
        for _ in 0..count {
            sampler.fill(rng, &mut q, cfg.mu, &sigmas);
            match candidate {
                Candidate::Similar => {
                    sampler.fill_scaled(rng, &mut key, cfg.eps_scale);
                    for (kv, qv) in key.iter_mut().zip(&q) {
                        *kv += qv;
                    }
                }
                Candidate::Independent => sampler.fill(rng, &mut key, cfg.mu, &sigmas),
            }
            let target = rotation.score_slices(&q, &key);
            let mut best_other = f64::NEG_INFINITY;
            for _ in 0..context_size {
                sampler.fill(rng, &mut key, cfg.mu, &sigmas);
                best_other = best_other.max(rotation.score_slices(&q, &key));
            }
            acc.push(if target > best_other { 1.0 } else { 0.0 });
        }
    });
    Ok(wins.mean)
}
