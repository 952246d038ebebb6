//! Long-term decay quantities of a rotation schedule.
//!
//! * `B_m = Σ_i cos(m θ_i)`: how much more a query attends to a similar key
//!   than to a random one at distance `m`, in units of `2σ²`.
//! * The schedule-dependent factor `Σ_{n=1}^{d/2} |Σ_{l<n} e^{i m θ_l}|` of
//!   the classical attention-score upper bound.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::output::fmt_g17;
use crate::scan;
use crate::schedule::ThetaSchedule;

/// `Σ cos(t θ_i)` summed in index order.
pub(crate) fn b_value_thetas(thetas: &[f64], t: f64) -> f64 {
    thetas.iter().map(|&th| (t * th).cos()).sum()
}

/// `B_{m,θ}`. Always within `[-d/2, d/2]`; exactly `d/2` at `m = 0`.
pub fn b_value(sched: &ThetaSchedule, m: u64) -> f64 {
    b_value_thetas(sched.thetas(), m as f64)
}

/// `B` at a real-valued distance `t`.
pub fn b_value_at(sched: &ThetaSchedule, t: f64) -> f64 {
    b_value_thetas(sched.thetas(), t)
}

fn check_sigmas(sched: &ThetaSchedule, sigmas: &[f64]) -> Result<()> {
    if sigmas.len() != sched.d() {
        return Err(Error::DimensionMismatch {
            expected: sched.d(),
            actual: sigmas.len(),
        });
    }
    if let Some(&bad) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: bad,
            reason: "standard deviations must be finite and non-negative",
        });
    }
    Ok(())
}

/// `Σ_i (σ_{2i}² + σ_{2i+1}²) cos(m θ_i)`, the similar-minus-random gap for
/// per-component standard deviations.
pub fn weighted_b_value(sched: &ThetaSchedule, sigmas: &[f64], m: u64) -> Result<f64> {
    check_sigmas(sched, sigmas)?;
    Ok(weighted_unchecked(sched, sigmas, m as f64))
}

fn weighted_unchecked(sched: &ThetaSchedule, sigmas: &[f64], t: f64) -> f64 {
    sched
        .thetas()
        .iter()
        .zip(sigmas.chunks_exact(2))
        .map(|(&th, pair)| (pair[0] * pair[0] + pair[1] * pair[1]) * (t * th).cos())
        .sum()
}

/// `Σ_{n=1}^{d/2} |S_n|` with `S_n = Σ_{l=0}^{n-1} e^{i m θ_l}`.
///
/// Bounded by `(d/2)(d/2+1)/2`, attained at `m = 0`.
pub fn upper_bound_factor(sched: &ThetaSchedule, m: u64) -> f64 {
    let mf = m as f64;
    let (mut re, mut im, mut total) = (0.0f64, 0.0f64, 0.0);
    for &th in sched.thetas() {
        let (s, c) = (mf * th).sin_cos();
        re += c;
        im += s;
        total += re.hypot(im);
    }
    total
}

/// Number of `m` in `[m_lo, m_hi]` with `B_m < 0`. `B_m = 0` is not a violation.
pub fn violation_count(sched: &ThetaSchedule, m_lo: u64, m_hi: u64) -> Result<u64> {
    if m_lo < 1 || m_lo > m_hi {
        return Err(Error::InvalidRange { lo: m_lo, hi: m_hi });
    }
    Ok(scan::count_negative(sched.thetas(), m_lo, m_hi))
}

/// Which quantity a curve samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BValue,
    WeightedBValue { sigmas: Vec<f64> },
    UpperBound,
}

impl Metric {
    fn eval(&self, sched: &ThetaSchedule, m: u64) -> f64 {
        match self {
            Metric::BValue => b_value(sched, m),
            Metric::WeightedBValue { sigmas } => weighted_unchecked(sched, sigmas, m as f64),
            Metric::UpperBound => upper_bound_factor(sched, m),
        }
    }
}

/// A sampled curve `m ↦ value`, `m` strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSamples {
    pub metric: Metric,
    pub points: Vec<(u64, f64)>,
}

impl CurveSamples {
    /// CSV with header `m,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "m,value")?;
        for &(m, v) in &self.points {
            writeln!(out, "{m},{}", fmt_g17(v))?;
        }
        Ok(())
    }
}

/// Sample `metric` at `m = 0, stride, 2·stride, …` up to `m_max`.
pub fn sample_curve(
    sched: &ThetaSchedule,
    metric: Metric,
    m_max: u64,
    stride: u64,
) -> Result<CurveSamples> {
    if stride == 0 {
        return Err(Error::InvalidParameter {
            name: "stride",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    if let Metric::WeightedBValue { sigmas } = &metric {
        check_sigmas(sched, sigmas)?;
    }
    let n = m_max / stride + 1;
    let points = (0..n)
        .into_par_iter()
        .map(|k| {
            let m = k * stride;
            (m, metric.eval(sched, m))
        })
        .collect();
    Ok(CurveSamples { metric, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_at_zero_is_half_dim() {
        for d in [2, 4, 64, 128] {
            let s = ThetaSchedule::standard(1e4, d).unwrap();
            assert_eq!(b_value(&s, 0), (d / 2) as f64);
        }
    }

    #[test]
    fn single_term() {
        let s = ThetaSchedule::custom(vec![1.0]).unwrap();
        // cos 3 at 50 digits.
        assert!((b_value(&s, 3) - -0.9899924966004454572715728).abs() < 1e-15);
    }

    #[test]
    fn weighted_cases() {
        let s = ThetaSchedule::standard(1e4, 8).unwrap();
        assert_eq!(weighted_b_value(&s, &[1.0; 8], 0).unwrap(), 8.0);

        let sigma = 0.7;
        for m in [1u64, 10, 1000] {
            let w = weighted_b_value(&s, &[sigma; 8], m).unwrap();
            let b = 2.0 * sigma * sigma * b_value(&s, m);
            assert!(((w - b) / b).abs() < 1e-12);
        }

        let s = ThetaSchedule::custom(vec![1.0, 0.01]).unwrap();
        let w = weighted_b_value(&s, &[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        // cos 2 + cos 0.02 at 50 digits.
        assert!((w - 0.5836531701194353914151274).abs() < 1e-15);

        assert!(weighted_b_value(&s, &[1.0; 3], 2).is_err());
        assert!(weighted_b_value(&s, &[1.0, -1.0, 1.0, 1.0], 2).is_err());
    }

    #[test]
    fn upper_bound_extremes() {
        let s = ThetaSchedule::standard(1e4, 128).unwrap();
        assert_eq!(upper_bound_factor(&s, 0), 2080.0);
        let one = ThetaSchedule::standard(1e4, 2).unwrap();
        for m in [0, 1, 17, 99_999] {
            assert!((upper_bound_factor(&one, m) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn violation_counts() {
        let s = ThetaSchedule::custom(vec![1.0]).unwrap();
        assert_eq!(violation_count(&s, 1, 10).unwrap(), 6);
        assert!(violation_count(&s, 0, 10).is_err());
        assert!(violation_count(&s, 11, 10).is_err());
    }

    #[test]
    fn curve_sampling() {
        let s = ThetaSchedule::standard(1e4, 16).unwrap();
        let c = sample_curve(&s, Metric::BValue, 10, 11).unwrap();
        assert_eq!(c.points, vec![(0, 8.0)]);

        let c = sample_curve(&s, Metric::UpperBound, 1000, 7).unwrap();
        assert_eq!(c.points.len(), 1000 / 7 + 1);
        for &(m, v) in &c.points {
            assert_eq!(v.to_bits(), upper_bound_factor(&s, m).to_bits());
        }
        assert!(c.points.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(sample_curve(&s, Metric::BValue, 10, 0).is_err());
        let bad = Metric::WeightedBValue { sigmas: vec![1.0] };
        assert!(sample_curve(&s, bad, 10, 1).is_err());
    }

    #[test]
    fn curve_csv() {
        let s = ThetaSchedule::standard(1e4, 128).unwrap();
        let c = sample_curve(&s, Metric::UpperBound, 1, 1).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("m,value"));
        assert_eq!(lines.next(), Some("0,2080"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[1].parse::<f64>().unwrap(), c.points[1].1);
    }
}
