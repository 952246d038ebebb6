//! Effective context length of a schedule and the smallest RoPE base that
//! reaches a target length.
//!
//! The effective length is the largest `L` with `B_m >= 0` for every
//! `m <= L`. The base lower bound is the smallest `base` whose standard
//! schedule has effective length at least `L`.
//!
//! The predicate `P(base) = "no violation on [1, L]"` is *not* monotone in
//! `base`: above the first base where it holds there are many short windows
//! where it fails again, and below it there can be isolated short windows
//! where it holds. Every solver here therefore re-verifies its answer on the
//! reference path and reports the sign pattern it saw.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::decay::b_value_thetas;
use crate::error::{Error, Result};
use crate::scan;
use crate::schedule::{Recipe, ThetaSchedule};

/// Default relative width of the final bisection bracket.
pub const DEFAULT_TOL_REL: f64 = 1e-3;

/// Default ceiling on the searched base.
pub const DEFAULT_BASE_MAX: f64 = 1e12;

/// Bases probed inside the final bisection bracket.
const PROBES: usize = 8;

/// Sweep candidates evaluated per parallel batch.
const SWEEP_BATCH: usize = 32;

/// Effective context length of one schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthResult {
    pub base_or_schedule: Recipe,
    pub d: usize,
    pub effective_length: u64,
    /// `None` when no violation occurs up to the scan limit; the length is
    /// then censored at that limit.
    pub first_violation_m: Option<u64>,
}

impl LengthResult {
    pub fn is_censored(&self) -> bool {
        self.first_violation_m.is_none()
    }
}

/// Scan `m = 1..=m_limit` and stop at the first `B_m < 0`.
pub fn effective_length(sched: &ThetaSchedule, m_limit: u64) -> Result<LengthResult> {
    if m_limit < 1 {
        return Err(Error::InvalidRange { lo: 1, hi: m_limit });
    }
    let first = scan::first_negative(sched.thetas(), 1, m_limit);
    Ok(LengthResult {
        base_or_schedule: sched.recipe(),
        d: sched.d(),
        effective_length: first.map_or(m_limit, |m| m - 1),
        first_violation_m: first,
    })
}

/// How [`lower_bound_base`] searches for the smallest admissible base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchStrategy {
    /// Double from `base = 1` until the predicate holds, then bisect in
    /// log space down to the requested relative bracket width. Fast, but it
    /// lands on *a* sign change of the predicate, not necessarily the first.
    Bisection,
    /// Walk the geometric grid `(1 + tol)^k` upwards from `base = 1` and stop
    /// at the first base where the predicate holds.
    Sweep,
    /// Walk the decimal lattice of bases with `digits` significant digits
    /// (`1.0, 1.1, …, 9.9, 10, 11, …` for two digits) upwards from 1 and stop
    /// at the first base where the predicate holds.
    Lattice { digits: u32 },
}

impl Default for SearchStrategy {
    fn default() -> Self {
        SearchStrategy::Lattice { digits: 2 }
    }
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchStrategy::Bisection => f.write_str("bisection"),
            SearchStrategy::Sweep => f.write_str("sweep"),
            SearchStrategy::Lattice { digits } => write!(f, "lattice:{digits}"),
        }
    }
}

impl FromStr for SearchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = || Error::InvalidSpec {
            spec: s.to_string(),
            reason: "expected bisection, sweep or lattice:<digits>".into(),
        };
        match s.split_once(':') {
            None if s == "bisection" => Ok(SearchStrategy::Bisection),
            None if s == "sweep" => Ok(SearchStrategy::Sweep),
            None if s == "lattice" => Ok(SearchStrategy::default()),
            Some(("lattice", digits)) => match digits.parse::<u32>() {
                Ok(digits @ 1..=15) => Ok(SearchStrategy::Lattice { digits }),
                _ => Err(invalid()),
            },
            _ => Err(invalid()),
        }
    }
}

impl Serialize for SearchStrategy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Solver knobs for [`lower_bound_base`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    pub tol_rel: f64,
    pub base_max: f64,
    pub strategy: SearchStrategy,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            tol_rel: DEFAULT_TOL_REL,
            base_max: DEFAULT_BASE_MAX,
            strategy: SearchStrategy::default(),
        }
    }
}

/// Outcome of the base lower-bound search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    pub target_length: u64,
    pub d: usize,
    pub base: f64,
    /// `P(lo)` is false and `P(hi)` is true; `base == hi`.
    pub bracket: (f64, f64),
    /// The returned base was re-checked on the reference path for every
    /// `m` in `[1, target_length]`.
    pub verified: bool,
    pub strategy: SearchStrategy,
    /// A probe found the predicate holding below a base where it fails.
    pub non_monotone: bool,
}

/// Predicate `P(base)`: the standard schedule has no violation on `[1, length]`.
fn admissible(base: f64, d: usize, length: u64) -> Result<bool> {
    let sched = ThetaSchedule::standard(base, d)?;
    Ok(scan::first_negative(sched.thetas(), 1, length).is_none())
}

/// Full reference-path check of `P(base)`, one `cos` per term.
fn verify_reference(base: f64, d: usize, length: u64) -> Result<bool> {
    let sched = ThetaSchedule::standard(base, d)?;
    let thetas = sched.thetas();
    let ok = (1..=length)
        .into_par_iter()
        .all(|m| b_value_thetas(thetas, m as f64) >= 0.0);
    Ok(ok)
}

fn check_inputs(length: u64, d: usize, opts: &BoundOptions) -> Result<()> {
    if length < 1 {
        return Err(Error::InvalidRange { lo: 1, hi: length });
    }
    if d < 2 || !d.is_multiple_of(2) {
        return Err(Error::InvalidDimension {
            d,
            reason: "must be even and at least 2",
        });
    }
    if !(opts.tol_rel.is_finite() && opts.tol_rel > 0.0 && opts.tol_rel < 1.0) {
        return Err(Error::InvalidParameter {
            name: "tol_rel",
            value: opts.tol_rel,
            reason: "must lie in (0, 1)",
        });
    }
    if !(opts.base_max.is_finite() && opts.base_max > 1.0) {
        return Err(Error::InvalidParameter {
            name: "base_max",
            value: opts.base_max,
            reason: "must be finite and greater than 1",
        });
    }
    Ok(())
}

/// Smallest base whose standard schedule keeps `B_m >= 0` for all
/// `m in [1, length]`.
///
/// Fails with [`Error::Unattainable`] if the search reaches `base_max`
/// without success. For `d = 2` the only frequency is `θ_0 = 1` for every
/// base, so any `length >= 2` is unattainable.
pub fn lower_bound_base(length: u64, d: usize, opts: &BoundOptions) -> Result<BoundResult> {
    check_inputs(length, d, opts)?;
    let unattainable = || Error::Unattainable {
        length,
        d,
        base_max: opts.base_max,
    };
    let (lo, hi, non_monotone) = match opts.strategy {
        SearchStrategy::Bisection => bisect(length, d, opts)?.ok_or_else(unattainable)?,
        SearchStrategy::Sweep => {
            let step = 1.0 + opts.tol_rel;
            let grid = (0..).map(move |k| step.powi(k));
            sweep(grid, length, d, opts.base_max)?.ok_or_else(unattainable)?
        }
        SearchStrategy::Lattice { digits } => {
            sweep(lattice(digits), length, d, opts.base_max)?.ok_or_else(unattainable)?
        }
    };
    let non_monotone = non_monotone || probe_bracket(lo, hi, d, length)?;
    let verified = verify_reference(hi, d, length)?;
    Ok(BoundResult {
        target_length: length,
        d,
        base: hi,
        bracket: (lo, hi),
        verified,
        strategy: opts.strategy,
        non_monotone,
    })
}

/// Ascending decimal lattice with `digits` significant digits, starting at 1.
fn lattice(digits: u32) -> impl Iterator<Item = f64> {
    let lo = 10u64.pow(digits - 1);
    let hi = 10u64.pow(digits);
    (0i32..).flat_map(move |decade| {
        (lo..hi).map(move |mantissa| {
            // mantissa · 10^(decade - digits + 1), formatted and reparsed so
            // every lattice point is the nearest f64 to its decimal value.
            format!("{mantissa}e{}", decade - digits as i32 + 1)
                .parse::<f64>()
                .expect("lattice literal")
        })
    })
}

/// Return `(last rejected, first accepted, saw_non_monotone)` along an
/// ascending candidate sequence.
fn sweep(
    candidates: impl Iterator<Item = f64>,
    length: u64,
    d: usize,
    base_max: f64,
) -> Result<Option<(f64, f64, bool)>> {
    let mut candidates = candidates.take_while(|&b| b <= base_max).peekable();
    let mut previous = None;
    loop {
        let batch: Vec<f64> = candidates.by_ref().take(SWEEP_BATCH).collect();
        if batch.is_empty() {
            return Ok(None);
        }
        let verdicts = batch
            .par_iter()
            .map(|&b| admissible(b, d, length))
            .collect::<Result<Vec<bool>>>()?;
        if let Some(k) = verdicts.iter().position(|&ok| ok) {
            let lo = if k > 0 { Some(batch[k - 1]) } else { previous };
            let hi = batch[k];
            let lo = lo.unwrap_or(hi);
            // Anything rejected after the first acceptance in this batch is
            // direct evidence of non-monotonicity.
            let non_monotone = verdicts[k..].iter().any(|&ok| !ok);
            return Ok(Some((lo, hi, non_monotone)));
        }
        previous = batch.last().copied();
        if candidates.peek().is_none() {
            return Ok(None);
        }
    }
}

fn bisect(length: u64, d: usize, opts: &BoundOptions) -> Result<Option<(f64, f64, bool)>> {
    let p = |b: f64| admissible(b, d, length);
    if p(1.0)? {
        return Ok(Some((1.0, 1.0, false)));
    }
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    loop {
        if hi >= opts.base_max {
            hi = opts.base_max;
            if !p(hi)? {
                return Ok(None);
            }
            break;
        }
        if p(hi)? {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo) / hi > opts.tol_rel {
        let mid = (lo * hi).sqrt();
        if p(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some((lo, hi, false)))
}

/// Probe log-spaced bases strictly inside `(lo, hi)`. With `P(lo)` false and
/// `P(hi)` true, a monotone predicate shows false probes followed by true
/// ones; anything else is reported.
fn probe_bracket(lo: f64, hi: f64, d: usize, length: u64) -> Result<bool> {
    if lo >= hi {
        return Ok(false);
    }
    let ratio = hi / lo;
    let probes: Vec<f64> = (1..=PROBES)
        .map(|k| lo * ratio.powf(k as f64 / (PROBES + 1) as f64))
        .collect();
    let mut verdicts = vec![false];
    verdicts.extend(
        probes
            .par_iter()
            .map(|&b| admissible(b, d, length))
            .collect::<Result<Vec<bool>>>()?,
    );
    verdicts.push(true);
    Ok(verdicts.windows(2).any(|w| w[0] && !w[1]))
}

/// Context lengths of the standard table: 1k … 1M under the chosen unit.
pub fn table2_lengths(unit: u64) -> Vec<u64> {
    (0..11).map(|k| unit << k).collect()
}

/// One row of the context-length / base-lower-bound table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub context_length: u64,
    pub base_lower_bound: f64,
    pub result: BoundResult,
}

/// Base lower bounds for 1k, 2k, …, 1M with `k = unit` (1024 or 1000).
pub fn table2(d: usize, unit: u64, opts: &BoundOptions) -> Result<Vec<TableRow>> {
    table2_lengths(unit)
        .into_par_iter()
        .map(|length| {
            let result = lower_bound_base(length, d, opts)?;
            Ok(TableRow {
                context_length: length,
                base_lower_bound: result.base,
                result,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_frequency_length() {
        for base in [2.0, 1e4, 1e9] {
            let s = ThetaSchedule::standard(base, 2).unwrap();
            let r = effective_length(&s, 100).unwrap();
            assert_eq!(r.effective_length, 1);
            assert_eq!(r.first_violation_m, Some(2));
        }
    }

    #[test]
    fn censored_length() {
        let s = ThetaSchedule::standard(1e4, 128).unwrap();
        let r = effective_length(&s, 50).unwrap();
        assert_eq!(r.effective_length, 50);
        assert!(r.is_censored());
        assert!(effective_length(&s, 0).is_err());
    }

    #[test]
    fn lattice_points() {
        let first: Vec<f64> = lattice(2).take(92).collect();
        assert_eq!(first[0], 1.0);
        assert_eq!(first[1], 1.1);
        assert_eq!(first[89], 9.9);
        assert_eq!(first[90], 10.0);
        assert_eq!(first[91], 11.0);
        let ones: Vec<f64> = lattice(1).take(10).collect();
        assert_eq!(ones[9], 10.0);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(
            "bisection".parse::<SearchStrategy>().unwrap(),
            SearchStrategy::Bisection
        );
        assert_eq!(
            "sweep".parse::<SearchStrategy>().unwrap(),
            SearchStrategy::Sweep
        );
        assert_eq!(
            "lattice:3".parse::<SearchStrategy>().unwrap(),
            SearchStrategy::Lattice { digits: 3 }
        );
        assert!("lattice:0".parse::<SearchStrategy>().is_err());
        assert!("newton".parse::<SearchStrategy>().is_err());
    }

    #[test]
    fn d2_is_unattainable() {
        for strategy in [
            SearchStrategy::Bisection,
            SearchStrategy::Sweep,
            SearchStrategy::Lattice { digits: 2 },
        ] {
            let opts = BoundOptions {
                strategy,
                base_max: 1e6,
                ..Default::default()
            };
            assert!(matches!(
                lower_bound_base(2, 2, &opts),
                Err(Error::Unattainable { .. })
            ));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let opts = BoundOptions::default();
        assert!(lower_bound_base(0, 128, &opts).is_err());
        assert!(lower_bound_base(10, 7, &opts).is_err());
        let bad = BoundOptions {
            tol_rel: 0.0,
            ..opts
        };
        assert!(lower_bound_base(10, 128, &bad).is_err());
    }

    #[test]
    fn brackets_are_valid() {
        for strategy in [
            SearchStrategy::Bisection,
            SearchStrategy::Sweep,
            SearchStrategy::Lattice { digits: 2 },
        ] {
            let opts = BoundOptions {
                strategy,
                ..Default::default()
            };
            let r = lower_bound_base(1000, 128, &opts).unwrap();
            assert!(r.verified);
            assert_eq!(r.base, r.bracket.1);
            assert!(admissible(r.bracket.1, 128, 1000).unwrap());
            assert!(!admissible(r.bracket.0, 128, 1000).unwrap());
            if strategy != (SearchStrategy::Lattice { digits: 2 }) {
                assert!((r.bracket.1 - r.bracket.0) / r.base <= opts.tol_rel * 1.000_001);
            }
        }
    }
}
