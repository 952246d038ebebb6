//! Rotation-angle schedules.
//!
//! A [`ThetaSchedule`] holds the `d/2` rotation frequencies `θ_i` of one
//! attention head together with the recipe that produced them. Every
//! analysis in this crate consumes a schedule and nothing else.
//!
//! Position interpolation is represented as a frequency scaling: rotating by
//! `m/s` positions at frequency `θ` is the same rotation as `m` positions at
//! `θ/s`, so a PI-scaled schedule can be fed to every integer-`m` analysis.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base of the first schedule ("Method 1") in the Method 1 / Method 2 comparison.
pub const METHOD1_BASE: f64 = 5.0e6;

/// Head dimension for which the piecewise Method 2 schedule is defined.
pub const METHOD2_DIM: usize = 128;

/// First index of the Method 2 schedule that uses the interpolated branch.
pub const METHOD2_SPLIT: usize = 44;

const METHOD2_ORIGIN_BASE: f64 = 1.0e4;
const METHOD2_SCALE: f64 = 8.0;

/// How a schedule was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    Standard { base: f64 },
    PiScaled { base: f64, s: f64 },
    NtkScaled { base: f64, s: f64 },
    Method2,
    Custom,
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Standard { base } => write!(f, "std:{base}"),
            Recipe::PiScaled { base, s } => write!(f, "pi:{base}:{s}"),
            Recipe::NtkScaled { base, s } => write!(f, "ntk:{base}:{s}"),
            Recipe::Method2 => f.write_str("method2"),
            Recipe::Custom => f.write_str("custom"),
        }
    }
}

/// The rotation frequencies `θ_0..θ_{d/2-1}` of one head.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSchedule {
    d: usize,
    thetas: Vec<f64>,
    recipe: Recipe,
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidDimension {
            d,
            reason: "must be at least 2",
        });
    }
    if !d.is_multiple_of(2) {
        return Err(Error::InvalidDimension {
            d,
            reason: "must be even",
        });
    }
    Ok(())
}

fn check_base(base: f64) -> Result<()> {
    if !(base.is_finite() && base > 0.0) {
        return Err(Error::InvalidParameter {
            name: "base",
            value: base,
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

fn check_scale(s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "s",
            value: s,
            reason: "scale factor must be finite and >= 1",
        });
    }
    Ok(())
}

/// `base^(-2i/d)` via `exp(-(2i/d) ln base)`.
#[inline]
fn standard_theta(ln_base: f64, i: usize, d: usize) -> f64 {
    (-((2 * i) as f64) / d as f64 * ln_base).exp()
}

fn standard_thetas(base: f64, d: usize) -> Vec<f64> {
    let ln_base = base.ln();
    (0..d / 2).map(|i| standard_theta(ln_base, i, d)).collect()
}

/// NTK-aware base scaling: `base · s^(d/(d-2))`.
///
/// This choice keeps the lowest frequency interpolated, i.e.
/// `s·T·b_new^(-(d-2)/d) = T·b^(-(d-2)/d)` for any training length `T`.
pub fn ntk_base(base: f64, s: f64, d: usize) -> Result<f64> {
    check_base(base)?;
    check_scale(s)?;
    if d < 4 || !d.is_multiple_of(2) {
        return Err(Error::InvalidDimension {
            d,
            reason: "NTK scaling needs an even d >= 4",
        });
    }
    Ok(base * (d as f64 / (d - 2) as f64 * s.ln()).exp())
}

impl ThetaSchedule {
    /// `θ_i = base^(-2i/d)`.
    pub fn standard(base: f64, d: usize) -> Result<Self> {
        check_dim(d)?;
        check_base(base)?;
        Ok(Self {
            d,
            thetas: standard_thetas(base, d),
            recipe: Recipe::Standard { base },
        })
    }

    /// Position interpolation by factor `s`: `θ_i = base^(-2i/d) / s`.
    pub fn pi_scaled(base: f64, s: f64, d: usize) -> Result<Self> {
        check_dim(d)?;
        check_base(base)?;
        check_scale(s)?;
        let thetas = standard_thetas(base, d)
            .into_iter()
            .map(|t| t / s)
            .collect();
        Ok(Self {
            d,
            thetas,
            recipe: Recipe::PiScaled { base, s },
        })
    }

    /// Standard schedule on the NTK-scaled base [`ntk_base`].
    pub fn ntk_scaled(base: f64, s: f64, d: usize) -> Result<Self> {
        let new_base = ntk_base(base, s, d)?;
        Ok(Self {
            d,
            thetas: standard_thetas(new_base, d),
            recipe: Recipe::NtkScaled { base, s },
        })
    }

    /// `θ_i = (5e6)^(-2i/d)`.
    pub fn method1(d: usize) -> Result<Self> {
        Self::standard(METHOD1_BASE, d)
    }

    /// Piecewise schedule for `d = 128`: indices `i >= 44` keep the original
    /// base `1e4` with a PI factor of 8, indices `i < 44` use the base
    /// `1e4 · 8^(128/88)`. Both branches give the same value at `i = 44`.
    pub fn method2(d: usize) -> Result<Self> {
        if d != METHOD2_DIM {
            return Err(Error::InvalidDimension {
                d,
                reason: "method2 is only defined for d = 128",
            });
        }
        Ok(Self {
            d,
            thetas: (0..d / 2).map(method2_theta).collect(),
            recipe: Recipe::Method2,
        })
    }

    /// Wrap user-supplied frequencies; `d` becomes `2 · thetas.len()`.
    pub fn custom(thetas: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InvalidDimension {
                d: 0,
                reason: "custom schedule needs at least one theta",
            });
        }
        if let Some(&bad) = thetas.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "theta",
                value: bad,
                reason: "every theta must be positive and finite",
            });
        }
        Ok(Self {
            d: 2 * thetas.len(),
            thetas,
            recipe: Recipe::Custom,
        })
    }

    /// Load a custom schedule from a one-column CSV file with header `theta`.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            theta: f64,
        }
        let path = path.as_ref();
        let wrap = |source| Error::ScheduleFile {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(wrap)?;
        let thetas = reader
            .deserialize::<Row>()
            .map(|row| row.map(|r| r.theta))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(wrap)?;
        Self::custom(thetas)
    }

    /// Rebuild the frequencies from a recipe. Custom schedules carry no
    /// generating rule and cannot be rebuilt.
    pub fn from_recipe(recipe: Recipe, d: usize) -> Result<Self> {
        match recipe {
            Recipe::Standard { base } => Self::standard(base, d),
            Recipe::PiScaled { base, s } => Self::pi_scaled(base, s, d),
            Recipe::NtkScaled { base, s } => Self::ntk_scaled(base, s, d),
            Recipe::Method2 => Self::method2(d),
            Recipe::Custom => Err(Error::InvalidSpec {
                spec: "custom".into(),
                reason: "custom schedules cannot be rebuilt from their recipe".into(),
            }),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of rotation frequencies, `d/2`.
    pub fn half_dim(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn recipe(&self) -> Recipe {
        self.recipe
    }
}

pub(crate) fn method2_theta(i: usize) -> f64 {
    let d = METHOD2_DIM;
    let ln_origin = METHOD2_ORIGIN_BASE.ln();
    if i >= METHOD2_SPLIT {
        standard_theta(ln_origin, i, d) / METHOD2_SCALE
    } else {
        method2_low_branch(i)
    }
}

/// The `i < 44` branch, `(1e4 · 8^(128/88))^(-2i/128)`, usable at any `i`.
pub(crate) fn method2_low_branch(i: usize) -> f64 {
    let d = METHOD2_DIM;
    let ln_base =
        METHOD2_ORIGIN_BASE.ln() + d as f64 / (2 * METHOD2_SPLIT) as f64 * METHOD2_SCALE.ln();
    standard_theta(ln_base, i, d)
}

/// A schedule description as accepted on the command line.
///
/// Grammar: `std:<base>`, `pi:<base>:<s>`, `ntk:<base>:<s>`, `method1`,
/// `method2`, `custom:@<path>`. The head dimension is supplied separately.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    Standard { base: f64 },
    Pi { base: f64, s: f64 },
    Ntk { base: f64, s: f64 },
    Method1,
    Method2,
    Custom { path: PathBuf },
}

impl ScheduleSpec {
    /// Materialize the schedule. Custom files determine their own `d`; a
    /// mismatch with a requested `d` is an error only when `d` was given.
    pub fn build(&self, d: usize) -> Result<ThetaSchedule> {
        match self {
            ScheduleSpec::Standard { base } => ThetaSchedule::standard(*base, d),
            ScheduleSpec::Pi { base, s } => ThetaSchedule::pi_scaled(*base, *s, d),
            ScheduleSpec::Ntk { base, s } => ThetaSchedule::ntk_scaled(*base, *s, d),
            ScheduleSpec::Method1 => ThetaSchedule::method1(d),
            ScheduleSpec::Method2 => ThetaSchedule::method2(d),
            ScheduleSpec::Custom { path } => ThetaSchedule::from_csv_path(path),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidSpec {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let number = |field: &str| -> Result<f64> {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| invalid(&format!("`{field}` is not a number")))
        };
        let parts: Vec<&str> = spec.splitn(2, ':').collect();
        let (head, rest) = (parts[0].trim(), parts.get(1).copied());
        match (head, rest) {
            ("method1", None) => Ok(ScheduleSpec::Method1),
            ("method2", None) => Ok(ScheduleSpec::Method2),
            ("std", Some(base)) => Ok(ScheduleSpec::Standard {
                base: number(base)?,
            }),
            ("pi" | "ntk", Some(args)) => {
                let (base, s) = args
                    .split_once(':')
                    .ok_or_else(|| invalid("expected <base>:<s>"))?;
                let (base, s) = (number(base)?, number(s)?);
                Ok(if head == "pi" {
                    ScheduleSpec::Pi { base, s }
                } else {
                    ScheduleSpec::Ntk { base, s }
                })
            }
            ("custom", Some(path)) => {
                let path = path
                    .strip_prefix('@')
                    .ok_or_else(|| invalid("expected custom:@<path>"))?;
                if path.is_empty() {
                    return Err(invalid("empty path"));
                }
                Ok(ScheduleSpec::Custom { path: path.into() })
            }
            _ => Err(invalid(
                "expected std:<base>, pi:<base>:<s>, ntk:<base>:<s>, method1, method2 or custom:@<path>",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn standard_small_case() {
        let s = ThetaSchedule::standard(10000.0, 4).unwrap();
        assert_eq!(s.thetas()[0], 1.0);
        assert!(rel(s.thetas()[1], 0.01) < 1e-15);
    }

    #[test]
    fn standard_matches_high_precision_power() {
        // 500^(-126/128) evaluated with 50-digit arithmetic.
        let reference = 0.002203948296545364327643034;
        let s = ThetaSchedule::standard(500.0, 128).unwrap();
        assert!(rel(s.thetas()[63], reference) < 1e-14);
    }

    #[test]
    fn standard_rejects_bad_input() {
        assert!(ThetaSchedule::standard(1e4, 3).is_err());
        assert!(ThetaSchedule::standard(1e4, 0).is_err());
        assert!(ThetaSchedule::standard(0.0, 4).is_err());
        assert!(ThetaSchedule::standard(-2.0, 4).is_err());
        assert!(ThetaSchedule::standard(f64::NAN, 4).is_err());
    }

    #[test]
    fn standard_is_strictly_decreasing_for_base_above_one() {
        for base in [1.5, 500.0, 1e4, 5e8] {
            let s = ThetaSchedule::standard(base, 128).unwrap();
            assert!(s.thetas().windows(2).all(|w| w[1] < w[0]), "base {base}");
        }
    }

    #[test]
    fn pi_scaling() {
        let a = ThetaSchedule::pi_scaled(10000.0, 1.0, 128).unwrap();
        let b = ThetaSchedule::standard(10000.0, 128).unwrap();
        assert_eq!(a.thetas(), b.thetas());

        let c = ThetaSchedule::pi_scaled(10000.0, 8.0, 4).unwrap();
        assert_eq!(c.thetas()[0], 0.125);
        assert!(rel(c.thetas()[1], 0.00125) < 1e-15);

        assert!(ThetaSchedule::pi_scaled(1e4, 0.5, 4).is_err());
    }

    #[test]
    fn ntk_base_values() {
        assert_eq!(ntk_base(10000.0, 1.0, 128).unwrap(), 10000.0);
        // 10000 * 8^(128/126) at 50 digits.
        let reference = 82684.6226405622184362597;
        assert!(rel(ntk_base(10000.0, 8.0, 128).unwrap(), reference) < 1e-14);
        assert!(ntk_base(1e4, 2.0, 2).is_err());
        assert!(ntk_base(1e4, 0.9, 128).is_err());
    }

    #[test]
    fn ntk_derivation_identity() {
        let b_new = ntk_base(10000.0, 8.0, 128).unwrap();
        let lhs = 8.0 * 4096.0 * b_new.powf(-126.0 / 128.0);
        let rhs = 4096.0 * 10000f64.powf(-126.0 / 128.0);
        assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn method2_values() {
        let s = ThetaSchedule::method2(128).unwrap();
        assert_eq!(s.thetas()[0], 1.0);
        assert!(rel(s.thetas()[63], 0.00001443477480861822724583104) < 1e-14);
        let high = method2_theta(METHOD2_SPLIT);
        let low = method2_low_branch(METHOD2_SPLIT);
        assert!(rel(high, low) < 1e-12);
        assert!(ThetaSchedule::method2(64).is_err());
    }

    #[test]
    fn method1_is_standard_5e6() {
        let m1 = ThetaSchedule::method1(128).unwrap();
        let std = ThetaSchedule::standard(5e6, 128).unwrap();
        assert_eq!(m1.thetas(), std.thetas());
        assert_eq!(m1.thetas()[0], 1.0);
        let small = ThetaSchedule::method1(4).unwrap();
        assert!(rel(small.thetas()[1], 0.0004472135954999579392818347) < 1e-14);
    }

    #[test]
    fn custom_schedules() {
        let one = ThetaSchedule::custom(vec![1.0]).unwrap();
        assert_eq!(one.d(), 2);
        let dup = ThetaSchedule::custom(vec![0.5, 0.5, 0.5]).unwrap();
        assert_eq!(dup.d(), 6);
        assert!(ThetaSchedule::custom(vec![]).is_err());
        assert!(ThetaSchedule::custom(vec![1.0, 0.0]).is_err());
        assert!(ThetaSchedule::custom(vec![1.0, -1.0]).is_err());
        assert!(ThetaSchedule::custom(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn recipe_rebuild_is_exact() {
        let schedules = [
            ThetaSchedule::standard(1e4, 128).unwrap(),
            ThetaSchedule::pi_scaled(1e4, 4.0, 64).unwrap(),
            ThetaSchedule::ntk_scaled(1e4, 8.0, 128).unwrap(),
            ThetaSchedule::method1(128).unwrap(),
            ThetaSchedule::method2(128).unwrap(),
        ];
        for s in schedules {
            let rebuilt = ThetaSchedule::from_recipe(s.recipe(), s.d()).unwrap();
            for (a, b) in s.thetas().iter().zip(rebuilt.thetas()) {
                assert!((a - b).abs() <= f64::EPSILON * a.abs());
            }
        }
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            "std:500".parse::<ScheduleSpec>().unwrap(),
            ScheduleSpec::Standard { base: 500.0 }
        );
        assert_eq!(
            "pi:1e4:8".parse::<ScheduleSpec>().unwrap(),
            ScheduleSpec::Pi { base: 1e4, s: 8.0 }
        );
        assert_eq!(
            "ntk:10000:4".parse::<ScheduleSpec>().unwrap(),
            ScheduleSpec::Ntk { base: 1e4, s: 4.0 }
        );
        assert_eq!(
            "method1".parse::<ScheduleSpec>().unwrap(),
            ScheduleSpec::Method1
        );
        assert_eq!(
            "method2".parse::<ScheduleSpec>().unwrap(),
            ScheduleSpec::Method2
        );
        assert_eq!(
            "custom:@a/b.csv".parse::<ScheduleSpec>().unwrap(),
            ScheduleSpec::Custom {
                path: "a/b.csv".into()
            }
        );
        for bad in [
            "",
            "std",
            "std:x",
            "pi:1e4",
            "custom:a.csv",
            "method3",
            "custom:@",
        ] {
            assert!(bad.parse::<ScheduleSpec>().is_err(), "{bad}");
        }
    }
}
