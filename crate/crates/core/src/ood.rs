//! Out-of-distribution rotation angles.
//!
//! During training with length `T` a dimension with frequency `θ_i` only ever
//! sees relative angles in `[0, T θ_i]`. If that range covers a full period
//! (`T θ_i >= 2π`) every value of `cos` has been fitted and no extension can
//! be out of distribution on that dimension. Otherwise the dimension is OOD
//! when the extended run reaches a larger angle than training did.

use std::f64::consts::TAU;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schedule::ThetaSchedule;

/// Relative slack when comparing extended and trained angles. Schedules
/// designed to land exactly on the trained angle (NTK scaling, PI) only
/// reach it up to rounding.
pub const ANGLE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimOod {
    pub dim: usize,
    pub trained_max_angle: f64,
    pub extended_max_angle: f64,
    pub full_period_covered: bool,
    pub ood: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OodReport {
    pub per_dim: Vec<DimOod>,
    pub any_ood: bool,
}

impl OodReport {
    /// CSV with header `dim,trained_max_angle,extended_max_angle,full_period_covered,ood`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "dim,trained_max_angle,extended_max_angle,full_period_covered,ood"
        )?;
        for row in &self.per_dim {
            writeln!(
                out,
                "{},{},{},{},{}",
                row.dim,
                crate::output::fmt_g17(row.trained_max_angle),
                crate::output::fmt_g17(row.extended_max_angle),
                row.full_period_covered,
                row.ood
            )?;
        }
        Ok(())
    }

    /// Indices of the OOD dimensions.
    pub fn ood_dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_dim.iter().filter(|r| r.ood).map(|r| r.dim)
    }
}

/// Compare the angle ranges of a training run (`train_sched`, length
/// `t_train`) and an extended run (`new_sched`, length `t_new`).
pub fn ood_report(
    train_sched: &ThetaSchedule,
    t_train: u64,
    new_sched: &ThetaSchedule,
    t_new: u64,
) -> Result<OodReport> {
    if train_sched.d() != new_sched.d() {
        return Err(Error::DimensionMismatch {
            expected: train_sched.d(),
            actual: new_sched.d(),
        });
    }
    for (name, t) in [("t_train", t_train), ("t_new", t_new)] {
        if t < 1 {
            return Err(Error::InvalidParameter {
                name,
                value: t as f64,
                reason: "length must be at least 1",
            });
        }
    }
    let per_dim: Vec<DimOod> = train_sched
        .thetas()
        .iter()
        .zip(new_sched.thetas())
        .enumerate()
        .map(|(dim, (&th_train, &th_new))| {
            let trained_max_angle = t_train as f64 * th_train;
            let extended_max_angle = t_new as f64 * th_new;
            let full_period_covered = trained_max_angle >= TAU;
            let beyond = extended_max_angle > trained_max_angle * (1.0 + ANGLE_RTOL);
            DimOod {
                dim,
                trained_max_angle,
                extended_max_angle,
                full_period_covered,
                ood: !full_period_covered && beyond,
            }
        })
        .collect();
    let any_ood = per_dim.iter().any(|r| r.ood);
    Ok(OodReport { per_dim, any_ood })
}
