//! Long-term decay analysis of rotary position embeddings.
//!
//! The crate computes, for a given set of rotation frequencies,
//!
//! * the discrimination curve `B_m = Σ cos(m θ_i)` and the classical
//!   attention-score upper-bound factor ([`decay`]),
//! * the effective context length, i.e. the last `m` before `B_m` first turns
//!   negative, and the smallest RoPE base that reaches a target length
//!   ([`bounds`]),
//! * Monte Carlo estimates of the similar-versus-random attention gap
//!   ([`mc`]) and rotation-angle OOD diagnostics ([`ood`]).

pub mod bounds;
pub mod cli;
pub mod decay;
pub mod error;
pub mod mc;
pub mod ood;
pub mod output;
pub mod rope;
pub mod scan;
pub mod schedule;

pub use bounds::{
    effective_length, lower_bound_base, table2, BoundOptions, BoundResult, LengthResult,
    SearchStrategy,
};
pub use decay::{b_value, sample_curve, upper_bound_factor, violation_count, CurveSamples, Metric};
pub use error::{Error, Result};
pub use mc::{estimate_gap, estimate_gap_hetero, McConfig, McReport};
pub use ood::{ood_report, OodReport};
pub use rope::{attention_score, rotate, HeadVector, Rotation};
pub use schedule::{ntk_base, Recipe, ScheduleSpec, ThetaSchedule};
