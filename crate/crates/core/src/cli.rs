//! Command-line front end. Every subcommand delegates to the library and
//! renders the result as CSV or JSON.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{self, BoundOptions, SearchStrategy};
use crate::decay::{self, Metric};
use crate::error::{Error, Result};
use crate::mc::{self, ComponentDistribution, McConfig};
use crate::ood;
use crate::output::fmt_g17;
use crate::schedule::{ScheduleSpec, ThetaSchedule};

#[derive(Debug, Parser)]
#[command(
    name = "rope-bounds",
    version,
    about = "Long-term decay analysis of rotary position embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format; each subcommand has its own default.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KConvention {
    #[value(name = "1024")]
    Binary,
    #[value(name = "1000")]
    Decimal,
    #[value(name = "both")]
    Both,
}

impl KConvention {
    fn units(self) -> &'static [u64] {
        match self {
            KConvention::Binary => &[1024],
            KConvention::Decimal => &[1000],
            KConvention::Both => &[1000, 1024],
        }
    }

    fn single_unit(self) -> Result<u64> {
        match self {
            KConvention::Binary => Ok(1024),
            KConvention::Decimal => Ok(1000),
            KConvention::Both => Err(Error::InvalidSpec {
                spec: "both".into(),
                reason: "this subcommand needs a single k-convention (1024 or 1000)".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveMetric {
    B,
    Upper,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallest RoPE base whose discrimination curve stays non-negative up to a length.
    Bound {
        /// Target context length: an integer, or a value with a k/M suffix.
        #[arg(long)]
        length: String,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        /// Relative bracket width for the bisection and sweep strategies.
        #[arg(long, default_value_t = bounds::DEFAULT_TOL_REL)]
        tol: f64,
        #[arg(long, value_enum, default_value = "1024")]
        k_convention: KConvention,
        /// bisection, sweep, or lattice:<digits>.
        #[arg(long, default_value = "lattice:2")]
        strategy: String,
        #[arg(long, default_value_t = bounds::DEFAULT_BASE_MAX)]
        base_max: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Effective context length of a schedule.
    Length {
        #[arg(long)]
        schedule: String,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 1_000_000)]
        max_m: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sample the discrimination curve or the upper-bound factor.
    Curve {
        #[arg(long)]
        schedule: String,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, value_enum, default_value = "b")]
        metric: CurveMetric,
        #[arg(long)]
        max_m: u64,
        #[arg(long, default_value_t = 1)]
        stride: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Monte Carlo estimate of the similar-minus-random attention gap.
    Verify {
        #[arg(long)]
        schedule: String,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long)]
        m: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu: f64,
        /// Standard deviation of ε; defaults to 0.1·sigma.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "gaussian")]
        distribution: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Per-dimension rotation-angle coverage of a training run versus an extension.
    Ood {
        #[arg(long)]
        train_schedule: String,
        #[arg(long)]
        train_len: u64,
        #[arg(long)]
        new_schedule: String,
        #[arg(long)]
        new_len: u64,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Base lower bounds for context lengths 1k through 1M.
    Table2 {
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, value_enum, default_value = "both")]
        k_convention: KConvention,
        #[arg(long, default_value_t = bounds::DEFAULT_TOL_REL)]
        tol: f64,
        #[arg(long, default_value = "lattice:2")]
        strategy: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Violation counts and OOD status of the Method 1 and Method 2 schedules.
    CompareMethods {
        /// Comma-separated range ends; each end `r` is counted over [1, r] and
        /// consecutive ends also over [r_prev, r].
        #[arg(long, default_value = "15k,30k")]
        ranges: String,
        #[arg(long, value_enum, default_value = "1024")]
        k_convention: KConvention,
        /// Pre-training length of the base-1e4 model being extended.
        #[arg(long, default_value_t = 4096)]
        train_len: u64,
        /// Fine-tuning length of both methods.
        #[arg(long, default_value_t = 32768)]
        finetune_len: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

/// Parse `32768`, `32k`, `1M` (or `1m`) with `k = unit`, `M = unit²`.
pub fn parse_length(s: &str, unit: u64) -> Result<u64> {
    let invalid = || Error::InvalidSpec {
        spec: s.to_string(),
        reason: "expected an integer optionally followed by k or M".into(),
    };
    let s = s.trim();
    let (digits, factor) = match s.chars().last() {
        Some('k' | 'K') => (&s[..s.len() - 1], unit),
        Some('m' | 'M') => (&s[..s.len() - 1], unit * unit),
        _ => (s, 1),
    };
    digits
        .parse::<u64>()
        .ok()
        .and_then(|v| v.checked_mul(factor))
        .ok_or_else(invalid)
}

fn build_schedule(spec: &str, dim: usize) -> Result<ThetaSchedule> {
    spec.parse::<ScheduleSpec>()?.build(dim)
}

fn open_output(out: &OutputArgs) -> Result<Box<dyn Write>> {
    Ok(match &out.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<W: Write + ?Sized, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    schedule: &'a str,
    d: usize,
    m: u64,
    #[serde(flatten)]
    report: mc::McReport,
    config: McConfig,
}

#[derive(Serialize)]
struct MethodRow {
    method: &'static str,
    ood: bool,
    range_lo: u64,
    range_hi: u64,
    violations: u64,
}

/// Run one parsed command, writing its rendering to the configured sink.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bound {
            length,
            dim,
            tol,
            k_convention,
            strategy,
            base_max,
            out,
        } => {
            let length = parse_length(&length, k_convention.single_unit()?)?;
            let opts = BoundOptions {
                tol_rel: tol,
                base_max,
                strategy: strategy.parse::<SearchStrategy>()?,
            };
            let r = bounds::lower_bound_base(length, dim, &opts)?;
            let mut w = open_output(&out)?;
            match out.format.unwrap_or(Format::Json) {
                Format::Json => write_json(&mut w, &r)?,
                Format::Csv => {
                    writeln!(
                        w,
                        "target_length,d,base,bracket_lo,bracket_hi,verified,strategy,non_monotone"
                    )?;
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{}",
                        r.target_length,
                        r.d,
                        fmt_g17(r.base),
                        fmt_g17(r.bracket.0),
                        fmt_g17(r.bracket.1),
                        r.verified,
                        r.strategy,
                        r.non_monotone
                    )?;
                }
            }
            w.flush()?;
        }
        Command::Length {
            schedule,
            dim,
            max_m,
            out,
        } => {
            let sched = build_schedule(&schedule, dim)?;
            let r = bounds::effective_length(&sched, max_m)?;
            let mut w = open_output(&out)?;
            match out.format.unwrap_or(Format::Json) {
                Format::Json => write_json(&mut w, &r)?,
                Format::Csv => {
                    writeln!(w, "schedule,d,effective_length,first_violation_m")?;
                    let first = r
                        .first_violation_m
                        .map_or_else(|| "none".to_string(), |m| m.to_string());
                    writeln!(
                        w,
                        "{},{},{},{}",
                        r.base_or_schedule, r.d, r.effective_length, first
                    )?;
                }
            }
            w.flush()?;
        }
        Command::Curve {
            schedule,
            dim,
            metric,
            max_m,
            stride,
            out,
        } => {
            let sched = build_schedule(&schedule, dim)?;
            let metric = match metric {
                CurveMetric::B => Metric::BValue,
                CurveMetric::Upper => Metric::UpperBound,
            };
            let curve = decay::sample_curve(&sched, metric, max_m, stride)?;
            let mut w = open_output(&out)?;
            match out.format.unwrap_or(Format::Csv) {
                Format::Csv => curve.write_csv(&mut w)?,
                Format::Json => write_json(&mut w, &curve)?,
            }
            w.flush()?;
        }
        Command::Verify {
            schedule,
            dim,
            m,
            samples,
            sigma,
            mu,
            eps,
            seed,
            distribution,
            out,
        } => {
            let sched = build_schedule(&schedule, dim)?;
            let config = McConfig {
                n_samples: samples,
                sigma,
                mu,
                eps_scale: eps.unwrap_or(0.1 * sigma),
                seed,
                distribution: distribution.parse::<ComponentDistribution>()?,
            };
            let report = mc::estimate_gap(&sched, m, &config)?;
            let rendered = VerifyOutput {
                schedule: &schedule,
                d: sched.d(),
                m,
                report,
                config,
            };
            let mut w = open_output(&out)?;
            match out.format.unwrap_or(Format::Json) {
                Format::Json => write_json(&mut w, &rendered)?,
                Format::Csv => {
                    writeln!(w, "schedule,d,m,gap_hat,stderr,theory,z")?;
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        schedule,
                        sched.d(),
                        m,
                        fmt_g17(report.gap_hat),
                        fmt_g17(report.stderr),
                        fmt_g17(report.theory),
                        fmt_g17(report.z)
                    )?;
                }
            }
            w.flush()?;
        }
        Command::Ood {
            train_schedule,
            train_len,
            new_schedule,
            new_len,
            dim,
            out,
        } => {
            let train = build_schedule(&train_schedule, dim)?;
            let new = build_schedule(&new_schedule, dim)?;
            let r = ood::ood_report(&train, train_len, &new, new_len)?;
            let mut w = open_output(&out)?;
            match out.format.unwrap_or(Format::Csv) {
                Format::Csv => r.write_csv(&mut w)?,
                Format::Json => write_json(&mut w, &r)?,
            }
            w.flush()?;
        }
        Command::Table2 {
            dim,
            k_convention,
            tol,
            strategy,
            out,
        } => {
            let opts = BoundOptions {
                tol_rel: tol,
                strategy: strategy.parse::<SearchStrategy>()?,
                ..Default::default()
            };
            let mut rows = Vec::new();
            for &unit in k_convention.units() {
                rows.extend(bounds::table2(dim, unit, &opts)?);
            }
            let mut w = open_output(&out)?;
            match out.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    writeln!(w, "context_length,base_lower_bound")?;
                    for row in &rows {
                        writeln!(
                            w,
                            "{},{}",
                            row.context_length,
                            fmt_g17(row.base_lower_bound)
                        )?;
                    }
                }
                Format::Json => write_json(&mut w, &rows)?,
            }
            w.flush()?;
        }
        Command::CompareMethods {
            ranges,
            k_convention,
            train_len,
            finetune_len,
            out,
        } => {
            let unit = k_convention.single_unit()?;
            let ends = ranges
                .split(',')
                .map(|r| parse_length(r, unit))
                .collect::<Result<Vec<u64>>>()?;
            let mut windows: Vec<(u64, u64)> = ends.iter().map(|&r| (1, r)).collect();
            windows.extend(ends.windows(2).map(|p| (p[0], p[1])));

            let pretrained = ThetaSchedule::standard(1e4, 128)?;
            let methods = [
                ("method1", ThetaSchedule::method1(128)?),
                ("method2", ThetaSchedule::method2(128)?),
            ];
            let mut rows = Vec::new();
            for (name, sched) in &methods {
                let ood = ood::ood_report(&pretrained, train_len, sched, finetune_len)?.any_ood;
                for &(lo, hi) in &windows {
                    rows.push(MethodRow {
                        method: name,
                        ood,
                        range_lo: lo,
                        range_hi: hi,
                        violations: decay::violation_count(sched, lo, hi)?,
                    });
                }
            }
            let mut w = open_output(&out)?;
            match out.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    writeln!(w, "method,ood,range_lo,range_hi,violations")?;
                    for r in &rows {
                        writeln!(
                            w,
                            "{},{},{},{},{}",
                            r.method, r.ood, r.range_lo, r.range_hi, r.violations
                        )?;
                    }
                }
                Format::Json => write_json(&mut w, &rows)?,
            }
            w.flush()?;
        }
    }
    Ok(())
}
