//! Rotary rotations and attention scores.
//!
//! Vectors are rotated blockwise: the pair `(x_{2i}, x_{2i+1})` is rotated by
//! `m·θ_i`. No rotation matrix is ever materialized.

use crate::error::{Error, Result};
use crate::schedule::ThetaSchedule;

/// A query or key vector of one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadVector(Vec<f64>);

impl HeadVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "head vector entry",
                value: bad,
                reason: "must be finite",
            });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &HeadVector) -> Result<f64> {
        check_len(other.len(), self.len())?;
        Ok(dot(&self.0, &other.0))
    }
}

fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The block rotation `R_{m,θ}` for one relative distance, stored as the
/// per-block cosines and sines.
#[derive(Debug, Clone)]
pub struct Rotation {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Rotation {
    pub fn new(sched: &ThetaSchedule, m: u64) -> Self {
        Self::at(sched, m as f64)
    }

    /// Rotation by a real-valued position offset.
    pub fn at(sched: &ThetaSchedule, t: f64) -> Self {
        let (sin, cos) = sched.thetas().iter().map(|&th| (t * th).sin_cos()).unzip();
        Self { cos, sin }
    }

    /// Dimension `d` this rotation acts on.
    pub fn dim(&self) -> usize {
        2 * self.cos.len()
    }

    /// Write `R x` into `out`. Both slices must have length `d`.
    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let (a, b) = (x[2 * i], x[2 * i + 1]);
            out[2 * i] = a * c - b * s;
            out[2 * i + 1] = a * s + b * c;
        }
    }

    /// `qᵀ R k` without allocating. Both slices must have length `d`.
    pub(crate) fn score_slices(&self, q: &[f64], k: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let (q0, q1) = (q[2 * i], q[2 * i + 1]);
            let (k0, k1) = (k[2 * i], k[2 * i + 1]);
            acc += q0 * (k0 * c - k1 * s) + q1 * (k0 * s + k1 * c);
        }
        acc
    }

    pub fn apply(&self, x: &HeadVector) -> Result<HeadVector> {
        check_len(x.len(), self.dim())?;
        let mut out = vec![0.0; x.len()];
        self.apply_into(x.as_slice(), &mut out);
        Ok(HeadVector(out))
    }

    pub fn score(&self, q: &HeadVector, k: &HeadVector) -> Result<f64> {
        check_len(q.len(), self.dim())?;
        check_len(k.len(), self.dim())?;
        Ok(self.score_slices(q.as_slice(), k.as_slice()))
    }
}

/// Rotate `x` to absolute position `m`.
pub fn rotate(x: &HeadVector, m: u64, sched: &ThetaSchedule) -> Result<HeadVector> {
    check_len(x.len(), sched.d())?;
    Rotation::new(sched, m).apply(x)
}

/// Attention logit `qᵀ R_{m,θ} k` between a query and a key `m` positions later.
pub fn attention_score(
    q: &HeadVector,
    k: &HeadVector,
    m: u64,
    sched: &ThetaSchedule,
) -> Result<f64> {
    check_len(q.len(), sched.d())?;
    check_len(k.len(), sched.d())?;
    Rotation::new(sched, m).score(q, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hv(v: &[f64]) -> HeadVector {
        HeadVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_rotation_is_identity() {
        let s = ThetaSchedule::standard(1e4, 4).unwrap();
        let x = hv(&[0.3, -1.2, 2.0, 0.7]);
        assert_eq!(rotate(&x, 0, &s).unwrap(), x);
    }

    #[test]
    fn planar_unit_rotation() {
        let s = ThetaSchedule::custom(vec![1.0]).unwrap();
        let r = rotate(&hv(&[1.0, 0.0]), 2, &s).unwrap();
        assert_eq!(r.as_slice(), &[2f64.cos(), 2f64.sin()]);
    }

    #[test]
    fn score_at_zero_is_dot_product() {
        let s = ThetaSchedule::standard(1e4, 4).unwrap();
        let q = hv(&[0.3, -1.2, 2.0, 0.7]);
        let k = hv(&[1.1, 0.4, -0.5, 0.9]);
        let score = attention_score(&q, &k, 0, &s).unwrap();
        assert!((score - q.dot(&k).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn unit_score_is_cosine() {
        let s = ThetaSchedule::custom(vec![1.0]).unwrap();
        let e = hv(&[1.0, 0.0]);
        for m in [0u64, 1, 5, 77] {
            let got = attention_score(&e, &e, m, &s).unwrap();
            assert!((got - (m as f64).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn relative_form_matches_absolute_rotations() {
        let s = ThetaSchedule::standard(1e4, 8).unwrap();
        let q = hv(&[0.3, -1.2, 2.0, 0.7, 0.1, 0.2, -0.4, 1.5]);
        let k = hv(&[1.1, 0.4, -0.5, 0.9, -0.8, 0.6, 0.3, -0.2]);
        let m = 37;
        let relative = attention_score(&q, &k, m, &s).unwrap();
        for i in [0u64, 7, 4096] {
            let absolute = rotate(&q, i, &s)
                .unwrap()
                .dot(&rotate(&k, i + m, &s).unwrap())
                .unwrap();
            assert!(
                ((relative - absolute) / relative).abs() < 1e-9,
                "offset {i}"
            );
        }
    }

    #[test]
    fn dimension_mismatch() {
        let s = ThetaSchedule::standard(1e4, 4).unwrap();
        let x = hv(&[1.0, 2.0]);
        assert!(matches!(
            rotate(&x, 1, &s),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 2
            })
        ));
        let q = hv(&[1.0, 2.0, 3.0, 4.0]);
        assert!(attention_score(&q, &x, 1, &s).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(HeadVector::new(vec![1.0, f64::NAN]).is_err());
    }
}
