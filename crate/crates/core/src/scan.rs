//! Dense scans of `B_m = Σ cos(m θ_i)` over integer ranges of `m`.
//!
//! Scans step the phasors `e^{i m θ_l}` by complex multiplication instead of
//! calling `cos` for every term. Phases are recomputed directly at the start
//! of every block of [`RESYNC_STEPS`] steps, so the accumulated rounding error
//! stays far below [`GUARD_BAND`]. Any fast value inside the guard band is
//! re-evaluated on the reference path before its sign is trusted, which makes
//! every decision here identical to the one [`crate::decay::b_value`] would make.

use rayon::prelude::*;

use crate::decay::b_value_thetas;

/// Steps between direct re-evaluation of the phasors.
pub const RESYNC_STEPS: u64 = 4096;

/// Fast-path values below this are re-checked on the reference path.
pub const GUARD_BAND: f64 = 1e-6;

/// Ranges at least this long are split across the rayon pool.
const PARALLEL_BLOCK: u64 = 1 << 16;

const LANES: usize = 8;

/// Phasor state for one resynchronized block.
struct Phasors {
    re: Vec<f64>,
    im: Vec<f64>,
    step_re: Vec<f64>,
    step_im: Vec<f64>,
}

impl Phasors {
    fn new(thetas: &[f64]) -> Self {
        let n = thetas.len().div_ceil(LANES) * LANES;
        // Padding lanes carry zero phasors so they never contribute to sums.
        let mut step_re = vec![1.0; n];
        let mut step_im = vec![0.0; n];
        for (l, &th) in thetas.iter().enumerate() {
            let (s, c) = th.sin_cos();
            step_re[l] = c;
            step_im[l] = s;
        }
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
            step_re,
            step_im,
        }
    }

    fn sync(&mut self, thetas: &[f64], m: u64) {
        let mf = m as f64;
        for (l, &th) in thetas.iter().enumerate() {
            let (s, c) = (mf * th).sin_cos();
            self.re[l] = c;
            self.im[l] = s;
        }
    }

    #[inline]
    fn sum(&self) -> f64 {
        let mut acc = [0.0; LANES];
        for chunk in self.re.chunks_exact(LANES) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        acc.iter().sum()
    }

    #[inline]
    fn advance(&mut self) {
        for l in 0..self.re.len() {
            let (r, i) = (self.re[l], self.im[l]);
            let (c, s) = (self.step_re[l], self.step_im[l]);
            self.re[l] = r * c - i * s;
            self.im[l] = r * s + i * c;
        }
    }
}

/// Visit every `m` in `[lo, hi]` with a fast estimate of `B_m`. The visitor
/// returns `false` to stop early.
fn for_each_fast(thetas: &[f64], lo: u64, hi: u64, mut visit: impl FnMut(u64, f64) -> bool) {
    if lo > hi {
        return;
    }
    let mut ph = Phasors::new(thetas);
    let mut block_start = lo;
    loop {
        let block_end = hi.min(block_start.saturating_add(RESYNC_STEPS - 1));
        ph.sync(thetas, block_start);
        let mut m = block_start;
        loop {
            if !visit(m, ph.sum()) {
                return;
            }
            if m == block_end {
                break;
            }
            ph.advance();
            m += 1;
        }
        if block_end == hi {
            return;
        }
        block_start = block_end + 1;
    }
}

/// Fast estimates of `B_m` for `m` in `[lo, hi]`, in order.
pub fn fast_values(thetas: &[f64], lo: u64, hi: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(hi.saturating_sub(lo).saturating_add(1) as usize);
    for_each_fast(thetas, lo, hi, |_, b| {
        out.push(b);
        true
    });
    out
}

fn is_negative(thetas: &[f64], m: u64, fast: f64) -> bool {
    if fast >= GUARD_BAND {
        false
    } else {
        b_value_thetas(thetas, m as f64) < 0.0
    }
}

/// Smallest `m` in `[lo, hi]` with `B_m < 0`, scanned sequentially.
pub fn first_negative_serial(thetas: &[f64], lo: u64, hi: u64) -> Option<u64> {
    let mut found = None;
    for_each_fast(thetas, lo, hi, |m, b| {
        if is_negative(thetas, m, b) {
            found = Some(m);
            false
        } else {
            true
        }
    });
    found
}

/// Smallest `m` in `[lo, hi]` with `B_m < 0`.
///
/// Long ranges are split into blocks scanned concurrently; the earliest
/// block with a violation wins, so the answer does not depend on the number
/// of workers.
pub fn first_negative(thetas: &[f64], lo: u64, hi: u64) -> Option<u64> {
    if lo > hi {
        return None;
    }
    let len = hi - lo + 1;
    if len < 2 * PARALLEL_BLOCK {
        return first_negative_serial(thetas, lo, hi);
    }
    // The leading block is cheap to check alone and usually decides things.
    if let Some(m) = first_negative_serial(thetas, lo, lo + PARALLEL_BLOCK - 1) {
        return Some(m);
    }
    let start = lo + PARALLEL_BLOCK;
    let blocks = (hi - start) / PARALLEL_BLOCK + 1;
    (0..blocks).into_par_iter().find_map_first(|b| {
        let a = start + b * PARALLEL_BLOCK;
        let z = hi.min(a + PARALLEL_BLOCK - 1);
        first_negative_serial(thetas, a, z)
    })
}

/// Number of `m` in `[lo, hi]` with `B_m < 0`.
pub fn count_negative(thetas: &[f64], lo: u64, hi: u64) -> u64 {
    if lo > hi {
        return 0;
    }
    let blocks = (hi - lo) / PARALLEL_BLOCK + 1;
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let a = lo + b * PARALLEL_BLOCK;
            let z = hi.min(a + PARALLEL_BLOCK - 1);
            let mut n = 0;
            for_each_fast(thetas, a, z, |m, v| {
                n += u64::from(is_negative(thetas, m, v));
                true
            });
            n
        })
        .sum()
}
