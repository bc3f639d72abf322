//! Exact least-squares projection onto piecewise-constant signals with at
//! most `k` pieces and levels in a box.
//!
//! Dynamic program over segment boundaries. The per-segment level is the
//! box-clamped (weighted) mean, which is the exact 1-D constrained minimizer
//! of a convex quadratic, so the DP stays exact under the box. Among optimal
//! solutions the lexicographically smallest value sequence is returned.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{Bounds, Signal};

struct Prefix {
    w: Vec<f64>,
    wv: Vec<f64>,
    wv2: Vec<f64>,
}

impl Prefix {
    /// Level of `[start, end)` summed directly, so a constant segment keeps
    /// its value bit-for-bit.
    fn exact_level(v: &[f64], weights: Option<&[f64]>, start: usize, end: usize, bounds: &Bounds) -> f64 {
        let seg = &v[start..end];
        if seg.iter().all(|&x| x == seg[0]) {
            return bounds.clamp(seg[0]);
        }
        let (mut w, mut wv) = (0.0, 0.0);
        for i in start..end {
            let wi = weights.map_or(1.0, |w| w[i]);
            w += wi;
            wv += wi * v[i];
        }
        if w > 0.0 {
            bounds.clamp(wv / w)
        } else {
            bounds.midpoint()
        }
    }

    fn new(v: &[f64], weights: Option<&[f64]>) -> Self {
        let n = v.len();
        let mut p = Prefix {
            w: vec![0.0; n + 1],
            wv: vec![0.0; n + 1],
            wv2: vec![0.0; n + 1],
        };
        for i in 0..n {
            let wi = weights.map_or(1.0, |w| w[i]);
            p.w[i + 1] = p.w[i] + wi;
            p.wv[i + 1] = p.wv[i] + wi * v[i];
            p.wv2[i + 1] = p.wv2[i] + wi * v[i] * v[i];
        }
        p
    }

    /// Clamped level and weighted SSE of segment `[start, end)`.
    fn segment(&self, start: usize, end: usize, bounds: &Bounds) -> (f64, f64) {
        let w = self.w[end] - self.w[start];
        let wv = self.wv[end] - self.wv[start];
        let wv2 = self.wv2[end] - self.wv2[start];
        let level = if w > 0.0 {
            bounds.clamp(wv / w)
        } else {
            bounds.midpoint()
        };
        let cost = (wv2 - 2.0 * level * wv + level * level * w).max(0.0);
        (level, cost)
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Result of a projection: the signal values, its segment ends and the
/// (weighted) residual sum of squares.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    pub values: Vec<f64>,
    /// Exclusive end index of each segment; the last entry is `n`.
    pub segment_ends: Vec<usize>,
    pub residual: f64,
}

/// Core DP. `weights`, when present, must be positive.
pub(crate) fn fit_segments(v: &[f64], weights: Option<&[f64]>, k: usize, bounds: &Bounds) -> SegmentFit {
    let n = v.len();
    let prefix = Prefix::new(v, weights);
    let scale = prefix.wv2[n].abs().max(1.0);
    let tol = 1e-10 * scale;

    // best[p][i]: minimal cost of covering [i, n) with at most p pieces.
    let mut best = vec![vec![f64::INFINITY; n + 1]; k + 1];
    let mut choice = vec![vec![n; n + 1]; k + 1];
    best[0][n] = 0.0;

    let materialize = |choice: &Vec<Vec<usize>>, mut start: usize, mut p: usize, out: &mut Vec<f64>| {
        while start < n {
            let end = choice[p][start];
            let level = Prefix::exact_level(v, weights, start, end, bounds);
            out.extend(std::iter::repeat_n(level, end - start));
            start = end;
            p -= 1;
        }
    };

    for p in 1..=k {
        best[p][n] = 0.0;
        for i in (0..n).rev() {
            let mut totals = Vec::with_capacity(n - i);
            let mut min_total = f64::INFINITY;
            for e in (i + 1)..=n {
                let rest = best[p - 1][e];
                if !rest.is_finite() {
                    totals.push(f64::INFINITY);
                    continue;
                }
                let total = prefix.segment(i, e, bounds).1 + rest;
                min_total = min_total.min(total);
                totals.push(total);
            }
            if !min_total.is_finite() {
                continue;
            }
            let tied: Vec<usize> = totals
                .iter()
                .enumerate()
                .filter(|(_, &t)| t <= min_total + tol)
                .map(|(off, _)| i + 1 + off)
                .collect();
            let chosen = if tied.len() == 1 {
                tied[0]
            } else {
                let mut best_e = tied[0];
                let mut best_seq: Option<Vec<f64>> = None;
                for &e in &tied {
                    let level = Prefix::exact_level(v, weights, i, e, bounds);
                    let mut seq = vec![level; e - i];
                    materialize(&choice, e, p - 1, &mut seq);
                    let better = match &best_seq {
                        None => true,
                        Some(b) => lex_cmp(&seq, b) == Ordering::Less,
                    };
                    if better {
                        best_e = e;
                        best_seq = Some(seq);
                    }
                }
                best_e
            };
            best[p][i] = min_total;
            choice[p][i] = chosen;
        }
    }

    let mut values = Vec::with_capacity(n);
    materialize(&choice, 0, k, &mut values);
    let mut segment_ends = Vec::new();
    let (mut start, mut p) = (0, k);
    while start < n {
        start = choice[p][start];
        segment_ends.push(start);
        p -= 1;
    }
    SegmentFit {
        values,
        segment_ends,
        residual: best[k][0],
    }
}

fn check_inputs(v: &[f64], k: usize) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidDims("cannot project an empty vector".into()));
    }
    if k == 0 || k > v.len() {
        return Err(Error::InvalidDims(format!(
            "need 1 <= k <= n, got k={k}, n={}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("vector has non-finite entries".into()));
    }
    Ok(())
}

/// Projection together with its residual sum of squares.
pub fn project_with_residual(v: &[f64], k: usize, x_min: f64, x_max: f64) -> Result<(Signal, f64)> {
    let bounds = Bounds::new(x_min, x_max)?;
    check_inputs(v, k)?;
    let fit = fit_segments(v, None, k, &bounds);
    Ok((Signal::new(fit.values, bounds, Some(k))?, fit.residual))
}

/// The `≤ k`-piece signal in the box closest to `v` in Euclidean norm.
pub fn project_piecewise_constant(v: &[f64], k: usize, x_min: f64, x_max: f64) -> Result<Signal> {
    project_with_residual(v, k, x_min, x_max).map(|(s, _)| s)
}
