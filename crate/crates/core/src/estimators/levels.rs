//! Likelihood restricted to a fixed partition: `x = Σ_s c_s 1_{segment s}`.
//!
//! With `P_{l,s} = A_{l,s} A_{l,s}ᵀ` (columns of segment `s`), the look
//! covariance is `σ² I + Σ_s c_s² P_{l,s}`, so each evaluation costs
//! `O(k m³)` per look instead of `O(m² n)`.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::likelihood::checked_cholesky;
use crate::model::{Bounds, ModelInstance, ObservationSet};

pub(crate) struct LevelModel<'a> {
    instance: &'a ModelInstance,
    obs: &'a ObservationSet,
    sigma_z: f64,
    m: usize,
    /// Runs of consecutive looks sharing one operator, as look ranges.
    groups: Vec<Range<usize>>,
    /// `blocks[g][s] = P_{g,s}` for group `g`.
    blocks: Vec<Vec<DMatrix<f64>>>,
}

impl<'a> LevelModel<'a> {
    /// `segment_ends` are exclusive ends, the last one equal to `n`.
    pub fn new(instance: &'a ModelInstance, obs: &'a ObservationSet, segment_ends: &[usize]) -> Self {
        let mut groups: Vec<Range<usize>> = Vec::new();
        for (l, a) in instance.operators.iter().enumerate() {
            match groups.last_mut() {
                Some(g) if instance.operators[g.start] == *a => g.end = l + 1,
                _ => groups.push(l..l + 1),
            }
        }
        let blocks = groups
            .iter()
            .map(|g| {
                let a = &instance.operators[g.start];
                let mut start = 0;
                segment_ends
                    .iter()
                    .map(|&end| {
                        let cols = a.columns(start, end - start);
                        start = end;
                        cols * cols.transpose()
                    })
                    .collect()
            })
            .collect();
        Self {
            instance,
            obs,
            sigma_z: instance.sigma_z,
            m: instance.m,
            groups,
            blocks,
        }
    }

    fn covariance(&self, group: usize, levels: &[f64]) -> DMatrix<f64> {
        let mut cov = DMatrix::identity(self.m, self.m) * (self.sigma_z * self.sigma_z);
        for (p, &c) in self.blocks[group].iter().zip(levels) {
            cov += p * (c * c);
        }
        cov
    }

    fn factor(&self, group: usize, levels: &[f64]) -> Result<Cholesky<f64, Dyn>> {
        let look = self.groups[group].start;
        checked_cholesky(self.covariance(group, levels)).ok_or(Error::NotPositiveDefinite { look })
    }

    pub fn value(&self, levels: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for g in 0..self.groups.len() {
            let chol = self.factor(g, levels)?;
            let ld = log_det(&chol);
            for y in &self.obs.looks[self.groups[g].clone()] {
                let v = chol.l_dirty().solve_lower_triangular(y).expect("nonzero diagonal");
                total += -ld - v.norm_squared();
            }
        }
        Ok(total)
    }

    /// Value, gradient and expected negative Hessian in the level coordinates.
    fn evaluate(&self, levels: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let k = levels.len();
        let mut value = 0.0;
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for g in 0..self.groups.len() {
            let chol = self.factor(g, levels)?;
            let ld = log_det(&chol);
            let solved: Vec<DMatrix<f64>> = self.blocks[g].iter().map(|p| chol.solve(p)).collect();
            let traces: Vec<f64> = solved.iter().map(|q| q.trace()).collect();
            let mut fisher = DMatrix::zeros(k, k);
            for s in 0..k {
                for t in s..k {
                    // tr(Q_s Q_t) without forming the product.
                    let tr = solved[s].component_mul(&solved[t].transpose()).sum();
                    fisher[(s, t)] = 4.0 * levels[s] * levels[t] * tr;
                    fisher[(t, s)] = fisher[(s, t)];
                }
            }
            for y in &self.obs.looks[self.groups[g].clone()] {
                let v = chol.solve(y);
                value += -ld - y.dot(&v);
                for s in 0..k {
                    let quad = v.dot(&(&self.blocks[g][s] * &v));
                    grad[s] += 2.0 * levels[s] * (quad - traces[s]);
                }
                hess += &fisher;
            }
        }
        Ok((value, grad, hess))
    }

    /// Box-constrained Fisher scoring with Armijo backtracking; returns the levels.
    pub fn maximize(
        &self,
        start: &[f64],
        bounds: &Bounds,
        max_iters: usize,
        step_shrink: f64,
        tol: f64,
    ) -> Result<Vec<f64>> {
        let k = start.len();
        let mut levels: Vec<f64> = start.iter().map(|&c| bounds.clamp(c)).collect();
        for _ in 0..max_iters {
            let (value, grad, hess) = self.evaluate(&levels)?;
            // Coordinates pinned at a bound with the gradient pointing out stay fixed.
            let free: Vec<usize> = (0..k)
                .filter(|&s| {
                    let at_lo = levels[s] <= bounds.x_min && grad[s] <= 0.0;
                    let at_hi = levels[s] >= bounds.x_max && grad[s] >= 0.0;
                    !(at_lo || at_hi)
                })
                .collect();
            if free.is_empty() {
                break;
            }
            let nf = free.len();
            let g = DVector::from_iterator(nf, free.iter().map(|&s| grad[s]));
            let mut h = DMatrix::from_fn(nf, nf, |i, j| hess[(free[i], free[j])]);
            let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
            for i in 0..nf {
                h[(i, i)] += 1e-10 * scale;
            }
            let direction = match checked_cholesky(h) {
                Some(ch) => ch.solve(&g),
                None => g.map(|gi| gi / scale),
            };

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = levels.clone();
                for (i, &s) in free.iter().enumerate() {
                    trial[s] = bounds.clamp(levels[s] + step * direction[i]);
                }
                let ascent: f64 = (0..k).map(|s| grad[s] * (trial[s] - levels[s])).sum();
                if let Ok(tv) = self.value(&trial) {
                    if tv >= value + 1e-4 * ascent && tv >= value {
                        accepted = Some(trial);
                        break;
                    }
                }
                step *= step_shrink;
            }
            let Some(trial) = accepted else { break };
            let moved = trial
                .iter()
                .zip(&levels)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            levels = trial;
            if moved < tol {
                break;
            }
        }
        Ok(levels)
    }

    /// Best position for the boundary between segments `s` and `s + 1`
    /// with all levels held fixed. Moving the boundary by one sample is a
    /// rank-one change of each covariance. Returns `(position, ℓ)`.
    pub fn scan_boundary(&self, segment_ends: &[usize], levels: &[f64], s: usize) -> Option<(usize, f64)> {
        let left_start = if s == 0 { 0 } else { segment_ends[s - 1] };
        let right_end = segment_ends[s + 1];
        let (cl, cr) = (levels[s] * levels[s], levels[s + 1] * levels[s + 1]);
        let positions = left_start + 1..right_end;
        let mut totals = vec![0.0; right_end - left_start - 1];
        for (g, looks) in self.groups.iter().enumerate() {
            let a = &self.instance.operators[looks.start];
            let ys = &self.obs.looks[looks.clone()];
            // Start with the whole span on the right level.
            let mut cov = self.covariance(g, levels);
            let left = a.columns(left_start, segment_ends[s] - left_start);
            cov -= left * left.transpose() * cl;
            cov += left * left.transpose() * cr;
            for (slot, p) in positions.clone().enumerate() {
                let col = a.column(p - 1);
                cov.ger(cl - cr, &col, &col, 1.0);
                match checked_cholesky(cov.clone()) {
                    Some(chol) => {
                        let ld = log_det(&chol);
                        for y in ys {
                            let v = chol.l_dirty().solve_lower_triangular(y).expect("nonzero diagonal");
                            totals[slot] += -ld - v.norm_squared();
                        }
                    }
                    None => totals[slot] = f64::NEG_INFINITY,
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (slot, p) in positions.enumerate() {
            if totals[slot].is_finite() && best.is_none_or(|(_, b)| totals[slot] > b) {
                best = Some((p, totals[slot]));
            }
        }
        best
    }
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
