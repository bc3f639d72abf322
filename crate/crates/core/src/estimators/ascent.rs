//! Multi-start projected ascent on ℓ.
//!
//! Each restart takes curvature-scaled ascent steps (diagonal Fisher
//! scoring) with box clamping and Armijo backtracking, and projects onto the
//! k-piece class every `project_every` iterations. The best feasible point is
//! then polished: Fisher scoring on the levels of its partition alternating
//! with single-sample breakpoint moves.
//!
//! The objective is divided by the number of looks internally, so an
//! instance whose looks are exact duplicates follows the same path as its
//! single-look counterpart.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use super::levels::LevelModel;
use super::projection::fit_segments;
use super::{NetSpec, OptimizerConfig};
use crate::error::{Error, Result};
use crate::likelihood::{checked_cholesky, evaluate_values, log_likelihood_values, Evaluation};
use crate::model::{Bounds, ModelInstance, ObservationSet, Signal};

/// Estimate returned by the ascent estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome {
    pub signal: Signal,
    pub log_likelihood: f64,
    /// Norm of the box-projected gradient of ℓ at `signal`.
    pub gradient_norm: f64,
    /// Ascent iterations summed over restarts.
    pub iterations: usize,
}

struct Objective<'a> {
    instance: &'a ModelInstance,
    obs: &'a ObservationSet,
    scale: f64,
}

impl<'a> Objective<'a> {
    fn new(instance: &'a ModelInstance, obs: &'a ObservationSet) -> Self {
        Self {
            instance,
            obs,
            scale: 1.0 / instance.looks() as f64,
        }
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(log_likelihood_values(x, self.instance, self.obs)? * self.scale)
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let mut e = evaluate_values(x, self.instance, self.obs)?;
        e.value *= self.scale;
        e.gradient.iter_mut().for_each(|g| *g *= self.scale);
        e.curvature.iter_mut().for_each(|c| *c *= self.scale);
        Ok(e)
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    values: Vec<f64>,
    value: f64,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Higher value first, then the lexicographically smaller sequence.
fn beats(value: f64, values: &[f64], other: &Candidate) -> bool {
    value > other.value || (value == other.value && lex_cmp(values, &other.values) == Ordering::Less)
}

fn keep_best(best: &mut Option<Candidate>, values: Vec<f64>, value: f64) {
    if best.as_ref().is_none_or(|b| beats(value, &values, b)) {
        *best = Some(Candidate { values, value });
    }
}

fn segment_ends(values: &[f64]) -> Vec<usize> {
    let mut ends: Vec<usize> = (1..values.len()).filter(|&i| values[i] != values[i - 1]).collect();
    ends.push(values.len());
    ends
}

fn expand(ends: &[usize], levels: &[f64]) -> Vec<f64> {
    let mut values = Vec::with_capacity(*ends.last().unwrap_or(&0));
    let mut start = 0;
    for (&end, &c) in ends.iter().zip(levels) {
        values.extend(std::iter::repeat_n(c, end - start));
        start = end;
    }
    values
}

fn project(x: &[f64], k: usize, bounds: &Bounds) -> Vec<f64> {
    fit_segments(x, None, k, bounds).values
}

fn check_problem(instance: &ModelInstance, obs: &ObservationSet, k: usize, cfg: &OptimizerConfig) -> Result<()> {
    instance.check_observations(obs)?;
    cfg.validate()?;
    if k == 0 || k > instance.n {
        return Err(Error::InvalidDims(format!("need 1 <= k <= n, got k={k}, n={}", instance.n)));
    }
    Ok(())
}

/// Method-of-moments start: solve `G θ = s̄` for the squared amplitudes with
/// `G_ji = mean_l (a_jᵀ a_i)²` and `s̄_j = mean_l [(a_jᵀ y_l)² − σ² ‖a_j‖²]`,
/// clamp θ to the squared box and project `√θ` onto the class.
pub fn moment_initializer(
    instance: &ModelInstance,
    obs: &ObservationSet,
    k: usize,
    x_min: f64,
    x_max: f64,
) -> Result<Signal> {
    let bounds = Bounds::new(x_min, x_max)?;
    instance.check_observations(obs)?;
    if k == 0 || k > instance.n {
        return Err(Error::InvalidDims(format!("need 1 <= k <= n, got k={k}, n={}", instance.n)));
    }
    let values = moment_values(instance, obs, k, &bounds);
    Signal::new(values, bounds, Some(k))
}

fn moment_values(instance: &ModelInstance, obs: &ObservationSet, k: usize, bounds: &Bounds) -> Vec<f64> {
    let n = instance.n;
    let s2 = instance.sigma_z * instance.sigma_z;
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut s = DVector::<f64>::zeros(n);
    let mut last: Option<&DMatrix<f64>> = None;
    let mut gram_sq = DMatrix::<f64>::zeros(n, n);
    for (a, y) in instance.operators.iter().zip(&obs.looks) {
        if last != Some(a) {
            gram_sq = a.tr_mul(a).map(|v| v * v);
            last = Some(a);
        }
        g += &gram_sq;
        let r = a.tr_mul(y);
        for j in 0..n {
            s[j] += r[j] * r[j] - s2 * gram_sq[(j, j)].sqrt();
        }
    }
    let ridge = 1e-8 * g.trace() / n as f64;
    for j in 0..n {
        g[(j, j)] += ridge;
    }
    let lo = bounds.x_min * bounds.x_min;
    let hi = bounds.x_max * bounds.x_max;
    let raw: Vec<f64> = match checked_cholesky(g) {
        Some(ch) => ch.solve(&s).iter().map(|t| t.clamp(lo, hi).sqrt()).collect(),
        None => vec![bounds.midpoint(); n],
    };
    project(&raw, k, bounds)
}

/// One restart of the projected ascent. Returns the best feasible point it
/// visits and its iteration count.
fn ascend(
    obj: &Objective,
    start: Vec<f64>,
    k: usize,
    bounds: &Bounds,
    cfg: &OptimizerConfig,
) -> Result<(Candidate, usize)> {
    let mut best = None;
    let mut x: Vec<f64> = start.iter().map(|&v| bounds.clamp(v)).collect();
    let feasible = project(&x, k, bounds);
    if let Ok(v) = obj.value(&feasible) {
        keep_best(&mut best, feasible, v);
    }
    let mut eval = obj.evaluate(&x)?;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        let max_curv = eval.curvature.iter().copied().fold(0.0, f64::max);
        let floor = (1e-12 * max_curv).max(f64::MIN_POSITIVE);
        let direction: Vec<f64> = eval
            .gradient
            .iter()
            .zip(&eval.curvature)
            .map(|(g, c)| g / (c + floor))
            .collect();
        let full_move = x
            .iter()
            .zip(&direction)
            .map(|(xi, di)| (bounds.clamp(xi + cfg.step_init * di) - xi).abs())
            .fold(0.0, f64::max);
        if full_move < cfg.tol_grad {
            break;
        }

        let mut step = cfg.step_init;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&direction)
                .map(|(xi, di)| bounds.clamp(xi + step * di))
                .collect();
            let ascent: f64 = eval.gradient.iter().zip(trial.iter().zip(&x)).map(|(g, (t, xi))| g * (t - xi)).sum();
            if let Ok(v) = obj.value(&trial) {
                if v >= eval.value + 1e-4 * ascent {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= cfg.step_shrink;
        }
        let Some(trial) = accepted else { break };
        x = trial;
        let projected = it % cfg.project_every == 0;
        if projected {
            x = project(&x, k, bounds);
        }
        eval = obj.evaluate(&x)?;
        if projected {
            keep_best(&mut best, x.clone(), eval.value);
        }
    }
    let feasible = project(&x, k, bounds);
    if let Ok(v) = obj.value(&feasible) {
        keep_best(&mut best, feasible, v);
    }
    let best = best.ok_or(Error::NotPositiveDefinite { look: 0 })?;
    Ok((best, iterations))
}

/// Alternate Fisher scoring of the levels with exhaustive scans of each
/// boundary position, accepting only strict improvements of ℓ.
/// Scoring step in the full space followed by the curvature-weighted
/// projection onto the class, with backtracking. Can relocate pieces.
fn projected_scoring_step(obj: &Objective, cand: &mut Candidate, k: usize, bounds: &Bounds, cfg: &OptimizerConfig) -> bool {
    let Ok(eval) = obj.evaluate(&cand.values) else { return false };
    let max_curv = eval.curvature.iter().copied().fold(0.0, f64::max);
    let floor = (1e-12 * max_curv).max(f64::MIN_POSITIVE);
    let weights: Vec<f64> = eval.curvature.iter().map(|c| c + floor).collect();
    let mut step = cfg.step_init;
    for _ in 0..8 {
        let target: Vec<f64> = cand
            .values
            .iter()
            .zip(eval.gradient.iter().zip(&weights))
            .map(|(x, (g, w))| x + step * g / w)
            .collect();
        let values = fit_segments(&target, Some(&weights), k, bounds).values;
        if let Ok(v) = obj.value(&values) {
            if v > cand.value {
                *cand = Candidate { values, value: v };
                return true;
            }
        }
        step *= cfg.step_shrink;
    }
    false
}

fn polish(obj: &Objective, mut cand: Candidate, k: usize, bounds: &Bounds, cfg: &OptimizerConfig) -> Candidate {
    for _ in 0..cfg.max_iters {
        let mut improved = projected_scoring_step(obj, &mut cand, k, bounds, cfg);
        let mut ends = segment_ends(&cand.values);
        let levels: Vec<f64> = ends.iter().map(|&e| cand.values[e - 1]).collect();
        let model = LevelModel::new(obj.instance, obj.obs, &ends);
        let mut levels = match model.maximize(&levels, bounds, cfg.max_iters, cfg.step_shrink, cfg.tol_grad) {
            Ok(fitted) => fitted,
            Err(_) => levels,
        };
        let values = expand(&ends, &levels);
        if let Ok(v) = obj.value(&values) {
            if v > cand.value {
                cand = Candidate { values, value: v };
                improved = true;
            }
        }
        levels = ends.iter().map(|&e| cand.values[e - 1]).collect();
        for s in 0..ends.len().saturating_sub(1) {
            let model = LevelModel::new(obj.instance, obj.obs, &ends);
            let Some((pos, _)) = model.scan_boundary(&ends, &levels, s) else { continue };
            if pos == ends[s] {
                continue;
            }
            let mut trial_ends = ends.clone();
            trial_ends[s] = pos;
            let values = expand(&trial_ends, &levels);
            if let Ok(v) = obj.value(&values) {
                if v > cand.value {
                    cand = Candidate { values, value: v };
                    ends = trial_ends;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    cand
}

fn projected_gradient_norm(x: &[f64], gradient: &[f64], bounds: &Bounds) -> f64 {
    x.iter()
        .zip(gradient)
        .map(|(&xi, &g)| {
            let blocked = (xi <= bounds.x_min && g < 0.0) || (xi >= bounds.x_max && g > 0.0);
            if blocked {
                0.0
            } else {
                g * g
            }
        })
        .sum::<f64>()
        .sqrt()
}

/// Starting points: the moment initializer, then constant signals at evenly
/// spaced levels inside the box.
fn starts(instance: &ModelInstance, obs: &ObservationSet, k: usize, bounds: &Bounds, restarts: usize) -> Vec<Vec<f64>> {
    let n = instance.n;
    let mut out = vec![moment_values(instance, obs, k, bounds)];
    for r in 1..restarts {
        let t = r as f64 / restarts as f64;
        out.push(vec![bounds.x_min + t * (bounds.x_max - bounds.x_min); n]);
    }
    out
}

fn run_restarts(
    obj: &Objective,
    k: usize,
    bounds: &Bounds,
    cfg: &OptimizerConfig,
) -> Result<(Vec<Candidate>, usize)> {
    let mut found = Vec::new();
    let mut iterations = 0;
    let mut first_err = None;
    for start in starts(obj.instance, obj.obs, k, bounds, cfg.restarts) {
        match ascend(obj, start, k, bounds, cfg) {
            Ok((cand, it)) => {
                found.push(cand);
                iterations += it;
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if found.is_empty() {
        return Err(first_err.unwrap_or(Error::NotPositiveDefinite { look: 0 }));
    }
    Ok((found, iterations))
}

fn finish(
    obj: &Objective,
    best: Candidate,
    bounds: Bounds,
    k: usize,
    iterations: usize,
) -> Result<AscentOutcome> {
    let eval = evaluate_values(&best.values, obj.instance, obj.obs)?;
    let gradient_norm = projected_gradient_norm(&best.values, &eval.gradient, &bounds);
    Ok(AscentOutcome {
        signal: Signal::new(best.values, bounds, Some(k))?,
        log_likelihood: eval.value,
        gradient_norm,
        iterations,
    })
}

/// Approximate maximizer of ℓ over signals with at most `k` pieces and
/// levels in `[x_min, x_max]`.
pub fn mle_projected_ascent(
    instance: &ModelInstance,
    obs: &ObservationSet,
    k: usize,
    x_min: f64,
    x_max: f64,
    cfg: &OptimizerConfig,
) -> Result<AscentOutcome> {
    let bounds = Bounds::new(x_min, x_max)?;
    check_problem(instance, obs, k, cfg)?;
    let obj = Objective::new(instance, obs);
    let (found, iterations) = run_restarts(&obj, k, &bounds, cfg)?;
    let mut best: Option<Candidate> = None;
    for cand in found {
        let cand = polish(&obj, cand, k, &bounds, cfg);
        keep_best(&mut best, cand.values, cand.value);
    }
    finish(&obj, best.expect("at least one restart"), bounds, k, iterations)
}

/// Segments as `(ends, level indices)` on a finite grid.
#[derive(Clone)]
struct GridPoint {
    ends: Vec<usize>,
    idx: Vec<usize>,
}

impl GridPoint {
    fn snap(values: &[f64], grid: &[f64]) -> Self {
        let ends = segment_ends(values);
        let idx = ends
            .iter()
            .map(|&e| {
                let v = values[e - 1];
                (0..grid.len())
                    .min_by(|&a, &b| (grid[a] - v).abs().total_cmp(&(grid[b] - v).abs()))
                    .expect("grid nonempty")
            })
            .collect();
        Self { ends, idx }.canonical()
    }

    /// Merge neighbours that share a level.
    fn canonical(self) -> Self {
        let mut ends: Vec<usize> = Vec::new();
        let mut idx: Vec<usize> = Vec::new();
        for (&e, &g) in self.ends.iter().zip(&self.idx) {
            if idx.last() == Some(&g) {
                *ends.last_mut().unwrap() = e;
            } else {
                ends.push(e);
                idx.push(g);
            }
        }
        Self { ends, idx }
    }

    fn values(&self, grid: &[f64]) -> Vec<f64> {
        let levels: Vec<f64> = self.idx.iter().map(|&i| grid[i]).collect();
        expand(&self.ends, &levels)
    }

    fn start(&self, s: usize) -> usize {
        if s == 0 {
            0
        } else {
            self.ends[s - 1]
        }
    }

    fn neighbours(&self, k: usize, g: usize) -> Vec<GridPoint> {
        let pieces = self.ends.len();
        let mut out = Vec::new();
        for s in 0..pieces {
            for level in (0..g).filter(|&l| l != self.idx[s]) {
                let mut p = self.clone();
                p.idx[s] = level;
                out.push(p.canonical());
            }
        }
        for s in 0..pieces.saturating_sub(1) {
            for pos in self.start(s) + 1..self.ends[s + 1] {
                if pos != self.ends[s] {
                    let mut p = self.clone();
                    p.ends[s] = pos;
                    out.push(p);
                }
            }
            for keep in [self.idx[s], self.idx[s + 1]] {
                let mut p = self.clone();
                p.ends.remove(s);
                p.idx[s] = keep;
                p.idx.remove(s + 1);
                out.push(p.canonical());
            }
        }
        if pieces < k {
            for s in 0..pieces {
                for cut in self.start(s) + 1..self.ends[s] {
                    for level in (0..g).filter(|&l| l != self.idx[s]) {
                        let mut right = self.clone();
                        right.ends.insert(s, cut);
                        right.idx.insert(s + 1, level);
                        out.push(right);
                        let mut left = self.clone();
                        left.ends.insert(s, cut);
                        left.idx.insert(s, level);
                        out.push(left);
                    }
                }
            }
        }
        out
    }
}

/// Best-improvement local search over grid-valued signals.
fn grid_search(obj: &Objective, start: GridPoint, grid: &[f64], k: usize) -> Option<Candidate> {
    let mut point = start;
    let mut current = {
        let values = point.values(grid);
        let value = obj.value(&values).ok()?;
        Candidate { values, value }
    };
    loop {
        let mut best: Option<(GridPoint, Candidate)> = None;
        for p in point.neighbours(k, grid.len()) {
            let values = p.values(grid);
            let Ok(v) = obj.value(&values) else { continue };
            let improves = best.as_ref().map_or(beats(v, &values, &current), |(_, b)| beats(v, &values, b));
            if improves {
                best = Some((p, Candidate { values, value: v }));
            }
        }
        match best {
            Some((p, c)) => {
                point = p;
                current = c;
            }
            None => return Some(current),
        }
    }
}

/// The ascent restricted to the levels of `net`: continuous restarts are
/// snapped to the grid and refined by a discrete local search over level
/// changes, breakpoint moves, merges and splits.
pub fn mle_grid_ascent(
    instance: &ModelInstance,
    obs: &ObservationSet,
    net: &NetSpec,
    cfg: &OptimizerConfig,
) -> Result<AscentOutcome> {
    net.validate()?;
    let k = net.max_pieces;
    check_problem(instance, obs, k, cfg)?;
    let grid = &net.level_grid;
    let bounds = Bounds {
        x_min: net.x_min(),
        x_max: net.x_max(),
    };
    let obj = Objective::new(instance, obs);
    let (found, iterations) = run_restarts(&obj, k, &bounds, cfg)?;
    let mut best: Option<Candidate> = None;
    for cand in found {
        if let Some(c) = grid_search(&obj, GridPoint::snap(&cand.values, grid), grid, k) {
            keep_best(&mut best, c.values, c.value);
        }
    }
    let best = best.ok_or(Error::NotPositiveDefinite { look: 0 })?;
    finish(&obj, best, bounds, k, iterations)
}
