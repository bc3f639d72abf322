//! Exhaustive maximization of ℓ over all `≤ k`-piece signals whose levels lie
//! on a finite grid.

use rayon::prelude::*;

use super::NetSpec;
use crate::error::{Error, Result};
use crate::likelihood::log_likelihood_values;
use crate::model::{Bounds, ModelInstance, ObservationSet, Signal};

pub const DEFAULT_CANDIDATE_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct NetOutcome {
    pub signal: Signal,
    pub log_likelihood: f64,
    pub candidates_evaluated: u128,
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// `Σ_{p=1}^{min(k,n)} C(n−1, p−1) · g^p`, counting sequences with equal
/// adjacent levels once per partition that produces them. Saturates.
pub fn count_net_candidates(n: usize, k: usize, grid_size: usize) -> u128 {
    let g = grid_size as u128;
    (1..=k.min(n))
        .map(|p| binomial(n as u128 - 1, p as u128 - 1).saturating_mul(g.saturating_pow(p as u32)))
        .fold(0u128, |a, b| a.saturating_add(b))
}

/// All increasing `(p−1)`-subsets of `{1..n−1}` in lexicographic order,
/// each completed with the final end `n`.
fn partitions(n: usize, pieces: usize) -> Vec<Vec<usize>> {
    fn rec(from: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            let mut ends = cur.clone();
            ends.push(n);
            out.push(ends);
            return;
        }
        for b in from..=n - left {
            cur.push(b);
            rec(b + 1, n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, pieces - 1, &mut Vec::new(), &mut out);
    out
}

#[derive(Clone)]
struct Best {
    value: f64,
    values: Vec<f64>,
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let a_wins = a.value > b.value
                || (a.value == b.value
                    && a.values
                        .iter()
                        .zip(&b.values)
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .is_some_and(|o| o.is_lt()));
            Some(if a_wins { a } else { b })
        }
    }
}

fn best_on_partition(ends: &[usize], grid: &[f64], instance: &ModelInstance, obs: &ObservationSet) -> Option<Best> {
    let pieces = ends.len();
    let g = grid.len();
    let mut idx = vec![0usize; pieces];
    let mut values = vec![0.0; instance.n];
    let mut best = None;
    loop {
        let mut start = 0;
        for (&end, &i) in ends.iter().zip(&idx) {
            values[start..end].fill(grid[i]);
            start = end;
        }
        if let Ok(v) = log_likelihood_values(&values, instance, obs) {
            best = better(
                best,
                Some(Best {
                    value: v,
                    values: values.clone(),
                }),
            );
        }
        // Odometer over level indices, last piece fastest.
        let mut pos = pieces;
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < g {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// [`mle_net_search_with_cap`] with [`DEFAULT_CANDIDATE_CAP`].
pub fn mle_net_search(instance: &ModelInstance, obs: &ObservationSet, net: &NetSpec) -> Result<NetOutcome> {
    mle_net_search_with_cap(instance, obs, net, DEFAULT_CANDIDATE_CAP)
}

/// ℓ-maximizer over the grid signals; ties go to the lexicographically
/// smallest value sequence. Candidates whose covariance fails to factor are
/// skipped.
pub fn mle_net_search_with_cap(
    instance: &ModelInstance,
    obs: &ObservationSet,
    net: &NetSpec,
    cap: u128,
) -> Result<NetOutcome> {
    net.validate()?;
    instance.check_observations(obs)?;
    let n = instance.n;
    let k = net.max_pieces.min(n);
    let count = count_net_candidates(n, k, net.level_grid.len());
    if count > cap {
        return Err(Error::SearchSpaceTooLarge { count, cap });
    }
    let all: Vec<Vec<usize>> = (1..=k).flat_map(|p| partitions(n, p)).collect();
    let best = all
        .par_iter()
        .map(|ends| best_on_partition(ends, &net.level_grid, instance, obs))
        .reduce(|| None, better)
        .ok_or(Error::NotPositiveDefinite { look: 0 })?;
    let bounds = Bounds {
        x_min: net.x_min(),
        x_max: net.x_max(),
    };
    Ok(NetOutcome {
        signal: Signal::new(best.values, bounds, Some(net.max_pieces))?,
        log_likelihood: best.value,
        candidates_evaluated: count,
    })
}
