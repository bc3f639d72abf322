//! Fano lower-bound pipeline: a finite two-level class on `N_div` intervals,
//! a greedily separated subset, pairwise KL, and covering-number utilities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::max_pairwise_kl;
use crate::model::{draw_operators, Bounds, InstanceSpec, ModelInstance, Signal};

/// Largest `2^N_div` enumerated by [`build_finite_class`].
pub const DEFAULT_PATTERN_CAP: u128 = 1 << 24;
/// Largest `r² · L · m³` accepted by [`evaluate_instance_lower_bound`].
pub const DEFAULT_KL_COST_CAP: u128 = 1_000_000_000_000;

/// `max(1, ⌊k/4⌋)`.
pub fn k_prime(k: usize) -> usize {
    (k / 4).max(1)
}

/// Exclusive ends of `N_div` consecutive intervals of `[0, n)` whose sizes
/// differ by at most one; the longer ones come first.
pub fn interval_ends(n: usize, n_div: usize) -> Vec<usize> {
    let base = n / n_div;
    let extra = n % n_div;
    let mut end = 0;
    (0..n_div)
        .map(|i| {
            end += base + usize::from(i < extra);
            end
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedSetSpec {
    pub n: usize,
    pub k: usize,
    pub n_div: usize,
    pub epsilon: f64,
    pub delta_r: f64,
    pub x_bar: f64,
    pub k_prime: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl SeparatedSetSpec {
    pub fn new(n: usize, k: usize, n_div: usize, epsilon: f64, delta_r: f64, x_min: f64, x_max: f64) -> Result<Self> {
        let spec = Self {
            n,
            k,
            n_div,
            epsilon,
            delta_r,
            x_bar: 0.5 * (x_min + x_max),
            k_prime: k_prime(k),
            x_min,
            x_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec whose `δ_r` comes from [`default_delta_r`] at the separated-set
    /// size `r` implied by `(n, k, N_div)`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_default_delta(
        n: usize,
        k: usize,
        n_div: usize,
        epsilon: f64,
        x_min: f64,
        x_max: f64,
        m: usize,
        looks: usize,
        sigma_z: f64,
        c_delta: f64,
    ) -> Result<Self> {
        check_layout(n, k, n_div)?;
        let r = separated_patterns(n_div, k, k_prime(k)).len();
        if r < 2 {
            return Err(Error::TooFewPoints(r));
        }
        let delta_r = default_delta_r(&DeltaInputs {
            n,
            m,
            looks,
            sigma_z,
            x_min,
            x_max,
            k,
            n_div,
            r,
            c_delta,
        });
        Self::new(n, k, n_div, epsilon, delta_r, x_min, x_max)
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = Bounds::new(self.x_min, self.x_max)?;
        check_layout(self.n, self.k, self.n_div)?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0,1), got {}", self.epsilon)));
        }
        let half_width = 0.5 * (bounds.x_max - bounds.x_min);
        if !(self.delta_r > 0.0 && self.delta_r < half_width) {
            return Err(Error::InvalidParameter(format!(
                "delta_r must lie in (0, {half_width}), got {}",
                self.delta_r
            )));
        }
        if self.k_prime != k_prime(self.k) || self.x_bar != 0.5 * (self.x_min + self.x_max) {
            return Err(Error::InvalidParameter("k_prime or x_bar inconsistent with k and the box".into()));
        }
        Ok(())
    }

    fn signal(&self, pattern: &[bool]) -> Result<Signal> {
        let ends = interval_ends(self.n, self.n_div);
        let mut values = Vec::with_capacity(self.n);
        let mut start = 0;
        for (&end, &high) in ends.iter().zip(pattern) {
            let v = if high { self.x_bar + self.delta_r } else { self.x_bar };
            values.extend(std::iter::repeat_n(v, end - start));
            start = end;
        }
        Signal::new(values, Bounds::new(self.x_min, self.x_max)?, Some(self.k))
    }
}

fn check_layout(n: usize, k: usize, n_div: usize) -> Result<()> {
    if n == 0 || k == 0 || n_div == 0 {
        return Err(Error::InvalidDims("n, k, N_div must be positive".into()));
    }
    if n_div < k || n_div > n {
        return Err(Error::InvalidDims(format!("need k <= N_div <= n, got k={k}, N_div={n_div}, n={n}")));
    }
    Ok(())
}

/// Inputs of [`default_delta_r`].
#[derive(Debug, Clone, Copy)]
pub struct DeltaInputs {
    pub n: usize,
    pub m: usize,
    pub looks: usize,
    pub sigma_z: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub k: usize,
    pub n_div: usize,
    pub r: usize,
    pub c_delta: f64,
}

/// `Δ = [σ² + x_max² s₊²] s₊² / (σ² + x_min² s₋²)² · 2 x_max` with
/// `s₊ = (3/2)(√n+√m)` and `s₋ = (1/2)(√n−√m)`.
pub fn delta_factor(n: usize, m: usize, sigma_z: f64, x_min: f64, x_max: f64) -> f64 {
    let (sn, sm) = ((n as f64).sqrt(), (m as f64).sqrt());
    let hi = 2.25 * (sn + sm).powi(2);
    let lo = 0.25 * (sn - sm).powi(2);
    let s2 = sigma_z * sigma_z;
    (s2 + x_max * x_max * hi) * hi / (s2 + x_min * x_min * lo).powi(2) * 2.0 * x_max
}

/// `δ_r = sqrt( c_δ Δ⁻² · n log r / (m² L) · N_div / k )`.
pub fn default_delta_r(p: &DeltaInputs) -> f64 {
    let delta = delta_factor(p.n, p.m, p.sigma_z, p.x_min, p.x_max);
    let sq = p.c_delta / (delta * delta) * p.n as f64 * (p.r as f64).ln() / ((p.m * p.m * p.looks) as f64)
        * p.n_div as f64
        / p.k as f64;
    sq.sqrt()
}

fn runs(pattern: &[bool]) -> usize {
    1 + pattern.windows(2).filter(|w| w[0] != w[1]).count()
}

/// All two-level patterns on `n_div` intervals with at most `k` runs, in
/// lexicographic order (low before high).
fn class_patterns(n_div: usize, k: usize) -> Vec<Vec<bool>> {
    (0u64..1 << n_div)
        .map(|bits| (0..n_div).map(|i| bits >> (n_div - 1 - i) & 1 == 1).collect::<Vec<bool>>())
        .filter(|p| runs(p) <= k)
        .collect()
}

fn disagreements(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Greedy selection from the exactly-`k`-high patterns of the class, seeded
/// with the first `k` intervals high.
fn separated_patterns(n_div: usize, k: usize, k_prime: usize) -> Vec<Vec<bool>> {
    let pool: Vec<Vec<bool>> = class_patterns(n_div, k)
        .into_iter()
        .filter(|p| p.iter().filter(|&&h| h).count() == k)
        .collect();
    let seed: Vec<bool> = (0..n_div).map(|i| i < k).collect();
    let mut chosen: Vec<Vec<bool>> = Vec::new();
    if pool.contains(&seed) {
        chosen.push(seed);
    }
    for p in pool {
        if chosen.iter().all(|c| disagreements(c, &p) >= k_prime) {
            chosen.push(p);
        }
    }
    chosen
}

/// Interval pattern of a class member (`true` = high).
pub fn interval_pattern(signal: &Signal, spec: &SeparatedSetSpec) -> Vec<bool> {
    interval_ends(spec.n, spec.n_div)
        .iter()
        .map(|&e| signal.values()[e - 1] > spec.x_bar)
        .collect()
}

pub fn build_finite_class(spec: &SeparatedSetSpec) -> Result<Vec<Signal>> {
    build_finite_class_with_cap(spec, DEFAULT_PATTERN_CAP)
}

/// Every signal constant on each interval with values in `{x̄, x̄+δ_r}` and
/// at most `k` pieces, in lexicographic order of value sequences.
pub fn build_finite_class_with_cap(spec: &SeparatedSetSpec, cap: u128) -> Result<Vec<Signal>> {
    spec.validate()?;
    let count = 1u128 << spec.n_div.min(127);
    if spec.n_div >= 64 || count > cap {
        return Err(Error::SearchSpaceTooLarge { count, cap });
    }
    class_patterns(spec.n_div, spec.k).iter().map(|p| spec.signal(p)).collect()
}

/// Greedy maximal subset whose members pairwise differ on at least `k′`
/// intervals. Candidates are the members of `finite_class` with exactly `k`
/// high intervals, visited in the order given.
pub fn build_separated_set(finite_class: &[Signal], spec: &SeparatedSetSpec) -> Vec<Signal> {
    let seed: Vec<bool> = (0..spec.n_div).map(|i| i < spec.k).collect();
    let pool: Vec<(Vec<bool>, &Signal)> = finite_class
        .iter()
        .map(|s| (interval_pattern(s, spec), s))
        .filter(|(p, _)| p.iter().filter(|&&h| h).count() == spec.k)
        .collect();
    let mut chosen: Vec<(Vec<bool>, &Signal)> = Vec::new();
    if let Some(first) = pool.iter().find(|(p, _)| *p == seed) {
        chosen.push(first.clone());
    }
    for (p, s) in &pool {
        if chosen.iter().all(|(c, _)| disagreements(c, p) >= spec.k_prime) {
            chosen.push((p.clone(), s));
        }
    }
    chosen.into_iter().map(|(_, s)| s.clone()).collect()
}

/// Minimum pairwise Euclidean distance.
pub fn separation_radius(set: &[Signal]) -> Result<f64> {
    if set.len() < 2 {
        return Err(Error::TooFewPoints(set.len()));
    }
    let mut best = f64::INFINITY;
    for (i, a) in set.iter().enumerate() {
        for b in &set[i + 1..] {
            let d2: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
            best = best.min(d2);
        }
    }
    Ok(best.sqrt())
}

/// `sqrt(k′ (n/N_div − 2)) δ_r` when `n/N_div ≥ 3`, otherwise `None`.
pub fn separation_floor(spec: &SeparatedSetSpec) -> Option<f64> {
    let width = spec.n / spec.n_div;
    (width >= 3).then(|| ((spec.k_prime * (width - 2)) as f64).sqrt() * spec.delta_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FanoInputs {
    pub alpha_r: f64,
    pub beta_r: f64,
    pub r: usize,
}

fn fano_bracket(inputs: &FanoInputs) -> f64 {
    let log_r = (inputs.r as f64).ln();
    (1.0 - (inputs.beta_r + std::f64::consts::LN_2) / log_r).max(0.0)
}

/// `(α/2)(1 − (β + log 2)/log r)`, floored at 0.
pub fn fano_bound(inputs: &FanoInputs) -> f64 {
    0.5 * inputs.alpha_r * fano_bracket(inputs)
}

/// `α²/(4n) (1 − (β + log 2)/log r)²`, the bound on the normalized MSE.
pub fn mse_lower_bound(inputs: &FanoInputs, n: usize) -> f64 {
    inputs.alpha_r * inputs.alpha_r / (4.0 * n as f64) * fano_bracket(inputs).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub inputs: FanoInputs,
    pub delta_r: f64,
    pub fano_bound: f64,
    pub mse_lower_bound: f64,
    /// Whether `β_r ≤ log(r)/10`.
    pub beta_condition: bool,
}

/// Draw one operator set and evaluate the bound on the normalized MSE.
pub fn evaluate_instance_lower_bound(
    seed: u64,
    m: usize,
    n: usize,
    looks: usize,
    sigma_z: f64,
    spec: &SeparatedSetSpec,
) -> Result<LowerBoundReport> {
    if spec.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: spec.n });
    }
    let inst_spec = InstanceSpec::new(m, n, looks, sigma_z, false);
    inst_spec.validate()?;
    let set = build_separated_set(&build_finite_class(spec)?, spec);
    let r = set.len();
    if r < 2 {
        return Err(Error::TooFewPoints(r));
    }
    let cost = (r as u128).pow(2) * looks as u128 * (m as u128).pow(3);
    if cost > DEFAULT_KL_COST_CAP {
        return Err(Error::SearchSpaceTooLarge {
            count: cost,
            cap: DEFAULT_KL_COST_CAP,
        });
    }
    let instance = ModelInstance {
        m,
        n,
        sigma_z,
        operators: draw_operators(seed, 0, &inst_spec),
        shared_operators: false,
        seed,
    };
    let beta_r = max_pairwise_kl(&set, &instance)?;
    let inputs = FanoInputs {
        alpha_r: separation_radius(&set)?,
        beta_r,
        r,
    };
    Ok(LowerBoundReport {
        inputs,
        delta_r: spec.delta_r,
        fano_bound: fano_bound(&inputs),
        mse_lower_bound: mse_lower_bound(&inputs, n),
        beta_condition: beta_r <= (r as f64).ln() / 10.0,
    })
}

/// `((R/δ)ⁿ, (2R/δ + 1)ⁿ)` for the δ-covering number of a radius-R ball.
pub fn covering_bounds(radius: f64, delta: f64, n: usize) -> Result<(f64, f64)> {
    if !(radius > 0.0 && delta > 0.0) || n == 0 {
        return Err(Error::InvalidParameter("need R > 0, delta > 0, n >= 1".into()));
    }
    let e = n as i32;
    Ok(((radius / delta).powi(e), (2.0 * radius / delta + 1.0).powi(e)))
}
