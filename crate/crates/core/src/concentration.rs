//! Monte Carlo checks of the probabilistic tools: extreme singular values,
//! Hanson–Wright tails, the decoupling mean identity, the inverse-difference
//! bound and the observation-norm bound.
//!
//! Trial `t` always draws from streams keyed by `(seed, t, ·, Auxiliary)` or
//! the model streams of trial `t`, and reductions run in trial order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{observe, InstanceSpec, ModelInstance, Signal};
use crate::model::draw_operators;
use crate::rng::{RandomStream, Role};

/// Empirical tail frequencies against reference bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub thresholds: Vec<f64>,
    pub empirical_frequencies: Vec<f64>,
    pub theoretical_bounds: Vec<f64>,
    pub trials: usize,
    /// Thresholds where the frequency exceeds the bound by more than three
    /// binomial standard errors.
    pub violations: usize,
}

impl TailReport {
    /// Build from per-threshold exceedance counts.
    pub fn from_counts(thresholds: Vec<f64>, counts: &[usize], bounds: Vec<f64>, trials: usize) -> Self {
        let empirical_frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
        let violations = empirical_frequencies
            .iter()
            .zip(&bounds)
            .filter(|(&f, &b)| {
                let p = b.clamp(0.0, 1.0);
                f > b + 3.0 * (p * (1.0 - p) / trials as f64).sqrt()
            })
            .count();
        Self {
            thresholds,
            empirical_frequencies,
            theoretical_bounds: bounds,
            trials,
            violations,
        }
    }

    /// Frequencies never increase along the thresholds.
    pub fn is_nonincreasing(&self) -> bool {
        self.empirical_frequencies.windows(2).all(|w| w[1] <= w[0])
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    Ok(())
}

fn aux(seed: u64, trial: usize, look: usize, len: usize) -> Vec<f64> {
    RandomStream::new(seed, trial as u64, look as u64, Role::Auxiliary).normals(len)
}

fn tail_counts(samples: &[f64], thresholds: &[f64], exceeds: impl Fn(f64, f64) -> bool) -> Vec<usize> {
    thresholds
        .iter()
        .map(|&t| samples.iter().filter(|&&s| exceeds(s, t)).count())
        .collect()
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularValueReport {
    /// `P(σ_max > √n + √m + t)`.
    pub max_tail: TailReport,
    /// `P(σ_min < √n − √m − t)`, only when `m < n`.
    pub min_tail: Option<TailReport>,
    pub sigma_max: Vec<f64>,
    pub sigma_min: Vec<f64>,
}

/// Extreme singular values of `m × n` standard Gaussian matrices against
/// `2 e^{−t²/2}`.
pub fn singular_value_tail_check(m: usize, n: usize, t_values: &[f64], trials: usize, seed: u64) -> Result<SingularValueReport> {
    check_trials(trials)?;
    if m == 0 || n == 0 {
        return Err(Error::InvalidDims("m and n must be positive".into()));
    }
    let extremes: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let a = DMatrix::from_row_slice(m, n, &aux(seed, t, 0, m * n));
            let sv = a.singular_values();
            let max = sv.iter().copied().fold(0.0, f64::max);
            let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
            (max, min)
        })
        .collect();
    let sigma_max: Vec<f64> = extremes.iter().map(|e| e.0).collect();
    let sigma_min: Vec<f64> = extremes.iter().map(|e| e.1).collect();
    let (sn, sm) = ((n as f64).sqrt(), (m as f64).sqrt());
    let bounds: Vec<f64> = t_values.iter().map(|t| 2.0 * (-t * t / 2.0).exp()).collect();
    let max_counts = tail_counts(&sigma_max, t_values, |s, t| s > sn + sm + t);
    let max_tail = TailReport::from_counts(t_values.to_vec(), &max_counts, bounds.clone(), trials);
    let min_tail = (m < n).then(|| {
        let counts = tail_counts(&sigma_min, t_values, |s, t| s < sn - sm - t);
        TailReport::from_counts(t_values.to_vec(), &counts, bounds, trials)
    });
    Ok(SingularValueReport {
        max_tail,
        min_tail,
        sigma_max,
        sigma_min,
    })
}

/// Constant used in the reference Hanson–Wright curve
/// `2 exp(−c min(t²/‖A‖_F², t/‖A‖₂))`.
pub const HANSON_WRIGHT_REFERENCE_C: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HansonWrightReport {
    /// `P(|ξᵀAξ − tr A| > t)` against the reference curve.
    pub tail: TailReport,
    pub mean: f64,
    pub mean_standard_error: f64,
    pub variance: f64,
    /// `2 ‖(A + Aᵀ)/2‖_F²`, the variance for Gaussian ξ.
    pub theoretical_variance: f64,
    pub tails_nonincreasing: bool,
}

pub fn hanson_wright_check(a: &DMatrix<f64>, trials: usize, t_values: &[f64], seed: u64) -> Result<HansonWrightReport> {
    check_trials(trials)?;
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::InvalidDims("Hanson-Wright check needs a nonempty square matrix".into()));
    }
    let trace = a.trace();
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let xi = DVector::from_vec(aux(seed, t, 0, n));
            xi.dot(&(a * &xi)) - trace
        })
        .collect();
    let (mean, mean_standard_error) = mean_and_se(&samples);
    let variance = if trials > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
    } else {
        0.0
    };
    let sym = (a + a.transpose()) * 0.5;
    let frob = a.norm();
    let op = a.singular_values().iter().copied().fold(0.0, f64::max);
    let bounds = t_values
        .iter()
        .map(|&t| {
            if frob == 0.0 {
                if t > 0.0 {
                    0.0
                } else {
                    2.0
                }
            } else {
                2.0 * (-HANSON_WRIGHT_REFERENCE_C * (t * t / (frob * frob)).min(t / op)).exp()
            }
        })
        .collect();
    let counts = tail_counts(&samples, t_values, |s, t| s.abs() > t);
    let tail = TailReport::from_counts(t_values.to_vec(), &counts, bounds, trials);
    let tails_nonincreasing = {
        let mut sorted: Vec<(f64, f64)> = tail.thresholds.iter().copied().zip(tail.empirical_frequencies.iter().copied()).collect();
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
        sorted.windows(2).all(|w| w[1].1 <= w[0].1)
    };
    Ok(HansonWrightReport {
        tail,
        mean,
        mean_standard_error,
        variance,
        theoretical_variance: 2.0 * sym.norm_squared(),
        tails_nonincreasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecouplingReport {
    pub sample_mean: f64,
    pub standard_error: f64,
    /// `L m [(tr D)² + (m+1) ‖d‖²]`.
    pub closed_form: f64,
    pub passes: bool,
    /// `P(S < L m (m−1) ‖d‖² − t)`. No constant-free bound is available, so
    /// the bound column holds the trivial value 1.
    pub lower_tail: TailReport,
}

/// `E Σ_l ‖A_l D A_lᵀ‖_F²` for `m × n` standard Gaussian `A_l`.
pub fn decoupling_closed_form(d: &[f64], m: usize, looks: usize) -> f64 {
    let tr: f64 = d.iter().sum();
    let sq: f64 = d.iter().map(|v| v * v).sum();
    (looks * m) as f64 * (tr * tr + (m as f64 + 1.0) * sq)
}

/// Monte Carlo mean of `S = Σ_l ‖A_l D A_lᵀ‖_F²` against the closed form,
/// passing when within 4 standard errors.
pub fn decoupling_mean_check(
    d: &[f64],
    m: usize,
    looks: usize,
    trials: usize,
    seed: u64,
    t_values: &[f64],
) -> Result<DecouplingReport> {
    check_trials(trials)?;
    let n = d.len();
    if n == 0 || m == 0 || looks == 0 {
        return Err(Error::InvalidDims("d, m, L must be nonempty/positive".into()));
    }
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            (0..looks)
                .map(|l| {
                    let mut a = DMatrix::from_row_slice(m, n, &aux(seed, t, l, m * n));
                    let at = a.transpose();
                    for (mut col, &dj) in a.column_iter_mut().zip(d) {
                        col *= dj;
                    }
                    (&a * at).norm_squared()
                })
                .sum()
        })
        .collect();
    let (sample_mean, standard_error) = mean_and_se(&samples);
    let closed_form = decoupling_closed_form(d, m, looks);
    let passes = if standard_error == 0.0 {
        (sample_mean - closed_form).abs() <= 1e-12 * closed_form.abs().max(1.0)
    } else {
        (sample_mean - closed_form).abs() <= 4.0 * standard_error
    };
    let sq: f64 = d.iter().map(|v| v * v).sum();
    let centre = (looks * m) as f64 * (m as f64 - 1.0) * sq;
    let counts = tail_counts(&samples, t_values, |s, t| s < centre - t);
    let lower_tail = TailReport::from_counts(t_values.to_vec(), &counts, vec![1.0; t_values.len()], trials);
    Ok(DecouplingReport {
        sample_mean,
        standard_error,
        closed_form,
        passes,
        lower_tail,
    })
}

/// Both sides of `‖B⁻¹ − C⁻¹‖₂ ≤ σ_max(B − C) / (σ_min(B) σ_min(C))` for
/// symmetric positive-definite `B`, `C`.
pub fn inverse_difference_sides(b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(f64, f64)> {
    let bi = b.clone().try_inverse().ok_or(Error::NotPositiveDefinite { look: 0 })?;
    let ci = c.clone().try_inverse().ok_or(Error::NotPositiveDefinite { look: 0 })?;
    let spectral = |m: DMatrix<f64>| {
        SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max)
    };
    let smallest = |m: &DMatrix<f64>| SymmetricEigen::new(m.clone()).eigenvalues.min();
    let (sb, sc) = (smallest(b), smallest(c));
    if !(sb > 0.0 && sc > 0.0) {
        return Err(Error::NotPositiveDefinite { look: 0 });
    }
    let lhs = spectral(&bi - &ci);
    let rhs = spectral(b - c) / (sb * sc);
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseDifferenceReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen (at most 1 when the bound holds).
    pub max_ratio: f64,
}

/// The bound on `trials` pairs of shifted Wishart matrices
/// `G Gᵀ / n + 0.1 I`.
pub fn inverse_difference_bound_check(n: usize, trials: usize, seed: u64) -> Result<InverseDifferenceReport> {
    check_trials(trials)?;
    if n == 0 {
        return Err(Error::InvalidDims("n must be positive".into()));
    }
    let wishart = |t: usize, look: usize| {
        let g = DMatrix::from_row_slice(n, n, &aux(seed, t, look, n * n));
        let mut w = &g * g.transpose() / n as f64;
        for i in 0..n {
            w[(i, i)] += 0.1;
        }
        w
    };
    let sides: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| inverse_difference_sides(&wishart(t, 0), &wishart(t, 1)))
        .collect::<Result<_>>()?;
    let violations = sides.iter().filter(|(l, r)| *l > r * (1.0 + 1e-10) + 1e-14).count();
    let max_ratio = sides
        .iter()
        .map(|(l, r)| if *r > 0.0 { l / r } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(InverseDifferenceReport {
        trials,
        violations,
        max_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationNormReport {
    /// `mL[(9/4)(√n+√m)² x_max² + σ²] + t` with `t = mL(σ² + x_max² (9/4)(√n+√m)²)`.
    pub threshold: f64,
    pub exceed_frequency: f64,
    pub sample_mean: f64,
    pub standard_error: f64,
    /// Average over trials of `Σ_l tr(X A_lᵀ A_l X) + mLσ²`.
    pub conditional_mean: f64,
    /// `P(‖y⃗‖² ≥ τ)` at caller-supplied `τ`; bound column is trivially 1.
    pub tail: TailReport,
    pub trials: usize,
}

/// Threshold of the observation-norm event.
pub fn observation_norm_threshold(m: usize, n: usize, looks: usize, sigma_z: f64, x_max: f64) -> f64 {
    let ml = (m * looks) as f64;
    let s = 2.25 * ((n as f64).sqrt() + (m as f64).sqrt()).powi(2) * x_max * x_max;
    let base = ml * (s + sigma_z * sigma_z);
    let t = ml * (sigma_z * sigma_z + s);
    base + t
}

fn norm_report(
    norms: Vec<(f64, f64)>,
    threshold: f64,
    thresholds: &[f64],
    trials: usize,
) -> ObservationNormReport {
    let values: Vec<f64> = norms.iter().map(|v| v.0).collect();
    let (sample_mean, standard_error) = mean_and_se(&values);
    let conditional_mean = norms.iter().map(|v| v.1).sum::<f64>() / trials as f64;
    let exceed = values.iter().filter(|&&v| v >= threshold).count();
    let counts = tail_counts(&values, thresholds, |s, t| s >= t);
    ObservationNormReport {
        threshold,
        exceed_frequency: exceed as f64 / trials as f64,
        sample_mean,
        standard_error,
        conditional_mean,
        tail: TailReport::from_counts(thresholds.to_vec(), &counts, vec![1.0; thresholds.len()], trials),
        trials,
    }
}

fn norm_sample(instance: &ModelInstance, x: &Signal, seed: u64, trial: usize) -> Result<(f64, f64)> {
    let looks = instance.looks();
    let speckle = (0..looks)
        .map(|l| DVector::from_vec(RandomStream::new(seed, trial as u64, l as u64, Role::Speckle).normals(instance.n)))
        .collect();
    let additive = (0..looks)
        .map(|l| {
            DVector::from_vec(RandomStream::new(seed, trial as u64, l as u64, Role::Additive).normals(instance.m))
                * instance.sigma_z
        })
        .collect();
    let obs = observe(instance, x, speckle, additive)?;
    let norm: f64 = obs.looks.iter().map(|y| y.norm_squared()).sum();
    let s2 = instance.sigma_z * instance.sigma_z;
    let cond: f64 = instance
        .operators
        .iter()
        .map(|a| {
            a.column_iter()
                .zip(x.values())
                .map(|(col, xj)| xj * xj * col.norm_squared())
                .sum::<f64>()
                + instance.m as f64 * s2
        })
        .sum();
    Ok((norm, cond))
}

/// `‖y⃗‖²` over fresh operators, speckle and noise for every trial.
pub fn observation_norm_check(
    m: usize,
    n: usize,
    looks: usize,
    sigma_z: f64,
    x: &Signal,
    trials: usize,
    seed: u64,
    thresholds: &[f64],
) -> Result<ObservationNormReport> {
    check_trials(trials)?;
    let spec = InstanceSpec::new(m, n, looks, sigma_z, false);
    spec.validate()?;
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.len() });
    }
    let norms: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let instance = ModelInstance {
                m,
                n,
                sigma_z,
                operators: draw_operators(seed, t as u64, &spec),
                shared_operators: false,
                seed,
            };
            norm_sample(&instance, x, seed, t)
        })
        .collect::<Result<_>>()?;
    let threshold = observation_norm_threshold(m, n, looks, sigma_z, x.max_value().max(0.0));
    Ok(norm_report(norms, threshold, thresholds, trials))
}

/// As [`observation_norm_check`] with the operators held fixed.
pub fn observation_norm_check_fixed(
    instance: &ModelInstance,
    x: &Signal,
    trials: usize,
    seed: u64,
    thresholds: &[f64],
) -> Result<ObservationNormReport> {
    check_trials(trials)?;
    let norms: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| norm_sample(instance, x, seed, t))
        .collect::<Result<_>>()?;
    let threshold = observation_norm_threshold(
        instance.m,
        instance.n,
        instance.looks(),
        instance.sigma_z,
        x.max_value().max(0.0),
    );
    Ok(norm_report(norms, threshold, thresholds, trials))
}
