//! Multilook Gaussian log-likelihood.
//!
//! Conditional on the operators, look `l` is distributed as `N(0, M_l(x))`
//! with `M_l(x) = σ_z² I_m + A_l X² A_lᵀ`. The objective maximized by the
//! estimators is
//!
//! ```text
//! ℓ(x) = Σ_l [ −log det M_l(x) − y_lᵀ M_l(x)⁻¹ y_l ]
//! ```
//!
//! All solves go through Cholesky factors; nothing is inverted explicitly and
//! nothing is regularized when a factorization fails.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelInstance, ObservationSet, Signal};

/// Smallest accepted ratio `min_i L_ii² / max_i M_ii`. Rank-deficient
/// covariances factor with round-off-sized pivots; those are rejected.
pub const PIVOT_RTOL: f64 = 1e-12;

/// `σ² I + A diag(x²) Aᵀ` for one look.
pub fn covariance(a: &DMatrix<f64>, x: &[f64], sigma_z: f64) -> DMatrix<f64> {
    let mut b = a.clone();
    for (mut col, &xj) in b.column_iter_mut().zip(x) {
        col *= xj;
    }
    let mut cov = &b * b.transpose();
    for i in 0..cov.nrows() {
        cov[(i, i)] += sigma_z * sigma_z;
    }
    cov
}

/// Cholesky factorization with the pivot test described at [`PIVOT_RTOL`].
pub(crate) fn checked_cholesky(mat: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = mat.diagonal().iter().copied().fold(0.0_f64, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let chol = Cholesky::new(mat)?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d * d)
        .fold(f64::INFINITY, f64::min);
    (min_pivot > PIVOT_RTOL * scale).then_some(chol)
}

/// Per-look Cholesky factors of `M_l(x)` with cached log-determinants.
#[derive(Debug, Clone)]
pub struct CovarianceFactorization {
    factors: Vec<Cholesky<f64, Dyn>>,
    log_dets: Vec<f64>,
}

impl CovarianceFactorization {
    pub fn looks(&self) -> usize {
        self.factors.len()
    }

    pub fn log_det(&self, look: usize) -> f64 {
        self.log_dets[look]
    }

    pub fn log_dets(&self) -> &[f64] {
        &self.log_dets
    }

    /// Solve `M_l v = b`.
    pub fn solve(&self, look: usize, b: &DVector<f64>) -> DVector<f64> {
        self.factors[look].solve(b)
    }

    pub fn solve_matrix(&self, look: usize, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factors[look].solve(b)
    }

    /// Lower-triangular factor `L_l` with `M_l = L_l L_lᵀ`.
    pub fn lower(&self, look: usize) -> DMatrix<f64> {
        self.factors[look].l()
    }

    /// `L_l L_lᵀ`, for checking the factorization.
    pub fn reconstruct(&self, look: usize) -> DMatrix<f64> {
        let l = self.lower(look);
        &l * l.transpose()
    }

    /// `yᵀ M_l⁻¹ y` via a single triangular solve.
    pub fn quad_form(&self, look: usize, y: &DVector<f64>) -> f64 {
        let v = self.factors[look]
            .l_dirty()
            .solve_lower_triangular(y)
            .expect("factor has nonzero diagonal");
        v.norm_squared()
    }
}

fn log_det_from(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub(crate) fn factor_look(a: &DMatrix<f64>, x: &[f64], sigma_z: f64, look: usize) -> Result<Cholesky<f64, Dyn>> {
    checked_cholesky(covariance(a, x, sigma_z)).ok_or(Error::NotPositiveDefinite { look })
}

pub fn factorize(x: &Signal, instance: &ModelInstance) -> Result<CovarianceFactorization> {
    instance.check_signal(x)?;
    factorize_values(x.values(), instance)
}

pub(crate) fn factorize_values(x: &[f64], instance: &ModelInstance) -> Result<CovarianceFactorization> {
    let factors = instance
        .operators
        .iter()
        .enumerate()
        .map(|(l, a)| factor_look(a, x, instance.sigma_z, l))
        .collect::<Result<Vec<_>>>()?;
    let log_dets = factors.iter().map(log_det_from).collect();
    Ok(CovarianceFactorization { factors, log_dets })
}

pub fn log_likelihood(x: &Signal, instance: &ModelInstance, obs: &ObservationSet) -> Result<f64> {
    instance.check_signal(x)?;
    instance.check_observations(obs)?;
    log_likelihood_values(x.values(), instance, obs)
}

pub(crate) fn log_likelihood_values(x: &[f64], instance: &ModelInstance, obs: &ObservationSet) -> Result<f64> {
    let mut total = 0.0;
    let mut cached: Option<(usize, Cholesky<f64, Dyn>, f64)> = None;
    for (l, (a, y)) in instance.operators.iter().zip(&obs.looks).enumerate() {
        if !cached.as_ref().is_some_and(|(p, _, _)| instance.operators[*p] == *a) {
            let chol = factor_look(a, x, instance.sigma_z, l)?;
            let log_det = log_det_from(&chol);
            cached = Some((l, chol, log_det));
        }
        let (_, chol, log_det) = cached.as_ref().expect("factor cached above");
        let v = chol
            .l_dirty()
            .solve_lower_triangular(y)
            .expect("factor has nonzero diagonal");
        total += -log_det - v.norm_squared();
    }
    Ok(total)
}

/// Value, gradient and the diagonal of the expected negative Hessian of ℓ.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// `4 x_j² Σ_l (a_{l,j}ᵀ M_l⁻¹ a_{l,j})²`.
    pub curvature: Vec<f64>,
}

struct LookFactor {
    look: usize,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    /// `a_jᵀ M⁻¹ a_j` per column.
    q: Vec<f64>,
}

pub(crate) fn evaluate_values(x: &[f64], instance: &ModelInstance, obs: &ObservationSet) -> Result<Evaluation> {
    let n = instance.n;
    let mut value = 0.0;
    let mut gradient = vec![0.0; n];
    let mut curvature = vec![0.0; n];
    let mut cached: Option<LookFactor> = None;
    for (l, (a, y)) in instance.operators.iter().zip(&obs.looks).enumerate() {
        if !cached.as_ref().is_some_and(|c| instance.operators[c.look] == *a) {
            let chol = factor_look(a, x, instance.sigma_z, l)?;
            let w = chol.solve(a);
            let q = (0..n).map(|j| a.column(j).dot(&w.column(j))).collect();
            let log_det = log_det_from(&chol);
            cached = Some(LookFactor { look: l, chol, log_det, q });
        }
        let f = cached.as_ref().expect("factor cached above");
        let l_factor = f.chol.l_dirty();
        let half = l_factor.solve_lower_triangular(y).expect("factor has nonzero diagonal");
        value += -f.log_det - half.norm_squared();
        let v = l_factor.tr_solve_lower_triangular(&half).expect("factor has nonzero diagonal");
        let r = a.tr_mul(&v);
        for j in 0..n {
            gradient[j] += 2.0 * x[j] * (r[j] * r[j] - f.q[j]);
            curvature[j] += 4.0 * x[j] * x[j] * f.q[j] * f.q[j];
        }
    }
    Ok(Evaluation {
        value,
        gradient,
        curvature,
    })
}

/// `∂ℓ/∂x_j = Σ_l [ −2 x_j a_{l,j}ᵀ M_l⁻¹ a_{l,j} + 2 x_j (y_lᵀ M_l⁻¹ a_{l,j})² ]`.
pub fn log_likelihood_gradient(
    x: &Signal,
    instance: &ModelInstance,
    obs: &ObservationSet,
) -> Result<Vec<f64>> {
    instance.check_signal(x)?;
    instance.check_observations(obs)?;
    Ok(evaluate_values(x.values(), instance, obs)?.gradient)
}

/// `KL(N(0, M_l(x_i)) ‖ N(0, M_l(x_j)))` summed over looks, from factors
/// computed at `x_i` and `x_j` respectively.
pub fn kl_from_factors(fi: &CovarianceFactorization, fj: &CovarianceFactorization, m: usize) -> f64 {
    (0..fi.looks())
        .map(|l| {
            // tr(M_j⁻¹ M_i) = ‖L_j⁻¹ L_i‖_F²
            let li = fi.factors[l].l();
            let x = fj.factors[l]
                .l_dirty()
                .solve_lower_triangular(&li)
                .expect("factor has nonzero diagonal");
            0.5 * (fj.log_dets[l] - fi.log_dets[l] - m as f64 + x.norm_squared())
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn gaussian_kl(x_i: &Signal, x_j: &Signal, instance: &ModelInstance) -> Result<f64> {
    let fi = factorize(x_i, instance)?;
    let fj = factorize(x_j, instance)?;
    Ok(kl_from_factors(&fi, &fj, instance.m))
}

/// Symmetrized maximum `max(KL(i‖j), KL(j‖i))` over all pairs of `signals`,
/// computed in parallel with an order-independent reduction.
pub fn max_pairwise_kl(signals: &[Signal], instance: &ModelInstance) -> Result<f64> {
    let factors = signals
        .par_iter()
        .map(|s| factorize(s, instance))
        .collect::<Result<Vec<_>>>()?;
    let r = factors.len();
    let pairs: Vec<(usize, usize)> = (0..r)
        .flat_map(|i| ((i + 1)..r).map(move |j| (i, j)))
        .collect();
    let beta = pairs
        .par_iter()
        .map(|&(i, j)| {
            let a = kl_from_factors(&factors[i], &factors[j], instance.m);
            let b = kl_from_factors(&factors[j], &factors[i], instance.m);
            a.max(b)
        })
        .reduce(|| 0.0, f64::max);
    Ok(beta)
}
