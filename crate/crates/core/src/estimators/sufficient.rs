//! Oversampled estimator: least-squares inversion of each look followed by a
//! root-mean-square over looks and the piecewise-constant projection.

use nalgebra::{Cholesky, DVector, Dyn};

use super::projection::project_piecewise_constant;
use crate::error::{Error, Result};
use crate::likelihood::checked_cholesky;
use crate::model::{ModelInstance, ObservationSet, Signal};

/// `raw_i = sqrt( (1/L) Σ_l u_{l,i}² )` with `u_l = (A_lᵀA_l)⁻¹ A_lᵀ y_l`.
pub fn sufficient_statistic(instance: &ModelInstance, obs: &ObservationSet) -> Result<Vec<f64>> {
    instance.check_observations(obs)?;
    if instance.m < instance.n {
        return Err(Error::InvalidDims(format!(
            "sufficient statistic needs m >= n, got m={}, n={}",
            instance.m, instance.n
        )));
    }
    let n = instance.n;
    let mut sums = DVector::<f64>::zeros(n);
    let mut cached: Option<(usize, Cholesky<f64, Dyn>)> = None;
    for (l, (a, y)) in instance.operators.iter().zip(&obs.looks).enumerate() {
        let reuse = matches!(&cached, Some((prev, _)) if instance.operators[*prev] == *a);
        if !reuse {
            let chol = checked_cholesky(a.tr_mul(a)).ok_or(Error::SingularNormalMatrix { look: l })?;
            cached = Some((l, chol));
        }
        let (_, chol) = cached.as_ref().expect("factor cached above");
        let u = chol.solve(&a.tr_mul(y));
        sums += u.component_mul(&u);
    }
    let looks = instance.looks() as f64;
    Ok(sums.iter().map(|s| (s / looks).sqrt()).collect())
}

pub fn sufficient_statistic_estimate(
    instance: &ModelInstance,
    obs: &ObservationSet,
    k: usize,
    x_min: f64,
    x_max: f64,
) -> Result<Signal> {
    let raw = sufficient_statistic(instance, obs)?;
    project_piecewise_constant(&raw, k, x_min, x_max)
}
