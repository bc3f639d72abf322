//! Fixed suite of concentration checks behind `speckle verify`.

use nalgebra::DMatrix;
use serde::Serialize;
use speckle_core::concentration::{
    decoupling_mean_check, hanson_wright_check, inverse_difference_bound_check, observation_norm_check,
    singular_value_tail_check,
};
use speckle_core::model::make_signal;
use speckle_core::{RandomStream, Role};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// `scale` multiplies every trial count.
pub fn run_verify_suite(seed: u64, scale: f64) -> Result<Vec<CheckRow>> {
    let trials = |base: usize| ((base as f64 * scale).round() as usize).max(10);
    let mut rows = Vec::new();

    let sv = singular_value_tail_check(20, 80, &[0.5, 1.0, 2.0, 3.0], trials(2000), seed)?;
    let min = sv.min_tail.as_ref().expect("m < n has a lower tail");
    rows.push(CheckRow {
        name: "singular-value tails",
        passed: sv.max_tail.violations == 0 && min.violations == 0 && sv.max_tail.is_nonincreasing(),
        detail: format!(
            "upper {:?}, lower {:?}",
            sv.max_tail.empirical_frequencies, min.empirical_frequencies
        ),
    });

    let a = DMatrix::from_row_slice(8, 8, &RandomStream::new(seed, 0, 0, Role::Auxiliary).normals(64));
    let hw = hanson_wright_check(&a, trials(20_000), &[5.0, 20.0, 40.0, 80.0], seed)?;
    rows.push(CheckRow {
        name: "Hanson-Wright tail",
        passed: hw.tail.violations == 0 && hw.tails_nonincreasing && hw.mean.abs() <= 4.0 * hw.mean_standard_error,
        detail: format!("mean {:.4} ± {:.4}, tail {:?}", hw.mean, hw.mean_standard_error, hw.tail.empirical_frequencies),
    });

    let dc = decoupling_mean_check(&[1.0, 2.0, 0.0, -1.0], 3, 5, trials(100_000), seed, &[])?;
    rows.push(CheckRow {
        name: "decoupling mean",
        passed: dc.passes,
        detail: format!("{:.3} ± {:.3} vs {:.3}", dc.sample_mean, dc.standard_error, dc.closed_form),
    });

    let inv = inverse_difference_bound_check(8, trials(1000), seed)?;
    rows.push(CheckRow {
        name: "inverse difference bound",
        passed: inv.violations == 0,
        detail: format!("{} violations, max ratio {:.4}", inv.violations, inv.max_ratio),
    });

    let x = make_signal(vec![1.5; 16], 1.0, 2.0, Some(1))?;
    let on = observation_norm_check(8, 16, 4, 0.1, &x, trials(5000), seed, &[])?;
    rows.push(CheckRow {
        name: "observation norm",
        passed: on.exceed_frequency == 0.0 && (on.sample_mean - on.conditional_mean).abs() <= 4.0 * on.standard_error + 1e-9,
        detail: format!(
            "P(exceed {:.1}) = {}, mean {:.2} vs {:.2}",
            on.threshold, on.exceed_frequency, on.sample_mean, on.conditional_mean
        ),
    });
    Ok(rows)
}
