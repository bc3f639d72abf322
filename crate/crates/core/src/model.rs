//! Signals, the piecewise-constant signal class, and the multilook speckle
//! observation model `y_l = A_l · diag(x_o) · w_l + z_l`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RandomStream, Role};

/// Closed amplitude box `[x_min, x_max]` with `0 < x_min < x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min <= 0.0 || x_min >= x_max {
            return Err(Error::InvalidParameter(format!(
                "box requires 0 < x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self { x_min, x_max })
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.x_min, self.x_max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.x_min && v <= self.x_max
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.x_min + self.x_max)
    }
}

/// A length-n amplitude vector, optionally certified to have at most
/// `k_budget` constant pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    values: Vec<f64>,
    k_budget: Option<usize>,
    change_points: Vec<usize>,
}

/// Indices `i ≥ 1` with `values[i] != values[i-1]`.
pub fn change_points(values: &[f64]) -> Vec<usize> {
    (1..values.len())
        .filter(|&i| values[i] != values[i - 1])
        .collect()
}

/// Validate `values` against the box and piece budget.
pub fn make_signal(
    values: Vec<f64>,
    x_min: f64,
    x_max: f64,
    k_budget: Option<usize>,
) -> Result<Signal> {
    let bounds = Bounds::new(x_min, x_max)?;
    Signal::new(values, bounds, k_budget)
}

impl Signal {
    pub fn new(values: Vec<f64>, bounds: Bounds, k_budget: Option<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDims("signal must be nonempty".into()));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !bounds.contains(**v))
        {
            return Err(Error::OutOfBox {
                index,
                value,
                x_min: bounds.x_min,
                x_max: bounds.x_max,
            });
        }
        let change_points = change_points(&values);
        if let Some(budget) = k_budget {
            if budget == 0 {
                return Err(Error::InvalidParameter("k_budget must be positive".into()));
            }
            if change_points.len() + 1 > budget {
                return Err(Error::BudgetExceeded {
                    pieces: change_points.len() + 1,
                    budget,
                });
            }
        }
        Ok(Self {
            values,
            k_budget,
            change_points,
        })
    }

    /// Build a signal without class validation. Used for degenerate inputs such
    /// as the all-zero signal, which the class excludes but diagnostics need.
    pub fn unchecked(values: Vec<f64>) -> Self {
        let change_points = change_points(&values);
        Self {
            values,
            k_budget: None,
            change_points,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::unchecked(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn k_budget(&self) -> Option<usize> {
        self.k_budget
    }

    pub fn change_points(&self) -> &[usize] {
        &self.change_points
    }

    pub fn pieces(&self) -> usize {
        self.change_points.len() + 1
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Draw a member of the class: `k-1` distinct breakpoints uniform on
/// `{1..n-1}`, `k` levels uniform on `[x_min, x_max]`.
pub fn sample_signal_class(
    stream: &RandomStream,
    n: usize,
    k: usize,
    x_min: f64,
    x_max: f64,
) -> Result<Signal> {
    let bounds = Bounds::new(x_min, x_max)?;
    if k == 0 || k > n {
        return Err(Error::InvalidDims(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let mut rng = stream.rng();
    let mut breaks: Vec<usize> = index::sample(&mut rng, n - 1, k - 1)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    breaks.sort_unstable();
    let levels: Vec<f64> = (0..k)
        .map(|_| rng.random_range(bounds.x_min..=bounds.x_max))
        .collect();

    let mut values = Vec::with_capacity(n);
    let mut start = 0;
    for (piece, &end) in breaks.iter().chain(std::iter::once(&n)).enumerate() {
        values.extend(std::iter::repeat_n(levels[piece], end - start));
        start = end;
    }
    Signal::new(values, bounds, Some(k))
}

/// Dimensions and noise level of an observation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub m: usize,
    pub n: usize,
    pub looks: usize,
    pub sigma_z: f64,
    pub shared_operators: bool,
}

impl InstanceSpec {
    pub fn new(m: usize, n: usize, looks: usize, sigma_z: f64, shared_operators: bool) -> Self {
        Self {
            m,
            n,
            looks,
            sigma_z,
            shared_operators,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.looks == 0 {
            return Err(Error::InvalidDims(format!(
                "m, n, L must be positive, got m={}, n={}, L={}",
                self.m, self.n, self.looks
            )));
        }
        if !(self.sigma_z.is_finite() && self.sigma_z >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma_z must be a nonnegative real, got {}",
                self.sigma_z
            )));
        }
        Ok(())
    }
}

/// Forward operators `A_1..A_L` (each `m × n`) and the additive noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInstance {
    pub m: usize,
    pub n: usize,
    pub sigma_z: f64,
    pub operators: Vec<DMatrix<f64>>,
    pub shared_operators: bool,
    pub seed: u64,
}

impl ModelInstance {
    /// Wrap explicitly supplied operators.
    pub fn from_operators(operators: Vec<DMatrix<f64>>, sigma_z: f64, seed: u64) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::InvalidDims("at least one operator is required".into()))?;
        let (m, n) = first.shape();
        for a in &operators {
            if a.shape() != (m, n) {
                return Err(Error::InvalidDims(format!(
                    "operator shapes differ: {:?} vs {:?}",
                    a.shape(),
                    (m, n)
                )));
            }
        }
        let spec = InstanceSpec::new(m, n, operators.len(), sigma_z, false);
        spec.validate()?;
        let shared_operators = operators.len() > 1 && operators.iter().all(|a| a == first);
        Ok(Self {
            m,
            n,
            sigma_z,
            operators,
            shared_operators,
            seed,
        })
    }

    pub fn looks(&self) -> usize {
        self.operators.len()
    }

    pub fn spec(&self) -> InstanceSpec {
        InstanceSpec::new(self.m, self.n, self.looks(), self.sigma_z, self.shared_operators)
    }

    pub(crate) fn check_signal(&self, x: &Signal) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_observations(&self, obs: &ObservationSet) -> Result<()> {
        if obs.looks.len() != self.looks() {
            return Err(Error::DimensionMismatch {
                expected: self.looks(),
                found: obs.looks.len(),
            });
        }
        if let Some(y) = obs.looks.iter().find(|y| y.len() != self.m) {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: y.len(),
            });
        }
        Ok(())
    }
}

/// The `L` observed looks, optionally with the draws that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub looks: Vec<DVector<f64>>,
    pub speckle: Option<Vec<DVector<f64>>>,
    pub additive: Option<Vec<DVector<f64>>>,
}

impl ObservationSet {
    pub fn new(looks: Vec<DVector<f64>>) -> Self {
        Self {
            looks,
            speckle: None,
            additive: None,
        }
    }
}

/// Draw the operators of trial `trial` for `spec`.
pub fn draw_operators(seed: u64, trial: u64, spec: &InstanceSpec) -> Vec<DMatrix<f64>> {
    let draw = |look: usize| {
        let data = RandomStream::new(seed, trial, look as u64, Role::Operator).normals(spec.m * spec.n);
        DMatrix::from_row_slice(spec.m, spec.n, &data)
    };
    if spec.shared_operators {
        let a = draw(0);
        vec![a; spec.looks]
    } else {
        (0..spec.looks).map(draw).collect()
    }
}

/// Apply the forward model with the given speckle and additive draws.
pub fn observe(
    instance: &ModelInstance,
    x_o: &Signal,
    speckle: Vec<DVector<f64>>,
    additive: Vec<DVector<f64>>,
) -> Result<ObservationSet> {
    instance.check_signal(x_o)?;
    let looks = instance.looks();
    if speckle.len() != looks || additive.len() != looks {
        return Err(Error::DimensionMismatch {
            expected: looks,
            found: speckle.len().min(additive.len()),
        });
    }
    let x = DVector::from_column_slice(x_o.values());
    let mut ys = Vec::with_capacity(looks);
    for ((a, w), z) in instance.operators.iter().zip(&speckle).zip(&additive) {
        if w.len() != instance.n || z.len() != instance.m {
            return Err(Error::InvalidDims("speckle/additive draw has wrong length".into()));
        }
        ys.push(a * x.component_mul(w) + z);
    }
    Ok(ObservationSet {
        looks: ys,
        speckle: Some(speckle),
        additive: Some(additive),
    })
}

/// Generate operators and observations for trial `trial`. A pure function of
/// `(seed, trial, spec, x_o)`.
pub fn generate_trial_instance(
    seed: u64,
    trial: u64,
    spec: &InstanceSpec,
    x_o: &Signal,
) -> Result<(ModelInstance, ObservationSet)> {
    spec.validate()?;
    let instance = ModelInstance {
        m: spec.m,
        n: spec.n,
        sigma_z: spec.sigma_z,
        operators: draw_operators(seed, trial, spec),
        shared_operators: spec.shared_operators,
        seed,
    };
    instance.check_signal(x_o)?;
    let speckle = (0..spec.looks)
        .map(|l| {
            DVector::from_vec(RandomStream::new(seed, trial, l as u64, Role::Speckle).normals(spec.n))
        })
        .collect();
    let additive = (0..spec.looks)
        .map(|l| {
            let z = RandomStream::new(seed, trial, l as u64, Role::Additive).normals(spec.m);
            DVector::from_vec(z) * spec.sigma_z
        })
        .collect();
    let obs = observe(&instance, x_o, speckle, additive)?;
    Ok((instance, obs))
}

/// [`generate_trial_instance`] for trial 0.
pub fn generate_instance(
    seed: u64,
    spec: &InstanceSpec,
    x_o: &Signal,
) -> Result<(ModelInstance, ObservationSet)> {
    generate_trial_instance(seed, 0, spec, x_o)
}

/// Normalized squared error `‖estimate − truth‖² / n`.
pub fn mse(estimate: &Signal, truth: &Signal) -> Result<f64> {
    mse_values(estimate.values(), truth.values())
}

pub fn mse_values(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidDims("empty signals".into()));
    }
    let sse: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / truth.len() as f64)
}
