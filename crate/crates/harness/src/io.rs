//! Instance and vector files used by the CLI.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use speckle_core::{ModelInstance, ObservationSet, Signal};

use crate::error::{HarnessError, Result};

/// JSON form of one simulated instance. Operators are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub m: usize,
    pub n: usize,
    pub sigma_z: f64,
    pub seed: u64,
    pub k: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub truth: Vec<f64>,
    pub operators: Vec<Vec<f64>>,
    pub looks: Vec<Vec<f64>>,
}

impl InstanceFile {
    pub fn new(instance: &ModelInstance, obs: &ObservationSet, truth: &Signal, k: usize, x_min: f64, x_max: f64) -> Self {
        Self {
            m: instance.m,
            n: instance.n,
            sigma_z: instance.sigma_z,
            seed: instance.seed,
            k,
            x_min,
            x_max,
            truth: truth.values().to_vec(),
            operators: instance
                .operators
                .iter()
                .map(|a| a.transpose().as_slice().to_vec())
                .collect(),
            looks: obs.looks.iter().map(|y| y.as_slice().to_vec()).collect(),
        }
    }

    pub fn to_model(&self) -> Result<(ModelInstance, ObservationSet, Signal)> {
        let mut ops = Vec::with_capacity(self.operators.len());
        for data in &self.operators {
            if data.len() != self.m * self.n {
                return Err(HarnessError::Validation(vec![format!(
                    "operator has {} entries, expected m*n = {}",
                    data.len(),
                    self.m * self.n
                )]));
            }
            ops.push(DMatrix::from_row_slice(self.m, self.n, data));
        }
        let instance = ModelInstance::from_operators(ops, self.sigma_z, self.seed)?;
        let obs = ObservationSet::new(self.looks.iter().map(|y| DVector::from_column_slice(y)).collect());
        Ok((instance, obs, Signal::unchecked(self.truth.clone())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
    }
}

/// Numbers separated by whitespace or commas.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| HarnessError::Validation(vec![format!("not a number: `{t}`")]))
        })
        .collect()
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_vector(&text)
}
