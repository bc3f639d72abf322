//! Varying versus shared forward operators over an L grid.

use serde::Serialize;

use crate::config::SweepConfig;
use crate::error::Result;
use crate::sweep::{run_sweep, SweepRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparePoint {
    pub looks: usize,
    pub varying: SweepRecord,
    pub unvarying: SweepRecord,
}

impl ComparePoint {
    /// Both cells succeeded and the varying upper CI end lies below the
    /// unvarying lower CI end.
    pub fn separated(&self) -> bool {
        match (
            self.varying.mean_mse.zip(self.varying.ci_half_width),
            self.unvarying.mean_mse.zip(self.unvarying.ci_half_width),
        ) {
            (Some((vm, vc)), Some((um, uc))) => vm + vc < um - uc,
            _ => false,
        }
    }
}

/// One curve pair: every coordinate but L fixed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareGroup {
    pub m: usize,
    pub n: usize,
    pub sigma_z: f64,
    pub k: usize,
    pub points: Vec<ComparePoint>,
    /// First L at which the unvarying curve improves per doubling of L by
    /// less than half as much as the varying curve.
    pub plateau_l: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub groups: Vec<CompareGroup>,
}

/// `log₂` improvement factor per doubling of L between consecutive points.
fn improvement(prev: &SweepRecord, cur: &SweepRecord) -> Option<f64> {
    let (a, b) = (prev.mean_mse?, cur.mean_mse?);
    if a <= 0.0 || b <= 0.0 {
        return None;
    }
    let doublings = (cur.cell.looks as f64 / prev.cell.looks as f64).log2();
    Some((a / b).log2() / doublings)
}

fn plateau(points: &[ComparePoint]) -> Option<usize> {
    points.windows(2).find_map(|w| {
        let v = improvement(&w[0].varying, &w[1].varying)?;
        let u = improvement(&w[0].unvarying, &w[1].unvarying)?;
        (u < 0.5 * v).then_some(w[1].looks)
    })
}

/// Matched sweeps with `shared_operators` off and on. Cell seeds depend only
/// on coordinates, so both modes see the same signals and speckle draws.
pub fn compare_varying_unvarying(cfg: &SweepConfig) -> Result<CompareReport> {
    let mut varying_cfg = cfg.clone();
    varying_cfg.shared_operators = false;
    let mut unvarying_cfg = cfg.clone();
    unvarying_cfg.shared_operators = true;
    let varying = run_sweep(&varying_cfg)?.records;
    let unvarying = run_sweep(&unvarying_cfg)?.records;

    let mut groups: Vec<CompareGroup> = Vec::new();
    for (v, u) in varying.into_iter().zip(unvarying) {
        let c = v.cell;
        let point = ComparePoint {
            looks: c.looks,
            varying: v,
            unvarying: u,
        };
        match groups
            .iter_mut()
            .find(|g| (g.m, g.n, g.sigma_z.to_bits(), g.k) == (c.m, c.n, c.sigma_z.to_bits(), c.k))
        {
            Some(g) => g.points.push(point),
            None => groups.push(CompareGroup {
                m: c.m,
                n: c.n,
                sigma_z: c.sigma_z,
                k: c.k,
                points: vec![point],
                plateau_l: None,
            }),
        }
    }
    for g in &mut groups {
        g.points.sort_by_key(|p| p.looks);
        g.plateau_l = plateau(&g.points);
    }
    Ok(CompareReport { groups })
}
