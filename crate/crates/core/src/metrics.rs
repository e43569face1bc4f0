//! Scores of a fit against the simulation truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{PointFit, SelectionReport};
use crate::model::GxEDataset;
use crate::simgen::{TruthFn, TruthSpec};

/// Points of the IMSE grid on `[0, 1]`.
pub const GRID_POINTS: usize = 200;

pub fn default_grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|m| m as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// Mean squared deviation of an estimated curve from the truth over the grid.
pub fn imse(estimate: &[f64], truth: TruthFn, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Dimension("empty grid".into()));
    }
    if estimate.len() != grid.len() {
        return Err(Error::Dimension(format!("{} curve values for {} grid points", estimate.len(), grid.len())));
    }
    Ok(estimate.iter().zip(grid).map(|(e, &z)| (e - truth.eval(z)).powi(2)).sum::<f64>() / grid.len() as f64)
}

/// True and false positives of one family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Identification {
    pub varying: Counts,
    pub constant: Counts,
    pub e: Counts,
}

/// Score selections: varying against the truly varying genes, constant
/// against the nonzero-constant genes (truly varying genes are not counted as
/// constant false positives), and E against the nonzero interactions.
pub fn identification_counts(report: &SelectionReport, truth: &TruthSpec) -> Result<Identification> {
    if report.genes.len() != truth.p() {
        return Err(Error::Dimension(format!("report has {} genes, truth has {}", report.genes.len(), truth.p())));
    }
    let mut id = Identification::default();
    for g in &report.genes {
        let b = truth.beta[g.gene];
        if g.selected_varying {
            if b.is_varying() {
                id.varying.tp += 1;
            } else {
                id.varying.fp += 1;
            }
        }
        if g.selected_constant {
            if b.is_constant() {
                id.constant.tp += 1;
            } else if !b.is_varying() {
                id.constant.fp += 1;
            }
        }
        if g.selected_e {
            if truth.zeta[g.gene] != 0.0 {
                id.e.tp += 1;
            } else {
                id.e.fp += 1;
            }
        }
    }
    Ok(id)
}

/// Mean squared prediction error on `test`.
pub fn prediction_error(fit: &PointFit, test: &GxEDataset) -> Result<f64> {
    let pred = fit.predict(test)?;
    Ok(pred.iter().zip(test.y.iter()).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / test.n() as f64)
}

/// Estimation errors of a fit, itemized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationErrors {
    pub intercept_imse: f64,
    /// IMSE of each gene's coefficient function (zero functions included).
    pub beta_imse: Vec<f64>,
    pub alpha_sq: Vec<f64>,
    pub zeta0_sq: f64,
    pub zeta_sq: Vec<f64>,
}

impl EstimationErrors {
    /// Sum of every itemized component.
    pub fn total(&self) -> f64 {
        self.intercept_imse
            + self.beta_imse.iter().sum::<f64>()
            + self.alpha_sq.iter().sum::<f64>()
            + self.zeta0_sq
            + self.zeta_sq.iter().sum::<f64>()
    }
}

pub fn estimation_errors(fit: &PointFit, truth: &TruthSpec, grid: &[f64]) -> Result<EstimationErrors> {
    if fit.gamma1.len() != truth.p() || fit.alpha.len() != truth.alpha.len() {
        return Err(Error::Dimension("fit and truth dimensions differ".into()));
    }
    let curve = |f: &dyn Fn(f64) -> f64| grid.iter().map(|&z| f(z)).collect::<Vec<f64>>();
    let intercept_imse = imse(&curve(&|z| fit.intercept(z)), truth.intercept, grid)?;
    let beta_imse = (0..truth.p())
        .map(|j| imse(&curve(&|z| fit.beta(j, z)), truth.beta[j], grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimationErrors {
        intercept_imse,
        beta_imse,
        alpha_sq: fit.alpha.iter().zip(&truth.alpha).map(|(a, b)| (a - b).powi(2)).collect(),
        zeta0_sq: (fit.zeta0 - truth.zeta0).powi(2),
        zeta_sq: fit.zeta.iter().zip(&truth.zeta).map(|(a, b)| (a - b).powi(2)).collect(),
    })
}

/// Total squared error: IMSE of all `p + 1` coefficient functions plus squared errors of all scalars.
pub fn total_squared_error(fit: &PointFit, truth: &TruthSpec, grid: &[f64]) -> Result<f64> {
    Ok(estimation_errors(fit, truth, grid)?.total())
}
