//! Grid sweeps over objective weights and gamma.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{optimize_network, OptimizationConfig};
use crate::arch::NetworkSpec;
use crate::cost;
use crate::error::{Error, Result};
use crate::objective::{Gamma, KernelCandidates, ObjectiveWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub gamma: f64,
    /// Chosen kernel per free layer, aligned with [`SweepResult::layer_ids`].
    pub kernels: Vec<u32>,
    pub total_macs: Option<u64>,
    pub total_params: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec_name: String,
    pub layer_ids: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// One unconstrained optimization per `(weights, gamma)` pair.
///
/// Rows follow the grid in index order: weights outer, gamma inner. A
/// failing grid point yields a row carrying the error message.
pub fn sweep(
    spec: &NetworkSpec,
    lambda_grid: &[ObjectiveWeights],
    gamma_grid: &[Gamma],
    candidates: &KernelCandidates,
) -> Result<SweepResult> {
    if lambda_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::Domain("sweep grids must be non-empty".into()));
    }
    crate::arch::ensure_valid(spec)?;
    let layer_ids = spec.layers.iter().filter(|l| l.kernel.is_free()).map(|l| l.id.clone()).collect();

    let points: Vec<(ObjectiveWeights, Gamma)> =
        lambda_grid.iter().flat_map(|&w| gamma_grid.iter().map(move |&g| (w, g))).collect();
    let rows = points
        .par_iter()
        .map(|&(weights, gamma)| {
            let [lambda1, lambda2, lambda3] = weights.as_array();
            let mut row = SweepRow {
                lambda1,
                lambda2,
                lambda3,
                gamma: gamma.value(),
                kernels: Vec::new(),
                total_macs: None,
                total_params: None,
                error: None,
            };
            let config = OptimizationConfig::new(candidates.clone(), weights, gamma);
            let outcome = optimize_network(spec, &config)
                .and_then(|r| cost::network_cost(&r.optimized_spec).map(|c| (r, c)));
            match outcome {
                Ok((result, cost)) => {
                    row.kernels = result.decisions.iter().map(|d| d.chosen_k).collect();
                    row.total_macs = Some(cost.total_macs);
                    row.total_params = Some(cost.total_params);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    Ok(SweepResult { spec_name: spec.name.clone(), layer_ids, rows })
}
