//! Network-wide kernel selection.
//!
//! Shapes are propagated once; every free layer is then scored on its own
//! and assigned its argmax kernel. An optional MAC budget is enforced by
//! [`repair`], and an optional receptive-field floor is checked on the
//! final layer of the resolved network.

pub mod profile;
pub mod repair;
pub mod sweep;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{self, Kernel, NetworkSpec};
use crate::cost;
use crate::error::{Error, Result};
use crate::objective::{self, AccuracyModel, ExponentialAccuracy, Gamma, KernelCandidates, ObjectiveWeights, ScoreTable};

pub use profile::{profile_weights, ProfileRegistry};
pub use repair::{apply_budget_repair, RepairLayer, RepairOutcome, RepairStep};
pub use sweep::{sweep, SweepResult, SweepRow};

#[derive(Debug, Clone, Default)]
pub struct OptimizationConfig {
    pub candidates: KernelCandidates,
    pub weights: ObjectiveWeights,
    pub gamma: Gamma,
    pub budget_macs: Option<u64>,
    /// Minimum receptive field of the final layer, in input pixels.
    pub rf_floor: Option<u64>,
    /// Replaces the exponential accuracy curve when set.
    pub accuracy: Option<Arc<dyn AccuracyModel>>,
}

impl OptimizationConfig {
    pub fn new(candidates: KernelCandidates, weights: ObjectiveWeights, gamma: Gamma) -> Self {
        Self { candidates, weights, gamma, ..Self::default() }
    }

    pub fn with_budget(mut self, budget_macs: u64) -> Self {
        self.budget_macs = Some(budget_macs);
        self
    }

    pub fn with_rf_floor(mut self, rf_floor: u64) -> Self {
        self.rf_floor = Some(rf_floor);
        self
    }

    pub fn accuracy_model(&self) -> Arc<dyn AccuracyModel> {
        self.accuracy.clone().unwrap_or_else(|| Arc::new(ExponentialAccuracy { gamma: self.gamma }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub optimized_spec: NetworkSpec,
    /// One table per free layer, in layer order.
    pub decisions: Vec<ScoreTable>,
    pub total_macs_before_repair: u64,
    pub total_macs_after_repair: u64,
    pub repair_log: Vec<RepairStep>,
    pub final_receptive_field: u64,
}

/// Copy of `spec` with every free layer set to `k`.
pub fn resolve_free(spec: &NetworkSpec, k: u32) -> NetworkSpec {
    let mut out = spec.clone();
    for layer in out.layers.iter_mut().filter(|l| l.kernel.is_free()) {
        layer.kernel = Kernel::Fixed(k);
    }
    out
}

pub fn optimize_network(spec: &NetworkSpec, config: &OptimizationConfig) -> Result<OptimizationResult> {
    let shapes = arch::propagate_shapes(spec)?;
    let candidates = &config.candidates;

    let min_spec = resolve_free(spec, candidates.smallest());
    if let Some(budget) = config.budget_macs {
        let min_macs = cost::network_cost(&min_spec)?.total_macs;
        if min_macs > budget {
            return Err(Error::InfeasibleBudget { budget, min_macs });
        }
    }
    let max_rf = match config.rf_floor {
        Some(floor) => {
            let max_rf = arch::receptive_field_trace(&resolve_free(spec, candidates.largest()))?.final_receptive_field();
            if max_rf < floor {
                return Err(Error::RfFloorUnreachable { floor, max_achievable: max_rf });
            }
            max_rf
        }
        None => 0,
    };

    let accuracy = config.accuracy_model();
    let free: Vec<usize> = spec.layers.iter().enumerate().filter(|(_, l)| l.kernel.is_free()).map(|(i, _)| i).collect();
    let decisions = free
        .par_iter()
        .map(|&i| {
            objective::score_candidates_with(&spec.layers[i], shapes.entries[i].input, candidates, config.weights, accuracy.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;

    // Exact integer MACs per candidate for every free layer.
    let ladders = free
        .iter()
        .zip(&decisions)
        .map(|(&i, table)| {
            let layer = &spec.layers[i];
            let input = shapes.entries[i].input;
            let macs = candidates
                .as_slice()
                .iter()
                .map(|&k| cost::layer_macs(&layer.with_kernel(k), input))
                .collect::<Result<Vec<_>>>()?;
            let current = candidates.as_slice().iter().position(|&k| k == table.chosen_k).expect("chosen k is a candidate");
            Ok(RepairLayer {
                layer_id: layer.id.clone(),
                kernels: candidates.as_slice().to_vec(),
                scores: table.rows.iter().map(|r| r.score).collect(),
                macs,
                current,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let fixed_macs: u64 = spec
        .layers
        .iter()
        .zip(&shapes.entries)
        .filter(|(l, _)| !l.kernel.is_free())
        .map(|(l, e)| cost::layer_macs(l, e.input))
        .sum::<Result<u64>>()?;
    let before = fixed_macs + ladders.iter().map(RepairLayer::current_macs).sum::<u64>();

    let outcome = match config.budget_macs {
        Some(budget) => apply_budget_repair(ladders, fixed_macs, budget)?,
        None => RepairOutcome { total_macs: before, layers: ladders, log: Vec::new() },
    };

    let mut optimized = spec.clone();
    for (&i, ladder) in free.iter().zip(&outcome.layers) {
        optimized.layers[i].kernel = Kernel::Fixed(ladder.current_k());
    }
    let final_rf = arch::receptive_field_trace(&optimized)?.final_receptive_field();
    if let Some(floor) = config.rf_floor {
        if final_rf < floor {
            return Err(Error::RfFloorNotMet { floor, achieved: final_rf, max_achievable: max_rf });
        }
    }

    Ok(OptimizationResult {
        optimized_spec: optimized,
        decisions,
        total_macs_before_repair: before,
        total_macs_after_repair: outcome.total_macs,
        repair_log: outcome.log,
        final_receptive_field: final_rf,
    })
}
