//! Greedy kernel downgrading to satisfy a hard MAC budget.
//!
//! Each step moves one free layer to its next smaller candidate, choosing
//! the move with the least objective-score loss per MAC saved. Ties go to
//! the earliest layer. The result is not guaranteed to be the best
//! assignment under the budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One free layer's candidate ladder, ascending by kernel size.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairLayer {
    pub layer_id: String,
    pub kernels: Vec<u32>,
    pub scores: Vec<f64>,
    pub macs: Vec<u64>,
    /// Index into `kernels` of the current assignment.
    pub current: usize,
}

impl RepairLayer {
    pub fn current_k(&self) -> u32 {
        self.kernels[self.current]
    }

    pub fn current_macs(&self) -> u64 {
        self.macs[self.current]
    }

    /// `(score_loss, macs_saved)` of stepping down one candidate.
    pub fn step_down(&self) -> Option<(f64, u64)> {
        let c = self.current;
        (c > 0).then(|| (self.scores[c] - self.scores[c - 1], self.macs[c] - self.macs[c - 1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairStep {
    pub layer_id: String,
    pub from_k: u32,
    pub to_k: u32,
    pub score_loss: f64,
    pub macs_saved: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub layers: Vec<RepairLayer>,
    pub log: Vec<RepairStep>,
    pub total_macs: u64,
}

/// Index of the next greedy move, or `None` when every layer is at its
/// smallest candidate.
pub fn next_move(layers: &[RepairLayer]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, layer) in layers.iter().enumerate() {
        let Some((loss, saved)) = layer.step_down() else { continue };
        // Candidate MACs are strictly increasing, so `saved > 0`.
        let ratio = loss / saved as f64;
        if best.is_none_or(|(_, b)| ratio < b) {
            best = Some((i, ratio));
        }
    }
    best.map(|(i, _)| i)
}

/// Downgrades `layers` until `fixed_macs + sum(current macs) <= budget`.
///
/// `fixed_macs` is the cost of all layers not subject to repair.
pub fn apply_budget_repair(mut layers: Vec<RepairLayer>, fixed_macs: u64, budget: u64) -> Result<RepairOutcome> {
    let mut total = fixed_macs + layers.iter().map(RepairLayer::current_macs).sum::<u64>();
    let mut log = Vec::new();
    while total > budget {
        let Some(i) = next_move(&layers) else {
            return Err(Error::InfeasibleBudget { budget, min_macs: total });
        };
        let layer = &mut layers[i];
        let (loss, saved) = layer.step_down().expect("next_move only returns movable layers");
        let from_k = layer.current_k();
        layer.current -= 1;
        total -= saved;
        log.push(RepairStep { layer_id: layer.layer_id.clone(), from_k, to_k: layer.current_k(), score_loss: loss, macs_saved: saved });
    }
    Ok(RepairOutcome { layers, log, total_macs: total })
}
