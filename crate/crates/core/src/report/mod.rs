//! Descriptor parsing, report assembly and network comparison.

pub mod format;

use serde::{Deserialize, Serialize};

use crate::arch::{self, FeatureShape, Kernel, NetworkSpec, OpKind};
use crate::cost::{self, CostReport};
use crate::error::{Error, Result};
use crate::objective::{Gamma, KernelCandidates, ObjectiveWeights};
use crate::optimizer::{OptimizationConfig, OptimizationResult, SweepResult};

pub use format::{FormatRegistry, ReportWriter};

/// Parses a JSON architecture descriptor and validates it.
///
/// Unknown keys and wrongly typed values are rejected with the offending
/// path and source position.
pub fn parse_spec(document: &str) -> Result<NetworkSpec> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let spec: NetworkSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            Error::Parse(inner.to_string())
        } else {
            Error::Parse(format!("at {path}: {inner}"))
        }
    })?;
    arch::ensure_valid(&spec)?;
    Ok(spec)
}

/// Serializes `spec` as a descriptor document accepted by [`parse_spec`].
pub fn emit_spec(spec: &NetworkSpec) -> String {
    let mut s = serde_json::to_string_pretty(spec).expect("network spec serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisLayer {
    pub layer_id: String,
    pub kind: OpKind,
    pub kernel: Kernel,
    pub stride: u32,
    pub input: FeatureShape,
    pub output: FeatureShape,
    pub receptive_field: u64,
    pub jump: u64,
    pub macs: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub spec_name: String,
    pub layers: Vec<AnalysisLayer>,
    pub total_macs: u64,
    pub total_params: u64,
    pub bytes_per_weight: u64,
    pub model_size_bytes: u64,
    pub final_receptive_field: u64,
}

/// Shapes, receptive fields and costs of a fully resolved network.
pub fn analyze(spec: &NetworkSpec, bytes_per_weight: u64) -> Result<AnalysisReport> {
    let shapes = arch::propagate_shapes(spec)?;
    let rf = arch::receptive_field_trace(spec)?;
    let cost = cost::network_cost_with(spec, bytes_per_weight)?;
    let layers = spec
        .layers
        .iter()
        .zip(&shapes.entries)
        .zip(rf.entries.iter().zip(&cost.layers))
        .map(|((layer, shape), (rf, lc))| AnalysisLayer {
            layer_id: layer.id.clone(),
            kind: layer.kind,
            kernel: layer.kernel,
            stride: layer.stride,
            input: shape.input,
            output: shape.output,
            receptive_field: rf.receptive_field,
            jump: rf.jump,
            macs: lc.macs,
            params: lc.params,
        })
        .collect();
    Ok(AnalysisReport {
        spec_name: spec.name.clone(),
        layers,
        total_macs: cost.total_macs,
        total_params: cost.total_params,
        bytes_per_weight,
        model_size_bytes: cost.model_size_bytes,
        final_receptive_field: rf.final_receptive_field(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub spec_name: String,
    pub weights: ObjectiveWeights,
    pub gamma: Gamma,
    pub candidates: KernelCandidates,
    pub accuracy_model: String,
    pub budget_macs: Option<u64>,
    pub rf_floor: Option<u64>,
    pub result: OptimizationResult,
}

impl OptimizationReport {
    pub fn new(spec_name: &str, config: &OptimizationConfig, result: OptimizationResult) -> Self {
        Self {
            spec_name: spec_name.to_string(),
            weights: config.weights,
            gamma: config.gamma,
            candidates: config.candidates.clone(),
            accuracy_model: config.accuracy_model().name().to_string(),
            budget_macs: config.budget_macs,
            rf_floor: config.rf_floor,
            result,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerBrief {
    pub id: String,
    pub kind: OpKind,
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelDiff {
    pub index: usize,
    pub a: Option<LayerBrief>,
    pub b: Option<LayerBrief>,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub name_a: String,
    pub name_b: String,
    pub macs_a: u64,
    pub macs_b: u64,
    /// `(b - a) / a * 100`; negative means `b` is smaller. `None` when `a`
    /// is zero and `b` is not.
    pub mac_delta_percent: Option<f64>,
    pub params_a: u64,
    pub params_b: u64,
    pub param_delta_percent: Option<f64>,
    pub model_size_bytes_a: u64,
    pub model_size_bytes_b: u64,
    pub model_size_delta_percent: Option<f64>,
    pub receptive_field_a: u64,
    pub receptive_field_b: u64,
    pub kernel_diff: Vec<KernelDiff>,
}

/// `(b - a) / a * 100` from exact integer totals.
pub fn delta_percent(a: u64, b: u64) -> Option<f64> {
    match (a, b) {
        (0, 0) => Some(0.0),
        (0, _) => None,
        _ => Some((b as f64 - a as f64) / a as f64 * 100.0),
    }
}

pub fn compare(a: &NetworkSpec, b: &NetworkSpec) -> Result<ComparisonReport> {
    compare_with(a, b, cost::DEFAULT_BYTES_PER_WEIGHT)
}

pub fn compare_with(a: &NetworkSpec, b: &NetworkSpec, bytes_per_weight: u64) -> Result<ComparisonReport> {
    let cost_a: CostReport = cost::network_cost_with(a, bytes_per_weight)?;
    let cost_b: CostReport = cost::network_cost_with(b, bytes_per_weight)?;
    let rf_a = arch::receptive_field_trace(a)?.final_receptive_field();
    let rf_b = arch::receptive_field_trace(b)?.final_receptive_field();

    let brief = |spec: &NetworkSpec, i: usize| {
        spec.layers.get(i).map(|l| LayerBrief { id: l.id.clone(), kind: l.kind, kernel: l.kernel })
    };
    let kernel_diff = (0..a.layers.len().max(b.layers.len()))
        .map(|index| {
            let (la, lb) = (brief(a, index), brief(b, index));
            let changed = match (&la, &lb) {
                (Some(x), Some(y)) => x.kind != y.kind || x.kernel != y.kernel,
                _ => true,
            };
            KernelDiff { index, a: la, b: lb, changed }
        })
        .collect();

    Ok(ComparisonReport {
        name_a: a.name.clone(),
        name_b: b.name.clone(),
        macs_a: cost_a.total_macs,
        macs_b: cost_b.total_macs,
        mac_delta_percent: delta_percent(cost_a.total_macs, cost_b.total_macs),
        params_a: cost_a.total_params,
        params_b: cost_b.total_params,
        param_delta_percent: delta_percent(cost_a.total_params, cost_b.total_params),
        model_size_bytes_a: cost_a.model_size_bytes,
        model_size_bytes_b: cost_b.model_size_bytes,
        model_size_delta_percent: delta_percent(cost_a.model_size_bytes, cost_b.model_size_bytes),
        receptive_field_a: rf_a,
        receptive_field_b: rf_b,
        kernel_diff,
    })
}

/// Everything a [`ReportWriter`] can render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Analysis(AnalysisReport),
    Optimization(OptimizationReport),
    Comparison(ComparisonReport),
    Sweep(SweepResult),
}
