//! Multiply-accumulate and parameter accounting.
//!
//! One MAC counts as one "FLOP" in every report. Bias, normalization and
//! activation costs are not modeled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{self, FeatureShape, LayerSpec, NetworkSpec, OpKind};
use crate::error::{Error, Result};

pub const DEFAULT_BYTES_PER_WEIGHT: u64 = 4;

/// Upper bound on `H * W * C_in * C_out` accepted by [`oracle_macs_bruteforce`].
pub const ORACLE_DIM_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer_id: String,
    pub macs: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub total_macs: u64,
    pub total_params: u64,
    pub bytes_per_weight: u64,
    pub model_size_bytes: u64,
}

fn concrete_kernel(layer: &LayerSpec) -> Result<u64> {
    layer.effective_kernel().map(u64::from).ok_or_else(|| Error::Layer {
        layer_id: layer.id.clone(),
        message: "kernel is unresolved (free)".into(),
    })
}

/// MACs of `layer` applied to an input of shape `input`.
pub fn layer_macs(layer: &LayerSpec, input: FeatureShape) -> Result<u64> {
    let k = concrete_kernel(layer)?;
    let out = arch::layer_output_shape(layer, input);
    let positions = u64::from(out.height) * u64::from(out.width);
    let c_in = u64::from(layer.in_channels);
    let c_out = u64::from(layer.out_channels);
    let macs = match layer.kind {
        OpKind::StandardConv => k * k * positions * c_in * c_out,
        OpKind::DepthwiseConv => k * k * positions * c_in,
        OpKind::PointwiseConv => positions * c_in * c_out,
        OpKind::DwsepConv => k * k * positions * c_in + positions * c_in * c_out,
        OpKind::MaxPool | OpKind::Identity => 0,
    };
    Ok(macs)
}

pub fn layer_params(layer: &LayerSpec) -> Result<u64> {
    let k = concrete_kernel(layer)?;
    let c_in = u64::from(layer.in_channels);
    let c_out = u64::from(layer.out_channels);
    Ok(match layer.kind {
        OpKind::StandardConv => k * k * c_in * c_out,
        OpKind::DepthwiseConv => k * k * c_in,
        OpKind::PointwiseConv => c_in * c_out,
        OpKind::DwsepConv => k * k * c_in + c_in * c_out,
        OpKind::MaxPool | OpKind::Identity => 0,
    })
}

pub fn network_cost(spec: &NetworkSpec) -> Result<CostReport> {
    network_cost_with(spec, DEFAULT_BYTES_PER_WEIGHT)
}

pub fn network_cost_with(spec: &NetworkSpec, bytes_per_weight: u64) -> Result<CostReport> {
    let shapes = arch::propagate_shapes(spec)?;
    let layers = spec
        .layers
        .par_iter()
        .zip(shapes.entries.par_iter())
        .map(|(layer, entry)| {
            Ok(LayerCost { layer_id: layer.id.clone(), macs: layer_macs(layer, entry.input)?, params: layer_params(layer)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let total_macs = layers.iter().map(|c| c.macs).sum();
    let total_params: u64 = layers.iter().map(|c| c.params).sum();
    Ok(CostReport { layers, total_macs, total_params, bytes_per_weight, model_size_bytes: total_params * bytes_per_weight })
}

/// Counts MACs by walking every output position, channel pair and kernel
/// tap. Only meant for checking [`layer_macs`] on small shapes.
pub fn oracle_macs_bruteforce(layer: &LayerSpec, input: FeatureShape) -> Result<u64> {
    let dims = u64::from(input.height) * u64::from(input.width) * u64::from(layer.in_channels) * u64::from(layer.out_channels);
    if dims > ORACLE_DIM_LIMIT {
        return Err(Error::OracleRefused(format!("shape product {dims} exceeds {ORACLE_DIM_LIMIT}")));
    }
    let k = concrete_kernel(layer)? as usize;

    // Output positions enumerated directly from the padded sliding window,
    // not from the ceil formula.
    let positions = |size: u32, stride: u32| -> usize {
        let (size, stride) = (size as usize, stride as usize);
        let pad_total = k - 1;
        let padded = size + pad_total;
        let mut n = 0;
        let mut start = 0;
        while start < size && start + k <= padded {
            n += 1;
            start += stride;
        }
        n
    };
    let (oh, ow) = (positions(input.height, layer.stride), positions(input.width, layer.stride));
    let c_in = layer.in_channels as usize;
    let c_out = layer.out_channels as usize;

    let mut count = 0u64;
    let mut conv = |taps: usize, pairs: &dyn Fn(usize) -> usize, out_channels: usize| {
        for _y in 0..oh {
            for _x in 0..ow {
                for oc in 0..out_channels {
                    for _ic in 0..pairs(oc) {
                        for _ty in 0..taps {
                            for _tx in 0..taps {
                                count += 1;
                            }
                        }
                    }
                }
            }
        }
    };
    match layer.kind {
        OpKind::StandardConv => conv(k, &|_| c_in, c_out),
        OpKind::DepthwiseConv => conv(k, &|_| 1, c_in),
        OpKind::PointwiseConv => conv(1, &|_| c_in, c_out),
        OpKind::DwsepConv => {
            conv(k, &|_| 1, c_in);
            conv(1, &|_| c_in, c_out);
        }
        OpKind::MaxPool | OpKind::Identity => {}
    }
    Ok(count)
}
