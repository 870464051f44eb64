//! Brute-force reference computations for tests.
//!
//! Nothing here calls into the code paths it is used to check: receptive
//! fields come from marking influenced pixels, costs from closed-form
//! counts written out separately, and selections from exhaustive search.

use std::collections::HashSet;

use crate::arch::{Kernel, LayerSpec, NetworkSpec, OpKind};

fn rf_kernel(layer: &LayerSpec) -> i64 {
    match (layer.kind, layer.kernel) {
        (OpKind::Identity | OpKind::PointwiseConv, _) => 1,
        (_, Kernel::Fixed(k)) => i64::from(k),
        (_, Kernel::Free) => panic!("oracle needs resolved kernels"),
    }
}

/// Receptive field of one unit of each layer, found by walking back to the
/// input and marking every pixel that feeds it.
pub fn influence_receptive_fields(spec: &NetworkSpec) -> Vec<u64> {
    (0..spec.layers.len())
        .map(|last| {
            let mut marked: HashSet<(i64, i64)> = HashSet::from([(0, 0)]);
            for layer in spec.layers[..=last].iter().rev() {
                let k = rf_kernel(layer);
                let s = i64::from(layer.stride);
                let half = (k - 1) / 2;
                let mut below = HashSet::with_capacity(marked.len() * (k * k) as usize);
                for &(y, x) in &marked {
                    for dy in 0..k {
                        for dx in 0..k {
                            below.insert((s * y + dy - half, s * x + dx - half));
                        }
                    }
                }
                marked = below;
            }
            let ys = marked.iter().map(|p| p.0);
            let xs = marked.iter().map(|p| p.1);
            let span_y = ys.clone().max().unwrap() - ys.min().unwrap() + 1;
            let span_x = xs.clone().max().unwrap() - xs.min().unwrap() + 1;
            assert_eq!(span_y, span_x, "square kernels give square fields");
            span_y as u64
        })
        .collect()
}

/// Objective scores of `kernels` for one layer, from first principles.
pub fn reference_scores(layer: &LayerSpec, in_hw: (u32, u32), kernels: &[u32], weights: [f64; 3], gamma: f64) -> Vec<f64> {
    let out_h = f64::from(in_hw.0.div_ceil(layer.stride));
    let out_w = f64::from(in_hw.1.div_ceil(layer.stride));
    let (cin, cout) = (f64::from(layer.in_channels), f64::from(layer.out_channels));
    let info: Vec<f64> = kernels.iter().map(|&k| (f64::from(k) + 1.0).ln()).collect();
    let acc: Vec<f64> = kernels.iter().map(|&k| 1.0 - (-gamma * f64::from(k)).exp()).collect();
    let cost: Vec<f64> = kernels
        .iter()
        .map(|&k| {
            let taps = f64::from(k * k);
            match layer.kind {
                OpKind::StandardConv => taps * out_h * out_w * cin * cout,
                OpKind::DepthwiseConv => taps * out_h * out_w * cin,
                OpKind::DwsepConv => taps * out_h * out_w * cin + out_h * out_w * cin * cout,
                other => panic!("{other} is not tunable"),
            }
        })
        .collect();
    let norm = |v: &[f64]| -> Vec<f64> {
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        if hi == lo {
            vec![0.0; v.len()]
        } else {
            v.iter().map(|x| (x - lo) / (hi - lo)).collect()
        }
    };
    let (ni, na, nc) = (norm(&info), norm(&acc), norm(&cost));
    (0..kernels.len()).map(|j| weights[0] * ni[j] + weights[1] * na[j] - weights[2] * nc[j]).collect()
}

/// Input `(height, width)` of every layer under same padding.
pub fn input_dims(spec: &NetworkSpec) -> Vec<(u32, u32)> {
    let mut hw = (spec.input.height, spec.input.width);
    spec.layers
        .iter()
        .map(|l| {
            let here = hw;
            hw = (hw.0.div_ceil(l.stride), hw.1.div_ceil(l.stride));
            here
        })
        .collect()
}

/// Enumerates every joint assignment of the free layers and returns the
/// one maximizing the summed per-layer objective. Ties go to the
/// lexicographically smallest assignment.
pub fn exhaustive_best_assignment(spec: &NetworkSpec, kernels: &[u32], weights: [f64; 3], gamma: f64) -> Vec<u32> {
    let dims = input_dims(spec);
    let per_layer: Vec<Vec<f64>> = spec
        .layers
        .iter()
        .zip(&dims)
        .filter(|(l, _)| l.kernel.is_free())
        .map(|(l, &d)| reference_scores(l, d, kernels, weights, gamma))
        .collect();
    let n = per_layer.len();
    let total = kernels.len().pow(n as u32);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for code in 0..total {
        let mut idx = vec![0usize; n];
        let mut c = code;
        for slot in idx.iter_mut().rev() {
            *slot = c % kernels.len();
            c /= kernels.len();
        }
        let score: f64 = idx.iter().enumerate().map(|(layer, &j)| per_layer[layer][j]).sum();
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, idx));
        }
    }
    best.map(|(_, idx)| idx.into_iter().map(|j| kernels[j]).collect()).unwrap_or_default()
}

/// Every joint assignment of the free layers as `(kernels, total MACs,
/// summed score)`.
pub fn enumerate_assignments(spec: &NetworkSpec, kernels: &[u32], weights: [f64; 3], gamma: f64) -> Vec<(Vec<u32>, u64, f64)> {
    let dims = input_dims(spec);
    let free: Vec<usize> = spec.layers.iter().enumerate().filter(|(_, l)| l.kernel.is_free()).map(|(i, _)| i).collect();
    let scores: Vec<Vec<f64>> =
        free.iter().map(|&i| reference_scores(&spec.layers[i], dims[i], kernels, weights, gamma)).collect();
    let total = kernels.len().pow(free.len() as u32);
    (0..total)
        .map(|code| {
            let mut idx = vec![0usize; free.len()];
            let mut c = code;
            for slot in idx.iter_mut().rev() {
                *slot = c % kernels.len();
                c /= kernels.len();
            }
            let mut resolved = spec.clone();
            for (slot, &i) in free.iter().enumerate() {
                resolved.layers[i].kernel = Kernel::Fixed(kernels[idx[slot]]);
            }
            let macs = closed_form_macs(&resolved);
            let score = idx.iter().enumerate().map(|(slot, &j)| scores[slot][j]).sum();
            (idx.iter().map(|&j| kernels[j]).collect(), macs, score)
        })
        .collect()
}

/// Total MACs written out directly from the per-kind formulas.
pub fn closed_form_macs(spec: &NetworkSpec) -> u64 {
    let dims = input_dims(spec);
    spec.layers
        .iter()
        .zip(dims)
        .map(|(l, (h, w))| {
            let pos = u64::from(h.div_ceil(l.stride)) * u64::from(w.div_ceil(l.stride));
            let (ci, co) = (u64::from(l.in_channels), u64::from(l.out_channels));
            let k = u64::from(l.kernel.fixed().unwrap_or(1));
            match l.kind {
                OpKind::StandardConv => k * k * pos * ci * co,
                OpKind::DepthwiseConv => k * k * pos * ci,
                OpKind::PointwiseConv => pos * ci * co,
                OpKind::DwsepConv => k * k * pos * ci + pos * ci * co,
                OpKind::MaxPool | OpKind::Identity => 0,
            }
        })
        .sum()
}

/// Proptest generators for random networks.
pub mod strategies {
    use proptest::prelude::*;

    use crate::arch::{InputShape, Kernel, LayerSpec, NetworkSpec, OpKind};

    #[derive(Debug, Clone, Copy)]
    pub struct LayerDraw {
        pub kind: OpKind,
        pub out_channels: u32,
        pub kernel: Option<u32>,
        pub stride: u32,
    }

    pub fn kind() -> impl Strategy<Value = OpKind> {
        prop::sample::select(OpKind::ALL.to_vec())
    }

    pub fn tunable_kind() -> impl Strategy<Value = OpKind> {
        prop::sample::select(vec![OpKind::StandardConv, OpKind::DepthwiseConv, OpKind::DwsepConv])
    }

    /// Builds a valid chain from per-layer draws, fixing channel counts and
    /// kernels the op kind does not allow. `kernel: None` means free.
    pub fn assemble(name: &str, input: InputShape, draws: &[LayerDraw]) -> NetworkSpec {
        let mut channels = input.channels;
        let layers = draws
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let out = if d.kind.preserves_channels() { channels } else { d.out_channels };
                let kernel = match d.kind {
                    OpKind::Identity | OpKind::PointwiseConv => Kernel::Fixed(1),
                    OpKind::MaxPool => Kernel::Fixed(d.kernel.unwrap_or(3)),
                    _ => d.kernel.map_or(Kernel::Free, Kernel::Fixed),
                };
                let layer = LayerSpec::new(format!("l{i}"), d.kind, channels, out, kernel, d.stride);
                channels = out;
                layer
            })
            .collect();
        NetworkSpec { name: name.to_string(), input, layers }
    }

    /// Resolved networks of 1..=`max_layers` layers of any kind with
    /// k in {1,3,5} and s in {1,2}.
    pub fn resolved_spec(max_layers: usize) -> impl Strategy<Value = NetworkSpec> {
        let draw = (kind(), 1u32..=4, prop::sample::select(vec![1u32, 3, 5]), 1u32..=2)
            .prop_map(|(kind, out_channels, k, stride)| LayerDraw { kind, out_channels, kernel: Some(k), stride });
        (1u32..=16, 1u32..=16, 1u32..=3, prop::collection::vec(draw, 1..=max_layers)).prop_map(|(h, w, c, draws)| {
            assemble("random", InputShape { height: h, width: w, channels: c }, &draws)
        })
    }

    /// Networks of exactly `n` tunable layers, all free.
    pub fn free_spec(n: usize) -> impl Strategy<Value = NetworkSpec> {
        let draw = (tunable_kind(), 1u32..=64, 1u32..=2)
            .prop_map(|(kind, out_channels, stride)| LayerDraw { kind, out_channels, kernel: None, stride });
        (1u32..=64, 1u32..=64, 1u32..=16, prop::collection::vec(draw, n)).prop_map(|(h, w, c, draws)| {
            assemble("free", InputShape { height: h, width: w, channels: c }, &draws)
        })
    }

    /// Mixed networks of up to `max_layers` layers where tunable layers
    /// are free with probability one half.
    pub fn partially_free_spec(max_layers: usize) -> impl Strategy<Value = NetworkSpec> {
        let draw = (kind(), 1u32..=32, prop::option::of(prop::sample::select(vec![1u32, 3, 5, 7])), 1u32..=2)
            .prop_map(|(kind, out_channels, kernel, stride)| LayerDraw { kind, out_channels, kernel, stride });
        (1u32..=48, 1u32..=48, 1u32..=8, prop::collection::vec(draw, 1..=max_layers)).prop_map(|(h, w, c, draws)| {
            assemble("mixed", InputShape { height: h, width: w, channels: c }, &draws)
        })
    }
}
