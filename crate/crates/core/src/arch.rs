//! Declarative CNN description plus shape and receptive-field propagation.
//!
//! Spatial padding is always "same": a layer with stride `s` maps an
//! `H x W` map to `ceil(H/s) x ceil(W/s)` whatever its kernel size, so the
//! shape of every layer is fixed before any kernel is chosen.

use std::collections::HashSet;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    StandardConv,
    DepthwiseConv,
    PointwiseConv,
    /// Depthwise `k x k` followed by a pointwise `1 x 1`, treated as one layer.
    DwsepConv,
    MaxPool,
    Identity,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::StandardConv,
        OpKind::DepthwiseConv,
        OpKind::PointwiseConv,
        OpKind::DwsepConv,
        OpKind::MaxPool,
        OpKind::Identity,
    ];

    /// Kinds that carry a learnable spatial kernel and may be marked FREE.
    pub fn is_tunable(self) -> bool {
        matches!(self, OpKind::StandardConv | OpKind::DepthwiseConv | OpKind::DwsepConv)
    }

    pub fn is_conv(self) -> bool {
        !matches!(self, OpKind::MaxPool | OpKind::Identity)
    }

    /// Kinds whose output channel count must equal the input channel count.
    pub fn preserves_channels(self) -> bool {
        matches!(self, OpKind::DepthwiseConv | OpKind::MaxPool | OpKind::Identity)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::StandardConv => "standard_conv",
            OpKind::DepthwiseConv => "depthwise_conv",
            OpKind::PointwiseConv => "pointwise_conv",
            OpKind::DwsepConv => "dwsep_conv",
            OpKind::MaxPool => "max_pool",
            OpKind::Identity => "identity",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kernel side length, or `Free` when the optimizer should choose it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Fixed(u32),
    Free,
}

impl Kernel {
    pub fn fixed(self) -> Option<u32> {
        match self {
            Kernel::Fixed(k) => Some(k),
            Kernel::Free => None,
        }
    }

    pub fn is_free(self) -> bool {
        matches!(self, Kernel::Free)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Fixed(k) => write!(f, "{k}"),
            Kernel::Free => f.write_str("free"),
        }
    }
}

impl Serialize for Kernel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Kernel::Fixed(k) => s.serialize_u32(*k),
            Kernel::Free => s.serialize_str("free"),
        }
    }
}

impl<'de> Deserialize<'de> for Kernel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct KernelVisitor;

        impl Visitor<'_> for KernelVisitor {
            type Value = Kernel;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive integer kernel size or the string \"free\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Kernel, E> {
                u32::try_from(v).map(Kernel::Fixed).map_err(|_| E::custom(format!("kernel {v} out of range")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Kernel, E> {
                if v < 0 {
                    return Err(E::custom(format!("kernel must be positive, got {v}")));
                }
                self.visit_u64(v as u64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Kernel, E> {
                if v == "free" {
                    Ok(Kernel::Free)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        d.deserialize_any(KernelVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Same,
}

impl Padding {
    fn is_same(&self) -> bool {
        matches!(self, Padding::Same)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub id: String,
    pub kind: OpKind,
    pub in_channels: u32,
    pub out_channels: u32,
    pub kernel: Kernel,
    pub stride: u32,
    #[serde(default, skip_serializing_if = "Padding::is_same")]
    pub padding: Padding,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, kind: OpKind, in_channels: u32, out_channels: u32, kernel: Kernel, stride: u32) -> Self {
        Self { id: id.into(), kind, in_channels, out_channels, kernel, stride, padding: Padding::Same }
    }

    pub fn conv(id: impl Into<String>, in_channels: u32, out_channels: u32, k: u32, stride: u32) -> Self {
        Self::new(id, OpKind::StandardConv, in_channels, out_channels, Kernel::Fixed(k), stride)
    }

    /// Kernel size that enters the receptive-field recursion.
    pub fn effective_kernel(&self) -> Option<u32> {
        match self.kind {
            OpKind::Identity | OpKind::PointwiseConv => Some(1),
            _ => self.kernel.fixed(),
        }
    }

    /// Copy of this layer with its kernel replaced by `k`.
    pub fn with_kernel(&self, k: u32) -> Self {
        Self { kernel: Kernel::Fixed(k), ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputShape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
}

/// Feature-map dimensions `(height, width, channels)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureShape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl FeatureShape {
    pub fn new(height: u32, width: u32, channels: u32) -> Self {
        Self { height, width, channels }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub layer_id: String,
    pub input: FeatureShape,
    pub output: FeatureShape,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShapeTrace {
    pub entries: Vec<ShapeEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfEntry {
    pub layer_id: String,
    pub receptive_field: u64,
    pub jump: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RfTrace {
    pub entries: Vec<RfEntry>,
}

impl RfTrace {
    pub fn final_receptive_field(&self) -> u64 {
        self.entries.last().map_or(1, |e| e.receptive_field)
    }
}

pub(crate) fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Every well-formedness problem in `spec`. Empty iff the spec is valid.
pub fn validate_spec(spec: &NetworkSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let input = spec.input;
    if input.height == 0 || input.width == 0 {
        out.push(Violation::network("input height and width must be positive"));
    }
    if input.channels == 0 {
        out.push(Violation::network("input channels must be positive"));
    }
    if spec.layers.is_empty() {
        out.push(Violation::network("network has no layers"));
    }

    let mut seen = HashSet::new();
    let mut prev_channels = input.channels;
    for (i, layer) in spec.layers.iter().enumerate() {
        let id = layer.id.as_str();
        let mut push = |msg: String| out.push(Violation::layer(i, id, msg));

        if !valid_id(id) {
            push(format!("layer id '{id}' must be non-empty and use only [A-Za-z0-9_-]"));
        }
        if !seen.insert(id) {
            push(format!("duplicate layer id '{id}'"));
        }
        if layer.in_channels == 0 || layer.out_channels == 0 {
            push("channel counts must be positive".into());
        }
        if layer.in_channels != prev_channels {
            push(format!(
                "in_channels {} does not match previous output channels {prev_channels}",
                layer.in_channels
            ));
        }
        if layer.stride == 0 {
            push("stride must be >= 1".into());
        }
        if layer.kind.preserves_channels() && layer.out_channels != layer.in_channels {
            push(format!("{} requires out_channels == in_channels", layer.kind));
        }
        match layer.kernel {
            Kernel::Free if !layer.kind.is_tunable() => {
                push(format!("{} layers cannot have a free kernel", layer.kind));
            }
            Kernel::Free => {}
            Kernel::Fixed(0) => push("kernel must be >= 1".into()),
            Kernel::Fixed(k) if k % 2 == 0 => push(format!("kernel must be odd, got {k}")),
            Kernel::Fixed(k) => {
                if matches!(layer.kind, OpKind::PointwiseConv | OpKind::Identity) && k != 1 {
                    push(format!("{} requires kernel 1, got {k}", layer.kind));
                }
            }
        }
        prev_channels = layer.out_channels;
    }
    out
}

pub(crate) fn ensure_valid(spec: &NetworkSpec) -> Result<()> {
    let violations = validate_spec(spec);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(violations))
    }
}

/// Same-padding output size.
pub fn same_padding_out(size: u32, stride: u32) -> u32 {
    size.div_ceil(stride)
}

/// Output shape of `layer` applied to `input` under same padding.
pub fn layer_output_shape(layer: &LayerSpec, input: FeatureShape) -> FeatureShape {
    FeatureShape {
        height: same_padding_out(input.height, layer.stride),
        width: same_padding_out(input.width, layer.stride),
        channels: layer.out_channels,
    }
}

pub fn propagate_shapes(spec: &NetworkSpec) -> Result<ShapeTrace> {
    ensure_valid(spec)?;
    let mut current = FeatureShape::new(spec.input.height, spec.input.width, spec.input.channels);
    let entries = spec
        .layers
        .iter()
        .map(|layer| {
            let output = layer_output_shape(layer, current);
            let entry = ShapeEntry { layer_id: layer.id.clone(), input: current, output };
            current = output;
            entry
        })
        .collect();
    Ok(ShapeTrace { entries })
}

/// Receptive field and jump per layer, starting from a single input pixel.
pub fn receptive_field_trace(spec: &NetworkSpec) -> Result<RfTrace> {
    ensure_valid(spec)?;
    let mut rf: u64 = 1;
    let mut jump: u64 = 1;
    let mut entries = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let k = layer.effective_kernel().ok_or_else(|| Error::UnresolvedKernel(layer.id.clone()))?;
        rf += (u64::from(k) - 1) * jump;
        entries.push(RfEntry { layer_id: layer.id.clone(), receptive_field: rf, jump });
        jump *= u64::from(layer.stride);
    }
    Ok(RfTrace { entries })
}
