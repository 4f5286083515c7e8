//! Layer and graph data model for chains of depthwise and pointwise convolutions.
//!
//! Sizes are element counts unless a name says otherwise. Batch size is always one.

mod candidates;
mod graph;

pub use candidates::{admissible_kinds, fusion_candidates, FcmKind, FusionCandidate};
pub use graph::{parse_model, ModelGraph};

use std::fmt;

use serde::{Deserialize, Serialize};

/// Height, width and channel count of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u64; 3]", into = "[u64; 3]")]
pub struct TensorDims {
    pub height: u64,
    pub width: u64,
    pub depth: u64,
}

impl TensorDims {
    pub const fn new(height: u64, width: u64, depth: u64) -> Self {
        TensorDims {
            height,
            width,
            depth,
        }
    }

    pub fn size_elements(&self) -> u64 {
        self.height * self.width * self.depth
    }

    pub fn spatial(&self) -> u64 {
        self.height * self.width
    }
}

impl From<[u64; 3]> for TensorDims {
    fn from(v: [u64; 3]) -> Self {
        TensorDims::new(v[0], v[1], v[2])
    }
}

impl From<TensorDims> for [u64; 3] {
    fn from(d: TensorDims) -> Self {
        [d.height, d.width, d.depth]
    }
}

impl fmt::Display for TensorDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp32,
    Int8,
}

impl Precision {
    pub fn byte_width(self) -> u64 {
        match self {
            Precision::Fp32 => 4,
            Precision::Int8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Fp32 => "fp32",
            Precision::Int8 => "int8",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" => Ok(Precision::Fp32),
            "int8" => Ok(Precision::Int8),
            other => Err(format!("unknown precision `{other}` (expected fp32|int8)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dw,
    Pw,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Dw => "DW",
            LayerKind::Pw => "PW",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Spatial axis selector for per-axis geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    H,
    W,
}

/// One depthwise or pointwise convolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayer {
    pub id: String,
    pub kind: LayerKind,
    pub ifm: TensorDims,
    pub filter_h: u64,
    pub filter_w: u64,
    pub strides: u64,
    pub out_depth: u64,
    pub precision: Precision,
    pub padding: Padding,
}

impl ConvLayer {
    pub fn pw(
        id: impl Into<String>,
        ifm: TensorDims,
        out_depth: u64,
        precision: Precision,
    ) -> Self {
        ConvLayer {
            id: id.into(),
            kind: LayerKind::Pw,
            ifm,
            filter_h: 1,
            filter_w: 1,
            strides: 1,
            out_depth,
            precision,
            padding: Padding::Same,
        }
    }

    pub fn dw(
        id: impl Into<String>,
        ifm: TensorDims,
        filter: u64,
        strides: u64,
        padding: Padding,
        precision: Precision,
    ) -> Self {
        ConvLayer {
            id: id.into(),
            kind: LayerKind::Dw,
            ifm,
            filter_h: filter,
            filter_w: filter,
            strides,
            out_depth: ifm.depth,
            precision,
            padding,
        }
    }

    /// Checks the per-layer invariants; graph-level checks live in [`ModelGraph`].
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |message: String| crate::Error::InvalidLayer {
            layer: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(bad("empty id".into()));
        }
        if self.ifm.height == 0 || self.ifm.width == 0 || self.ifm.depth == 0 {
            return Err(bad(format!("ifm dims must be >= 1, got {}", self.ifm)));
        }
        if self.filter_h == 0 || self.filter_w == 0 || self.strides == 0 || self.out_depth == 0 {
            return Err(bad("filter, strides and out_depth must be >= 1".into()));
        }
        match self.kind {
            LayerKind::Pw => {
                if self.filter_h != 1 || self.filter_w != 1 {
                    return Err(bad(format!(
                        "pointwise filter must be 1x1, got {}x{}",
                        self.filter_h, self.filter_w
                    )));
                }
                if self.strides != 1 {
                    return Err(bad(format!(
                        "pointwise strides must be 1, got {}",
                        self.strides
                    )));
                }
            }
            LayerKind::Dw => {
                if self.out_depth != self.ifm.depth {
                    return Err(bad(format!(
                        "depthwise out_depth {} must equal ifm depth {}",
                        self.out_depth, self.ifm.depth
                    )));
                }
            }
        }
        if self.padding == Padding::Valid
            && (self.ifm.height < self.filter_h || self.ifm.width < self.filter_w)
        {
            return Err(bad(format!(
                "valid padding needs ifm >= filter, got ifm {} filter {}x{}",
                self.ifm, self.filter_h, self.filter_w
            )));
        }
        Ok(())
    }

    pub fn ofm(&self) -> TensorDims {
        TensorDims::new(
            self.out_extent(Axis::H),
            self.out_extent(Axis::W),
            self.out_depth,
        )
    }

    fn out_extent(&self, axis: Axis) -> u64 {
        let (input, filter) = self.axis_params(axis);
        match self.padding {
            Padding::Same => input.div_ceil(self.strides),
            Padding::Valid => (input - filter) / self.strides + 1,
        }
    }

    fn axis_params(&self, axis: Axis) -> (u64, u64) {
        match axis {
            Axis::H => (self.ifm.height, self.filter_h),
            Axis::W => (self.ifm.width, self.filter_w),
        }
    }

    pub fn filter(&self, axis: Axis) -> u64 {
        self.axis_params(axis).1
    }

    pub fn weights_elements(&self) -> u64 {
        match self.kind {
            LayerKind::Dw => self.filter_h * self.filter_w * self.ifm.depth,
            LayerKind::Pw => self.ifm.depth * self.out_depth,
        }
    }

    /// Multiply-accumulates needed to produce one output element.
    pub fn macs_per_output(&self) -> u64 {
        match self.kind {
            LayerKind::Dw => self.filter_h * self.filter_w,
            LayerKind::Pw => self.ifm.depth,
        }
    }

    pub fn nominal_macs(&self) -> u64 {
        self.ofm().size_elements() * self.macs_per_output()
    }

    /// Leading zero-padding on `axis` (TensorFlow SAME convention; zero for VALID).
    pub fn pad_before(&self, axis: Axis) -> u64 {
        match self.padding {
            Padding::Valid => 0,
            Padding::Same => {
                let (input, filter) = self.axis_params(axis);
                let out = self.out_extent(axis);
                let needed = (out - 1) * self.strides + filter;
                needed.saturating_sub(input) / 2
            }
        }
    }

    /// Input rows (or columns) read to produce outputs `[out_lo, out_hi)` on `axis`,
    /// clipped to the feature map. Padding positions are not part of the range.
    pub fn input_range(&self, axis: Axis, out_lo: u64, out_hi: u64) -> (u64, u64) {
        debug_assert!(out_lo < out_hi);
        let (input, filter) = self.axis_params(axis);
        let pad = self.pad_before(axis) as i64;
        let lo = (out_lo * self.strides) as i64 - pad;
        let hi = ((out_hi - 1) * self.strides + filter) as i64 - pad;
        let lo = lo.max(0) as u64;
        let hi = (hi.max(0) as u64).min(input);
        (lo, hi.max(lo))
    }

    /// Unclipped-then-clamped input tile extent for an output tile of `tile` outputs.
    pub fn input_tile_extent(&self, axis: Axis, tile: u64) -> u64 {
        let (input, filter) = self.axis_params(axis);
        ((tile - 1) * self.strides + filter).min(input)
    }
}
