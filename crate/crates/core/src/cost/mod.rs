//! Analytic global-memory-access (GMA) models.
//!
//! Every model produces element counts per array; byte totals scale each array
//! by the precision of the layer that owns it.

mod constraints;
mod fused;
mod lbl;
mod overlap;
mod strategy;
mod tiling;

pub use constraints::{constraint_check, Clause, ClauseCheck, ConstraintReport, Footprint};
pub use fused::{DwPw, PwDw, PwDwRecompute, PwPw};
pub use lbl::{DepthwiseLbl, PointwiseLbl};
pub use overlap::{overlap, overlap_for_grid, replicated_extent};
pub use strategy::{cost_models, CostModel, CostModelRegistry};
pub use tiling::{TileGrid, Tiling, Workload};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gpu::GpuSpec;
use crate::model::{ConvLayer, FcmKind, LayerKind, Precision};
use crate::{Error, Result};

/// Which form of the GMA equations to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EquationMode {
    /// The equations exactly as printed: fused modules carry no final-store term
    /// and pointwise weight terms are charged per output tile.
    #[serde(rename = "paper")]
    PaperVerbatim,
    /// Counts that agree with a tiled execution: final outputs are stored once,
    /// pointwise weights are charged per spatial tile, tile counts are per axis.
    #[default]
    #[serde(rename = "consistent")]
    Consistent,
}

impl fmt::Display for EquationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquationMode::PaperVerbatim => "paper",
            EquationMode::Consistent => "consistent",
        })
    }
}

impl std::str::FromStr for EquationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "paper" | "paper_verbatim" => Ok(EquationMode::PaperVerbatim),
            "consistent" => Ok(EquationMode::Consistent),
            _ => Err(format!("unknown mode `{s}` (expected paper|consistent)")),
        }
    }
}

/// Element counts behind a [`GmaEstimate`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GmaElements {
    pub ifm: u64,
    pub overlap: u64,
    pub first_weights: u64,
    pub second_weights: u64,
    pub ofm: u64,
}

impl GmaElements {
    pub fn total(&self) -> u64 {
        self.ifm + self.overlap + self.first_weights + self.second_weights + self.ofm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GmaEstimate {
    pub ifm_bytes: u64,
    pub weight_bytes: u64,
    pub ofm_bytes: u64,
    pub overlap_bytes: u64,
    pub total_bytes: u64,
    pub elements: GmaElements,
    pub equation_mode: EquationMode,
}

impl GmaEstimate {
    /// Inputs, overlap and first weights use `first`'s width; second weights and
    /// outputs use `second`'s.
    pub fn from_elements(
        elements: GmaElements,
        first: Precision,
        second: Precision,
        mode: EquationMode,
    ) -> Self {
        let (b1, b2) = (first.byte_width(), second.byte_width());
        let ifm_bytes = elements.ifm * b1;
        let overlap_bytes = elements.overlap * b1;
        let weight_bytes = elements.first_weights * b1 + elements.second_weights * b2;
        let ofm_bytes = elements.ofm * b2;
        GmaEstimate {
            ifm_bytes,
            weight_bytes,
            ofm_bytes,
            overlap_bytes,
            total_bytes: ifm_bytes + weight_bytes + ofm_bytes + overlap_bytes,
            elements,
            equation_mode: mode,
        }
    }
}

/// MAC counts of a kernel under a tiling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ComputeProfile {
    pub first_nominal_macs: u64,
    pub second_nominal_macs: u64,
    /// Intermediate elements recomputed because spatial tiles overlap.
    pub redundant_macs: u64,
    /// Intermediate elements recomputed once per weight partition.
    pub replicated_macs: u64,
}

impl ComputeProfile {
    pub fn total_macs(&self) -> u64 {
        self.first_nominal_macs
            + self.second_nominal_macs
            + self.redundant_macs
            + self.replicated_macs
    }

    /// Redundant MACs over all MACs of one pass (nominal plus redundant).
    pub fn redundancy_ratio(&self) -> f64 {
        let base = self.first_nominal_macs + self.second_nominal_macs + self.redundant_macs;
        if base == 0 {
            0.0
        } else {
            self.redundant_macs as f64 / base as f64
        }
    }
}

fn checked<'a>(workload: &Workload<'_>, tiling: &Tiling) -> Result<&'a dyn CostModel> {
    workload.check_pair()?;
    tiling.validate(workload)?;
    cost_models().for_workload(workload)
}

/// Evaluates the model for `workload` without any GPU constraint.
pub fn estimate_unchecked(
    workload: &Workload<'_>,
    tiling: &Tiling,
    mode: EquationMode,
) -> Result<GmaEstimate> {
    Ok(checked(workload, tiling)?.estimate(workload, tiling, mode))
}

pub fn footprint(workload: &Workload<'_>, tiling: &Tiling) -> Result<Footprint> {
    Ok(checked(workload, tiling)?.footprint(workload, tiling))
}

pub fn compute_profile(workload: &Workload<'_>, tiling: &Tiling) -> Result<ComputeProfile> {
    Ok(checked(workload, tiling)?.compute(workload, tiling))
}

/// Full evaluation: geometry, warp rule, the three resource clauses, then the model.
pub fn evaluate(
    workload: &Workload<'_>,
    tiling: &Tiling,
    gpu: &GpuSpec,
    mode: EquationMode,
) -> Result<GmaEstimate> {
    let model = checked(workload, tiling)?;
    tiling.validate_for(workload, gpu)?;
    let report = model.footprint(workload, tiling).check(gpu);
    if !report.passed() {
        return Err(Error::Constraint(report));
    }
    Ok(model.estimate(workload, tiling, mode))
}

fn expect_kind(layer: &ConvLayer, kind: LayerKind) -> Result<()> {
    if layer.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "layer `{}` is {}, expected {kind}",
            layer.id, layer.kind
        )));
    }
    Ok(())
}

pub fn pw_gma(
    layer: &ConvLayer,
    tiling: &Tiling,
    gpu: &GpuSpec,
    mode: EquationMode,
) -> Result<GmaEstimate> {
    expect_kind(layer, LayerKind::Pw)?;
    evaluate(&Workload::Layer(layer), tiling, gpu, mode)
}

pub fn dw_gma(
    layer: &ConvLayer,
    tiling: &Tiling,
    gpu: &GpuSpec,
    mode: EquationMode,
) -> Result<GmaEstimate> {
    expect_kind(layer, LayerKind::Dw)?;
    evaluate(&Workload::Layer(layer), tiling, gpu, mode)
}

pub fn fcm_gma(
    first: &ConvLayer,
    second: &ConvLayer,
    kind: FcmKind,
    tiling: &Tiling,
    gpu: &GpuSpec,
    mode: EquationMode,
) -> Result<GmaEstimate> {
    evaluate(
        &Workload::Fused {
            first,
            second,
            kind,
        },
        tiling,
        gpu,
        mode,
    )
}

/// Fraction of MACs spent recomputing overlapping intermediates.
pub fn redundancy_ratio(
    first: &ConvLayer,
    second: &ConvLayer,
    kind: FcmKind,
    tiling: &Tiling,
) -> Result<f64> {
    Ok(compute_profile(
        &Workload::Fused {
            first,
            second,
            kind,
        },
        tiling,
    )?
    .redundancy_ratio())
}
