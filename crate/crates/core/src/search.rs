//! Exhaustive tiling search over a declared candidate grid.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{self, Clause, ConstraintReport, EquationMode, GmaEstimate, Tiling, Workload};
use crate::gpu::GpuSpec;
use crate::model::{ConvLayer, FcmKind, TensorDims};
use crate::{Error, Result};

const POWERS_OF_TWO: [u64; 7] = [1, 2, 4, 8, 16, 32, 64];
const MAX_DIVISOR: u64 = 64;

/// Candidate grid configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Replaces the generated spatial candidates (values above the extent are dropped).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<Vec<u64>>,
    /// Replaces the generated depth candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<Vec<u64>>,
    /// Keep only tilings that evenly divide the output.
    #[serde(default)]
    pub even_only: bool,
}

impl GridConfig {
    pub fn full() -> Self {
        GridConfig::default()
    }

    pub fn even_only() -> Self {
        GridConfig {
            even_only: true,
            ..GridConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: GridConfig = serde_json::from_str(text)?;
        for (name, v) in [("spatial", &g.spatial), ("depth", &g.depth)] {
            if v.as_ref().is_some_and(|v| v.is_empty() || v.contains(&0)) {
                return Err(Error::InvalidArgument(format!(
                    "grid `{name}` must be a non-empty list of positive sizes"
                )));
            }
        }
        Ok(g)
    }

    /// Spatial tile sizes for an axis of `extent` outputs, ascending.
    pub fn spatial_sizes(&self, extent: u64) -> Vec<u64> {
        let set: BTreeSet<u64> = match &self.spatial {
            Some(v) => v
                .iter()
                .copied()
                .filter(|&s| s >= 1 && s <= extent)
                .collect(),
            None => POWERS_OF_TWO
                .iter()
                .copied()
                .filter(|&s| s <= extent)
                .chain(std::iter::once(extent))
                .chain((1..=extent.min(MAX_DIVISOR)).filter(|d| extent.is_multiple_of(*d)))
                .collect(),
        };
        self.keep(set, extent)
    }

    /// Depth tile sizes for `depth` output channels, ascending.
    pub fn depth_sizes(&self, depth: u64, warp_size: u64) -> Vec<u64> {
        let set: BTreeSet<u64> = match &self.depth {
            Some(v) => v
                .iter()
                .copied()
                .filter(|&s| s >= 1 && s <= depth)
                .collect(),
            None => {
                let step = warp_size.min(depth).max(1);
                (1..=depth / step)
                    .map(|k| k * step)
                    .chain(std::iter::once(depth))
                    .collect()
            }
        };
        self.keep(set, depth)
    }

    fn keep(&self, set: BTreeSet<u64>, extent: u64) -> Vec<u64> {
        set.into_iter()
            .filter(|s| !self.even_only || extent.is_multiple_of(*s))
            .collect()
    }
}

/// Every grid point for `workload` in enumeration order (td, th, tw), with the
/// fused weight tiles filled in. No GPU rule is applied.
pub fn grid_tilings(workload: &Workload<'_>, grid: &GridConfig, warp_size: u64) -> Vec<Tiling> {
    let ofm: TensorDims = workload.ofm();
    let full_spatial = workload.kind() == Some(FcmKind::Pwdw);
    let (hs, ws) = if full_spatial {
        (vec![ofm.height], vec![ofm.width])
    } else {
        (
            grid.spatial_sizes(ofm.height),
            grid.spatial_sizes(ofm.width),
        )
    };
    let ds = grid.depth_sizes(ofm.depth, warp_size);
    let mut out = Vec::with_capacity(hs.len() * ws.len() * ds.len());
    for &d in &ds {
        for &h in &hs {
            for &w in &ws {
                out.push(Tiling::new(h, w, d).resolved(workload));
            }
        }
    }
    out
}

/// Grid points that satisfy the warp rule and all three resource clauses.
pub fn enumerate_tilings(workload: &Workload<'_>, gpu: &GpuSpec, grid: &GridConfig) -> Vec<Tiling> {
    grid_tilings(workload, grid, gpu.warp_size)
        .into_iter()
        .filter(|t| matches!(check(workload, t, gpu), Verdict::Feasible))
        .collect()
}

/// How many candidates each rule rejected. A candidate failing several
/// resource clauses is counted under each of them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejections {
    pub warp_multiple: u64,
    pub l1_capacity: u64,
    pub shared_portion: u64,
    pub sm_occupancy: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub workload: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<FcmKind>,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tiling: Option<Tiling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<GmaEstimate>,
    /// Redundant-MAC ratio of the chosen fused tiling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub redundancy_ratio: Option<f64>,
    pub candidates_evaluated: u64,
    pub feasible_candidates: u64,
    pub rejections: Rejections,
}

impl SearchResult {
    pub fn total_bytes(&self) -> Option<u64> {
        self.estimate.map(|e| e.total_bytes)
    }
}

enum Verdict {
    Feasible,
    Warp,
    Violates(ConstraintReport),
}

fn check(workload: &Workload<'_>, t: &Tiling, gpu: &GpuSpec) -> Verdict {
    if !t.elements().is_multiple_of(gpu.warp_size) {
        return Verdict::Warp;
    }
    let model = cost::cost_models()
        .for_workload(workload)
        .expect("standard registry covers every workload");
    let report = model.footprint(workload, t).check(gpu);
    if report.passed() {
        Verdict::Feasible
    } else {
        Verdict::Violates(report)
    }
}

/// Minimum-GMA tiling for `workload`. Infeasibility is a result, not an error.
pub fn search(
    workload: &Workload<'_>,
    gpu: &GpuSpec,
    grid: &GridConfig,
    mode: EquationMode,
) -> Result<SearchResult> {
    workload.check_pair()?;
    let model = cost::cost_models().for_workload(workload)?;
    let tilings = grid_tilings(workload, grid, gpu.warp_size);

    let evaluated: Vec<(usize, Verdict, Option<GmaEstimate>)> = tilings
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let v = check(workload, t, gpu);
            let e = matches!(v, Verdict::Feasible).then(|| model.estimate(workload, t, mode));
            (i, v, e)
        })
        .collect();

    let mut rejections = Rejections::default();
    let mut best: Option<(usize, GmaEstimate)> = None;
    let mut feasible = 0;
    for (i, verdict, estimate) in evaluated {
        match verdict {
            Verdict::Warp => rejections.warp_multiple += 1,
            Verdict::Violates(report) => {
                for c in report.violations() {
                    match c.clause {
                        Clause::L1Capacity => rejections.l1_capacity += 1,
                        Clause::SharedPortion => rejections.shared_portion += 1,
                        Clause::SmOccupancy => rejections.sm_occupancy += 1,
                    }
                }
            }
            Verdict::Feasible => {
                feasible += 1;
                let e = estimate.expect("feasible candidates are estimated");
                // Strict comparison in index order: the first minimum wins.
                if best.is_none_or(|(_, b)| e.total_bytes < b.total_bytes) {
                    best = Some((i, e));
                }
            }
        }
    }

    let tiling = best.map(|(i, _)| tilings[i]);
    let redundancy_ratio = match (workload, tiling) {
        (Workload::Fused { .. }, Some(t)) => {
            Some(cost::compute_profile(workload, &t)?.redundancy_ratio())
        }
        _ => None,
    };
    Ok(SearchResult {
        workload: workload.label(),
        kind: workload.kind(),
        feasible: best.is_some(),
        tiling,
        estimate: best.map(|(_, e)| e),
        redundancy_ratio,
        candidates_evaluated: tilings.len() as u64,
        feasible_candidates: feasible,
        rejections,
    })
}

pub fn best_lbl(
    layer: &ConvLayer,
    gpu: &GpuSpec,
    grid: &GridConfig,
    mode: EquationMode,
) -> Result<SearchResult> {
    search(&Workload::Layer(layer), gpu, grid, mode)
}

pub fn best_fcm(
    first: &ConvLayer,
    second: &ConvLayer,
    kind: FcmKind,
    gpu: &GpuSpec,
    grid: &GridConfig,
    mode: EquationMode,
) -> Result<SearchResult> {
    search(
        &Workload::Fused {
            first,
            second,
            kind,
        },
        gpu,
        grid,
        mode,
    )
}
