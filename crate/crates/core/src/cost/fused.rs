//! Fused-module models. The first layer's output never reaches global memory:
//! it is handed to the second layer through an on-chip communication buffer.

use super::overlap::{overlap_for_grid, replicated_extent};
use super::tiling::{pw_weight_factor, spatial_factor, unit_factor, TileGrid};
use super::{
    ComputeProfile, CostModel, EquationMode, Footprint, GmaElements, GmaEstimate, Tiling, Workload,
};
use crate::model::{Axis, ConvLayer, FcmKind};

fn pair<'a>(w: &Workload<'a>) -> (&'a ConvLayer, &'a ConvLayer) {
    match *w {
        Workload::Fused { first, second, .. } => (first, second),
        Workload::Layer(_) => unreachable!("fused model given a single layer"),
    }
}

fn is_kind(w: &Workload<'_>, kind: FcmKind) -> bool {
    w.kind() == Some(kind)
}

fn final_store(mode: EquationMode, second: &ConvLayer) -> u64 {
    match mode {
        EquationMode::Consistent => second.ofm().size_elements(),
        EquationMode::PaperVerbatim => 0,
    }
}

fn pwdw_estimate(w: &Workload<'_>, t: &Tiling, mode: EquationMode, recompute: bool) -> GmaEstimate {
    let (pw, dw) = pair(w);
    let ofm = dw.ofm();
    let grid = TileGrid::new(ofm, t);
    let dw_overlap = if recompute {
        overlap_for_grid(
            grid.tiles_h,
            grid.tiles_w,
            dw.ifm.height,
            dw.ifm.width,
            dw.filter_h,
            dw.filter_w,
            dw.strides,
        )
    } else {
        0
    };
    let pw_weights = pw.weights_elements();
    let dw_weights = dw.weights_elements();
    let replication = pw_weights
        .div_ceil(t.ofm_tile_d * pw.ifm.depth)
        .max(dw_weights.div_ceil(t.ofm_tile_d * dw.filter_h * dw.filter_w));
    let elements = GmaElements {
        ifm: replication * pw.ifm.size_elements(),
        overlap: replication * 2 * pw.ifm.depth * dw_overlap,
        first_weights: pw_weight_factor(mode, ofm, t) * pw_weights,
        second_weights: spatial_factor(mode, ofm, t) * dw_weights,
        ofm: final_store(mode, dw),
    };
    GmaEstimate::from_elements(elements, pw.precision, dw.precision, mode)
}

fn pwdw_footprint(w: &Workload<'_>, t: &Tiling) -> Footprint {
    let (pw, dw) = pair(w);
    let (b1, b2) = (pw.precision.byte_width(), dw.precision.byte_width());
    let region =
        dw.input_tile_extent(Axis::H, t.ofm_tile_h) * dw.input_tile_extent(Axis::W, t.ofm_tile_w);
    let td = t.ofm_tile_d;
    Footprint {
        tiles: vec![
            ("first_ifm_tile", region * pw.ifm.depth * b1),
            ("ofm_tile", t.ofm_tile_h * t.ofm_tile_w * td * b2),
            ("first_weight_tile", td * pw.ifm.depth * b1),
            ("second_weight_tile", td * dw.filter_h * dw.filter_w * b2),
        ],
        comm_buffer_bytes: region * td * b1,
        work_units: TileGrid::new(dw.ofm(), t).work_units(),
    }
}

fn pwdw_compute(w: &Workload<'_>, t: &Tiling) -> ComputeProfile {
    let (pw, dw) = pair(w);
    let grid = TileGrid::new(dw.ofm(), t);
    let (h, w_) = (dw.ifm.height, dw.ifm.width);
    let rep_h = replicated_extent(grid.tiles_h, dw.filter_h, dw.strides);
    let rep_w = replicated_extent(grid.tiles_w, dw.filter_w, dw.strides);
    // (h + rep_h)(w + rep_w) - h*w intermediate positions are computed twice or more.
    let redundant_per_channel = overlap_for_grid(
        grid.tiles_h,
        grid.tiles_w,
        h,
        w_,
        dw.filter_h,
        dw.filter_w,
        dw.strides,
    ) + rep_h * rep_w;
    ComputeProfile {
        first_nominal_macs: pw.nominal_macs(),
        second_nominal_macs: dw.nominal_macs(),
        redundant_macs: redundant_per_channel * dw.ifm.depth * pw.macs_per_output(),
        replicated_macs: 0,
    }
}

/// PW then DW with full-spatial tiles: no halo, no recomputation.
pub struct PwDw;

impl CostModel for PwDw {
    fn name(&self) -> &'static str {
        "pwdw"
    }

    fn admits(&self, w: &Workload<'_>) -> bool {
        is_kind(w, FcmKind::Pwdw)
    }

    fn estimate(&self, w: &Workload<'_>, t: &Tiling, mode: EquationMode) -> GmaEstimate {
        pwdw_estimate(w, t, mode, false)
    }

    fn footprint(&self, w: &Workload<'_>, t: &Tiling) -> Footprint {
        pwdw_footprint(w, t)
    }

    fn compute(&self, w: &Workload<'_>, _t: &Tiling) -> ComputeProfile {
        let (pw, dw) = pair(w);
        ComputeProfile {
            first_nominal_macs: pw.nominal_macs(),
            second_nominal_macs: dw.nominal_macs(),
            redundant_macs: 0,
            replicated_macs: 0,
        }
    }
}

/// PW then DW with spatial tiling. Each tile recomputes the intermediate halo it
/// shares with its neighbours, so the PW inputs under that halo are re-read.
pub struct PwDwRecompute;

impl CostModel for PwDwRecompute {
    fn name(&self) -> &'static str {
        "pwdw_r"
    }

    fn admits(&self, w: &Workload<'_>) -> bool {
        is_kind(w, FcmKind::PwdwR)
    }

    fn estimate(&self, w: &Workload<'_>, t: &Tiling, mode: EquationMode) -> GmaEstimate {
        pwdw_estimate(w, t, mode, true)
    }

    fn footprint(&self, w: &Workload<'_>, t: &Tiling) -> Footprint {
        pwdw_footprint(w, t)
    }

    fn compute(&self, w: &Workload<'_>, t: &Tiling) -> ComputeProfile {
        pwdw_compute(w, t)
    }
}

/// DW then PW. The intermediate tile spans every channel, and each PW weight
/// partition recomputes it, re-reading the DW inputs and DW weights.
pub struct DwPw;

impl CostModel for DwPw {
    fn name(&self) -> &'static str {
        "dwpw"
    }

    fn admits(&self, w: &Workload<'_>) -> bool {
        is_kind(w, FcmKind::Dwpw)
    }

    fn estimate(&self, w: &Workload<'_>, t: &Tiling, mode: EquationMode) -> GmaEstimate {
        let (dw, pw) = pair(w);
        let ofm = pw.ofm();
        let grid = TileGrid::new(ofm, t);
        let dw_overlap = overlap_for_grid(
            grid.tiles_h,
            grid.tiles_w,
            dw.ifm.height,
            dw.ifm.width,
            dw.filter_h,
            dw.filter_w,
            dw.strides,
        );
        let pw_weights = pw.weights_elements();
        let partitions = pw_weights.div_ceil(t.ofm_tile_d * pw.ifm.depth);
        let elements = GmaElements {
            ifm: partitions * dw.ifm.size_elements(),
            overlap: partitions * 2 * dw.ifm.depth * dw_overlap,
            first_weights: spatial_factor(mode, ofm, t) * partitions * dw.weights_elements(),
            second_weights: pw_weight_factor(mode, ofm, t) * pw_weights,
            ofm: final_store(mode, pw),
        };
        GmaEstimate::from_elements(elements, dw.precision, pw.precision, mode)
    }

    fn footprint(&self, w: &Workload<'_>, t: &Tiling) -> Footprint {
        let (dw, pw) = pair(w);
        let (b1, b2) = (dw.precision.byte_width(), pw.precision.byte_width());
        let channels = dw.ifm.depth;
        let plane = t.ofm_tile_h * t.ofm_tile_w;
        let region = dw.input_tile_extent(Axis::H, t.ofm_tile_h)
            * dw.input_tile_extent(Axis::W, t.ofm_tile_w);
        Footprint {
            tiles: vec![
                ("first_ifm_tile", region * channels * b1),
                ("ofm_tile", plane * t.ofm_tile_d * b2),
                ("first_weight_tile", dw.weights_elements() * b1),
                ("second_weight_tile", t.ofm_tile_d * channels * b2),
            ],
            comm_buffer_bytes: plane * channels * b1,
            work_units: TileGrid::new(pw.ofm(), t).work_units(),
        }
    }

    fn compute(&self, w: &Workload<'_>, t: &Tiling) -> ComputeProfile {
        let (dw, pw) = pair(w);
        let passes = TileGrid::new(pw.ofm(), t).tiles_d;
        ComputeProfile {
            first_nominal_macs: dw.nominal_macs(),
            second_nominal_macs: pw.nominal_macs(),
            redundant_macs: 0,
            replicated_macs: (passes - 1) * dw.nominal_macs(),
        }
    }
}

/// PW then PW. The first layer's weights are held whole; the second layer's are
/// partitioned by output channel, and each partition recomputes the intermediate.
pub struct PwPw;

impl CostModel for PwPw {
    fn name(&self) -> &'static str {
        "pwpw"
    }

    fn admits(&self, w: &Workload<'_>) -> bool {
        is_kind(w, FcmKind::Pwpw)
    }

    fn estimate(&self, w: &Workload<'_>, t: &Tiling, mode: EquationMode) -> GmaEstimate {
        let (pw1, pw2) = pair(w);
        let ofm = pw2.ofm();
        let (w1, w2) = (pw1.weights_elements(), pw2.weights_elements());
        let partitions = w1
            .div_ceil(pw1.out_depth * pw1.ifm.depth)
            .max(w2.div_ceil(t.ofm_tile_d * pw2.ifm.depth));
        let elements = GmaElements {
            ifm: partitions * pw1.ifm.size_elements(),
            overlap: 0,
            first_weights: unit_factor(mode, ofm, t) * w1,
            second_weights: pw_weight_factor(mode, ofm, t) * w2,
            ofm: final_store(mode, pw2),
        };
        GmaEstimate::from_elements(elements, pw1.precision, pw2.precision, mode)
    }

    fn footprint(&self, w: &Workload<'_>, t: &Tiling) -> Footprint {
        let (pw1, pw2) = pair(w);
        let (b1, b2) = (pw1.precision.byte_width(), pw2.precision.byte_width());
        let plane = t.ofm_tile_h * t.ofm_tile_w;
        let mid = pw1.out_depth;
        Footprint {
            tiles: vec![
                ("first_ifm_tile", plane * pw1.ifm.depth * b1),
                ("ofm_tile", plane * t.ofm_tile_d * b2),
                ("first_weight_tile", pw1.weights_elements() * b1),
                ("second_weight_tile", t.ofm_tile_d * mid * b2),
            ],
            comm_buffer_bytes: plane * mid * b1,
            work_units: TileGrid::new(pw2.ofm(), t).work_units(),
        }
    }

    fn compute(&self, w: &Workload<'_>, t: &Tiling) -> ComputeProfile {
        let (pw1, pw2) = pair(w);
        let passes = TileGrid::new(pw2.ofm(), t).tiles_d;
        ComputeProfile {
            first_nominal_macs: pw1.nominal_macs(),
            second_nominal_macs: pw2.nominal_macs(),
            redundant_macs: 0,
            replicated_macs: (passes - 1) * pw1.nominal_macs(),
        }
    }
}
