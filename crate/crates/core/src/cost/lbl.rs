//! Layer-by-layer models: each convolution is its own kernel and its output
//! round-trips through global memory.

use super::overlap::overlap_for_grid;
use super::tiling::{pw_weight_factor, spatial_factor, TileGrid};
use super::{
    ComputeProfile, CostModel, EquationMode, Footprint, GmaElements, GmaEstimate, Tiling, Workload,
};
use crate::model::{Axis, ConvLayer, LayerKind};

fn layer<'a>(w: &Workload<'a>) -> &'a ConvLayer {
    match *w {
        Workload::Layer(l) => l,
        Workload::Fused { .. } => unreachable!("layer model given a fused workload"),
    }
}

fn nominal(l: &ConvLayer) -> ComputeProfile {
    ComputeProfile {
        first_nominal_macs: l.nominal_macs(),
        second_nominal_macs: 0,
        redundant_macs: 0,
        replicated_macs: 0,
    }
}

/// Pointwise convolution.
///
/// Every weight partition sweeps the whole input, and every spatial tile pulls
/// the weights it needs.
pub struct PointwiseLbl;

impl CostModel for PointwiseLbl {
    fn name(&self) -> &'static str {
        "lbl_pw"
    }

    fn admits(&self, w: &Workload<'_>) -> bool {
        matches!(w, Workload::Layer(l) if l.kind == LayerKind::Pw)
    }

    fn estimate(&self, w: &Workload<'_>, t: &Tiling, mode: EquationMode) -> GmaEstimate {
        let l = layer(w);
        let ofm = l.ofm();
        let weights = l.weights_elements();
        let weight_tile = t.ofm_tile_d * l.ifm.depth;
        let elements = GmaElements {
            ifm: weights.div_ceil(weight_tile) * l.ifm.size_elements(),
            overlap: 0,
            first_weights: pw_weight_factor(mode, ofm, t) * weights,
            second_weights: 0,
            ofm: ofm.size_elements(),
        };
        GmaEstimate::from_elements(elements, l.precision, l.precision, mode)
    }

    fn footprint(&self, w: &Workload<'_>, t: &Tiling) -> Footprint {
        let l = layer(w);
        let bw = l.precision.byte_width();
        let plane = t.ofm_tile_h * t.ofm_tile_w;
        Footprint {
            tiles: vec![
                ("ifm_tile", plane * l.ifm.depth * bw),
                ("ofm_tile", plane * t.ofm_tile_d * bw),
                ("weight_tile", t.ofm_tile_d * l.ifm.depth * bw),
            ],
            comm_buffer_bytes: 0,
            work_units: TileGrid::new(l.ofm(), t).work_units(),
        }
    }

    fn compute(&self, w: &Workload<'_>, _t: &Tiling) -> ComputeProfile {
        nominal(layer(w))
    }
}

/// Depthwise convolution. Inputs are read once apart from the halo that
/// neighbouring tiles share, which is charged twice per overlap element.
pub struct DepthwiseLbl;

impl CostModel for DepthwiseLbl {
    fn name(&self) -> &'static str {
        "lbl_dw"
    }

    fn admits(&self, w: &Workload<'_>) -> bool {
        matches!(w, Workload::Layer(l) if l.kind == LayerKind::Dw)
    }

    fn estimate(&self, w: &Workload<'_>, t: &Tiling, mode: EquationMode) -> GmaEstimate {
        let l = layer(w);
        let ofm = l.ofm();
        let grid = TileGrid::new(ofm, t);
        let overlap = overlap_for_grid(
            grid.tiles_h,
            grid.tiles_w,
            l.ifm.height,
            l.ifm.width,
            l.filter_h,
            l.filter_w,
            l.strides,
        );
        let elements = GmaElements {
            ifm: l.ifm.size_elements(),
            overlap: 2 * l.ifm.depth * overlap,
            first_weights: spatial_factor(mode, ofm, t) * l.weights_elements(),
            second_weights: 0,
            ofm: ofm.size_elements(),
        };
        GmaEstimate::from_elements(elements, l.precision, l.precision, mode)
    }

    fn footprint(&self, w: &Workload<'_>, t: &Tiling) -> Footprint {
        let l = layer(w);
        let bw = l.precision.byte_width();
        let in_plane =
            l.input_tile_extent(Axis::H, t.ofm_tile_h) * l.input_tile_extent(Axis::W, t.ofm_tile_w);
        Footprint {
            tiles: vec![
                ("ifm_tile", in_plane * t.ofm_tile_d * bw),
                ("ofm_tile", t.ofm_tile_h * t.ofm_tile_w * t.ofm_tile_d * bw),
                ("weight_tile", t.ofm_tile_d * l.filter_h * l.filter_w * bw),
            ],
            comm_buffer_bytes: 0,
            work_units: TileGrid::new(l.ofm(), t).work_units(),
        }
    }

    fn compute(&self, w: &Workload<'_>, _t: &Tiling) -> ComputeProfile {
        nominal(layer(w))
    }
}
