//! Counting simulator for tiled execution.
//!
//! Every work unit (output tile x depth slice) is enumerated with its exact input
//! geometry: edge tiles are truncated to the tensor and padding is never fetched.
//! Within a unit each element is fetched once; nothing is shared across units.
//! No tensor values are materialized, only counts.

mod verify;

pub use verify::{verify, VerifyReport, VerifyRow};

use serde::Serialize;

use crate::cost::{EquationMode, Tiling, Workload};
use crate::model::{Axis, ConvLayer, FcmKind, LayerKind};
use crate::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SimReport {
    pub work_units: u64,
    /// Input loads as charged by the accounting convention: every element a
    /// unit reads, with each halo element counted twice.
    pub ifm_loads: u64,
    /// Distinct input elements read per unit, summed over units.
    pub ifm_loads_physical: u64,
    /// Raw halo: input elements a unit reads in a strip already read by an
    /// earlier tile along one axis. `ifm_loads - covered = 2 * halo_loads`.
    pub halo_loads: u64,
    pub first_weight_loads: u64,
    pub second_weight_loads: u64,
    pub weight_loads: u64,
    pub ofm_stores: u64,
    pub macs_total: u64,
    /// MACs spent on intermediate elements already computed by another unit of
    /// the same depth pass (overlapping spatial tiles).
    pub macs_redundant: u64,
    /// MACs spent recomputing the first layer once per extra weight partition.
    pub macs_replicated: u64,
    pub ifm_bytes: u64,
    pub weight_bytes: u64,
    pub ofm_bytes: u64,
    pub bytes_total: u64,
}

impl SimReport {
    /// `macs_redundant` over the MACs of a single pass.
    pub fn redundancy_ratio(&self) -> f64 {
        let base = self.macs_total - self.macs_replicated;
        if base == 0 {
            0.0
        } else {
            self.macs_redundant as f64 / base as f64
        }
    }

    pub fn elements_total(&self) -> u64 {
        self.ifm_loads + self.weight_loads + self.ofm_stores
    }
}

/// One tile along a spatial axis: the input interval it reads, and how much of
/// that interval no earlier tile on the axis has read.
#[derive(Debug, Clone, Copy)]
struct AxisTile {
    out_len: u64,
    in_len: u64,
    own: u64,
}

impl AxisTile {
    fn dup(&self) -> u64 {
        self.in_len - self.own
    }
}

fn axis_tiles(reader: &ConvLayer, axis: Axis, out_extent: u64, tile: u64) -> Vec<AxisTile> {
    let mut covered_hi = 0;
    let mut tiles = Vec::new();
    let mut lo = 0;
    while lo < out_extent {
        let hi = (lo + tile).min(out_extent);
        let (a, b) = reader.input_range(axis, lo, hi);
        let own = b.saturating_sub(a.max(covered_hi));
        covered_hi = covered_hi.max(b);
        tiles.push(AxisTile {
            out_len: hi - lo,
            in_len: b - a,
            own,
        });
        lo = hi;
    }
    tiles
}

fn depth_slices(depth: u64, tile: u64) -> Vec<u64> {
    (0..depth.div_ceil(tile))
        .map(|k| tile.min(depth - k * tile))
        .collect()
}

/// Spatial geometry shared by every model: the axis tiles of the layer that
/// reads global inputs, indexed by the output tiling.
struct Geometry {
    rows: Vec<AxisTile>,
    cols: Vec<AxisTile>,
    slices: Vec<u64>,
}

impl Geometry {
    fn new(reader: &ConvLayer, workload: &Workload<'_>, t: &Tiling) -> Self {
        let ofm = workload.ofm();
        Geometry {
            rows: axis_tiles(reader, Axis::H, ofm.height, t.ofm_tile_h),
            cols: axis_tiles(reader, Axis::W, ofm.width, t.ofm_tile_w),
            slices: depth_slices(ofm.depth, t.ofm_tile_d),
        }
    }

    /// Calls `f(row, col, slice_depth)` once per work unit.
    fn for_each_unit(&self, mut f: impl FnMut(&AxisTile, &AxisTile, u64)) {
        for &d in &self.slices {
            for r in &self.rows {
                for c in &self.cols {
                    f(r, c, d);
                }
            }
        }
    }

    /// Input positions read by more than one spatial tile, counted with multiplicity.
    fn recomputed_positions(&self) -> u64 {
        let sum = |v: &[AxisTile]| v.iter().map(|t| t.in_len).sum::<u64>();
        let union = |v: &[AxisTile]| v.iter().map(|t| t.own).sum::<u64>();
        sum(&self.rows) * sum(&self.cols) - union(&self.rows) * union(&self.cols)
    }
}

#[derive(Default)]
struct Counts {
    units: u64,
    ifm: u64,
    ifm_physical: u64,
    halo: u64,
    first_weights: u64,
    second_weights: u64,
    stores: u64,
    macs: u64,
    redundant: u64,
    replicated: u64,
}

impl Counts {
    /// Loads of `channels` input channels over the unit's input window.
    fn read_inputs(&mut self, r: &AxisTile, c: &AxisTile, channels: u64) {
        let halo = c.dup() * r.own + r.dup() * c.own;
        self.ifm += channels * (r.own * c.own + 2 * halo);
        self.ifm_physical += channels * r.in_len * c.in_len;
        self.halo += channels * halo;
    }

    fn report(self, first: &ConvLayer, second: &ConvLayer) -> SimReport {
        let (b1, b2) = (first.precision.byte_width(), second.precision.byte_width());
        let ifm_bytes = self.ifm * b1;
        let weight_bytes = self.first_weights * b1 + self.second_weights * b2;
        let ofm_bytes = self.stores * b2;
        SimReport {
            work_units: self.units,
            ifm_loads: self.ifm,
            ifm_loads_physical: self.ifm_physical,
            halo_loads: self.halo,
            first_weight_loads: self.first_weights,
            second_weight_loads: self.second_weights,
            weight_loads: self.first_weights + self.second_weights,
            ofm_stores: self.stores,
            macs_total: self.macs,
            macs_redundant: self.redundant,
            macs_replicated: self.replicated,
            ifm_bytes,
            weight_bytes,
            ofm_bytes,
            bytes_total: ifm_bytes + weight_bytes + ofm_bytes,
        }
    }
}

/// Simulates one layer executed on its own.
pub fn simulate_lbl(layer: &ConvLayer, tiling: &Tiling) -> Result<SimReport> {
    let workload = Workload::Layer(layer);
    tiling.validate(&workload)?;
    let geo = Geometry::new(layer, &workload, tiling);
    let mut n = Counts::default();
    geo.for_each_unit(|r, c, d| {
        let outputs = r.out_len * c.out_len * d;
        n.units += 1;
        match layer.kind {
            LayerKind::Pw => {
                n.read_inputs(r, c, layer.ifm.depth);
                n.first_weights += d * layer.ifm.depth;
            }
            LayerKind::Dw => {
                n.read_inputs(r, c, d);
                n.first_weights += d * layer.filter_h * layer.filter_w;
            }
        }
        n.stores += outputs;
        n.macs += outputs * layer.macs_per_output();
    });
    Ok(n.report(layer, layer))
}

/// Simulates a fused pair. The intermediate tensor stays on chip; only the
/// first layer's inputs, both weight tiles and the final outputs touch memory.
pub fn simulate_fcm(
    first: &ConvLayer,
    second: &ConvLayer,
    kind: FcmKind,
    tiling: &Tiling,
    mode: EquationMode,
) -> Result<SimReport> {
    let workload = Workload::Fused {
        first,
        second,
        kind,
    };
    workload.check_pair()?;
    tiling.validate(&workload)?;
    let store = mode == EquationMode::Consistent;
    let mut n = Counts::default();
    match kind {
        FcmKind::Pwdw | FcmKind::PwdwR => {
            // Intermediate positions a unit computes are the DW input window,
            // and the PW reads the same positions across all of its inputs.
            let geo = Geometry::new(second, &workload, tiling);
            let di = first.ifm.depth;
            geo.for_each_unit(|r, c, d| {
                let outputs = r.out_len * c.out_len * d;
                n.units += 1;
                n.read_inputs(r, c, di);
                n.first_weights += d * di;
                n.second_weights += d * second.filter_h * second.filter_w;
                if store {
                    n.stores += outputs;
                }
                n.macs += r.in_len * c.in_len * d * di + outputs * second.macs_per_output();
            });
            n.redundant = geo.slices.iter().sum::<u64>() * geo.recomputed_positions() * di;
        }
        FcmKind::Dwpw | FcmKind::Pwpw => {
            // Each unit needs every intermediate channel at its output positions.
            let geo = Geometry::new(first, &workload, tiling);
            let mid = first.out_depth;
            let first_weights = first.weights_elements();
            geo.for_each_unit(|r, c, d| {
                let outputs = r.out_len * c.out_len * d;
                let plane = r.out_len * c.out_len;
                n.units += 1;
                n.read_inputs(r, c, first.ifm.depth);
                n.first_weights += first_weights;
                n.second_weights += d * mid;
                if store {
                    n.stores += outputs;
                }
                n.macs +=
                    plane * mid * first.macs_per_output() + outputs * second.macs_per_output();
            });
            n.replicated = (geo.slices.len() as u64 - 1) * first.nominal_macs();
        }
    }
    Ok(n.report(first, second))
}

/// Simulates whatever `workload` describes.
pub fn simulate(workload: &Workload<'_>, tiling: &Tiling, mode: EquationMode) -> Result<SimReport> {
    match *workload {
        Workload::Layer(l) => simulate_lbl(l, tiling),
        Workload::Fused {
            first,
            second,
            kind,
        } => simulate_fcm(first, second, kind, tiling, mode),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Padding, Precision, TensorDims};

    const C: EquationMode = EquationMode::Consistent;

    fn dw(h: u64, w: u64, d: u64) -> ConvLayer {
        ConvLayer::dw(
            "dw",
            TensorDims::new(h, w, d),
            3,
            1,
            Padding::Same,
            Precision::Fp32,
        )
    }

    #[test]
    fn single_tile_lbl() {
        let l = ConvLayer::pw("pw", TensorDims::new(4, 4, 8), 16, Precision::Fp32);
        let r = simulate_lbl(&l, &Tiling::new(4, 4, 16)).unwrap();
        assert_eq!(r.ifm_loads, 128);
        assert_eq!(r.weight_loads, 128);
        assert_eq!(r.ofm_stores, 256);
        assert_eq!(r.halo_loads, 0);
        assert_eq!(r.bytes_total, 512 * 4);
    }

    #[test]
    fn pw_two_weight_partitions() {
        let l = ConvLayer::pw("pw", TensorDims::new(4, 4, 8), 16, Precision::Fp32);
        let r = simulate_lbl(&l, &Tiling::new(4, 4, 8)).unwrap();
        assert_eq!((r.ifm_loads, r.weight_loads, r.ofm_stores), (256, 128, 256));
        assert_eq!(r.elements_total(), 640);
    }

    #[test]
    fn dw_halo_on_even_grid() {
        let r = simulate_lbl(&dw(6, 6, 4), &Tiling::new(3, 3, 4)).unwrap();
        assert_eq!(r.halo_loads, 96);
        assert_eq!(r.ifm_loads, 144 + 2 * 96);
        // Each of the four units reads a 4x4 window.
        assert_eq!(r.ifm_loads_physical, 4 * 16 * 4);
        assert_eq!(r.elements_total(), 624);
    }

    #[test]
    fn dw_halo_on_truncated_grid() {
        // The last 1-wide tile reads only 3 input columns, so its halo is cut short.
        let l = ConvLayer::dw(
            "dw",
            TensorDims::new(7, 7, 2),
            5,
            1,
            Padding::Same,
            Precision::Fp32,
        );
        let r = simulate_lbl(&l, &Tiling::new(3, 3, 2)).unwrap();
        let predicted = crate::cost::overlap(7, 7, 3, 3, 5, 5, 1).unwrap();
        assert_eq!(predicted, 112);
        assert_eq!(r.halo_loads, 2 * 98);
        assert!(r.halo_loads < 2 * predicted);
        assert_eq!(r.ifm_loads - 98, 2 * r.halo_loads);
    }

    #[test]
    fn pwdw_single_tile() {
        let pw = ConvLayer::pw("pw", TensorDims::new(6, 6, 4), 8, Precision::Fp32);
        let d = dw(6, 6, 8);
        let t = Tiling::new(6, 6, 8);
        let paper = simulate_fcm(&pw, &d, FcmKind::Pwdw, &t, EquationMode::PaperVerbatim).unwrap();
        assert_eq!(paper.elements_total(), 144 + 32 + 72);
        assert_eq!(paper.macs_redundant, 0);
        let consistent = simulate_fcm(&pw, &d, FcmKind::Pwdw, &t, C).unwrap();
        assert_eq!(consistent.elements_total(), 536);
    }

    #[test]
    fn pwdw_r_redundant_intermediates() {
        let pw = ConvLayer::pw("pw", TensorDims::new(6, 6, 4), 8, Precision::Fp32);
        let d = dw(6, 6, 8);
        let r = simulate_fcm(&pw, &d, FcmKind::PwdwR, &Tiling::new(3, 3, 8), C).unwrap();
        // 64 intermediate positions computed per channel for 36 distinct ones.
        assert_eq!(r.macs_redundant, 28 * 8 * 4);
        assert_eq!(r.macs_total, 1152 + 2592 + 896);
        assert_eq!(r.halo_loads, 4 * 24);
        assert!((r.redundancy_ratio() - 896.0 / 4640.0).abs() < 1e-12);
    }

    #[test]
    fn dwpw_partitions_replicate_inputs() {
        let d = dw(8, 8, 16);
        let pw = ConvLayer::pw("pw", TensorDims::new(8, 8, 16), 32, Precision::Fp32);
        let one = simulate_fcm(&d, &pw, FcmKind::Dwpw, &Tiling::new(4, 4, 32), C).unwrap();
        let two = simulate_fcm(&d, &pw, FcmKind::Dwpw, &Tiling::new(4, 4, 16), C).unwrap();
        assert_eq!(two.ifm_loads, 2 * one.ifm_loads);
        assert_eq!(two.macs_redundant, 0);
        assert_eq!(two.macs_replicated, d.nominal_macs());
    }

    #[test]
    fn mixed_precision_bytes() {
        let a = ConvLayer::pw("a", TensorDims::new(4, 4, 8), 8, Precision::Int8);
        let b = ConvLayer::pw("b", TensorDims::new(4, 4, 8), 8, Precision::Fp32);
        let r = simulate_fcm(&a, &b, FcmKind::Pwpw, &Tiling::new(4, 4, 8), C).unwrap();
        assert_eq!(r.ifm_bytes, 128);
        assert_eq!(r.weight_bytes, 64 + 64 * 4);
        assert_eq!(r.ofm_bytes, 128 * 4);
    }
}
