use std::fmt;

use serde::{Deserialize, Serialize};

use super::EquationMode;
use crate::gpu::GpuSpec;
use crate::model::{ConvLayer, FcmKind, LayerKind, TensorDims};
use crate::{Error, Result};

/// What is being costed: a single layer run on its own, or a fused pair.
#[derive(Debug, Clone, Copy)]
pub enum Workload<'a> {
    Layer(&'a ConvLayer),
    Fused {
        first: &'a ConvLayer,
        second: &'a ConvLayer,
        kind: FcmKind,
    },
}

impl<'a> Workload<'a> {
    /// The layer whose output feature map the tiling partitions.
    pub fn output_layer(&self) -> &'a ConvLayer {
        match *self {
            Workload::Layer(l) => l,
            Workload::Fused { second, .. } => second,
        }
    }

    pub fn first_layer(&self) -> &'a ConvLayer {
        match *self {
            Workload::Layer(l) => l,
            Workload::Fused { first, .. } => first,
        }
    }

    pub fn ofm(&self) -> TensorDims {
        self.output_layer().ofm()
    }

    pub fn kind(&self) -> Option<FcmKind> {
        match self {
            Workload::Layer(_) => None,
            Workload::Fused { kind, .. } => Some(*kind),
        }
    }

    /// Registry name of the cost model for this workload.
    pub fn model_name(&self) -> &'static str {
        match self {
            Workload::Layer(l) => match l.kind {
                LayerKind::Pw => "lbl_pw",
                LayerKind::Dw => "lbl_dw",
            },
            Workload::Fused { kind, .. } => kind.tag(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Workload::Layer(l) => l.id.clone(),
            Workload::Fused {
                first,
                second,
                kind,
            } => format!("{}+{} ({kind})", first.id, second.id),
        }
    }

    /// Checks layer kinds and shapes for a fused pair.
    pub fn check_pair(&self) -> Result<()> {
        if let Workload::Fused {
            first,
            second,
            kind,
        } = self
        {
            let admitted = crate::model::admissible_kinds(first.kind, second.kind);
            if !admitted.contains(kind) {
                return Err(Error::InadmissibleKind {
                    kind: kind.to_string(),
                    first: first.id.clone(),
                    second: second.id.clone(),
                });
            }
            if first.ofm() != second.ifm {
                return Err(Error::ShapeMismatch {
                    producer: first.id.clone(),
                    consumer: second.id.clone(),
                    produced: first.ofm().to_string(),
                    expected: second.ifm.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Output tile shape, plus the weight-tile filter counts of a fused module.
///
/// For fused modules the weight tiles are fixed by the kind and the output tile
/// (see [`Tiling::fused_weight_tiles`]); leaving them `None` selects those values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tiling {
    pub ofm_tile_h: u64,
    pub ofm_tile_w: u64,
    pub ofm_tile_d: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_weight_tile_filters: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_weight_tile_filters: Option<u64>,
}

impl Tiling {
    pub const fn new(h: u64, w: u64, d: u64) -> Self {
        Tiling {
            ofm_tile_h: h,
            ofm_tile_w: w,
            ofm_tile_d: d,
            first_weight_tile_filters: None,
            second_weight_tile_filters: None,
        }
    }

    /// A tiling with the weight-tile fields filled in for `workload`.
    pub fn resolved(self, workload: &Workload<'_>) -> Self {
        match Tiling::fused_weight_tiles(workload, self.ofm_tile_d) {
            Some((a, b)) => Tiling {
                first_weight_tile_filters: Some(a),
                second_weight_tile_filters: Some(b),
                ..self
            },
            None => self,
        }
    }

    /// Filters per weight tile for (first, second) layer of a fused module.
    ///
    /// A PW-then-DW module owns a slice of intermediate channels, so both weight
    /// tiles hold `tile_d` filters. Modules ending in PW need every intermediate
    /// channel, so the first layer's weights are loaded whole.
    pub fn fused_weight_tiles(workload: &Workload<'_>, tile_d: u64) -> Option<(u64, u64)> {
        match *workload {
            Workload::Layer(_) => None,
            Workload::Fused { first, kind, .. } => Some(match kind {
                FcmKind::Pwdw | FcmKind::PwdwR => (tile_d, tile_d),
                FcmKind::Dwpw | FcmKind::Pwpw => (first.out_depth, tile_d),
            }),
        }
    }

    pub fn elements(&self) -> u64 {
        self.ofm_tile_h * self.ofm_tile_w * self.ofm_tile_d
    }

    /// Validates the tiling against the workload geometry (not the GPU).
    pub fn validate(&self, workload: &Workload<'_>) -> Result<()> {
        let ofm = workload.ofm();
        let dims = [
            ("h", self.ofm_tile_h, ofm.height),
            ("w", self.ofm_tile_w, ofm.width),
            ("d", self.ofm_tile_d, ofm.depth),
        ];
        for (axis, t, n) in dims {
            if t == 0 || t > n {
                return Err(Error::InvalidTiling(format!(
                    "{}: tile {axis}={t} outside 1..={n}",
                    workload.label()
                )));
            }
        }
        let expected = Tiling::fused_weight_tiles(workload, self.ofm_tile_d);
        let given = (
            self.first_weight_tile_filters,
            self.second_weight_tile_filters,
        );
        match (expected, given) {
            (_, (None, None)) => {}
            (Some((a, b)), (fa, fb)) if fa.unwrap_or(a) == a && fb.unwrap_or(b) == b => {}
            (Some((a, b)), _) => {
                return Err(Error::InvalidTiling(format!(
                    "{}: weight tiles must be ({a}, {b}) filters for this module and output tile",
                    workload.label()
                )))
            }
            (None, _) => {
                return Err(Error::InvalidTiling(format!(
                    "{}: weight-tile filter counts only apply to fused modules",
                    workload.label()
                )))
            }
        }
        if workload.kind() == Some(FcmKind::Pwdw)
            && (self.ofm_tile_h != ofm.height || self.ofm_tile_w != ofm.width)
        {
            return Err(Error::InvalidTiling(format!(
                "{}: PWDW without recomputation needs full-spatial tiles ({}x{}), got {}x{}",
                workload.label(),
                ofm.height,
                ofm.width,
                self.ofm_tile_h,
                self.ofm_tile_w
            )));
        }
        Ok(())
    }

    /// Validates geometry plus the warp-multiple rule.
    pub fn validate_for(&self, workload: &Workload<'_>, gpu: &GpuSpec) -> Result<()> {
        self.validate(workload)?;
        if !self.elements().is_multiple_of(gpu.warp_size) {
            return Err(Error::InvalidTiling(format!(
                "{}: tile {} has {} elements, not a multiple of warp size {}",
                workload.label(),
                self,
                self.elements(),
                gpu.warp_size
            )));
        }
        Ok(())
    }

    /// True when every tile dimension divides the corresponding output dimension.
    pub fn evenly_divides(&self, ofm: TensorDims) -> bool {
        ofm.height.is_multiple_of(self.ofm_tile_h)
            && ofm.width.is_multiple_of(self.ofm_tile_w)
            && ofm.depth.is_multiple_of(self.ofm_tile_d)
    }
}

impl fmt::Display for Tiling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{}",
            self.ofm_tile_h, self.ofm_tile_w, self.ofm_tile_d
        )
    }
}

impl std::str::FromStr for Tiling {
    type Err = String;

    /// Accepts `HxWxD` or `H,W,D`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(['x', ',']).map(str::trim).collect();
        let nums: std::result::Result<Vec<u64>, _> = parts.iter().map(|p| p.parse()).collect();
        match nums.as_deref() {
            Ok([h, w, d]) => Ok(Tiling::new(*h, *w, *d)),
            _ => Err(format!("tiling `{s}` must look like HxWxD")),
        }
    }
}

/// Tile counts along each output axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub tiles_h: u64,
    pub tiles_w: u64,
    pub tiles_d: u64,
}

impl TileGrid {
    pub fn new(ofm: TensorDims, t: &Tiling) -> Self {
        TileGrid {
            tiles_h: ofm.height.div_ceil(t.ofm_tile_h),
            tiles_w: ofm.width.div_ceil(t.ofm_tile_w),
            tiles_d: ofm.depth.div_ceil(t.ofm_tile_d),
        }
    }

    pub fn spatial(&self) -> u64 {
        self.tiles_h * self.tiles_w
    }

    /// Thread blocks launched: one per (spatial tile, depth slice).
    pub fn work_units(&self) -> u64 {
        self.spatial() * self.tiles_d
    }
}

/// Spatial tile count as used by weight-replication terms.
///
/// The printed equations divide plane sizes (`ceil(HW / tileHW)`); the consistent
/// mode counts tiles per axis, which is what a tiled execution launches.
pub(crate) fn spatial_factor(mode: EquationMode, ofm: TensorDims, t: &Tiling) -> u64 {
    match mode {
        EquationMode::Consistent => TileGrid::new(ofm, t).spatial(),
        EquationMode::PaperVerbatim => ofm.spatial().div_ceil(t.ofm_tile_h * t.ofm_tile_w),
    }
}

/// Output-tile count `ceil(OFMsSz / OFMsTileSz)` (per-axis in consistent mode).
pub(crate) fn unit_factor(mode: EquationMode, ofm: TensorDims, t: &Tiling) -> u64 {
    match mode {
        EquationMode::Consistent => TileGrid::new(ofm, t).work_units(),
        EquationMode::PaperVerbatim => ofm.size_elements().div_ceil(t.elements()),
    }
}

/// Replication factor of a pointwise weight term: the printed form charges the
/// whole weight tensor per output tile, the consistent form per spatial tile.
pub(crate) fn pw_weight_factor(mode: EquationMode, ofm: TensorDims, t: &Tiling) -> u64 {
    match mode {
        EquationMode::Consistent => spatial_factor(mode, ofm, t),
        EquationMode::PaperVerbatim => unit_factor(mode, ofm, t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Padding, Precision};

    #[test]
    fn parse_and_display() {
        let t: Tiling = "4x4x8".parse().unwrap();
        assert_eq!(t, Tiling::new(4, 4, 8));
        assert_eq!("2,3,32".parse::<Tiling>().unwrap().to_string(), "2x3x32");
        assert!("2x3".parse::<Tiling>().is_err());
    }

    #[test]
    fn pwdw_requires_full_spatial() {
        let pw = ConvLayer::pw("p", TensorDims::new(6, 6, 4), 8, Precision::Fp32);
        let dw = ConvLayer::dw(
            "d",
            TensorDims::new(6, 6, 8),
            3,
            1,
            Padding::Same,
            Precision::Fp32,
        );
        let w = Workload::Fused {
            first: &pw,
            second: &dw,
            kind: FcmKind::Pwdw,
        };
        assert!(Tiling::new(3, 3, 8).validate(&w).is_err());
        assert!(Tiling::new(6, 6, 8).validate(&w).is_ok());
        let mut wrong = Tiling::new(6, 6, 8);
        wrong.first_weight_tile_filters = Some(4);
        assert!(wrong.validate(&w).is_err());
        assert_eq!(
            Tiling::new(6, 6, 4).resolved(&w).first_weight_tile_filters,
            Some(4)
        );
    }

    #[test]
    fn grid_counts() {
        let g = TileGrid::new(TensorDims::new(7, 7, 4), &Tiling::new(3, 3, 4));
        assert_eq!((g.tiles_h, g.tiles_w, g.tiles_d), (3, 3, 1));
        assert_eq!(g.work_units(), 9);
    }
}
