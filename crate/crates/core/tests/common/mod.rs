#![allow(dead_code)]

use convfuse::cost::{Tiling, Workload};
use convfuse::gpu::GpuSpec;
use convfuse::model::{Axis, ConvLayer, FcmKind, LayerKind, Padding, Precision, TensorDims};
use convfuse::search::{grid_tilings, GridConfig};
use rand::Rng;

/// A layer or fused pair that owns its layers.
#[derive(Debug, Clone)]
pub struct Case {
    pub first: ConvLayer,
    pub second: Option<ConvLayer>,
    pub kind: Option<FcmKind>,
}

impl Case {
    pub fn lbl(layer: ConvLayer) -> Self {
        Case {
            first: layer,
            second: None,
            kind: None,
        }
    }

    pub fn fused(first: ConvLayer, second: ConvLayer, kind: FcmKind) -> Self {
        Case {
            first,
            second: Some(second),
            kind: Some(kind),
        }
    }

    pub fn workload(&self) -> Workload<'_> {
        match (&self.second, self.kind) {
            (Some(second), Some(kind)) => Workload::Fused {
                first: &self.first,
                second,
                kind,
            },
            _ => Workload::Layer(&self.first),
        }
    }

    pub fn model_name(&self) -> &'static str {
        self.workload().model_name()
    }

    pub fn with_precision(&self, p: Precision) -> Case {
        let mut c = self.clone();
        c.first.precision = p;
        if let Some(s) = &mut c.second {
            s.precision = p;
        }
        c
    }

    /// The layer whose halo geometry governs input reads, if any.
    fn halo_layer(&self) -> Option<&ConvLayer> {
        match self.kind {
            None => Some(&self.first).filter(|l| l.kind == LayerKind::Dw),
            Some(FcmKind::Pwdw | FcmKind::PwdwR) => self.second.as_ref(),
            Some(FcmKind::Dwpw) => Some(&self.first),
            Some(FcmKind::Pwpw) => None,
        }
    }
}

/// A grid so generous that only geometry and the warp rule matter.
pub fn roomy_gpu(sms: u64, warp: u64) -> GpuSpec {
    GpuSpec::new("roomy", sms, 1 << 40, 1 << 39, warp).unwrap()
}

/// True when the tiling keeps every halo strip inside the tensor: each tile's
/// stride span covers the padding on both sides. Within this domain, and on an
/// evenly dividing tiling, the analytic counts are exact.
pub fn halo_strips_unclipped(case: &Case, t: &Tiling) -> bool {
    let Some(l) = case.halo_layer() else {
        return true;
    };
    let ofm = l.ofm();
    [
        (Axis::H, t.ofm_tile_h, l.ifm.height, ofm.height),
        (Axis::W, t.ofm_tile_w, l.ifm.width, ofm.width),
    ]
    .into_iter()
    .all(|(axis, tile, input, out)| {
        let before = l.pad_before(axis);
        let total = match l.padding {
            Padding::Same => ((out - 1) * l.strides + l.filter(axis)).saturating_sub(input),
            Padding::Valid => 0,
        };
        let span = tile * l.strides;
        span >= before && span >= total - before
    })
}

/// Evenly dividing tilings inside the exactness domain.
pub fn exact_domain_tilings(case: &Case) -> Vec<Tiling> {
    grid_tilings(&case.workload(), &GridConfig::even_only(), 1)
        .into_iter()
        .filter(|t| halo_strips_unclipped(case, t))
        .collect()
}

pub fn random_precision(rng: &mut impl Rng) -> Precision {
    if rng.gen_bool(0.5) {
        Precision::Fp32
    } else {
        Precision::Int8
    }
}

/// A depthwise layer whose input is fully covered by its windows: filter at
/// least the stride, and VALID only when no input rows are left over.
pub fn random_dw(rng: &mut impl Rng, id: &str, ifm: TensorDims, p: Precision) -> ConvLayer {
    loop {
        let f = [3, 5][rng.gen_range(0..2)];
        let s = rng.gen_range(1..=2);
        let pad = if rng.gen_bool(0.7) {
            Padding::Same
        } else {
            Padding::Valid
        };
        let l = ConvLayer::dw(id, ifm, f, s, pad, p);
        let covered = |input: u64| input >= f && (input - f).is_multiple_of(s);
        if pad == Padding::Same || (covered(ifm.height) && covered(ifm.width)) {
            return l;
        }
    }
}

fn random_dims(rng: &mut impl Rng, max_hw: u64, max_d: u64) -> TensorDims {
    TensorDims::new(
        rng.gen_range(5..=max_hw),
        rng.gen_range(5..=max_hw),
        rng.gen_range(1..=max_d),
    )
}

/// A random workload for the named cost model.
pub fn random_case(rng: &mut impl Rng, model: &str) -> Case {
    let p = random_precision(rng);
    let dims = random_dims(rng, 16, 12);
    let out = rng.gen_range(1..=16);
    match model {
        "lbl_pw" => Case::lbl(ConvLayer::pw("pw", dims, out, p)),
        "lbl_dw" => Case::lbl(random_dw(rng, "dw", dims, p)),
        "pwdw" | "pwdw_r" => {
            let pw = ConvLayer::pw("pw", dims, out, p);
            let q = random_precision(rng);
            let dw = random_dw(rng, "dw", pw.ofm(), q);
            let kind = if model == "pwdw" {
                FcmKind::Pwdw
            } else {
                FcmKind::PwdwR
            };
            Case::fused(pw, dw, kind)
        }
        "dwpw" => {
            let dw = random_dw(rng, "dw", dims, p);
            let pw = ConvLayer::pw("pw", dw.ofm(), out, random_precision(rng));
            Case::fused(dw, pw, FcmKind::Dwpw)
        }
        "pwpw" => {
            let a = ConvLayer::pw("a", dims, out, p);
            let b = ConvLayer::pw("b", a.ofm(), rng.gen_range(1..=16), random_precision(rng));
            Case::fused(a, b, FcmKind::Pwpw)
        }
        other => panic!("unknown model {other}"),
    }
}

pub const MODELS: [&str; 6] = ["lbl_pw", "lbl_dw", "dwpw", "pwdw", "pwdw_r", "pwpw"];

/// Two-layer chain of a random admissible shape, sized for small GPUs.
pub fn random_pair_chain(rng: &mut impl Rng) -> Vec<ConvLayer> {
    let p = random_precision(rng);
    let hw = [8, 12, 14, 16, 28][rng.gen_range(0..5)];
    let d = [8, 16, 32, 64][rng.gen_range(0..4)];
    let out = [16, 32, 64, 128][rng.gen_range(0..4)];
    let dims = TensorDims::new(hw, hw, d);
    match rng.gen_range(0..3) {
        0 => {
            let dw = ConvLayer::dw("a", dims, 3, rng.gen_range(1..=2), Padding::Same, p);
            let pw = ConvLayer::pw("b", dw.ofm(), out, p);
            vec![dw, pw]
        }
        1 => {
            let pw = ConvLayer::pw("a", dims, out, p);
            let dw = ConvLayer::dw("b", pw.ofm(), 3, rng.gen_range(1..=2), Padding::Same, p);
            vec![pw, dw]
        }
        _ => {
            let a = ConvLayer::pw("a", dims, out, p);
            let b = ConvLayer::pw("b", a.ofm(), d, p);
            vec![a, b]
        }
    }
}

/// A random linear DW/PW chain of `n` layers with consistent shapes.
pub fn random_chain(rng: &mut impl Rng, n: usize) -> Vec<ConvLayer> {
    let p = random_precision(rng);
    let hw = [8, 14, 16, 28][rng.gen_range(0..4)];
    let mut dims = TensorDims::new(hw, hw, [8, 16, 32][rng.gen_range(0..3)]);
    let mut layers = Vec::with_capacity(n);
    let mut prev_dw = false;
    for i in 0..n {
        let id = format!("l{i}");
        let l = if !prev_dw && rng.gen_bool(0.5) {
            ConvLayer::dw(
                id,
                dims,
                3,
                if dims.height >= 8 && rng.gen_bool(0.25) {
                    2
                } else {
                    1
                },
                Padding::Same,
                p,
            )
        } else {
            ConvLayer::pw(id, dims, [8, 16, 32, 64][rng.gen_range(0..4)], p)
        };
        prev_dw = l.kind == LayerKind::Dw;
        dims = l.ofm();
        layers.push(l);
    }
    layers
}

/// A small GPU whose resources make tilings and fusions compete.
pub fn random_small_gpu(rng: &mut impl Rng) -> GpuSpec {
    let sms = [1, 2, 4, 8][rng.gen_range(0..4)];
    let l1 = [16, 32, 48, 64][rng.gen_range(0..4)] * 1024;
    GpuSpec::new("small", sms, l1, l1 / 2, [4, 8][rng.gen_range(0..2)]).unwrap()
}
