use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LayerKind, ModelGraph};

/// The four fused-module variants, named by layer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FcmKind {
    #[serde(rename = "dwpw")]
    Dwpw,
    #[serde(rename = "pwdw")]
    Pwdw,
    /// PW then DW with spatial tiling; overlapping intermediates are recomputed.
    #[serde(rename = "pwdw_r")]
    PwdwR,
    #[serde(rename = "pwpw")]
    Pwpw,
}

impl FcmKind {
    pub const ALL: [FcmKind; 4] = [FcmKind::Dwpw, FcmKind::Pwdw, FcmKind::PwdwR, FcmKind::Pwpw];

    /// Lower-case tag used in JSON and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            FcmKind::Dwpw => "dwpw",
            FcmKind::Pwdw => "pwdw",
            FcmKind::PwdwR => "pwdw_r",
            FcmKind::Pwpw => "pwpw",
        }
    }

    pub fn layer_kinds(self) -> (LayerKind, LayerKind) {
        match self {
            FcmKind::Dwpw => (LayerKind::Dw, LayerKind::Pw),
            FcmKind::Pwdw | FcmKind::PwdwR => (LayerKind::Pw, LayerKind::Dw),
            FcmKind::Pwpw => (LayerKind::Pw, LayerKind::Pw),
        }
    }
}

impl fmt::Display for FcmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FcmKind::Dwpw => "DWPW",
            FcmKind::Pwdw => "PWDW",
            FcmKind::PwdwR => "PWDW_R",
            FcmKind::Pwpw => "PWPW",
        })
    }
}

impl std::str::FromStr for FcmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FcmKind::ALL
            .into_iter()
            .find(|k| k.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown fusion kind `{s}` (expected dwpw|pwdw|pwdw_r|pwpw)"))
    }
}

/// Fusion kinds that can join a `first -> second` pair. The non-redundant PWDW
/// is listed before PWDW_R so it wins ties.
pub fn admissible_kinds(first: LayerKind, second: LayerKind) -> &'static [FcmKind] {
    match (first, second) {
        (LayerKind::Dw, LayerKind::Pw) => &[FcmKind::Dwpw],
        (LayerKind::Pw, LayerKind::Dw) => &[FcmKind::Pwdw, FcmKind::PwdwR],
        (LayerKind::Pw, LayerKind::Pw) => &[FcmKind::Pwpw],
        (LayerKind::Dw, LayerKind::Dw) => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FusionCandidate {
    pub first: String,
    pub second: String,
    pub admissible_kinds: Vec<FcmKind>,
}

/// Every producer/consumer pair that may be fused, in topological order of the producer.
///
/// A pair qualifies when the producer has exactly one consumer and the consumer
/// exactly one producer; branch and merge points block fusion.
pub fn fusion_candidates(graph: &ModelGraph) -> Vec<FusionCandidate> {
    let layers = graph.layers();
    graph
        .topo_order()
        .iter()
        .filter_map(|&p| {
            let [c] = graph.consumers(p) else {
                return None;
            };
            if graph.producers(*c).len() != 1 {
                return None;
            }
            let kinds = admissible_kinds(layers[p].kind, layers[*c].kind);
            (!kinds.is_empty()).then(|| FusionCandidate {
                first: layers[p].id.clone(),
                second: layers[*c].id.clone(),
                admissible_kinds: kinds.to_vec(),
            })
        })
        .collect()
}
