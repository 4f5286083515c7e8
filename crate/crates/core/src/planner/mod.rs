//! Two-pass fusion planner.
//!
//! Pass 1 finds the best layer-by-layer tiling of every layer. Pass 2 finds the
//! best fused tiling of every candidate pair over its admissible kinds. A chain
//! selector then picks non-overlapping profitable fusions along each chain.

mod select;

pub use select::{
    brute_force_max, selectors, ChainSelector, DpSelector, GreedySelector, SelectorRegistry,
};

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{self, EquationMode, GmaEstimate, Tiling, Workload};
use crate::gpu::GpuSpec;
use crate::model::{fusion_candidates, FcmKind, ModelGraph};
use crate::roofline::{self, BoundClass};
use crate::search::{self, GridConfig, Rejections, SearchResult};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub mode: EquationMode,
    pub grid: GridConfig,
    /// Name of a registered [`ChainSelector`].
    pub selector: String,
    /// Attach a roofline classification to every entry.
    pub annotate: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            mode: EquationMode::Consistent,
            grid: GridConfig::full(),
            selector: "dp".into(),
            annotate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryMode {
    Lbl,
    Dwpw,
    Pwdw,
    PwdwR,
    Pwpw,
}

impl EntryMode {
    pub fn fcm(kind: FcmKind) -> Self {
        match kind {
            FcmKind::Dwpw => EntryMode::Dwpw,
            FcmKind::Pwdw => EntryMode::Pwdw,
            FcmKind::PwdwR => EntryMode::PwdwR,
            FcmKind::Pwpw => EntryMode::Pwpw,
        }
    }

    pub fn kind(self) -> Option<FcmKind> {
        match self {
            EntryMode::Lbl => None,
            EntryMode::Dwpw => Some(FcmKind::Dwpw),
            EntryMode::Pwdw => Some(FcmKind::Pwdw),
            EntryMode::PwdwR => Some(FcmKind::PwdwR),
            EntryMode::Pwpw => Some(FcmKind::Pwpw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub layers: Vec<String>,
    pub mode: EntryMode,
    pub tiling: Tiling,
    pub gma_bytes: u64,
    pub breakdown: GmaEstimate,
    pub macs: u64,
    pub redundancy: f64,
    /// Layer-by-layer bytes of the same layers minus `gma_bytes` (0 for LBL entries).
    pub savings_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundClass>,
}

/// Outcome of one fused kind for a candidate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindEvaluation {
    pub kind: FcmKind,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiling: Option<Tiling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gma_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redundancy: Option<f64>,
    pub candidates_evaluated: u64,
    pub rejections: Rejections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub first: String,
    pub second: String,
    /// Sum of both layers' best LBL bytes, when both are plannable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lbl_bytes: Option<u64>,
    pub kinds: Vec<KindEvaluation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_kind: Option<FcmKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fcm_bytes: Option<u64>,
    /// `lbl_bytes - fcm_bytes`; negative when fusing costs more.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_bytes: Option<i64>,
    pub profitable: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub gpu: String,
    pub mode: EquationMode,
    pub precision: String,
    pub selector: String,
    pub entries: Vec<PlanEntry>,
    pub total_gma_bytes: u64,
    /// Sum of the best LBL bytes of every plannable layer.
    pub lbl_gma_bytes: u64,
    pub fused_fraction: f64,
    pub candidates: Vec<CandidateEvaluation>,
    pub unplannable: Vec<String>,
    pub warnings: Vec<String>,
}

impl FusionPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn fcm_entries(&self) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(|e| e.mode != EntryMode::Lbl)
    }
}

fn lbl_entry(graph: &ModelGraph, i: usize, r: &SearchResult) -> Result<PlanEntry> {
    let layer = &graph.layers()[i];
    let tiling = r.tiling.expect("feasible result has a tiling");
    let estimate = r.estimate.expect("feasible result has an estimate");
    Ok(PlanEntry {
        layers: vec![layer.id.clone()],
        mode: EntryMode::Lbl,
        tiling,
        gma_bytes: estimate.total_bytes,
        breakdown: estimate,
        macs: cost::compute_profile(&Workload::Layer(layer), &tiling)?.total_macs(),
        redundancy: 0.0,
        savings_bytes: 0,
        bound: None,
    })
}

struct PairOutcome {
    eval: CandidateEvaluation,
    best: Option<(FcmKind, SearchResult)>,
}

fn evaluate_pair(
    graph: &ModelGraph,
    first: usize,
    second: usize,
    kinds: &[FcmKind],
    lbl: &[SearchResult],
    gpu: &GpuSpec,
    config: &PlannerConfig,
) -> Result<PairOutcome> {
    let (a, b) = (&graph.layers()[first], &graph.layers()[second]);
    let mut evals = Vec::new();
    let mut best: Option<(FcmKind, SearchResult)> = None;
    for &kind in kinds {
        let r = search::best_fcm(a, b, kind, gpu, &config.grid, config.mode)?;
        evals.push(KindEvaluation {
            kind,
            feasible: r.feasible,
            tiling: r.tiling,
            gma_bytes: r.total_bytes(),
            redundancy: r.redundancy_ratio,
            candidates_evaluated: r.candidates_evaluated,
            rejections: r.rejections,
        });
        if let Some(bytes) = r.total_bytes() {
            // Kinds are listed with PWDW ahead of PWDW_R, so strict `<` keeps it on ties.
            if best
                .as_ref()
                .is_none_or(|(_, b)| bytes < b.total_bytes().unwrap())
            {
                best = Some((kind, r));
            }
        }
    }
    let lbl_bytes = lbl[first]
        .total_bytes()
        .zip(lbl[second].total_bytes())
        .map(|(x, y)| x + y);
    let fcm_bytes = best.as_ref().and_then(|(_, r)| r.total_bytes());
    let delta = lbl_bytes.zip(fcm_bytes).map(|(l, f)| l as i64 - f as i64);
    Ok(PairOutcome {
        eval: CandidateEvaluation {
            first: a.id.clone(),
            second: b.id.clone(),
            lbl_bytes,
            kinds: evals,
            best_kind: best.as_ref().map(|(k, _)| *k),
            fcm_bytes,
            delta_bytes: delta,
            profitable: delta.is_some_and(|d| d > 0),
            selected: false,
        },
        best,
    })
}

/// Groups candidate indices into maximal chains of consecutive, layer-sharing pairs.
fn candidate_chains(evals: &[CandidateEvaluation]) -> Vec<Vec<usize>> {
    let by_first: HashMap<&str, usize> = evals
        .iter()
        .enumerate()
        .map(|(i, c)| (c.first.as_str(), i))
        .collect();
    let seconds: std::collections::HashSet<&str> =
        evals.iter().map(|c| c.second.as_str()).collect();
    let mut chains = Vec::new();
    for (i, c) in evals.iter().enumerate() {
        if seconds.contains(c.first.as_str()) {
            continue;
        }
        let mut chain = vec![i];
        let mut cur = i;
        while let Some(&next) = by_first.get(evals[cur].second.as_str()) {
            chain.push(next);
            cur = next;
        }
        chains.push(chain);
    }
    chains
}

pub fn plan(graph: &ModelGraph, gpu: &GpuSpec, config: &PlannerConfig) -> Result<FusionPlan> {
    if graph.is_empty() {
        return Err(Error::InvalidArgument("model has no layers".into()));
    }
    let selector = selectors().get(&config.selector)?;
    let layers = graph.layers();

    let lbl: Vec<SearchResult> = layers
        .par_iter()
        .map(|l| search::best_lbl(l, gpu, &config.grid, config.mode))
        .collect::<Result<_>>()?;

    let candidates = fusion_candidates(graph);
    let index = |id: &str| graph.index_of(id).expect("candidate ids exist");
    let outcomes: Vec<PairOutcome> = candidates
        .par_iter()
        .map(|c| {
            evaluate_pair(
                graph,
                index(&c.first),
                index(&c.second),
                &c.admissible_kinds,
                &lbl,
                gpu,
                config,
            )
        })
        .collect::<Result<_>>()?;
    let (mut evals, bests): (Vec<_>, Vec<_>) =
        outcomes.into_iter().map(|o| (o.eval, o.best)).unzip();

    for chain in candidate_chains(&evals) {
        let savings: Vec<u64> = chain
            .iter()
            .map(|&i| match evals[i].delta_bytes {
                Some(d) if evals[i].profitable => d as u64,
                _ => 0,
            })
            .collect();
        for (&i, take) in chain.iter().zip(selector.select(&savings)) {
            evals[i].selected = take;
        }
    }

    let mut fused_at: HashMap<usize, usize> = HashMap::new();
    let mut absorbed = vec![false; layers.len()];
    for (k, e) in evals.iter().enumerate().filter(|(_, e)| e.selected) {
        let (a, b) = (index(&e.first), index(&e.second));
        fused_at.insert(a, k);
        absorbed[b] = true;
    }

    let mut entries = Vec::new();
    let mut unplannable = Vec::new();
    let mut warnings = Vec::new();
    for &i in graph.topo_order() {
        if absorbed[i] {
            continue;
        }
        if let Some(&k) = fused_at.get(&i) {
            let e = &evals[k];
            let (kind, r) = bests[k]
                .as_ref()
                .expect("selected candidates have a fused tiling");
            let (a, b) = (&layers[i], &layers[index(&e.second)]);
            let w = Workload::Fused {
                first: a,
                second: b,
                kind: *kind,
            };
            let tiling = r.tiling.unwrap();
            let estimate = r.estimate.unwrap();
            entries.push(PlanEntry {
                layers: vec![a.id.clone(), b.id.clone()],
                mode: EntryMode::fcm(*kind),
                tiling,
                gma_bytes: estimate.total_bytes,
                breakdown: estimate,
                macs: cost::compute_profile(&w, &tiling)?.total_macs(),
                redundancy: r.redundancy_ratio.unwrap_or(0.0),
                savings_bytes: e.delta_bytes.unwrap() as u64,
                bound: None,
            });
        } else if lbl[i].feasible {
            entries.push(lbl_entry(graph, i, &lbl[i])?);
        } else {
            unplannable.push(layers[i].id.clone());
            warnings.push(format!(
                "layer `{}` is unplannable: no layer-by-layer tiling satisfies the constraints on `{}`",
                layers[i].id, gpu.name
            ));
        }
    }

    if config.annotate {
        for e in &mut entries {
            e.bound = Some(roofline::classify(e.macs, e.gma_bytes, gpu)?);
        }
    }

    let fused_layers = entries.iter().filter(|e| e.mode != EntryMode::Lbl).count() * 2;
    let plan = FusionPlan {
        gpu: gpu.name.clone(),
        mode: config.mode,
        precision: graph.precision().name().to_string(),
        selector: selector.name().to_string(),
        total_gma_bytes: entries.iter().map(|e| e.gma_bytes).sum(),
        lbl_gma_bytes: lbl.iter().filter_map(|r| r.total_bytes()).sum(),
        fused_fraction: fused_layers as f64 / layers.len() as f64,
        entries,
        candidates: evals,
        unplannable,
        warnings,
    };
    validate_plan(&plan, graph)?;
    Ok(plan)
}

/// Checks the structural invariants of a plan against its graph.
pub fn validate_plan(plan: &FusionPlan, graph: &ModelGraph) -> Result<()> {
    let broken = |msg: String| Err(Error::Internal(format!("plan: {msg}")));
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for id in plan
        .entries
        .iter()
        .flat_map(|e| &e.layers)
        .chain(&plan.unplannable)
    {
        *seen.entry(id.as_str()).or_default() += 1;
    }
    for l in graph.layers() {
        match seen.get(l.id.as_str()) {
            Some(1) => {}
            n => {
                return broken(format!(
                    "layer `{}` covered {} times",
                    l.id,
                    n.copied().unwrap_or(0)
                ))
            }
        }
    }
    if seen.len() != graph.len() {
        return broken("plan names layers outside the graph".into());
    }
    if plan.total_gma_bytes != plan.entries.iter().map(|e| e.gma_bytes).sum::<u64>() {
        return broken("total_gma_bytes is not the sum of entries".into());
    }
    for e in &plan.entries {
        let expected = if e.mode == EntryMode::Lbl { 1 } else { 2 };
        if e.layers.len() != expected {
            return broken(format!("entry {:?} has {} layers", e.mode, e.layers.len()));
        }
    }
    if plan.total_gma_bytes > plan.lbl_gma_bytes {
        return broken("plan costs more than layer-by-layer execution".into());
    }
    Ok(())
}

/// Human-readable rationale for every decision in `plan`.
pub fn explain(plan: &FusionPlan) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "plan for {} ({} mode, {} selection): {} B vs {} B layer-by-layer, {:.1}% of layers fused",
        plan.gpu,
        plan.mode,
        plan.selector,
        plan.total_gma_bytes,
        plan.lbl_gma_bytes,
        plan.fused_fraction * 100.0
    );
    for e in &plan.entries {
        let _ = write!(
            out,
            "  [{}] {}",
            e.layers.join("+"),
            serde_json::to_value(e.mode).unwrap().as_str().unwrap()
        );
        let _ = write!(out, " tile {} -> {} B", e.tiling, e.gma_bytes);
        if e.mode != EntryMode::Lbl {
            let _ = write!(
                out,
                " (LBL {} B, saves {} B, redundancy {:.4})",
                e.gma_bytes + e.savings_bytes,
                e.savings_bytes,
                e.redundancy
            );
        }
        out.push('\n');
    }
    for c in &plan.candidates {
        let verdict = match (c.selected, c.profitable, c.delta_bytes) {
            (true, _, _) => "selected".to_string(),
            (false, true, _) => "profitable but overlaps a better fusion".to_string(),
            (false, false, Some(d)) => format!("not profitable: deficit {} B", -d),
            (false, false, None) if c.lbl_bytes.is_none() => {
                "a constituent layer is unplannable".to_string()
            }
            (false, false, None) => "no feasible fused kind".to_string(),
        };
        let _ = writeln!(out, "  candidate {} -> {}: {verdict}", c.first, c.second);
        for k in &c.kinds {
            match k.gma_bytes {
                Some(b) => {
                    let _ = writeln!(out, "    {}: {} B at {}", k.kind, b, k.tiling.unwrap());
                }
                None => {
                    let r = k.rejections;
                    let _ = writeln!(
                        out,
                        "    {}: infeasible at all {} grid points (warp {}, l1_capacity {}, shared_portion {}, sm_occupancy {})",
                        k.kind, k.candidates_evaluated, r.warp_multiple, r.l1_capacity, r.shared_portion, r.sm_occupancy
                    );
                }
            }
        }
    }
    for id in &plan.unplannable {
        let _ = writeln!(out, "  unplannable: {id}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConvLayer, Padding, Precision, TensorDims};

    fn roomy(warp: u64, sms: u64) -> GpuSpec {
        GpuSpec::new("roomy", sms, 1 << 30, 1 << 29, warp).unwrap()
    }

    fn pw_dw_pw() -> ModelGraph {
        let p = Precision::Fp32;
        ModelGraph::chain(
            p,
            vec![
                ConvLayer::pw("expand", TensorDims::new(8, 8, 8), 32, p),
                ConvLayer::dw("dw", TensorDims::new(8, 8, 32), 3, 1, Padding::Same, p),
                ConvLayer::pw("project", TensorDims::new(8, 8, 32), 8, p),
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_layer_chain_fuses() {
        let p = Precision::Fp32;
        let g = ModelGraph::chain(
            p,
            vec![
                ConvLayer::dw("dw", TensorDims::new(8, 8, 16), 3, 1, Padding::Same, p),
                ConvLayer::pw("pw", TensorDims::new(8, 8, 16), 32, p),
            ],
        )
        .unwrap();
        let plan = plan(&g, &roomy(4, 1), &PlannerConfig::default()).unwrap();
        assert_eq!(plan.entries.len(), 1);
        assert_eq!(plan.entries[0].mode, EntryMode::Dwpw);
        assert_eq!(plan.fused_fraction, 1.0);
        assert!(plan.total_gma_bytes < plan.lbl_gma_bytes);
    }

    #[test]
    fn overlapping_candidates_pick_larger_saving() {
        let g = pw_dw_pw();
        let gpu = roomy(4, 1);
        let plan = plan(&g, &gpu, &PlannerConfig::default()).unwrap();
        let [a, b] = &plan.candidates[..] else {
            panic!("two candidates expected")
        };
        assert!(a.profitable && b.profitable);
        // Fusing expand+dw hides the 32-channel intermediate twice; dw+project hides
        // another copy of it, but the saving is compared by the selector.
        let (da, db) = (a.delta_bytes.unwrap(), b.delta_bytes.unwrap());
        let expect_first = da >= db;
        assert_eq!(a.selected, expect_first);
        assert_eq!(b.selected, !expect_first);
        assert_eq!(plan.entries.len(), 2);
        assert!(plan.fused_fraction > 0.6 && plan.fused_fraction < 0.7);
    }

    #[test]
    fn infeasible_fusion_is_all_lbl() {
        let p = Precision::Fp32;
        // The first layer's 512 KB of weights cannot sit in a 96 KB L1.
        let g = ModelGraph::chain(
            p,
            vec![
                ConvLayer::pw("a", TensorDims::new(14, 14, 256), 512, p),
                ConvLayer::pw("b", TensorDims::new(14, 14, 512), 256, p),
            ],
        )
        .unwrap();
        let gpu = GpuSpec::preset("gtx1660").unwrap();
        let plan = plan(&g, &gpu, &PlannerConfig::default()).unwrap();
        assert!(plan.fcm_entries().next().is_none());
        assert_eq!(plan.fused_fraction, 0.0);
        assert_eq!(plan.total_gma_bytes, plan.lbl_gma_bytes);
        let text = explain(&plan);
        assert!(text.contains("no feasible fused kind"), "{text}");
        assert!(text.contains("PWPW: infeasible at all"), "{text}");
    }

    #[test]
    fn unplannable_layer_is_reported() {
        let p = Precision::Fp32;
        let g = ModelGraph::chain(
            p,
            vec![ConvLayer::pw("big", TensorDims::new(4, 4, 4096), 4096, p)],
        )
        .unwrap();
        let gpu = GpuSpec::new("tiny", 1, 4096, 2048, 32).unwrap();
        let plan = plan(&g, &gpu, &PlannerConfig::default()).unwrap();
        assert!(plan.entries.is_empty());
        assert_eq!(plan.unplannable, ["big"]);
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn json_round_trip() {
        let plan = plan(&pw_dw_pw(), &roomy(4, 1), &PlannerConfig::default()).unwrap();
        let back: FusionPlan = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
        let v: serde_json::Value = serde_json::from_str(&plan.to_json()).unwrap();
        for key in [
            "gpu",
            "mode",
            "entries",
            "total_gma_bytes",
            "fused_fraction",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        for key in [
            "layers",
            "mode",
            "tiling",
            "gma_bytes",
            "breakdown",
            "redundancy",
            "savings_bytes",
        ] {
            assert!(v["entries"][0].get(key).is_some(), "missing entry {key}");
        }
    }

    #[test]
    fn unknown_selector() {
        let cfg = PlannerConfig {
            selector: "beam".into(),
            ..PlannerConfig::default()
        };
        assert!(matches!(
            plan(&pw_dw_pw(), &roomy(4, 1), &cfg),
            Err(Error::UnknownStrategy(_))
        ));
    }
}
