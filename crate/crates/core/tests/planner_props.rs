mod common;

use std::collections::BTreeMap;

use common::*;
use convfuse::gpu::GpuSpec;
use convfuse::model::{ConvLayer, ModelGraph};
use convfuse::planner::{self, brute_force_max, FusionPlan, PlannerConfig};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn chain_strategy() -> impl Strategy<Value = (Vec<ConvLayer>, GpuSpec)> {
    (any::<u64>(), 1usize..=6).prop_map(|(seed, n)| {
        let mut rng = StdRng::seed_from_u64(seed);
        let layers = random_chain(&mut rng, n);
        (layers, random_small_gpu(&mut rng))
    })
}

fn plan_chain(layers: Vec<ConvLayer>, gpu: &GpuSpec, selector: &str) -> (ModelGraph, FusionPlan) {
    let graph = ModelGraph::chain(layers[0].precision, layers).unwrap();
    let config = PlannerConfig {
        selector: selector.into(),
        ..PlannerConfig::default()
    };
    let plan = planner::plan(&graph, gpu, &config).unwrap();
    (graph, plan)
}

fn savings(plan: &FusionPlan) -> Vec<u64> {
    plan.candidates
        .iter()
        .map(|c| {
            if c.profitable {
                c.delta_bytes.unwrap() as u64
            } else {
                0
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dp_plan_matches_brute_force((layers, gpu) in chain_strategy()) {
        let (_, plan) = plan_chain(layers, &gpu, "dp");
        prop_assert_eq!(plan.lbl_gma_bytes - plan.total_gma_bytes, brute_force_max(&savings(&plan)));
    }

    #[test]
    fn greedy_never_beats_dp((layers, gpu) in chain_strategy()) {
        let (_, dp) = plan_chain(layers.clone(), &gpu, "dp");
        let (_, greedy) = plan_chain(layers, &gpu, "greedy");
        prop_assert!(dp.total_gma_bytes <= greedy.total_gma_bytes);
    }

    #[test]
    fn every_layer_covered_once((layers, gpu) in chain_strategy()) {
        let (graph, plan) = plan_chain(layers, &gpu, "dp");
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for id in plan.entries.iter().flat_map(|e| &e.layers).chain(&plan.unplannable) {
            *seen.entry(id.as_str()).or_default() += 1;
        }
        prop_assert_eq!(seen.len(), graph.len());
        prop_assert!(seen.values().all(|&n| n == 1));
        let summed: u64 = plan.entries.iter().map(|e| e.gma_bytes).sum();
        prop_assert_eq!(summed, plan.total_gma_bytes);
    }

    #[test]
    fn renaming_layers_does_not_change_the_plan((layers, gpu) in chain_strategy()) {
        let renamed: Vec<ConvLayer> = layers
            .iter()
            .enumerate()
            .map(|(i, l)| ConvLayer { id: format!("layer_{}", 9 - i), ..l.clone() })
            .collect();
        let (_, a) = plan_chain(layers, &gpu, "dp");
        let (_, b) = plan_chain(renamed, &gpu, "dp");
        let shape = |p: &FusionPlan| p.entries.iter().map(|e| (e.mode, e.tiling, e.gma_bytes)).collect::<Vec<_>>();
        prop_assert_eq!(shape(&a), shape(&b));
        prop_assert_eq!(a.total_gma_bytes, b.total_gma_bytes);
    }

    #[test]
    fn planning_is_deterministic((layers, gpu) in chain_strategy()) {
        let (_, a) = plan_chain(layers.clone(), &gpu, "dp");
        let (_, b) = plan_chain(layers, &gpu, "dp");
        prop_assert_eq!(a.to_json(), b.to_json());
    }
}
