mod common;

use common::*;
use convfuse::cost::{self, EquationMode, Tiling, Workload};
use convfuse::model::{FcmKind, Precision};
use convfuse::search::{grid_tilings, GridConfig};
use convfuse::sim::{simulate, simulate_lbl};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

const C: EquationMode = EquationMode::Consistent;

fn case_strategy() -> impl Strategy<Value = Case> {
    (any::<u64>(), 0..MODELS.len())
        .prop_map(|(seed, m)| random_case(&mut StdRng::seed_from_u64(seed), MODELS[m]))
}

fn single_tile(w: &Workload<'_>) -> Tiling {
    let o = w.ofm();
    Tiling::new(o.height, o.width, o.depth).resolved(w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_matches_simulator_on_exact_domain(case in case_strategy()) {
        let w = case.workload();
        for t in exact_domain_tilings(&case) {
            let analytic = cost::estimate_unchecked(&w, &t, C).unwrap();
            let sim = simulate(&w, &t, C).unwrap();
            prop_assert_eq!(analytic.total_bytes, sim.bytes_total, "{} {}", w.label(), t);
            prop_assert_eq!(analytic.elements.total(), sim.elements_total());
        }
    }

    #[test]
    fn bytes_scale_with_precision(case in case_strategy(), pick in any::<prop::sample::Index>()) {
        let tilings = grid_tilings(&case.workload(), &GridConfig::full(), 1);
        let t = tilings[pick.index(tilings.len())];
        for mode in [EquationMode::Consistent, EquationMode::PaperVerbatim] {
            let fp = cost::estimate_unchecked(&case.with_precision(Precision::Fp32).workload(), &t, mode).unwrap();
            let int = cost::estimate_unchecked(&case.with_precision(Precision::Int8).workload(), &t, mode).unwrap();
            prop_assert_eq!(fp.total_bytes, 4 * int.total_bytes);
            prop_assert_eq!(fp.elements, int.elements);
        }
    }

    #[test]
    fn single_tile_fusion_never_adds_traffic(case in case_strategy()) {
        let w = case.workload();
        let Workload::Fused { first, second, .. } = w else { return Ok(()) };
        let fused = simulate(&w, &single_tile(&w), C).unwrap();
        let lbl: u64 = [first, second]
            .into_iter()
            .map(|l| simulate_lbl(l, &single_tile(&Workload::Layer(l))).unwrap().bytes_total)
            .sum();
        prop_assert!(fused.bytes_total < lbl, "{}: {} vs {}", w.label(), fused.bytes_total, lbl);
        prop_assert_eq!(fused.macs_redundant, 0);
        prop_assert_eq!(fused.macs_replicated, 0);
    }

    #[test]
    fn redundancy_taxonomy(case in case_strategy(), pick in any::<prop::sample::Index>()) {
        let w = case.workload();
        let Workload::Fused { first, second, kind } = w else { return Ok(()) };
        let tilings = grid_tilings(&w, &GridConfig::full(), 1);
        let t = tilings[pick.index(tilings.len())];
        let r = simulate(&w, &t, C).unwrap();
        let n_d = second.ofm().depth.div_ceil(t.ofm_tile_d);
        match kind {
            FcmKind::Dwpw | FcmKind::Pwpw => {
                prop_assert_eq!(r.macs_redundant, 0);
                prop_assert_eq!(r.macs_replicated, (n_d - 1) * first.nominal_macs());
            }
            FcmKind::Pwdw => prop_assert_eq!(r.macs_redundant + r.macs_replicated, 0),
            FcmKind::PwdwR => {
                let o = second.ofm();
                let split = t.ofm_tile_h < o.height || t.ofm_tile_w < o.width;
                prop_assert_eq!(r.macs_redundant > 0, split);
                prop_assert_eq!(r.macs_replicated, 0);
            }
        }
        let nominal = first.nominal_macs() + second.nominal_macs();
        prop_assert_eq!(r.macs_total, nominal + r.macs_redundant + r.macs_replicated);
    }
}
