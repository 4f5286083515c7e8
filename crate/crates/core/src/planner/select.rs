use std::sync::OnceLock;

use crate::{Error, Result};

/// Picks non-overlapping fusions along a chain of candidates, where candidate
/// `i` shares a layer with `i - 1` and `i + 1`.
pub trait ChainSelector: Send + Sync {
    fn name(&self) -> &'static str;

    /// `savings[i]` is 0 for unprofitable candidates. Returns one flag per
    /// candidate; no two adjacent flags may be set, nor any unprofitable one.
    fn select(&self, savings: &[u64]) -> Vec<bool>;
}

/// Savings-maximizing dynamic program. On equal totals the upstream candidate wins.
pub struct DpSelector;

impl ChainSelector for DpSelector {
    fn name(&self) -> &'static str {
        "dp"
    }

    fn select(&self, savings: &[u64]) -> Vec<bool> {
        let n = savings.len();
        // best[i]: maximum savings using candidates i.. only.
        let mut best = vec![0u64; n + 2];
        for i in (0..n).rev() {
            best[i] = (savings[i] + best[i + 2]).max(best[i + 1]);
        }
        let mut picked = vec![false; n];
        let mut i = 0;
        while i < n {
            if savings[i] > 0 && savings[i] + best[i + 2] >= best[i + 1] {
                picked[i] = true;
                i += 2;
            } else {
                i += 1;
            }
        }
        picked
    }
}

/// Takes each profitable candidate in chain order unless its predecessor was taken.
pub struct GreedySelector;

impl ChainSelector for GreedySelector {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn select(&self, savings: &[u64]) -> Vec<bool> {
        let mut picked = vec![false; savings.len()];
        for i in 0..savings.len() {
            picked[i] = savings[i] > 0 && (i == 0 || !picked[i - 1]);
        }
        picked
    }
}

#[derive(Default)]
pub struct SelectorRegistry {
    selectors: Vec<Box<dyn ChainSelector>>,
}

impl SelectorRegistry {
    pub fn standard() -> Self {
        let mut r = SelectorRegistry::default();
        r.register(Box::new(DpSelector));
        r.register(Box::new(GreedySelector));
        r
    }

    pub fn register(&mut self, selector: Box<dyn ChainSelector>) {
        self.selectors.retain(|s| s.name() != selector.name());
        self.selectors.push(selector);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ChainSelector> {
        self.selectors
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.selectors.iter().map(|s| s.name())
    }
}

pub fn selectors() -> &'static SelectorRegistry {
    static REGISTRY: OnceLock<SelectorRegistry> = OnceLock::new();
    REGISTRY.get_or_init(SelectorRegistry::standard)
}

/// Exhaustive maximum over non-adjacent subsets, for checking selectors.
pub fn brute_force_max(savings: &[u64]) -> u64 {
    let n = savings.len();
    (0u32..1 << n)
        .filter(|m| m & (m >> 1) == 0)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| savings[i]).sum())
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(savings: &[u64], picked: &[bool]) -> u64 {
        savings
            .iter()
            .zip(picked)
            .filter(|p| *p.1)
            .map(|p| *p.0)
            .sum()
    }

    #[test]
    fn middle_heavy_chain() {
        let s = [5, 9, 5];
        assert_eq!(DpSelector.select(&s), [true, false, true]);
        assert_eq!(GreedySelector.select(&s), [true, false, true]);
        let s = [5, 12, 5];
        assert_eq!(DpSelector.select(&s), [false, true, false]);
        assert_eq!(GreedySelector.select(&s), [true, false, true]);
    }

    #[test]
    fn tie_goes_upstream() {
        assert_eq!(DpSelector.select(&[7, 7]), [true, false]);
    }

    #[test]
    fn unprofitable_never_picked() {
        assert_eq!(DpSelector.select(&[0, 0, 3]), [false, false, true]);
        assert!(DpSelector.select(&[]).is_empty());
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(selectors().names().collect::<Vec<_>>(), ["dp", "greedy"]);
        assert!(matches!(
            selectors().get("beam"),
            Err(Error::UnknownStrategy(_))
        ));
    }

    proptest! {
        #[test]
        fn dp_is_optimal(s in prop::collection::vec(prop_oneof![Just(0u64), 1u64..1000], 0..8)) {
            let picked = DpSelector.select(&s);
            prop_assert_eq!(total(&s, &picked), brute_force_max(&s));
            for i in 1..picked.len() {
                prop_assert!(!(picked[i] && picked[i - 1]));
            }
        }

        #[test]
        fn greedy_is_valid(s in prop::collection::vec(0u64..100, 0..8)) {
            let picked = GreedySelector.select(&s);
            for i in 0..picked.len() {
                prop_assert!(!picked[i] || s[i] > 0);
                prop_assert!(i == 0 || !(picked[i] && picked[i - 1]));
            }
        }
    }
}
