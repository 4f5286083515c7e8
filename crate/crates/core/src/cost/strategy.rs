use std::sync::OnceLock;

use super::{ComputeProfile, EquationMode, Footprint, GmaEstimate, Tiling, Workload};
use crate::{Error, Result};

/// A global-memory-access model for one kind of kernel.
///
/// Implementations may assume the workload is one they admit and that the tiling
/// already passed [`Tiling::validate`].
pub trait CostModel: Send + Sync {
    /// Registry key, e.g. `lbl_pw` or `pwdw_r`.
    fn name(&self) -> &'static str;

    fn admits(&self, workload: &Workload<'_>) -> bool;

    fn estimate(&self, workload: &Workload<'_>, tiling: &Tiling, mode: EquationMode)
        -> GmaEstimate;

    fn footprint(&self, workload: &Workload<'_>, tiling: &Tiling) -> Footprint;

    fn compute(&self, workload: &Workload<'_>, tiling: &Tiling) -> ComputeProfile;
}

/// Cost models keyed by name.
#[derive(Default)]
pub struct CostModelRegistry {
    models: Vec<Box<dyn CostModel>>,
}

impl CostModelRegistry {
    pub fn empty() -> Self {
        CostModelRegistry::default()
    }

    /// The two layer-by-layer models and the four fused-module models.
    pub fn standard() -> Self {
        let mut r = CostModelRegistry::empty();
        r.register(Box::new(super::lbl::PointwiseLbl));
        r.register(Box::new(super::lbl::DepthwiseLbl));
        r.register(Box::new(super::fused::DwPw));
        r.register(Box::new(super::fused::PwDw));
        r.register(Box::new(super::fused::PwDwRecompute));
        r.register(Box::new(super::fused::PwPw));
        r
    }

    /// Adds `model`, replacing any model registered under the same name.
    pub fn register(&mut self, model: Box<dyn CostModel>) {
        self.models.retain(|m| m.name() != model.name());
        self.models.push(model);
    }

    pub fn get(&self, name: &str) -> Option<&dyn CostModel> {
        self.models
            .iter()
            .find(|m| m.name() == name)
            .map(|m| m.as_ref())
    }

    pub fn for_workload(&self, workload: &Workload<'_>) -> Result<&dyn CostModel> {
        let name = workload.model_name();
        let model = self
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))?;
        if !model.admits(workload) {
            return Err(Error::InvalidArgument(format!(
                "cost model `{name}` does not admit {}",
                workload.label()
            )));
        }
        Ok(model)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.models.iter().map(|m| m.name())
    }
}

/// The process-wide standard registry.
pub fn cost_models() -> &'static CostModelRegistry {
    static REGISTRY: OnceLock<CostModelRegistry> = OnceLock::new();
    REGISTRY.get_or_init(CostModelRegistry::standard)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_has_six_models() {
        let names: Vec<_> = cost_models().names().collect();
        assert_eq!(
            names,
            ["lbl_pw", "lbl_dw", "dwpw", "pwdw", "pwdw_r", "pwpw"]
        );
    }

    #[test]
    fn register_replaces_by_name() {
        let mut r = CostModelRegistry::standard();
        r.register(Box::new(crate::cost::lbl::PointwiseLbl));
        assert_eq!(r.names().count(), 6);
        assert!(r.get("nope").is_none());
    }
}
