use serde::Serialize;

use super::simulate;
use crate::cost::{self, EquationMode, Tiling, Workload};
use crate::gpu::GpuSpec;
use crate::search::{grid_tilings, GridConfig};
use crate::Result;

/// Analytic estimate against the simulator for one tiling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub tiling: String,
    pub analytic_bytes: u64,
    pub sim_bytes: u64,
    pub abs_dev: u64,
    pub rel_dev: f64,
    pub even_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub workload: String,
    pub mode: EquationMode,
    pub rows: Vec<VerifyRow>,
    /// Largest deviation among rows whose tiling divides the output evenly.
    pub max_even_abs_dev: u64,
    pub max_abs_dev: u64,
}

impl VerifyReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(std::io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Sweeps every grid point satisfying the warp rule. Resource clauses are not
/// applied: the comparison is about counting, not feasibility.
pub fn verify(
    workload: &Workload<'_>,
    gpu: &GpuSpec,
    grid: &GridConfig,
    mode: EquationMode,
) -> Result<VerifyReport> {
    workload.check_pair()?;
    let ofm = workload.ofm();
    let mut rows = Vec::new();
    for t in grid_tilings(workload, grid, gpu.warp_size) {
        if t.elements() % gpu.warp_size != 0 {
            continue;
        }
        rows.push(row(workload, &t, ofm, mode)?);
    }
    let max_over = |even: bool| {
        rows.iter()
            .filter(|r| !even || r.even_division)
            .map(|r| r.abs_dev)
            .max()
            .unwrap_or(0)
    };
    Ok(VerifyReport {
        workload: workload.label(),
        mode,
        max_even_abs_dev: max_over(true),
        max_abs_dev: max_over(false),
        rows,
    })
}

fn row(
    workload: &Workload<'_>,
    t: &Tiling,
    ofm: crate::model::TensorDims,
    mode: EquationMode,
) -> Result<VerifyRow> {
    let analytic = cost::estimate_unchecked(workload, t, mode)?.total_bytes;
    let sim = simulate(workload, t, mode)?.bytes_total;
    let abs_dev = analytic.abs_diff(sim);
    Ok(VerifyRow {
        tiling: t.to_string(),
        analytic_bytes: analytic,
        sim_bytes: sim,
        abs_dev,
        rel_dev: if sim == 0 {
            0.0
        } else {
            abs_dev as f64 / sim as f64
        },
        even_division: t.evenly_divides(ofm),
    })
}
