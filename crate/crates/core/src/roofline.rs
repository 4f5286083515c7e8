//! Roofline classification of kernels.

use serde::{Deserialize, Serialize};

use crate::gpu::GpuSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Bound {
    ComputeBound,
    MemoryBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundClass {
    pub class: Bound,
    /// MACs per byte of global traffic.
    pub arithmetic_intensity: f64,
    /// Peak MAC/s over peak bytes/s.
    pub ridge_point: f64,
}

/// Intensity at or above the ridge point counts as compute-bound.
pub fn classify(macs: u64, gma_bytes: u64, gpu: &GpuSpec) -> Result<BoundClass> {
    let (Some(ops), Some(bw)) = (gpu.peak_ops_per_s, gpu.peak_mem_bw_bytes_per_s) else {
        return Err(Error::MissingRoofline(gpu.name.clone()));
    };
    if gma_bytes == 0 {
        return Err(Error::InvalidArgument("gma_bytes must be > 0".into()));
    }
    let intensity = macs as f64 / gma_bytes as f64;
    let ridge = ops / bw;
    Ok(BoundClass {
        class: if intensity >= ridge {
            Bound::ComputeBound
        } else {
            Bound::MemoryBound
        },
        arithmetic_intensity: intensity,
        ridge_point: ridge,
    })
}
