//! GPU resource descriptions and the bundled presets.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// FLOPs counted per multiply-accumulate when converting vendor peak figures.
pub const DEFAULT_FLOPS_PER_MAC: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GpuSpec {
    pub name: String,
    pub num_sms: u64,
    pub l1_bytes_per_sm: u64,
    pub shared_mem_bytes_per_sm: u64,
    pub warp_size: u64,
    /// MAC/s.
    pub peak_ops_per_s: Option<f64>,
    /// Bytes/s.
    pub peak_mem_bw_bytes_per_s: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GpuFile {
    name: String,
    num_sms: u64,
    l1_kb: u64,
    shared_kb: u64,
    warp_size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peak_gflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peak_gbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flops_per_mac: Option<f64>,
}

// Peak throughput figures are public datasheet values, not measurements.
const PRESETS: &[(&str, u64, u64, u64, f64, f64)] = &[
    // name, SMs, L1 KB, shared KB, peak FP32 GFLOP/s, DRAM GB/s
    ("gtx1660", 22, 96, 64, 5027.0, 192.0),
    ("rtx_a4000", 128, 128, 100, 19170.0, 448.0),
    ("agx_orin", 16, 192, 164, 5325.0, 204.8),
];

impl GpuSpec {
    pub fn new(
        name: impl Into<String>,
        num_sms: u64,
        l1_bytes_per_sm: u64,
        shared_mem_bytes_per_sm: u64,
        warp_size: u64,
    ) -> Result<Self> {
        let gpu = GpuSpec {
            name: name.into(),
            num_sms,
            l1_bytes_per_sm,
            shared_mem_bytes_per_sm,
            warp_size,
            peak_ops_per_s: None,
            peak_mem_bw_bytes_per_s: None,
        };
        gpu.validate()?;
        Ok(gpu)
    }

    pub fn with_roofline(mut self, peak_macs_per_s: f64, peak_bytes_per_s: f64) -> Result<Self> {
        self.peak_ops_per_s = Some(peak_macs_per_s);
        self.peak_mem_bw_bytes_per_s = Some(peak_bytes_per_s);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.num_sms == 0 || self.l1_bytes_per_sm == 0 || self.warp_size == 0 {
            return Err(Error::Gpu(format!(
                "`{}`: num_sms, l1 and warp_size must be positive",
                self.name
            )));
        }
        if self.shared_mem_bytes_per_sm == 0 || self.shared_mem_bytes_per_sm > self.l1_bytes_per_sm
        {
            return Err(Error::Gpu(format!(
                "`{}`: shared memory must be in 1..=l1 bytes",
                self.name
            )));
        }
        match (self.peak_ops_per_s, self.peak_mem_bw_bytes_per_s) {
            (None, None) => Ok(()),
            (Some(c), Some(b)) if c > 0.0 && b > 0.0 && c.is_finite() && b.is_finite() => Ok(()),
            (Some(_), Some(_)) => Err(Error::Gpu(format!(
                "`{}`: roofline peaks must be positive",
                self.name
            ))),
            _ => Err(Error::Gpu(format!(
                "`{}`: peak compute and peak bandwidth must be given together",
                self.name
            ))),
        }
    }

    pub fn preset(name: &str) -> Option<GpuSpec> {
        PRESETS
            .iter()
            .find(|p| p.0 == name)
            .map(|&(name, sms, l1, shared, gflops, gbps)| GpuSpec {
                name: name.to_string(),
                num_sms: sms,
                l1_bytes_per_sm: l1 * 1024,
                shared_mem_bytes_per_sm: shared * 1024,
                warp_size: 32,
                peak_ops_per_s: Some(gflops * 1e9 / DEFAULT_FLOPS_PER_MAC),
                peak_mem_bw_bytes_per_s: Some(gbps * 1e9),
            })
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|p| p.0)
    }

    pub fn from_json(text: &str) -> Result<GpuSpec> {
        let f: GpuFile = serde_json::from_str(text).map_err(|e| Error::Gpu(e.to_string()))?;
        let per_mac = f.flops_per_mac.unwrap_or(DEFAULT_FLOPS_PER_MAC);
        if per_mac <= 0.0 {
            return Err(Error::Gpu("flops_per_mac must be positive".into()));
        }
        let gpu = GpuSpec {
            name: f.name,
            num_sms: f.num_sms,
            l1_bytes_per_sm: f.l1_kb * 1024,
            shared_mem_bytes_per_sm: f.shared_kb * 1024,
            warp_size: f.warp_size,
            peak_ops_per_s: f.peak_gflops.map(|g| g * 1e9 / per_mac),
            peak_mem_bw_bytes_per_s: f.peak_gbps.map(|g| g * 1e9),
        };
        gpu.validate()?;
        Ok(gpu)
    }

    /// Resolves a preset name, falling back to reading a JSON file at that path.
    pub fn resolve(preset_or_path: &str) -> Result<GpuSpec> {
        if let Some(g) = GpuSpec::preset(preset_or_path) {
            return Ok(g);
        }
        let text = std::fs::read_to_string(preset_or_path).map_err(|e| {
            Error::Gpu(format!(
                "`{preset_or_path}` is neither a preset ({}) nor a readable file: {e}",
                GpuSpec::preset_names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        GpuSpec::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_table() {
        let rtx = GpuSpec::preset("rtx_a4000").unwrap();
        assert_eq!((rtx.num_sms, rtx.l1_bytes_per_sm), (128, 128 * 1024));
        let gtx = GpuSpec::preset("gtx1660").unwrap();
        assert_eq!((gtx.num_sms, gtx.l1_bytes_per_sm), (22, 96 * 1024));
        let orin = GpuSpec::preset("agx_orin").unwrap();
        assert_eq!((orin.num_sms, orin.l1_bytes_per_sm), (16, 192 * 1024));
        for name in GpuSpec::preset_names() {
            let g = GpuSpec::preset(name).unwrap();
            assert!(g.shared_mem_bytes_per_sm <= g.l1_bytes_per_sm);
        }
    }

    #[test]
    fn json_spec() {
        let g = GpuSpec::from_json(
            r#"{"name":"toy","num_sms":4,"l1_kb":64,"shared_kb":48,"warp_size":32,"peak_gflops":100,"peak_gbps":10}"#,
        )
        .unwrap();
        assert_eq!(g.l1_bytes_per_sm, 65536);
        assert_eq!(g.peak_ops_per_s, Some(50e9));
        assert!(GpuSpec::from_json(
            r#"{"name":"x","num_sms":4,"l1_kb":64,"shared_kb":96,"warp_size":32}"#
        )
        .is_err());
        assert!(GpuSpec::from_json(
            r#"{"name":"x","num_sms":4,"l1_kb":64,"shared_kb":32,"warp_size":32,"peak_gbps":3}"#
        )
        .is_err());
    }
}
