use std::fmt;

use serde::Serialize;

use crate::gpu::GpuSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    /// All tiles plus the communication buffer fit in one SM's L1.
    L1Capacity,
    /// The communication buffer fits in the shared-memory portion.
    SharedPortion,
    /// At least one output tile per SM.
    SmOccupancy,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::L1Capacity => "l1_capacity",
            Clause::SharedPortion => "shared_portion",
            Clause::SmOccupancy => "sm_occupancy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClauseCheck {
    pub clause: Clause,
    pub required: u64,
    pub available: u64,
    /// `available - required` for capacity clauses, `tiles - sms` for occupancy.
    pub slack: i64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintReport {
    pub clauses: Vec<ClauseCheck>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ClauseCheck> {
        self.clauses.iter().filter(|c| !c.passed)
    }

    pub fn clause(&self, clause: Clause) -> &ClauseCheck {
        self.clauses
            .iter()
            .find(|c| c.clause == clause)
            .expect("all clauses checked")
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return f.write_str("all constraints satisfied");
        }
        let parts: Vec<String> = self
            .violations()
            .map(|c| match c.clause {
                Clause::SmOccupancy => format!(
                    "{}: {} output tiles for {} SMs (slack {})",
                    c.clause, c.available, c.required, c.slack
                ),
                _ => format!(
                    "{}: needs {} B, has {} B (slack {})",
                    c.clause, c.required, c.available, c.slack
                ),
            })
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Per-SM memory demand of one work unit plus the number of units launched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Footprint {
    /// Named tile sizes in bytes.
    pub tiles: Vec<(&'static str, u64)>,
    pub comm_buffer_bytes: u64,
    pub work_units: u64,
}

impl Footprint {
    pub fn tile_bytes(&self) -> u64 {
        self.tiles.iter().map(|t| t.1).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.tile_bytes() + self.comm_buffer_bytes
    }

    pub fn check(&self, gpu: &GpuSpec) -> ConstraintReport {
        let sizes: Vec<u64> = self.tiles.iter().map(|t| t.1).collect();
        constraint_check(&sizes, self.comm_buffer_bytes, self.work_units, gpu)
    }
}

/// Evaluates the capacity, shared-portion and occupancy clauses independently.
pub fn constraint_check(
    tiles: &[u64],
    comm_buffer_bytes: u64,
    num_output_tiles: u64,
    gpu: &GpuSpec,
) -> ConstraintReport {
    let demand = tiles.iter().sum::<u64>() + comm_buffer_bytes;
    let capacity = |clause, required: u64, available: u64| ClauseCheck {
        clause,
        required,
        available,
        slack: available as i64 - required as i64,
        passed: required <= available,
    };
    ConstraintReport {
        clauses: vec![
            capacity(Clause::L1Capacity, demand, gpu.l1_bytes_per_sm),
            capacity(
                Clause::SharedPortion,
                comm_buffer_bytes,
                gpu.shared_mem_bytes_per_sm,
            ),
            ClauseCheck {
                clause: Clause::SmOccupancy,
                required: gpu.num_sms,
                available: num_output_tiles,
                slack: num_output_tiles as i64 - gpu.num_sms as i64,
                passed: num_output_tiles >= gpu.num_sms,
            },
        ],
    }
}
