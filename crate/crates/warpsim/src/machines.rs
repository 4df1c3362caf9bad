//! Machine models and their configuration: the baseline SIMD machine with a
//! selectable warp size, the coalescing-enhanced small-warp machine (SW+) and
//! the split-on-divergence MIMD large-warp machine (LW+).

use thiserror::Error;

use crate::memsys::RequestScope;

pub const BASELINE_WARP_SIZES: [usize; 4] = [8, 16, 32, 64];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MachineModel {
    Baseline,
    SwPlus,
    LwPlus,
}

impl MachineModel {
    pub fn label(&self) -> &'static str {
        match self {
            MachineModel::Baseline => "baseline",
            MachineModel::SwPlus => "sw+",
            MachineModel::LwPlus => "lw+",
        }
    }
}

/// How LW+ paces the splits of one warp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LwSyncMode {
    /// A split issues its next instruction only once every sibling has
    /// completed its current one; siblings at the same memory instruction
    /// coalesce jointly.
    PerInstruction,
    /// No gating; each split runs at its own pace and coalesces alone.
    FreeRunning,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid {field}: {msg}")]
    Invalid { field: &'static str, msg: String },
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        msg: msg.into(),
    }
}

/// Full machine configuration. Defaults follow the baseline table: 16 SMs,
/// 8-wide SIMD, 24-stage pipeline, 32-thread warps, 1024 threads and 8 CTAs
/// per SM, 48KB 8-way LRU L1 with 64-byte blocks, 6 FCFS memory controllers.
#[derive(Clone, Debug, PartialEq)]
pub struct MachineConfig {
    pub model: MachineModel,
    pub warp_size: usize,
    pub simd_width: usize,
    pub pipeline_depth: u64,
    pub sm_count: usize,
    pub threads_per_sm: usize,
    pub max_ctas_per_sm: usize,
    pub l1_size: usize,
    pub l1_ways: usize,
    pub l1_block: usize,
    /// `None` means unlimited (SW+'s ideal tracker).
    pub request_table_capacity: Option<usize>,
    pub request_scope: RequestScope,
    pub dram_controllers: usize,
    pub dram_latency: u64,
    pub dram_service_cycles: u64,
    pub lw_sync_mode: LwSyncMode,
    pub mem_size: usize,
    pub cycle_budget: u64,
    pub rng_seed: u64,
}

/// Overrides applied on top of the model defaults; `None` keeps the default.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigOverrides {
    pub warp_size: Option<usize>,
    pub simd_width: Option<usize>,
    pub pipeline_depth: Option<u64>,
    pub sm_count: Option<usize>,
    pub threads_per_sm: Option<usize>,
    pub max_ctas_per_sm: Option<usize>,
    pub l1_size: Option<usize>,
    pub l1_ways: Option<usize>,
    pub request_table_capacity: Option<Option<usize>>,
    pub dram_controllers: Option<usize>,
    pub dram_latency: Option<u64>,
    pub dram_service_cycles: Option<u64>,
    pub lw_sync_mode: Option<LwSyncMode>,
    pub mem_size: Option<usize>,
    pub cycle_budget: Option<u64>,
    pub rng_seed: Option<u64>,
}

pub const DEFAULT_REQUEST_TABLE_CAPACITY: usize = 32;
pub const DEFAULT_CYCLE_BUDGET: u64 = 100_000_000;

/// Builds a fully-populated, validated configuration for the given model.
///
/// Model constraints: SW+ forces `warp_size = simd_width` and cross-thread
/// read merging with an unlimited table; LW+ forces `warp_size = 8 *
/// simd_width`. Baseline warp sizes must come from {8, 16, 32, 64} and be a
/// multiple of the SIMD width.
pub fn configure_machine(
    model: MachineModel,
    overrides: &ConfigOverrides,
) -> Result<MachineConfig, ConfigError> {
    let simd_width = overrides.simd_width.unwrap_or(8);
    if simd_width == 0 {
        return Err(invalid("simd_width", "must be positive"));
    }
    let warp_size = match model {
        MachineModel::Baseline => {
            let w = overrides.warp_size.unwrap_or(32);
            if !BASELINE_WARP_SIZES.contains(&w) {
                return Err(invalid(
                    "warp_size",
                    format!("baseline warp size must be one of {BASELINE_WARP_SIZES:?}, got {w}"),
                ));
            }
            w
        }
        MachineModel::SwPlus => {
            if let Some(w) = overrides.warp_size {
                if w != simd_width {
                    return Err(invalid(
                        "warp_size",
                        format!("SW+ warps are as wide as the SIMD width ({simd_width}), got {w}"),
                    ));
                }
            }
            simd_width
        }
        MachineModel::LwPlus => {
            let forced = 8 * simd_width;
            if let Some(w) = overrides.warp_size {
                if w != forced {
                    return Err(invalid(
                        "warp_size",
                        format!("LW+ warps are 8x the SIMD width ({forced}), got {w}"),
                    ));
                }
            }
            forced
        }
    };
    if warp_size % simd_width != 0 {
        return Err(invalid(
            "warp_size",
            format!("warp size {warp_size} is not a multiple of SIMD width {simd_width}"),
        ));
    }

    let request_scope = match model {
        MachineModel::SwPlus => RequestScope::AllThreads,
        _ => RequestScope::IntraWarpOnly,
    };
    let request_table_capacity = match model {
        MachineModel::SwPlus => {
            if let Some(Some(cap)) = overrides.request_table_capacity {
                return Err(invalid(
                    "request_table_capacity",
                    format!("SW+ uses an unlimited request table, got capacity {cap}"),
                ));
            }
            None
        }
        _ => overrides
            .request_table_capacity
            .unwrap_or(Some(DEFAULT_REQUEST_TABLE_CAPACITY)),
    };

    let l1_size = overrides.l1_size.unwrap_or(49152);
    let l1_ways = overrides.l1_ways.unwrap_or(8);
    let l1_block = 64;
    if l1_ways == 0 || l1_size % (l1_ways * l1_block) != 0 {
        return Err(invalid(
            "l1_size",
            format!("{l1_size} bytes is not divisible into {l1_ways}-way {l1_block}-byte sets"),
        ));
    }

    let cfg = MachineConfig {
        model,
        warp_size,
        simd_width,
        pipeline_depth: overrides.pipeline_depth.unwrap_or(24),
        sm_count: overrides.sm_count.unwrap_or(16),
        threads_per_sm: overrides.threads_per_sm.unwrap_or(1024),
        max_ctas_per_sm: overrides.max_ctas_per_sm.unwrap_or(8),
        l1_size,
        l1_ways,
        l1_block,
        request_table_capacity,
        request_scope,
        dram_controllers: overrides.dram_controllers.unwrap_or(6),
        dram_latency: overrides.dram_latency.unwrap_or(400),
        dram_service_cycles: overrides.dram_service_cycles.unwrap_or(4),
        lw_sync_mode: overrides.lw_sync_mode.unwrap_or(LwSyncMode::PerInstruction),
        mem_size: overrides.mem_size.unwrap_or(16 << 20),
        cycle_budget: overrides.cycle_budget.unwrap_or(DEFAULT_CYCLE_BUDGET),
        rng_seed: overrides.rng_seed.unwrap_or(0),
    };
    if cfg.pipeline_depth == 0 {
        return Err(invalid("pipeline_depth", "must be at least 1"));
    }
    if cfg.sm_count == 0 {
        return Err(invalid("sm_count", "must be positive"));
    }
    if cfg.dram_controllers == 0 {
        return Err(invalid("dram_controllers", "must be positive"));
    }
    Ok(cfg)
}

impl MachineConfig {
    /// Cycles the issue stage is occupied by one warp (or split) instruction.
    /// SIMD machines pay for every lane slot of the warp whether active or
    /// not; LW+'s MIMD lanes pay only for active lanes.
    pub fn issue_cost(&self, active_lanes: usize) -> u64 {
        match self.model {
            MachineModel::LwPlus => active_lanes.div_ceil(self.simd_width) as u64,
            _ => (self.warp_size / self.simd_width) as u64,
        }
    }

    /// Label including the LW+ pacing mode, used in CSV rows and charts.
    pub fn machine_label(&self) -> String {
        match (self.model, self.lw_sync_mode) {
            (MachineModel::LwPlus, LwSyncMode::PerInstruction) => "lw+pi".to_string(),
            (MachineModel::LwPlus, LwSyncMode::FreeRunning) => "lw+fr".to_string(),
            (m, _) => m.label().to_string(),
        }
    }
}
