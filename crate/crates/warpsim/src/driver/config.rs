//! Flat `key = value` configuration files for runs and sweeps.
//!
//! A run config carries a machine selection plus parameter overrides; a sweep
//! spec additionally lists kernel files and machine points:
//!
//! ```text
//! # sweep.cfg
//! kernels = copy.kisa, gather.kisa
//! machines = baseline-8, baseline-16, baseline-32, baseline-64, sw+, lw+pi
//! sm_count = 1
//! dram_latency = 400
//! ```
//!
//! Machine points are `baseline[-W]`, `sw+`, `lw+` (per-instruction pacing),
//! `lw+pi` or `lw+fr`. Lists are comma-separated; `#` starts a comment.

use thiserror::Error;

use crate::machines::{ConfigOverrides, LwSyncMode, MachineModel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigFileError {
    #[error("line {line}: expected `key = value`")]
    NotKeyValue { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue {
        line: usize,
        key: String,
        msg: String,
    },
}

/// The parsed contents of a config file. `kernels`/`machines` stay empty for
/// plain run configs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    pub machine: Option<MachineModel>,
    pub overrides: ConfigOverrides,
    pub kernels: Vec<String>,
    pub machines: Vec<String>,
}

/// Parses a machine point label like `baseline-16`, `sw+` or `lw+fr` into a
/// model, an optional warp-size override and an optional pacing mode.
pub fn parse_machine_label(
    label: &str,
) -> Result<(MachineModel, Option<usize>, Option<LwSyncMode>), String> {
    let label = label.trim();
    match label {
        "baseline" => return Ok((MachineModel::Baseline, None, None)),
        "sw+" => return Ok((MachineModel::SwPlus, None, None)),
        "lw+" | "lw+pi" => {
            return Ok((MachineModel::LwPlus, None, Some(LwSyncMode::PerInstruction)))
        }
        "lw+fr" => return Ok((MachineModel::LwPlus, None, Some(LwSyncMode::FreeRunning))),
        _ => {}
    }
    if let Some(w) = label.strip_prefix("baseline-") {
        let warp: usize = w
            .parse()
            .map_err(|_| format!("bad warp size in `{label}`"))?;
        return Ok((MachineModel::Baseline, Some(warp), None));
    }
    Err(format!(
        "unknown machine `{label}` (expected baseline[-W], sw+, lw+pi or lw+fr)"
    ))
}

pub fn parse_config(text: &str) -> Result<FileConfig, ConfigFileError> {
    let mut fc = FileConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigFileError::NotKeyValue { line });
        };
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut fc, key, value).map_err(|msg| ConfigFileError::BadValue {
            line,
            key: key.to_string(),
            msg,
        })?;
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigFileError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
    }
    Ok(fc)
}

const KNOWN_KEYS: [&str; 20] = [
    "machine",
    "kernels",
    "machines",
    "warp_size",
    "simd_width",
    "pipeline_depth",
    "sm_count",
    "threads_per_sm",
    "max_ctas_per_sm",
    "l1_size",
    "l1_ways",
    "request_table_capacity",
    "dram_controllers",
    "dram_latency",
    "dram_service_cycles",
    "lw_sync_mode",
    "mem_size",
    "cycle_budget",
    "rng_seed",
    "verify",
];

fn apply_key(fc: &mut FileConfig, key: &str, value: &str) -> Result<(), String> {
    fn num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
        value
            .parse()
            .map_err(|_| format!("`{value}` is not a valid number"))
    }
    let o = &mut fc.overrides;
    match key {
        "machine" => {
            let (model, warp, mode) = parse_machine_label(value)?;
            fc.machine = Some(model);
            if warp.is_some() {
                o.warp_size = warp;
            }
            if mode.is_some() {
                o.lw_sync_mode = mode;
            }
        }
        "kernels" => fc
            .kernels
            .extend(value.split(',').map(|s| s.trim().to_string())),
        "machines" => {
            for m in value.split(',') {
                parse_machine_label(m)?;
                fc.machines.push(m.trim().to_string());
            }
        }
        "warp_size" => o.warp_size = Some(num(value)?),
        "simd_width" => o.simd_width = Some(num(value)?),
        "pipeline_depth" => o.pipeline_depth = Some(num(value)?),
        "sm_count" => o.sm_count = Some(num(value)?),
        "threads_per_sm" => o.threads_per_sm = Some(num(value)?),
        "max_ctas_per_sm" => o.max_ctas_per_sm = Some(num(value)?),
        "l1_size" => o.l1_size = Some(num(value)?),
        "l1_ways" => o.l1_ways = Some(num(value)?),
        "request_table_capacity" => {
            o.request_table_capacity = Some(if value == "unlimited" {
                None
            } else {
                Some(num(value)?)
            })
        }
        "dram_controllers" => o.dram_controllers = Some(num(value)?),
        "dram_latency" => o.dram_latency = Some(num(value)?),
        "dram_service_cycles" => o.dram_service_cycles = Some(num(value)?),
        "lw_sync_mode" => {
            o.lw_sync_mode = Some(match value {
                "per_instruction" => LwSyncMode::PerInstruction,
                "free_running" => LwSyncMode::FreeRunning,
                _ => return Err("expected per_instruction or free_running".into()),
            })
        }
        "mem_size" => o.mem_size = Some(num(value)?),
        "cycle_budget" => o.cycle_budget = Some(num(value)?),
        "rng_seed" => o.rng_seed = Some(num(value)?),
        "verify" => {} // accepted for forward compatibility; CLI decides
        _ => {}        // reported as UnknownKey by the caller
    }
    Ok(())
}
