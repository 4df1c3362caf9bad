//! Orchestration: run one kernel on one machine point (with verification
//! against the reference interpreter), or sweep a kernel set across machine
//! points in parallel.

use rayon::prelude::*;
use thiserror::Error;

use crate::driver::config::parse_machine_label;
use crate::driver::kernel_file::{parse_kernel_text, KernelFileError};
use crate::kisa::{
    build_cfg, compute_ipdom, parse_program, reference_execute, CfgError, ExecError, IpdomError,
    LaunchConfig, MemImage, ParseError, DEFAULT_STEP_BUDGET,
};
use crate::machines::{configure_machine, ConfigError, ConfigOverrides, MachineModel};
use crate::metrics::RunRecord;
use crate::simt::{simulate, SimError};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("kernel parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("kernel directives: {0}")]
    KernelFile(#[from] KernelFileError),
    #[error("control flow: {0}")]
    Cfg(#[from] CfgError),
    #[error("reconvergence analysis: {0}")]
    Ipdom(#[from] IpdomError),
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("machine point: {0}")]
    MachinePoint(String),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("reference execution: {0}")]
    Reference(#[from] ExecError),
    #[error("kernel declares no `#! grid` directive and no launch was given")]
    MissingLaunch,
    #[error("verification failed: {0}")]
    Verify(String),
}

/// One simulation request. `kernel_text` is the `.kisa` file contents;
/// launch geometry comes from its `#! grid` directive unless overridden.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub kernel_name: Option<String>,
    pub kernel_text: String,
    pub model: MachineModel,
    pub overrides: ConfigOverrides,
    pub launch: Option<LaunchConfig>,
    /// Check the final memory image and committed instruction count against
    /// the sequential reference interpreter.
    pub verify: bool,
}

impl RunSpec {
    pub fn new(kernel_text: impl Into<String>, model: MachineModel) -> Self {
        RunSpec {
            kernel_name: None,
            kernel_text: kernel_text.into(),
            model,
            overrides: ConfigOverrides::default(),
            launch: None,
            verify: true,
        }
    }
}

/// Runs one kernel on one machine point.
pub fn run(spec: &RunSpec) -> Result<RunRecord, DriverError> {
    let kf = parse_kernel_text(&spec.kernel_text)?;
    let program = parse_program(&spec.kernel_text)?;
    let cfg = build_cfg(&program)?;
    let ipdom = compute_ipdom(&cfg)?;
    let mc = configure_machine(spec.model, &spec.overrides)?;
    let launch = spec
        .launch
        .or(kf.launch)
        .ok_or(DriverError::MissingLaunch)?;

    let mut mem = MemImage::new(mc.mem_size);
    kf.apply_inits(&mut mem)?;
    let out = simulate(&program, &cfg, &ipdom, &launch, &mc, &mem)?;

    if spec.verify {
        let reference = reference_execute(&program, &launch, &mem, DEFAULT_STEP_BUDGET)?;
        if reference.memory != out.memory {
            return Err(DriverError::Verify(
                "final memory image differs from the reference interpreter".into(),
            ));
        }
        let expected: u64 = reference.insn_counts.iter().sum();
        if out.stats.committed_scalar_instructions != expected {
            return Err(DriverError::Verify(format!(
                "committed {} scalar instructions, reference executed {expected}",
                out.stats.committed_scalar_instructions
            )));
        }
    }

    let kernel = spec
        .kernel_name
        .clone()
        .or(kf.name)
        .unwrap_or_else(|| "kernel".into());
    Ok(RunRecord {
        kernel,
        config: mc,
        stats: out.stats,
        error: None,
    })
}

/// A sweep: every kernel crossed with every machine point label
/// (`baseline-8` .. `baseline-64`, `sw+`, `lw+pi`, `lw+fr`), sharing one set
/// of overrides.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    /// (kernel name override or empty to use the file's own, kernel text).
    pub kernels: Vec<(Option<String>, String)>,
    pub machines: Vec<String>,
    pub overrides: ConfigOverrides,
    pub verify: bool,
}

/// Runs the whole sweep in parallel. Failures become rows with the `error`
/// column set rather than aborting the sweep. Rows are sorted by kernel,
/// machine and warp size, so output order is deterministic.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>, DriverError> {
    let mut points = Vec::new();
    for label in &spec.machines {
        let (model, warp, mode) =
            parse_machine_label(label).map_err(DriverError::MachinePoint)?;
        let mut overrides = spec.overrides.clone();
        if warp.is_some() {
            overrides.warp_size = warp;
        }
        if mode.is_some() {
            overrides.lw_sync_mode = mode;
        }
        points.push((model, overrides));
    }

    let mut records: Vec<RunRecord> = spec
        .kernels
        .par_iter()
        .flat_map(|kernel| {
            points.par_iter().map(move |(model, overrides)| {
                let rs = RunSpec {
                    kernel_name: kernel.0.clone(),
                    kernel_text: kernel.1.clone(),
                    model: *model,
                    overrides: overrides.clone(),
                    launch: None,
                    verify: spec.verify,
                };
                run(&rs).unwrap_or_else(|e| failed_record(&rs, e))
            })
        })
        .collect();

    records.sort_by(|a, b| {
        (&a.kernel, a.config.machine_label(), a.config.warp_size).cmp(&(
            &b.kernel,
            b.config.machine_label(),
            b.config.warp_size,
        ))
    });
    Ok(records)
}

/// Builds a placeholder row for a failed point so the sweep stays complete.
fn failed_record(rs: &RunSpec, e: DriverError) -> RunRecord {
    // Labeling needs a config; fall back to model defaults if the overrides
    // themselves were rejected.
    let config = configure_machine(rs.model, &rs.overrides)
        .or_else(|_| configure_machine(rs.model, &ConfigOverrides::default()))
        .expect("model defaults are valid");
    let kernel = rs
        .kernel_name
        .clone()
        .or_else(|| {
            parse_kernel_text(&rs.kernel_text)
                .ok()
                .and_then(|kf| kf.name)
        })
        .unwrap_or_else(|| "kernel".into());
    RunRecord {
        kernel,
        config,
        stats: Default::default(),
        error: Some(e.to_string().replace(',', ";").replace('\n', " ")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::gen::{generate, KernelClass};

    #[test]
    fn run_verifies_against_reference() {
        let k = generate(&KernelClass::UnitStrideCopy { n: 256 }).unwrap();
        let mut spec = RunSpec::new(k.text, MachineModel::Baseline);
        spec.overrides.sm_count = Some(1);
        let rec = run(&spec).unwrap();
        assert_eq!(rec.kernel, "unit_stride_copy_n256");
        assert!(rec.error.is_none());
        assert_eq!(rec.stats.scalar_memory_instructions, 8 * 256);
    }

    #[test]
    fn missing_grid_directive_is_rejected() {
        let spec = RunSpec::new("exit\n", MachineModel::Baseline);
        assert!(matches!(run(&spec), Err(DriverError::MissingLaunch)));
        let mut with_launch = RunSpec::new("exit\n", MachineModel::Baseline);
        with_launch.launch = Some(LaunchConfig::linear(1, 32));
        assert!(run(&with_launch).is_ok());
    }

    #[test]
    fn sweep_is_sorted_and_error_tolerant() {
        let k = generate(&KernelClass::BroadcastRead { n: 64 }).unwrap();
        let spec = SweepSpec {
            kernels: vec![(None, k.text)],
            machines: vec![
                "baseline-32".into(),
                "baseline-8".into(),
                "sw+".into(),
                "baseline-12".into(), // invalid warp size: must yield an error row
            ],
            overrides: ConfigOverrides {
                sm_count: Some(1),
                ..Default::default()
            },
            verify: true,
        };
        let rows = sweep(&spec).unwrap();
        assert_eq!(rows.len(), 4);
        let warps: Vec<usize> = rows
            .iter()
            .filter(|r| r.config.machine_label() == "baseline")
            .map(|r| r.config.warp_size)
            .collect();
        assert!(warps.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(rows.iter().filter(|r| r.error.is_some()).count(), 1);
    }

    #[test]
    fn all_machine_points_run_every_class() {
        let machines = ["baseline-8", "baseline-64", "sw+", "lw+pi", "lw+fr"];
        let classes = [
            KernelClass::UnitStrideCopy { n: 128 },
            KernelClass::RandomGather { n: 128, seed: 3 },
            KernelClass::DivergentTree { depth: 2, threads: 128 },
            KernelClass::Mixed { n: 128, seed: 3 },
        ];
        let kernels = classes
            .iter()
            .map(|c| (None, generate(c).unwrap().text))
            .collect();
        let rows = sweep(&SweepSpec {
            kernels,
            machines: machines.iter().map(|s| s.to_string()).collect(),
            overrides: ConfigOverrides {
                sm_count: Some(1),
                ..Default::default()
            },
            verify: true,
        })
        .unwrap();
        assert_eq!(rows.len(), 4 * 5);
        for r in &rows {
            assert!(r.error.is_none(), "{} on {}: {:?}", r.kernel, r.config.machine_label(), r.error);
        }
    }
}
