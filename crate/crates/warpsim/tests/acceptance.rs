//! End-to-end acceptance gate. Each test prints exactly one PASS/FAIL line
//! for its criterion, so `cargo test --test acceptance -- --nocapture`
//! doubles as a checklist.

mod common;

use std::panic::{catch_unwind, UnwindSafe};

use warpsim::driver::{generate, parse_machine_label, run, sweep, KernelClass, RunSpec, SweepSpec};
use warpsim::machines::{ConfigOverrides, MachineModel};
use warpsim::metrics::{emit_csv, RunRecord};

const ALL_POINTS: [&str; 7] = [
    "baseline-8",
    "baseline-16",
    "baseline-32",
    "baseline-64",
    "sw+",
    "lw+pi",
    "lw+fr",
];

fn classes() -> Vec<KernelClass> {
    vec![
        KernelClass::UnitStrideCopy { n: 1024 },
        KernelClass::BroadcastRead { n: 1024 },
        KernelClass::RandomGather { n: 1024, seed: 7 },
        KernelClass::DivergentTree { depth: 3, threads: 1024 },
        KernelClass::ComputeLoop { iters: 64, threads: 1024 },
        KernelClass::Mixed { n: 1024, seed: 7 },
    ]
}

fn desk() -> ConfigOverrides {
    ConfigOverrides {
        sm_count: Some(1),
        ..ConfigOverrides::default()
    }
}

fn run_point(class: &KernelClass, label: &str, mut overrides: ConfigOverrides) -> RunRecord {
    let gk = generate(class).expect("kernel generation");
    let (model, warp, mode) = parse_machine_label(label).expect("machine label");
    if warp.is_some() {
        overrides.warp_size = warp;
    }
    if mode.is_some() {
        overrides.lw_sync_mode = mode;
    }
    let mut spec = RunSpec::new(gk.text, model);
    spec.kernel_name = Some(gk.name);
    spec.overrides = overrides;
    run(&spec).unwrap_or_else(|e| panic!("{label}: {e}"))
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn gate(n: u32, desc: &str, body: impl FnOnce() -> Result<(), String> + UnwindSafe) {
    let outcome = match catch_unwind(body) {
        Ok(Ok(())) => None,
        Ok(Err(msg)) => Some(msg),
        Err(payload) => Some(
            payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    };
    match outcome {
        None => println!("criterion {n:2} PASS  {desc}"),
        Some(msg) => {
            println!("criterion {n:2} FAIL  {desc} — {msg}");
            panic!("criterion {n} failed: {msg}");
        }
    }
}

#[test]
fn criterion_01_functional_equivalence() {
    gate(
        1,
        "every kernel class on every machine point reproduces the reference memory image",
        || {
            for class in classes() {
                for label in ALL_POINTS {
                    // run() verifies memory and committed-instruction count
                    // against the sequential interpreter before returning.
                    let rec = run_point(&class, label, desk());
                    ensure!(rec.error.is_none(), "{} on {label} errored", rec.kernel);
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_02_coalescing_improves_with_warp_size() {
    gate(
        2,
        "unit-stride reads coalesce to N/2 requests at warp 8 and N/4 from warp 16 up",
        || {
            let class = KernelClass::UnitStrideCopy { n: 4096 };
            for (warp, want) in [(8usize, 2048u64), (16, 1024), (32, 1024), (64, 1024)] {
                let rec = run_point(&class, &format!("baseline-{warp}"), desk());
                ensure!(
                    rec.stats.offchip_reads == want,
                    "warp {warp}: {} off-chip reads, want {want}",
                    rec.stats.offchip_reads
                );
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_03_cross_warp_read_merging() {
    gate(
        3,
        "broadcast load: merged machine sends one off-chip read, baseline one per warp; writes unaffected",
        || {
            let class = KernelClass::BroadcastRead { n: 256 };
            let sw = run_point(&class, "sw+", desk());
            ensure!(
                sw.stats.offchip_reads == 1,
                "sw+: {} off-chip reads, want 1",
                sw.stats.offchip_reads
            );
            ensure!(
                sw.stats.merged_reads == 31,
                "sw+: {} merged reads, want 31",
                sw.stats.merged_reads
            );
            let base = run_point(&class, "baseline-8", desk());
            ensure!(
                base.stats.offchip_reads == 32,
                "baseline-8: {} off-chip reads, want 32 (one per warp)",
                base.stats.offchip_reads
            );
            ensure!(
                base.stats.merged_reads == 0,
                "baseline-8 must never merge, saw {}",
                base.stats.merged_reads
            );

            // Only reads merge: on a write-heavy kernel the merged machine's
            // off-chip write count matches the equal-warp-size baseline.
            let copy = KernelClass::UnitStrideCopy { n: 1024 };
            let sw_w = run_point(&copy, "sw+", desk());
            let base_w = run_point(&copy, "baseline-8", desk());
            ensure!(
                sw_w.stats.offchip_writes == base_w.stats.offchip_writes,
                "write counts diverge: sw+ {} vs baseline-8 {}",
                sw_w.stats.offchip_writes,
                base_w.stats.offchip_writes
            );
            Ok(())
        },
    );
}

#[test]
fn criterion_04_divergence_penalizes_wide_warps() {
    gate(
        4,
        "branch-tree kernel: baseline IPC strictly decreases as warp size grows",
        || {
            let class = KernelClass::DivergentTree { depth: 3, threads: 1024 };
            let ipc: Vec<f64> = [8usize, 16, 32, 64]
                .iter()
                .map(|w| run_point(&class, &format!("baseline-{w}"), desk()).stats.ipc())
                .collect();
            for i in 1..ipc.len() {
                ensure!(
                    ipc[i] < ipc[i - 1],
                    "IPC not strictly decreasing: {ipc:?}"
                );
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_05_coalescing_bound_favors_wide_warps() {
    gate(
        5,
        "bandwidth-bound copy: wider warps win (IPC 16 > 8, 32 >= 16)",
        || {
            let class = KernelClass::UnitStrideCopy { n: 4096 };
            let overrides = ConfigOverrides {
                dram_service_cycles: Some(16),
                request_table_capacity: Some(Some(256)),
                ..desk()
            };
            let ipc: Vec<f64> = [8usize, 16, 32]
                .iter()
                .map(|w| {
                    run_point(&class, &format!("baseline-{w}"), overrides.clone())
                        .stats
                        .ipc()
                })
                .collect();
            ensure!(ipc[1] > ipc[0], "IPC at warp 16 not above warp 8: {ipc:?}");
            ensure!(ipc[2] >= ipc[1], "IPC at warp 32 below warp 16: {ipc:?}");
            Ok(())
        },
    );
}

#[test]
fn criterion_06_split_execution_recovers_divergence_loss() {
    gate(
        6,
        "large-warp splitter: 2^depth - 1 splits per full warp and no slower than baseline-64",
        || {
            let class = KernelClass::DivergentTree { depth: 3, threads: 1024 };
            let lw = run_point(&class, "lw+fr", desk());
            let warps = 1024 / 64;
            ensure!(
                lw.stats.splits_created == 7 * warps,
                "{} splits, want {}",
                lw.stats.splits_created,
                7 * warps
            );
            let base = run_point(&class, "baseline-64", desk());
            ensure!(
                lw.stats.total_cycles <= base.stats.total_cycles,
                "free-running splitter slower than baseline-64: {} vs {}",
                lw.stats.total_cycles,
                base.stats.total_cycles
            );
            Ok(())
        },
    );
}

#[test]
fn criterion_07_lockstep_synchronization_costs_idle_cycles() {
    gate(
        7,
        "per-instruction sync idles at least as much as free-running splits",
        || {
            let class = KernelClass::Mixed { n: 1024, seed: 7 };
            let pi = run_point(&class, "lw+pi", desk());
            let fr = run_point(&class, "lw+fr", desk());
            ensure!(
                pi.stats.idle_share() >= fr.stats.idle_share(),
                "idle share: lockstep {:.4} < free-running {:.4}",
                pi.stats.idle_share(),
                fr.stats.idle_share()
            );
            Ok(())
        },
    );
}

#[test]
fn criterion_08_uniform_compute_is_warp_size_insensitive() {
    gate(
        8,
        "uniform ALU loop: baseline IPC varies under 2% across warp sizes",
        || {
            let class = KernelClass::ComputeLoop { iters: 64, threads: 1024 };
            let ipc: Vec<f64> = [8usize, 16, 32, 64]
                .iter()
                .map(|w| run_point(&class, &format!("baseline-{w}"), desk()).stats.ipc())
                .collect();
            let lo = ipc.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ipc.iter().cloned().fold(0.0f64, f64::max);
            ensure!(
                (hi - lo) / lo < 0.02,
                "IPC spread {:.4}% exceeds 2%: {ipc:?}",
                100.0 * (hi - lo) / lo
            );
            Ok(())
        },
    );
}

#[test]
fn criterion_09_accounting_identities() {
    gate(
        9,
        "cycle and request accounting identities hold on every sweep point",
        || {
            let spec = SweepSpec {
                kernels: classes()
                    .iter()
                    .map(|c| {
                        let gk = generate(c).unwrap();
                        (Some(gk.name), gk.text)
                    })
                    .collect(),
                machines: ALL_POINTS.iter().map(|s| s.to_string()).collect(),
                overrides: desk(),
                verify: true,
            };
            let rows = sweep(&spec).map_err(|e| e.to_string())?;
            ensure!(rows.len() == 6 * 7, "{} rows, want 42", rows.len());
            let mut committed: Vec<(String, u64)> = Vec::new();
            for r in &rows {
                ensure!(
                    r.error.is_none(),
                    "{} on {} errored: {:?}",
                    r.kernel,
                    r.point_id(),
                    r.error
                );
                let s = &r.stats;
                for (i, sm) in s.per_sm.iter().enumerate() {
                    ensure!(
                        sm.total == sm.busy + sm.idle,
                        "{} {}: SM{i} cycles {} != busy {} + idle {}",
                        r.kernel,
                        r.point_id(),
                        sm.total,
                        sm.busy,
                        sm.idle
                    );
                }
                ensure!(
                    s.offchip_requests() == s.l1_misses - s.merged_reads + s.offchip_writes,
                    "{} {}: requests {} != misses {} - merged {} + writes {}",
                    r.kernel,
                    r.point_id(),
                    s.offchip_requests(),
                    s.l1_misses,
                    s.merged_reads,
                    s.offchip_writes
                );
                match committed.iter().find(|(k, _)| *k == r.kernel) {
                    Some((_, c)) => ensure!(
                        *c == s.committed_scalar_instructions,
                        "{}: committed count varies across machines ({} vs {})",
                        r.kernel,
                        c,
                        s.committed_scalar_instructions
                    ),
                    None => committed.push((r.kernel.clone(), s.committed_scalar_instructions)),
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_10_reconvergence_analysis_matches_oracle() {
    gate(
        10,
        "immediate post-dominators equal the brute-force reachability oracle on 50 random CFGs",
        || {
            let mut checked = 0;
            let mut seed = 0u64;
            while checked < 50 {
                let Some((cfg, table)) = common::random_cfg(seed, 10) else {
                    seed += 1;
                    continue;
                };
                for b in common::reachable_blocks(&cfg) {
                    let want = common::ipdom_oracle(&cfg, b);
                    ensure!(
                        table.of(b) == want,
                        "seed {seed}, block {b}: got {:?}, oracle {:?}",
                        table.of(b),
                        want
                    );
                }
                checked += 1;
                seed += 1;
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_11_byte_identical_determinism() {
    gate(
        11,
        "repeated runs and serial-vs-parallel sweeps emit byte-identical CSV",
        || {
            let gk = generate(&KernelClass::Mixed { n: 1024, seed: 7 }).unwrap();
            let mut spec = RunSpec::new(gk.text.clone(), MachineModel::Baseline);
            spec.kernel_name = Some(gk.name.clone());
            spec.overrides = desk();
            let a = emit_csv(&[run(&spec).map_err(|e| e.to_string())?]);
            let b = emit_csv(&[run(&spec).map_err(|e| e.to_string())?]);
            ensure!(a == b, "two identical runs produced different CSV");

            let sweep_spec = SweepSpec {
                kernels: classes()
                    .iter()
                    .map(|c| {
                        let g = generate(c).unwrap();
                        (Some(g.name), g.text)
                    })
                    .collect(),
                machines: ALL_POINTS.iter().map(|s| s.to_string()).collect(),
                overrides: desk(),
                verify: false,
            };
            let parallel = emit_csv(&sweep(&sweep_spec).map_err(|e| e.to_string())?);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map_err(|e| e.to_string())?;
            let serial =
                emit_csv(&pool.install(|| sweep(&sweep_spec)).map_err(|e| e.to_string())?);
            ensure!(
                parallel == serial,
                "parallel and serial sweeps produced different CSV"
            );
            Ok(())
        },
    );
}
