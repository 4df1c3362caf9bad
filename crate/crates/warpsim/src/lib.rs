//! Cycle-level simulator of an SIMT GPU core.
//!
//! The crate models a Tesla-style streaming multiprocessor: warps executing a
//! small scalar ISA over a reconvergence stack, intra-warp memory coalescing
//! into 64-byte segments, an L1 data cache, an outstanding-request table and a
//! FCFS latency/bandwidth DRAM model. Three machine models are supported:
//!
//! * **Baseline(W)** — SIMD pipeline, warp size W, intra-warp coalescing only.
//! * **SW+** — warps as wide as the SIMD width, plus ideal cross-warp read
//!   merging in the request table.
//! * **LW+** — warps 8x the SIMD width that split on divergence and execute
//!   the splits on MIMD lanes.
//!
//! See the `examples/` directory for runnable entry points covering each
//! capability; the `warpsim` binary exposes the same functionality as
//! subcommands (`run`, `sweep`, `gen`, `ipdom`, `oracle`).

pub mod driver;
pub mod kisa;
pub mod machines;
pub mod memsys;
pub mod metrics;
pub mod simt;

pub use driver::{run, sweep, RunSpec, SweepSpec};
pub use kisa::{
    build_cfg, compute_ipdom, parse_program, reference_execute, Cfg, IpdomTable, LaunchConfig,
    MemImage, Program,
};
pub use machines::{configure_machine, LwSyncMode, MachineConfig, MachineModel};
pub use metrics::SimStats;
pub use simt::simulate;
