//! Run one divergent kernel across every machine point and compare how the
//! three models (fixed-warp baseline, cross-warp read merging, split-on-
//! divergence) trade cycles for efficiency.

use warpsim::driver::{generate, parse_machine_label, run, KernelClass, RunSpec};
use warpsim::machines::ConfigOverrides;

fn main() {
    let gk = generate(&KernelClass::DivergentTree { depth: 3, threads: 1024 }).expect("generate");
    println!(
        "{:<12} {:>8} {:>8} {:>10} {:>8}",
        "machine", "cycles", "ipc", "simd eff", "splits"
    );
    for label in ["baseline-8", "baseline-16", "baseline-32", "baseline-64", "sw+", "lw+pi", "lw+fr"] {
        let (model, warp, mode) = parse_machine_label(label).expect("label");
        let mut spec = RunSpec::new(gk.text.clone(), model);
        spec.kernel_name = Some(gk.name.clone());
        spec.overrides = ConfigOverrides {
            sm_count: Some(1),
            warp_size: warp,
            lw_sync_mode: mode,
            ..ConfigOverrides::default()
        };
        let rec = run(&spec).expect("run");
        let s = &rec.stats;
        println!(
            "{label:<12} {:>8} {:>8.3} {:>10.3} {:>8}",
            s.total_cycles,
            s.ipc(),
            s.simd_efficiency(),
            s.splits_created
        );
    }
}
