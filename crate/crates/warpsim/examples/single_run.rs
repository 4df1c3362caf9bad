//! Simulate one kernel on one machine and print the headline metrics. The
//! run is verified against the reference interpreter before reporting.

use warpsim::driver::{generate, run, KernelClass, RunSpec};
use warpsim::machines::{ConfigOverrides, MachineModel};

fn main() {
    let gk = generate(&KernelClass::UnitStrideCopy { n: 4096 }).expect("generate");
    let mut spec = RunSpec::new(gk.text, MachineModel::Baseline);
    spec.kernel_name = Some(gk.name);
    spec.overrides = ConfigOverrides {
        sm_count: Some(1),
        warp_size: Some(32),
        ..ConfigOverrides::default()
    };

    let rec = run(&spec).expect("run");
    let s = &rec.stats;
    println!("{} on {}", rec.kernel, rec.point_id());
    println!("  cycles            {}", s.total_cycles);
    println!("  committed insns   {}", s.committed_scalar_instructions);
    println!("  ipc               {:.3}", s.ipc());
    println!("  off-chip reads    {}", s.offchip_reads);
    println!("  off-chip writes   {}", s.offchip_writes);
    println!("  l1 hits/misses    {}/{}", s.l1_hits, s.l1_misses);
    match s.coalescing_rate() {
        Some(r) => println!("  coalescing rate   {r:.4}"),
        None => println!("  coalescing rate   n/a (no memory instructions)"),
    }
    println!("  simd efficiency   {:.3}", s.simd_efficiency());
    println!("  idle share        {:.3}", s.idle_share());
}
