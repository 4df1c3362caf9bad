//! Sweep every generator class across all machine points, print the CSV, and
//! write an IPC chart (normalized to baseline-32) as SVG.

use warpsim::driver::{generate, sweep, KernelClass, SweepSpec};
use warpsim::machines::ConfigOverrides;
use warpsim::metrics::{emit_chart, emit_csv, Metric};

fn main() {
    let kernels = [
        KernelClass::UnitStrideCopy { n: 1024 },
        KernelClass::BroadcastRead { n: 1024 },
        KernelClass::RandomGather { n: 1024, seed: 7 },
        KernelClass::DivergentTree { depth: 3, threads: 1024 },
        KernelClass::ComputeLoop { iters: 64, threads: 1024 },
        KernelClass::Mixed { n: 1024, seed: 7 },
    ]
    .iter()
    .map(|c| {
        let gk = generate(c).expect("generate");
        (Some(gk.name), gk.text)
    })
    .collect();

    let spec = SweepSpec {
        kernels,
        machines: ["baseline-8", "baseline-16", "baseline-32", "baseline-64", "sw+", "lw+pi", "lw+fr"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        overrides: ConfigOverrides {
            sm_count: Some(4),
            ..ConfigOverrides::default()
        },
        verify: true,
    };

    let rows = sweep(&spec).expect("sweep");
    print!("{}", emit_csv(&rows));

    let svg = emit_chart(&rows, Metric::Ipc, Some("baseline-32")).expect("chart");
    let path = std::env::temp_dir().join("warp_size_sweep.svg");
    std::fs::write(&path, svg).expect("write svg");
    eprintln!("chart written to {}", path.display());
}
