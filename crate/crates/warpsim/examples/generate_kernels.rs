//! Print one generated kernel per class. The output is complete `.kisa`
//! text: `#!` directives carry the name, launch geometry, and any memory
//! initialization, so each listing is runnable as-is.

use warpsim::driver::{generate, KernelClass};

fn main() {
    let classes = [
        KernelClass::UnitStrideCopy { n: 64 },
        KernelClass::BroadcastRead { n: 64 },
        KernelClass::RandomGather { n: 32, seed: 1 },
        KernelClass::DivergentTree { depth: 2, threads: 64 },
        KernelClass::ComputeLoop { iters: 4, threads: 64 },
        KernelClass::Mixed { n: 64, seed: 1 },
    ];
    for class in &classes {
        let gk = generate(class).expect("generate");
        println!("==== {} ({} blocks x {} threads) ====", gk.name, gk.launch.grid_blocks(), gk.launch.block_threads());
        println!("{}", gk.text);
    }
}
