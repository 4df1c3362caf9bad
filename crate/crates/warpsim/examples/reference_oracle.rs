//! Run the sequential reference interpreter on a generated kernel and dump
//! the first few output words. This is the oracle every simulation is
//! checked against.

use warpsim::driver::{generate, parse_kernel_text, KernelClass, OUTPUT_BASE};
use warpsim::{parse_program, reference_execute, MemImage, Program};

fn main() {
    let gk = generate(&KernelClass::RandomGather { n: 64, seed: 42 }).expect("generate");
    let kf = parse_kernel_text(&gk.text).expect("directives");
    let program: Program = parse_program(&gk.text).expect("parse");

    let mut mem = MemImage::default();
    kf.apply_inits(&mut mem).expect("init");
    let run = reference_execute(&program, &gk.launch, &mem, 1 << 24).expect("execute");

    let executed: u64 = run.insn_counts.iter().sum();
    println!("{}: {} threads, {executed} scalar instructions", gk.name, gk.launch.total_threads());
    for i in 0..8 {
        let addr = OUTPUT_BASE + 4 * i;
        println!("out[{i}] = {}", run.memory.load_u32(addr).unwrap());
    }
}
