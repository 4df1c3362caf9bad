//! Parse a small kernel, build its control-flow graph, and print the
//! reconvergence (immediate post-dominator) table.

use warpsim::{build_cfg, compute_ipdom, parse_program};

const KERNEL: &str = "\
mov r0, %tid
and r1, r0, 1
setp.eq p0, r1, 0
bra p0, EVEN
add r2, r0, 100
setp.eq p3, r0, r0
bra p3, JOIN
EVEN:
add r2, r0, 200
JOIN:
mul r2, r2, 2
exit
";

fn main() {
    let program = parse_program(KERNEL).expect("parse");
    let cfg = build_cfg(&program).expect("cfg");
    let ipdom = compute_ipdom(&cfg).expect("ipdom");

    println!("{} instructions, {} blocks", program.instructions.len(), cfg.blocks.len());
    for (b, block) in cfg.blocks.iter().enumerate() {
        println!(
            "block {b}: insns {}..{}  succ {:?}  reconverges at {:?}",
            block.start,
            block.end,
            cfg.succ[b],
            ipdom.of(b)
        );
    }
}
