//! Kernel generators: six access-pattern classes used to probe coalescing,
//! divergence and latency-hiding behavior. Generation is deterministic in
//! (class, parameters, seed); the emitted `.kisa` text is self-contained,
//! carrying its launch geometry and any required memory initialization as
//! `#!` directives.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kisa::LaunchConfig;

/// Base of the first input array (index table for the gather classes).
pub const INPUT_BASE: u32 = 0x100000;
/// Base of the gathered data array.
pub const DATA_BASE: u32 = 0x180000;
/// Base of the output array.
pub const OUTPUT_BASE: u32 = 0x200000;

const MAX_BLOCK_THREADS: u32 = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("{0}")]
    BadParam(String),
}

fn bad(msg: impl Into<String>) -> GenError {
    GenError::BadParam(msg.into())
}

/// A generator class with its parameters. `n` is the total thread count for
/// the data-parallel classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KernelClass {
    /// Four back-to-back array copies with gid-indexed, unit-stride accesses.
    UnitStrideCopy { n: u32 },
    /// Every thread reads the same word, then writes its own output slot.
    BroadcastRead { n: u32 },
    /// out[gid] = data[idx[gid]] with a seeded random index table.
    RandomGather { n: u32, seed: u64 },
    /// A depth-deep binary branch tree keyed on tid bits 3..3+depth, four ALU
    /// instructions per leaf, no memory traffic.
    DivergentTree { depth: u32, threads: u32 },
    /// A uniform ALU loop; no divergence, no memory traffic.
    ComputeLoop { iters: u32, threads: u32 },
    /// Gather plus data-dependent divergence plus a strided store.
    Mixed { n: u32, seed: u64 },
}

impl KernelClass {
    pub const NAMES: [&'static str; 6] = [
        "unit_stride_copy",
        "broadcast_read",
        "random_gather",
        "divergent_tree",
        "compute_loop",
        "mixed",
    ];
}

/// A generated kernel: the full `.kisa` text (directives included) plus the
/// launch it declares.
#[derive(Clone, Debug)]
pub struct GeneratedKernel {
    pub name: String,
    pub text: String,
    pub launch: LaunchConfig,
}

fn linear_launch(total_threads: u32, what: &str) -> Result<LaunchConfig, GenError> {
    if total_threads == 0 {
        return Err(bad(format!("{what} must be positive")));
    }
    let block = total_threads.min(MAX_BLOCK_THREADS);
    if total_threads % block != 0 {
        return Err(bad(format!(
            "{what} {total_threads} must be a multiple of {block} to fill its blocks"
        )));
    }
    Ok(LaunchConfig::linear(total_threads / block, block))
}

fn header(out: &mut String, name: &str, launch: &LaunchConfig) {
    let _ = writeln!(out, "#! name {name}");
    let _ = writeln!(
        out,
        "#! grid {} {}",
        launch.grid_blocks(),
        launch.block_threads()
    );
}

/// Emits `#! init` directives for a word table, 16 words per line.
fn emit_table(out: &mut String, base: u32, words: &[u32]) {
    for (chunk_idx, chunk) in words.chunks(16).enumerate() {
        let _ = write!(out, "#! init 0x{:x}", base + 64 * chunk_idx as u32);
        for w in chunk {
            let _ = write!(out, " {w}");
        }
        out.push('\n');
    }
}

/// The shared prologue computing the global thread id into `r0`.
const GID: &str = "\
mov r0, %ctaid
mov r7, %ntid
mul r0, r0, r7
mov r7, %tid
add r0, r0, r7
";

pub fn generate(class: &KernelClass) -> Result<GeneratedKernel, GenError> {
    match *class {
        KernelClass::UnitStrideCopy { n } => unit_stride_copy(n),
        KernelClass::BroadcastRead { n } => broadcast_read(n),
        KernelClass::RandomGather { n, seed } => random_gather(n, seed),
        KernelClass::DivergentTree { depth, threads } => divergent_tree(depth, threads),
        KernelClass::ComputeLoop { iters, threads } => compute_loop(iters, threads),
        KernelClass::Mixed { n, seed } => mixed(n, seed),
    }
}

fn unit_stride_copy(n: u32) -> Result<GeneratedKernel, GenError> {
    let launch = linear_launch(n, "n")?;
    if n % 16 != 0 {
        return Err(bad("n must be a multiple of 16 for whole-segment arrays"));
    }
    let name = format!("unit_stride_copy_n{n}");
    let mut t = String::new();
    header(&mut t, &name, &launch);
    let input: Vec<u32> = (0..4 * n).map(|i| i.wrapping_mul(2654435761)).collect();
    emit_table(&mut t, INPUT_BASE, &input);
    t.push_str(GID);
    let _ = writeln!(t, "mul r0, r0, 4");
    let _ = writeln!(t, "mov r1, r0");
    let _ = writeln!(t, "add r1, r1, 0x{INPUT_BASE:x}");
    let _ = writeln!(t, "mov r2, r0");
    let _ = writeln!(t, "add r2, r2, 0x{OUTPUT_BASE:x}");
    for j in 0..4u32 {
        let off = j * 4 * n;
        let _ = writeln!(t, "ld.global r3, [r1+{off}]");
        let _ = writeln!(t, "st.global [r2+{off}], r3");
    }
    t.push_str("exit\n");
    Ok(GeneratedKernel { name, text: t, launch })
}

fn broadcast_read(n: u32) -> Result<GeneratedKernel, GenError> {
    let launch = linear_launch(n, "n")?;
    let name = format!("broadcast_read_n{n}");
    let mut t = String::new();
    header(&mut t, &name, &launch);
    let _ = writeln!(t, "#! init 0x{INPUT_BASE:x} 123456789");
    let _ = writeln!(t, "mov r1, 0x{INPUT_BASE:x}");
    let _ = writeln!(t, "ld.global r2, [r1]");
    t.push_str(GID);
    let _ = writeln!(t, "mul r0, r0, 4");
    let _ = writeln!(t, "add r0, r0, 0x{OUTPUT_BASE:x}");
    let _ = writeln!(t, "st.global [r0], r2");
    t.push_str("exit\n");
    Ok(GeneratedKernel { name, text: t, launch })
}

fn random_gather(n: u32, seed: u64) -> Result<GeneratedKernel, GenError> {
    let launch = linear_launch(n, "n")?;
    if n > (OUTPUT_BASE - DATA_BASE) / 4 {
        return Err(bad(format!("n must be at most {}", (OUTPUT_BASE - DATA_BASE) / 4)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let data: Vec<u32> = (0..n).map(|_| rng.gen()).collect();
    let name = format!("random_gather_n{n}_s{seed}");
    let mut t = String::new();
    header(&mut t, &name, &launch);
    emit_table(&mut t, INPUT_BASE, &idx);
    emit_table(&mut t, DATA_BASE, &data);
    t.push_str(GID);
    let _ = writeln!(t, "mul r1, r0, 4");
    let _ = writeln!(t, "add r1, r1, 0x{INPUT_BASE:x}");
    let _ = writeln!(t, "ld.global r2, [r1]");
    let _ = writeln!(t, "mul r2, r2, 4");
    let _ = writeln!(t, "add r2, r2, 0x{DATA_BASE:x}");
    let _ = writeln!(t, "ld.global r3, [r2]");
    let _ = writeln!(t, "mul r4, r0, 4");
    let _ = writeln!(t, "add r4, r4, 0x{OUTPUT_BASE:x}");
    let _ = writeln!(t, "st.global [r4], r3");
    t.push_str("exit\n");
    Ok(GeneratedKernel { name, text: t, launch })
}

fn divergent_tree(depth: u32, threads: u32) -> Result<GeneratedKernel, GenError> {
    if !(1..=5).contains(&depth) {
        return Err(bad("depth must be between 1 and 5"));
    }
    let launch = linear_launch(threads, "threads")?;
    if launch.block_threads() < 8 << depth {
        return Err(bad(format!(
            "blocks of {} threads cannot exercise tid bit {}",
            launch.block_threads(),
            3 + depth - 1
        )));
    }
    let name = format!("divergent_tree_d{depth}");
    let mut t = String::new();
    header(&mut t, &name, &launch);
    let _ = writeln!(t, "mov r0, %tid");
    let _ = writeln!(t, "mov r1, 1");
    let _ = writeln!(t, "setp.eq p3, r0, r0");

    // Branching on tid bits 3.. keeps the paths 8 threads wide, so every
    // SIMD-width-8 beat stays fully populated on one side of each split.
    let mut next_label = 0u32;
    let mut leaf = 0u32;
    emit_node(&mut t, 0, depth, &mut next_label, &mut leaf);
    t.push_str("exit\n");
    Ok(GeneratedKernel { name, text: t, launch })
}

fn emit_node(t: &mut String, level: u32, depth: u32, next_label: &mut u32, leaf: &mut u32) {
    if level == depth {
        let c = 2 * *leaf + 3;
        *leaf += 1;
        let _ = writeln!(t, "add r1, r1, {c}");
        let _ = writeln!(t, "mul r1, r1, 3");
        let _ = writeln!(t, "and r1, r1, 65535");
        let _ = writeln!(t, "add r1, r1, {}", c + 1);
        return;
    }
    let id = *next_label;
    *next_label += 1;
    let bit = 1u32 << (3 + level);
    let _ = writeln!(t, "and r2, r0, {bit}");
    let _ = writeln!(t, "setp.ne p0, r2, 0");
    let _ = writeln!(t, "bra p0, R{id}");
    emit_node(t, level + 1, depth, next_label, leaf);
    let _ = writeln!(t, "bra p3, J{id}");
    let _ = writeln!(t, "R{id}:");
    emit_node(t, level + 1, depth, next_label, leaf);
    let _ = writeln!(t, "J{id}:");
}

fn compute_loop(iters: u32, threads: u32) -> Result<GeneratedKernel, GenError> {
    if iters == 0 {
        return Err(bad("iters must be positive"));
    }
    let launch = linear_launch(threads, "threads")?;
    let name = format!("compute_loop_i{iters}");
    let mut t = String::new();
    header(&mut t, &name, &launch);
    let _ = writeln!(t, "mov r0, 0");
    let _ = writeln!(t, "mov r1, %tid");
    let _ = writeln!(t, "LOOP: add r1, r1, 7");
    let _ = writeln!(t, "mul r1, r1, 3");
    let _ = writeln!(t, "and r1, r1, 1048575");
    let _ = writeln!(t, "add r1, r1, 1");
    let _ = writeln!(t, "add r0, r0, 1");
    let _ = writeln!(t, "setp.lt p0, r0, {iters}");
    let _ = writeln!(t, "bra p0, LOOP");
    t.push_str("exit\n");
    Ok(GeneratedKernel { name, text: t, launch })
}

fn mixed(n: u32, seed: u64) -> Result<GeneratedKernel, GenError> {
    if !n.is_power_of_two() {
        return Err(bad("n must be a power of two"));
    }
    let launch = linear_launch(n, "n")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tbl: Vec<u32> = (0..n).map(|_| rng.gen()).collect();
    let data: Vec<u32> = (0..n).map(|_| rng.gen()).collect();
    let name = format!("mixed_n{n}_s{seed}");
    let mut t = String::new();
    header(&mut t, &name, &launch);
    emit_table(&mut t, INPUT_BASE, &tbl);
    emit_table(&mut t, DATA_BASE, &data);
    t.push_str(GID);
    let _ = writeln!(t, "mul r1, r0, 4");
    let _ = writeln!(t, "add r1, r1, 0x{INPUT_BASE:x}");
    let _ = writeln!(t, "ld.global r2, [r1]");
    let _ = writeln!(t, "and r2, r2, {}", n - 1);
    let _ = writeln!(t, "mul r3, r2, 4");
    let _ = writeln!(t, "add r3, r3, 0x{DATA_BASE:x}");
    let _ = writeln!(t, "ld.global r4, [r3]");
    let _ = writeln!(t, "and r5, r2, 1");
    let _ = writeln!(t, "setp.ne p0, r5, 0");
    let _ = writeln!(t, "bra p0, ODD");
    let _ = writeln!(t, "add r4, r4, 3");
    let _ = writeln!(t, "setp.eq p3, r0, r0");
    let _ = writeln!(t, "bra p3, JOIN");
    let _ = writeln!(t, "ODD: mul r4, r4, 5");
    let _ = writeln!(t, "JOIN: mul r5, r0, 4");
    let _ = writeln!(t, "add r5, r5, 0x{OUTPUT_BASE:x}");
    let _ = writeln!(t, "st.global [r5], r4");
    t.push_str("exit\n");
    Ok(GeneratedKernel { name, text: t, launch })
}
