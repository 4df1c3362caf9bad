//! Sequential per-thread reference interpreter. Runs each thread of the grid
//! to completion in thread-id order; it is the correctness oracle the SIMT
//! engine is checked against for race-free kernels.

use thiserror::Error;

use super::{AluOp, Cond, Instruction, LaunchConfig, Operand, Program, Special};

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

/// A flat 32-bit-addressed byte image, zero-initialized.
#[derive(Clone, PartialEq, Eq)]
pub struct MemImage {
    bytes: Vec<u8>,
}

impl MemImage {
    pub const DEFAULT_SIZE: usize = 16 << 20;

    pub fn new(size: usize) -> Self {
        MemImage {
            bytes: vec![0; size],
        }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn in_bounds(&self, addr: u32) -> bool {
        (addr as usize) + 4 <= self.bytes.len()
    }

    pub fn load_u32(&self, addr: u32) -> Option<u32> {
        let a = addr as usize;
        let b = self.bytes.get(a..a + 4)?;
        Some(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn store_u32(&mut self, addr: u32, value: u32) -> Option<()> {
        let a = addr as usize;
        let b = self.bytes.get_mut(a..a + 4)?;
        b.copy_from_slice(&value.to_le_bytes());
        Some(())
    }
}

impl std::fmt::Debug for MemImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MemImage({} bytes)", self.bytes.len())
    }
}

impl Default for MemImage {
    fn default() -> Self {
        MemImage::new(MemImage::DEFAULT_SIZE)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("thread {thread}: step budget of {budget} exceeded (livelock?)")]
    StepBudget { thread: u64, budget: u64 },
    #[error("thread {thread}: out-of-bounds memory access at 0x{addr:08x}")]
    Fault { thread: u64, addr: u32 },
}

/// Result of a reference run.
#[derive(Clone, Debug)]
pub struct RefRun {
    pub memory: MemImage,
    /// Dynamic instruction count per global thread id.
    pub insn_counts: Vec<u64>,
    /// Executed instruction indices per thread, recorded when tracing.
    pub traces: Option<Vec<Vec<u32>>>,
}

/// Architectural state of a single thread.
#[derive(Clone, Debug)]
pub struct ThreadState {
    pub regs: [u32; 16],
    pub preds: [bool; 4],
    pub tid: u32,
    pub ctaid: u32,
    pub ntid: u32,
}

impl ThreadState {
    pub fn new(tid: u32, ctaid: u32, ntid: u32) -> Self {
        ThreadState {
            regs: [0; 16],
            preds: [false; 4],
            tid,
            ctaid,
            ntid,
        }
    }

    pub fn operand(&self, op: Operand) -> u32 {
        match op {
            Operand::Reg(r) => self.regs[r.0 as usize],
            Operand::Imm(v) => v as u32,
            Operand::Special(Special::Tid) => self.tid,
            Operand::Special(Special::Ctaid) => self.ctaid,
            Operand::Special(Special::Ntid) => self.ntid,
        }
    }
}

/// Applies an ALU op with the same semantics used by both execution paths:
/// wrapping integer arithmetic, logical shift right, signed comparisons for
/// lt/ge.
pub fn alu(op: AluOp, a: u32, b: u32) -> u32 {
    match op {
        AluOp::Add => a.wrapping_add(b),
        AluOp::Sub => a.wrapping_sub(b),
        AluOp::Mul => a.wrapping_mul(b),
        AluOp::And => a & b,
        AluOp::Shr => a >> (b & 31),
    }
}

pub fn compare(cond: Cond, a: u32, b: u32) -> bool {
    match cond {
        Cond::Eq => a == b,
        Cond::Ne => a != b,
        Cond::Lt => (a as i32) < (b as i32),
        Cond::Ge => (a as i32) >= (b as i32),
    }
}

pub fn reference_execute(
    p: &Program,
    l: &LaunchConfig,
    mem0: &MemImage,
    step_budget: u64,
) -> Result<RefRun, ExecError> {
    reference_execute_traced(p, l, mem0, step_budget, false)
}

/// Like [`reference_execute`], optionally recording the executed instruction
/// index sequence per thread.
pub fn reference_execute_traced(
    p: &Program,
    l: &LaunchConfig,
    mem0: &MemImage,
    step_budget: u64,
    trace: bool,
) -> Result<RefRun, ExecError> {
    let mut memory = mem0.clone();
    let blocks = l.grid_blocks();
    let ntid = l.block_threads();
    let total = l.total_threads() as usize;
    let mut insn_counts = vec![0u64; total];
    let mut traces = trace.then(|| vec![Vec::new(); total]);

    for ctaid in 0..blocks {
        for tid in 0..ntid {
            let gid = (ctaid as u64 * ntid as u64 + tid as u64) as usize;
            let mut st = ThreadState::new(tid, ctaid, ntid);
            let mut pc = 0usize;
            let mut steps = 0u64;
            loop {
                if steps >= step_budget {
                    return Err(ExecError::StepBudget {
                        thread: gid as u64,
                        budget: step_budget,
                    });
                }
                steps += 1;
                insn_counts[gid] += 1;
                if let Some(tr) = traces.as_mut() {
                    tr[gid].push(pc as u32);
                }
                match p.instructions[pc] {
                    Instruction::Mov { dst, src } => {
                        st.regs[dst.0 as usize] = st.operand(src);
                        pc += 1;
                    }
                    Instruction::Alu { op, dst, a, b } => {
                        let av = st.regs[a.0 as usize];
                        let bv = st.operand(b);
                        st.regs[dst.0 as usize] = alu(op, av, bv);
                        pc += 1;
                    }
                    Instruction::Setp { cond, dst, a, b } => {
                        let av = st.regs[a.0 as usize];
                        let bv = st.operand(b);
                        st.preds[dst.0 as usize] = compare(cond, av, bv);
                        pc += 1;
                    }
                    Instruction::Bra { pred, target } => {
                        if st.preds[pred.0 as usize] {
                            pc = target;
                        } else {
                            pc += 1;
                        }
                    }
                    Instruction::LdGlobal { dst, addr, offset } => {
                        let a = st.regs[addr.0 as usize].wrapping_add(offset as u32);
                        match memory.load_u32(a) {
                            Some(v) => st.regs[dst.0 as usize] = v,
                            None => {
                                return Err(ExecError::Fault {
                                    thread: gid as u64,
                                    addr: a,
                                })
                            }
                        }
                        pc += 1;
                    }
                    Instruction::StGlobal { addr, offset, src } => {
                        let a = st.regs[addr.0 as usize].wrapping_add(offset as u32);
                        let v = st.regs[src.0 as usize];
                        if memory.store_u32(a, v).is_none() {
                            return Err(ExecError::Fault {
                                thread: gid as u64,
                                addr: a,
                            });
                        }
                        pc += 1;
                    }
                    Instruction::BarSync => {
                        // Barriers order threads within a block; a fully
                        // sequential execution already satisfies that for
                        // race-free kernels.
                        pc += 1;
                    }
                    Instruction::Exit => break,
                }
            }
        }
    }

    Ok(RefRun {
        memory,
        insn_counts,
        traces,
    })
}
